use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid maze config: {0}")]
    InvalidMaze(String),
    #[error("invalid physics params: {0}")]
    InvalidPhysics(String),
    #[error("invalid domain range: {0}")]
    InvalidDomain(String),
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("non-finite marble state at substep {substep} (marble {marble}); substep too coarse for params")]
    NumericalBlowup { substep: usize, marble: usize },
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("episode aborted: {0}")]
    Physics(#[from] PhysicsError),
    #[error("could not place {marbles} marble(s) after {attempts} attempts")]
    Placement { marbles: usize, attempts: usize },
    #[error("step called on a terminal episode")]
    Terminal,
    #[error("step called before reset")]
    NotReset,
    #[error("invalid action id {0}")]
    InvalidAction(u8),
}
