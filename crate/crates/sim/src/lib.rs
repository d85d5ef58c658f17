//! Simulated tilt maze: physics, observations, episodes and the socket
//! protocol used to drive it from another process.

pub mod config;
pub mod domain;
pub mod env;
pub mod error;
pub mod geometry;
pub mod physics;
pub mod protocol;
pub mod render;
pub mod server;

pub use domain::{sample_domain, DomainHash, DomainRange, DomainSample, Interval, Scheme};
pub use env::{reward_from_events, EnvConfig, EpisodeState, MazeEnv, StepOutcome, Variant};
pub use error::{ConfigError, EnvError, PhysicsError};
pub use geometry::{build_maze, GateSpec, MazeConfig, MazeGeometry};
pub use physics::{
    apply_action, resolve_collisions, step_physics, Action, GateEvent, Integrator, Marble, PhysicsParams,
    SimState, Tilt, Vec2,
};
pub use render::{
    add_noise, observe_lowdim, pixel_change, Appearance, DelayBuffer, Image, ObsData, ObsKind, Observation,
    Renderer,
};
