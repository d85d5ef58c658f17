//! Plain-text (TOML) configuration files.
//!
//! Every key is optional; missing keys fall back to the defaults of
//! [`EnvConfig`]. Example:
//!
//! ```toml
//! variant = "one_marble"        # or "two_marble"
//! observation = "lowdim"        # or "image"
//! max_steps = 3000
//! reward_with_camera_delay = false
//!
//! [maze]
//! outer_radius = 0.10
//! boundary_radii = [0.066, 0.034]          # outermost first
//! marble_radius = 0.008
//! gates = [[{ center = 0.785, half_width = 0.21 }, ...], [{ center = 0.0, half_width = 0.41 }]]
//!
//! [domain]
//! mu_static = { lo = 0.0075, hi = 0.0225 }
//! delay_min = 0
//! delay_max = 2
//! scheme = "per_episode"        # or "fixed_per_agent"
//!
//! [integrator]
//! control_interval = 0.233
//! substeps = 64
//! ```

use std::path::Path;

use crate::env::EnvConfig;
use crate::error::ConfigError;
use crate::geometry::build_maze;

pub fn parse_env_config(text: &str) -> Result<EnvConfig, ConfigError> {
    let cfg: EnvConfig = toml::from_str(text)?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load_env_config(path: &Path) -> Result<EnvConfig, ConfigError> {
    parse_env_config(&std::fs::read_to_string(path)?)
}

pub fn validate(cfg: &EnvConfig) -> Result<(), ConfigError> {
    build_maze(&cfg.maze)?;
    cfg.domain.validate()?;
    if cfg.max_steps == 0 {
        return Err(ConfigError::InvalidDomain("max_steps must be positive".into()));
    }
    if cfg.integrator.substeps == 0 || !(cfg.integrator.control_interval > 0.0) {
        return Err(ConfigError::InvalidPhysics("integrator needs a positive interval and substeps".into()));
    }
    Ok(())
}

pub fn to_toml(cfg: &EnvConfig) -> String {
    toml::to_string(cfg).expect("config is serializable")
}
