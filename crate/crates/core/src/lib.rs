//! Recurrent actor-critic agent with auxiliary losses, the parallel and
//! off-policy A3C trainers, evaluation and the transfer experiments.

pub mod buffer;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gae;
pub mod loss;
pub mod net;
pub mod trainer;
pub mod trajectory;
pub mod worker;

pub use error::CoreError;
pub use eval::{evaluate, steps_to_criterion, EvalPolicy, EvalReport};
pub use gae::compute_gae;
pub use loss::Hyperparams;
pub use net::{ActorCriticNet, NetConfig};
pub use trainer::{
    run_offpolicy, run_parallel, GlobalStore, LatencyModel, StopRule, TrainConfig, TrainLog, TrainMode,
};
