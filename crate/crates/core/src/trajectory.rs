use mazelab_nn::LstmState;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajStep {
    pub obs: Vec<f32>,
    /// Action executed in the environment.
    pub action: usize,
    pub reward: f64,
    /// The episode ended after this step.
    pub terminal: bool,
    /// Behavior-policy value estimate of `obs`.
    pub value: f64,
    /// Behavior-policy log-probability of `action`.
    pub log_prob: f64,
    pub prev_action: Option<usize>,
    pub prev_reward: f64,
    /// The latency gate replaced the sampled action with a no-op.
    pub substituted: bool,
}

/// Contiguous steps of one episode collected under a single parameter version.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    pub initial_state: LstmState<f32>,
    /// `V(s_T)` of the state after the last step; 0 when it is terminal.
    pub bootstrap_value: f64,
    pub param_version: u64,
    pub episode: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.value).collect()
    }

    pub fn terminals(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.terminal).collect()
    }

    pub fn ends_episode(&self) -> bool {
        self.steps.last().is_some_and(|s| s.terminal)
    }
}
