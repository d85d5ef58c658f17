//! Recurrent actor-critic network: a shared trunk feeding an LSTM, with
//! policy, value, reward-prediction and pixel-change heads.

use mazelab_nn::{Conv2d, Deconv2d, Graph, Linear, Lstm, LstmNodes, LstmState, NnError, NodeId, ParamSet, Scalar, Tensor};
use mazelab_sim::render::GRID;
use mazelab_sim::Action;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const N_ACTIONS: usize = Action::COUNT;
/// Reward classes: negative, zero, positive.
pub const N_REWARD_CLASSES: usize = 3;
/// Side of the coarse grid the pixel-change deconvolution expands.
pub const PC_COARSE: usize = GRID / 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrunkKind {
    /// State vector of the given length through two fully-connected layers.
    Lowdim { inputs: usize },
    /// Square single-channel image through two convolutions and one
    /// fully-connected layer.
    Image { size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub trunk: TrunkKind,
    /// Width of the first lowdim layer.
    pub fc_hidden: usize,
    /// Width of the trunk output.
    pub trunk_out: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub lstm_hidden: usize,
    pub reward_hidden: usize,
    pub pc_channels: usize,
}

impl NetConfig {
    /// 84x84 image trunk: 16 filters 8x8/4, 32 filters 4x4/2, fc 256, LSTM 256.
    pub fn image() -> Self {
        NetConfig {
            trunk: TrunkKind::Image { size: mazelab_sim::render::IMAGE_SIZE },
            fc_hidden: 0,
            trunk_out: 256,
            conv1: ConvSpec { filters: 16, kernel: 8, stride: 4 },
            conv2: ConvSpec { filters: 32, kernel: 4, stride: 2 },
            lstm_hidden: 256,
            reward_hidden: 128,
            pc_channels: 32,
        }
    }

    /// State-vector trunk fc(64) -> fc(256) with the full-size heads.
    pub fn lowdim(inputs: usize) -> Self {
        NetConfig {
            trunk: TrunkKind::Lowdim { inputs },
            fc_hidden: 64,
            ..Self::image()
        }
    }

    /// Reduced widths for single-core desk runs.
    pub fn desk(inputs: usize) -> Self {
        NetConfig {
            trunk: TrunkKind::Lowdim { inputs },
            fc_hidden: 64,
            trunk_out: 64,
            lstm_hidden: 64,
            reward_hidden: 32,
            pc_channels: 8,
            ..Self::image()
        }
    }

    /// Miniature image network for gradient checks; all heads active.
    pub fn tiny_image() -> Self {
        NetConfig {
            trunk: TrunkKind::Image { size: 20 },
            fc_hidden: 0,
            trunk_out: 5,
            conv1: ConvSpec { filters: 2, kernel: 8, stride: 4 },
            conv2: ConvSpec { filters: 2, kernel: 4, stride: 2 },
            lstm_hidden: 4,
            reward_hidden: 3,
            pc_channels: 1,
        }
    }

    pub fn obs_len(&self) -> usize {
        match self.trunk {
            TrunkKind::Lowdim { inputs } => inputs,
            TrunkKind::Image { size } => size * size,
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self.trunk, TrunkKind::Image { .. })
    }

    pub fn lstm_inputs(&self) -> usize {
        self.trunk_out + N_ACTIONS + 1
    }
}

#[derive(Debug, Clone, Copy)]
enum Trunk {
    Lowdim { fc1: Linear, fc2: Linear },
    Image { size: usize, conv1: Conv2d, conv2: Conv2d, fc: Linear, flat: usize },
}

/// Layer handles; the weights live in a `ParamSet`.
#[derive(Debug, Clone)]
pub struct ActorCriticNet {
    config: NetConfig,
    trunk: Trunk,
    lstm: Lstm,
    policy: Linear,
    value: Linear,
    rp_hidden: Linear,
    rp_out: Linear,
    pc_fc: Linear,
    pc_deconv: Deconv2d,
}

/// Outputs of one recurrent step.
#[derive(Debug, Clone, Copy)]
pub struct StepNodes {
    pub features: NodeId,
    pub state: LstmNodes,
    pub log_probs: NodeId,
    pub value: NodeId,
}

/// Previous-reward input is clipped to this magnitude.
const REWARD_INPUT_CLIP: f64 = 1.0;

impl ActorCriticNet {
    /// Registers all parameters in `ps` with initialization drawn from `rng`.
    pub fn build<T: Scalar, R: rand::Rng + ?Sized>(config: &NetConfig, ps: &mut ParamSet<T>, rng: &mut R) -> Self {
        let trunk = match config.trunk {
            TrunkKind::Lowdim { inputs } => Trunk::Lowdim {
                fc1: Linear::new(ps, "trunk.fc1", inputs, config.fc_hidden, rng),
                fc2: Linear::new(ps, "trunk.fc2", config.fc_hidden, config.trunk_out, rng),
            },
            TrunkKind::Image { size } => {
                let c1 = config.conv1;
                let c2 = config.conv2;
                let conv1 = Conv2d::new(ps, "trunk.conv1", 1, c1.filters, c1.kernel, c1.stride, rng);
                let [_, h1, w1] = conv1.output_shape(size, size);
                let conv2 = Conv2d::new(ps, "trunk.conv2", c1.filters, c2.filters, c2.kernel, c2.stride, rng);
                let [c, h2, w2] = conv2.output_shape(h1, w1);
                let flat = c * h2 * w2;
                let fc = Linear::new(ps, "trunk.fc", flat, config.trunk_out, rng);
                Trunk::Image { size, conv1, conv2, fc, flat }
            }
        };
        let lstm = Lstm::new(ps, "lstm", config.lstm_inputs(), config.lstm_hidden, rng);
        let policy = Linear::new(ps, "policy", config.lstm_hidden, N_ACTIONS, rng);
        let value = Linear::new(ps, "value", config.lstm_hidden, 1, rng);
        let rp_hidden = Linear::new(ps, "reward_pred.fc1", 3 * config.trunk_out, config.reward_hidden, rng);
        let rp_out = Linear::new(ps, "reward_pred.fc2", config.reward_hidden, N_REWARD_CLASSES, rng);
        let pc_fc = Linear::new(
            ps,
            "pixel_change.fc",
            config.lstm_hidden + N_ACTIONS,
            config.pc_channels * PC_COARSE * PC_COARSE,
            rng,
        );
        let pc_deconv = Deconv2d::new(ps, "pixel_change.deconv", config.pc_channels, 1, 4, 4, rng);
        ActorCriticNet {
            config: config.clone(),
            trunk,
            lstm,
            policy,
            value,
            rp_hidden,
            rp_out,
            pc_fc,
            pc_deconv,
        }
    }

    /// Network plus freshly initialized `f32` parameters for `seed`.
    pub fn init(config: &NetConfig, seed: u64) -> (Self, ParamSet<f32>) {
        let mut ps = ParamSet::new();
        let net = Self::build(config, &mut ps, &mut ChaCha8Rng::seed_from_u64(seed));
        (net, ps)
    }

    /// Layer handles for an existing parameter set; fails if the layout differs.
    pub fn attach<T: Scalar>(config: &NetConfig, ps: &ParamSet<T>) -> Result<Self, NnError> {
        let mut fresh = ParamSet::<T>::new();
        let net = Self::build(config, &mut fresh, &mut ChaCha8Rng::seed_from_u64(0));
        if !fresh.same_layout(ps) {
            return Err(NnError::LayoutMismatch);
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn hidden(&self) -> usize {
        self.config.lstm_hidden
    }

    pub fn zero_state<T: Scalar>(&self) -> LstmState<T> {
        LstmState::zeros(self.config.lstm_hidden)
    }

    /// Observation node with the shape the trunk expects.
    pub fn obs_input<T: Scalar>(&self, g: &mut Graph<'_, T>, obs: &[f32]) -> Result<NodeId, NnError> {
        let want = self.config.obs_len();
        if obs.len() != want {
            return Err(NnError::ShapeMismatch {
                context: "observation".into(),
                expected: vec![want],
                got: vec![obs.len()],
            });
        }
        let data: Vec<T> = obs.iter().map(|&v| T::from_f32(v).expect("finite")).collect();
        let shape = match self.config.trunk {
            TrunkKind::Lowdim { inputs } => vec![inputs],
            TrunkKind::Image { size } => vec![1, size, size],
        };
        Ok(g.input(Tensor::new(&shape, data)))
    }

    pub fn trunk<T: Scalar>(&self, g: &mut Graph<'_, T>, obs: NodeId) -> Result<NodeId, NnError> {
        match self.trunk {
            Trunk::Lowdim { fc1, fc2 } => {
                let h = fc1.forward(g, obs)?;
                let h = g.relu(h);
                let h = fc2.forward(g, h)?;
                Ok(g.relu(h))
            }
            Trunk::Image { size, conv1, conv2, fc, flat } => {
                if g.shape(obs) != [1, size, size] {
                    return Err(NnError::ShapeMismatch {
                        context: "image trunk".into(),
                        expected: vec![1, size, size],
                        got: g.shape(obs).to_vec(),
                    });
                }
                let h = conv1.forward(g, obs)?;
                let h = g.relu(h);
                let h = conv2.forward(g, h)?;
                let h = g.relu(h);
                let h = g.reshape(h, &[flat]);
                let h = fc.forward(g, h)?;
                Ok(g.relu(h))
            }
        }
    }

    fn one_hot<T: Scalar>(g: &mut Graph<'_, T>, action: Option<usize>) -> NodeId {
        let mut v = vec![T::zero(); N_ACTIONS];
        if let Some(a) = action {
            v[a] = T::one();
        }
        g.constant_vec(v)
    }

    /// Trunk, LSTM and policy/value heads for one time step.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        obs: NodeId,
        prev_action: Option<usize>,
        prev_reward: f64,
        state: LstmNodes,
    ) -> Result<StepNodes, NnError> {
        let features = self.trunk(g, obs)?;
        let a = Self::one_hot(g, prev_action);
        let r = g.constant_vec(vec![T::from_f64c(prev_reward.clamp(-REWARD_INPUT_CLIP, REWARD_INPUT_CLIP))]);
        let x = g.concat(&[features, a, r]);
        let state = self.lstm.step(g, x, state)?;
        let logits = self.policy.forward(g, state.h)?;
        let log_probs = g.log_softmax(logits);
        let value = self.value.forward(g, state.h)?;
        Ok(StepNodes {
            features,
            state,
            log_probs,
            value,
        })
    }

    pub fn state_nodes<T: Scalar>(&self, g: &mut Graph<'_, T>, s: &LstmState<T>) -> Result<LstmNodes, NnError> {
        self.lstm.state_nodes(g, s)
    }

    /// Log-probabilities over {negative, zero, positive} for the reward
    /// following three consecutive frames.
    pub fn reward_prediction<T: Scalar>(&self, g: &mut Graph<'_, T>, features: [NodeId; 3]) -> Result<NodeId, NnError> {
        let x = g.concat(&features);
        let h = self.rp_hidden.forward(g, x)?;
        let h = g.relu(h);
        let logits = self.rp_out.forward(g, h)?;
        Ok(g.log_softmax(logits))
    }

    /// Predicted `[1, 20, 20]` pixel-change grid for taking `action` from `h`.
    pub fn pixel_change<T: Scalar>(&self, g: &mut Graph<'_, T>, h: NodeId, action: usize) -> Result<NodeId, NnError> {
        let a = Self::one_hot(g, Some(action));
        let x = g.concat(&[h, a]);
        let z = self.pc_fc.forward(g, x)?;
        let z = g.relu(z);
        let z = g.reshape(z, &[self.config.pc_channels, PC_COARSE, PC_COARSE]);
        self.pc_deconv.forward(g, z)
    }
}

/// Value-level result of one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub probs: [f64; N_ACTIONS],
    pub log_probs: [f64; N_ACTIONS],
    pub value: f64,
    pub state: LstmState<f32>,
}

impl PolicyOutput {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for a in 1..N_ACTIONS {
            if self.probs[a] > self.probs[best] {
                best = a;
            }
        }
        best
    }
}

/// Forward pass without gradient bookkeeping beyond the tape itself.
pub fn policy_value_forward(
    net: &ActorCriticNet,
    params: &ParamSet<f32>,
    obs: &[f32],
    prev_action: Option<usize>,
    prev_reward: f64,
    state: &LstmState<f32>,
) -> Result<PolicyOutput, NnError> {
    let mut g = Graph::new(params);
    let x = net.obs_input(&mut g, obs)?;
    let s = net.state_nodes(&mut g, state)?;
    let out = net.step(&mut g, x, prev_action, prev_reward, s)?;
    let lp = g.value(out.log_probs).data();
    let mut log_probs = [0.0; N_ACTIONS];
    let mut probs = [0.0; N_ACTIONS];
    for a in 0..N_ACTIONS {
        log_probs[a] = lp[a] as f64;
        probs[a] = log_probs[a].exp();
    }
    Ok(PolicyOutput {
        probs,
        log_probs,
        value: g.value(out.value).data()[0] as f64,
        state: LstmState {
            h: g.value(out.state.h).data().to_vec(),
            c: g.value(out.state.c).data().to_vec(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_policy_is_a_distribution() {
        for cfg in [NetConfig::desk(6), NetConfig::tiny_image()] {
            let (net, ps) = ActorCriticNet::init(&cfg, 3);
            let obs = vec![0.3f32; cfg.obs_len()];
            let out = policy_value_forward(&net, &ps, &obs, Some(2), 1.0, &net.zero_state()).unwrap();
            let total: f64 = out.probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-6);
            assert!(out.probs.iter().all(|&p| p > 0.0 && p < 1.0));
            assert!(out.value.is_finite());
            let again = policy_value_forward(&net, &ps, &obs, Some(2), 1.0, &net.zero_state()).unwrap();
            assert_eq!(out, again);
        }
    }

    #[test]
    fn image_trunk_output_sizes() {
        let (net, ps) = ActorCriticNet::init(&NetConfig::image(), 0);
        // 84 -> 20 -> 9, 32 * 81 inputs to the fc layer
        assert_eq!(ps.get(ps.id("trunk.fc.w").unwrap()).shape(), &[256, 32 * 9 * 9]);
        let mut g = Graph::new(&ps);
        let h = g.input(Tensor::zeros(&[256]));
        let pc = net.pixel_change(&mut g, h, 1).unwrap();
        assert_eq!(g.shape(pc), &[1, GRID, GRID]);
    }

    #[test]
    fn wrong_observation_length_is_shape_error() {
        let (net, ps) = ActorCriticNet::init(&NetConfig::desk(6), 0);
        let r = policy_value_forward(&net, &ps, &[0.0; 5], None, 0.0, &net.zero_state());
        assert!(matches!(r, Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn attach_checks_layout() {
        let (_, ps) = ActorCriticNet::init(&NetConfig::desk(6), 0);
        assert!(ActorCriticNet::attach(&NetConfig::desk(6), &ps).is_ok());
        assert!(ActorCriticNet::attach(&NetConfig::desk(10), &ps).is_err());
    }
}
