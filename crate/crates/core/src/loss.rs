//! Actor-critic loss with entropy regularization, plus the reward-prediction
//! and pixel-change auxiliary losses. Builders are generic over the scalar
//! type so the same code runs in `f32` training and `f64` gradient checks.

use mazelab_nn::{Graph, NnError, NodeId, Scalar};
use mazelab_sim::render::{pixel_change, Image, IMAGE_SIZE};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::{reward_class, ExperienceBuffer, PC_WINDOW, RP_WINDOW};
use crate::net::ActorCriticNet;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub gamma: f64,
    pub lambda: f64,
    /// Entropy bonus weight.
    pub beta: f64,
    pub reward_prediction_weight: f64,
    pub pixel_change_weight: f64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Probability of a uniformly random action while training.
    pub epsilon: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.99,
            lambda: 0.95,
            beta: 0.01,
            reward_prediction_weight: 1.0,
            pixel_change_weight: 0.05,
            learning_rate: 7e-4,
            clip_norm: 40.0,
            epsilon: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.lambda) || !unit(self.epsilon) {
            return Err("gamma, lambda and epsilon must lie in [0, 1]".into());
        }
        if self.beta < 0.0 || self.reward_prediction_weight < 0.0 || self.pixel_change_weight < 0.0 {
            return Err("loss weights must be non-negative".into());
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err("learning rate and clip norm must be positive".into());
        }
        Ok(())
    }

    pub fn optim(&self) -> mazelab_nn::OptimConfig {
        mazelab_nn::OptimConfig {
            learning_rate: self.learning_rate,
            clip_norm: Some(self.clip_norm),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct A3cTerms {
    pub total: NodeId,
    /// Sum of `-log pi(a_t|s_t) * A_t`.
    pub policy: NodeId,
    /// Sum of policy entropies.
    pub entropy: NodeId,
    /// Sum of `0.5 (R_t - V(s_t))^2`.
    pub value: NodeId,
}

fn scalar<T: Scalar>(g: &Graph<'_, T>, n: NodeId) -> f64 {
    g.value(n).data()[0].to_f64c()
}

/// Entropy of the distribution with log-probabilities `lp`.
pub fn entropy<T: Scalar>(g: &mut Graph<'_, T>, lp: NodeId) -> NodeId {
    let p = g.exp(lp);
    let plp = g.mul(p, lp);
    let s = g.sum(plp);
    g.scale(s, -T::one())
}

/// `sum_t [ -log pi(a_t|s_t) A_t - beta H(pi(.|s_t)) + 0.5 (R_t - V(s_t))^2 ]`,
/// unrolled from the segment's initial recurrent state. Advantages and
/// returns are constants, so no gradient reaches the values through them.
pub fn a3c_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    net: &ActorCriticNet,
    traj: &Trajectory,
    advantages: &[f64],
    returns: &[f64],
    beta: f64,
) -> Result<A3cTerms, NnError> {
    assert!(!traj.steps.is_empty(), "empty segment");
    assert!(advantages.len() == traj.steps.len() && returns.len() == traj.steps.len());
    let mut state = net.state_nodes(g, &traj.initial_state.cast())?;
    let mut pol = Vec::with_capacity(traj.steps.len());
    let mut ent = Vec::with_capacity(traj.steps.len());
    let mut val = Vec::with_capacity(traj.steps.len());
    for (t, step) in traj.steps.iter().enumerate() {
        let x = net.obs_input(g, &step.obs)?;
        let out = net.step(g, x, step.prev_action, step.prev_reward, state)?;
        state = out.state;
        let lpa = g.pick(out.log_probs, step.action);
        pol.push(g.scale(lpa, T::from_f64c(-advantages[t])));
        ent.push(entropy(g, out.log_probs));
        let target = g.constant_vec(vec![T::from_f64c(returns[t])]);
        let err = g.sub(target, out.value);
        let sq = g.square(err);
        let sq = g.sum(sq);
        val.push(g.scale(sq, T::from_f64c(0.5)));
    }
    let policy = g.add_n(&pol);
    let entropy = g.add_n(&ent);
    let value = g.add_n(&val);
    let bonus = g.scale(entropy, T::from_f64c(-beta));
    let total = g.add_n(&[policy, bonus, value]);
    Ok(A3cTerms {
        total,
        policy,
        entropy,
        value,
    })
}

/// Three consecutive frames and the class of the reward that followed.
#[derive(Debug, Clone, PartialEq)]
pub struct RpSample {
    pub frames: [Vec<f32>; RP_WINDOW],
    pub target: usize,
}

pub fn sample_reward_prediction<R: Rng + ?Sized>(buffer: &ExperienceBuffer, rng: &mut R) -> Option<RpSample> {
    let start = buffer.sample_reward_window(rng)?;
    let frame = |k: u64| buffer.get(start + k).expect("window in buffer").obs.clone();
    Some(RpSample {
        frames: [frame(0), frame(1), frame(2)],
        target: reward_class(buffer.get(start + 2).expect("window in buffer").reward),
    })
}

/// Cross-entropy of the reward-class prediction.
pub fn reward_prediction_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    net: &ActorCriticNet,
    s: &RpSample,
) -> Result<NodeId, NnError> {
    let mut feats = [None; RP_WINDOW];
    for (k, f) in s.frames.iter().enumerate() {
        let x = net.obs_input(g, f)?;
        feats[k] = Some(net.trunk(g, x)?);
    }
    let feats = feats.map(|f| f.expect("filled"));
    let lp = net.reward_prediction(g, feats)?;
    let picked = g.pick(lp, s.target);
    Ok(g.scale(picked, -T::one()))
}

/// A run of frames with the actions taken and the recorded pixel change
/// between each frame and the next.
#[derive(Debug, Clone, PartialEq)]
pub struct PcSample {
    /// Frames whose change is predicted (the last buffered frame is excluded).
    pub obs: Vec<Vec<f32>>,
    pub actions: Vec<usize>,
    pub prev_actions: Vec<Option<usize>>,
    pub prev_rewards: Vec<f64>,
    /// 20x20 targets, one per entry of `obs`.
    pub targets: Vec<Vec<f32>>,
}

/// Samples up to 21 consecutive frames from an image-observation buffer.
pub fn sample_pixel_change<R: Rng + ?Sized>(buffer: &ExperienceBuffer, rng: &mut R) -> Option<PcSample> {
    let (start, len) = buffer.sample_sequence(rng, PC_WINDOW)?;
    let first = buffer.get(start)?;
    if first.obs.len() != IMAGE_SIZE * IMAGE_SIZE {
        return None;
    }
    let before = start.checked_sub(1).and_then(|id| buffer.get(id)).filter(|t| t.episode == first.episode);
    let mut s = PcSample {
        obs: Vec::new(),
        actions: Vec::new(),
        prev_actions: Vec::new(),
        prev_rewards: Vec::new(),
        targets: Vec::new(),
    };
    let (mut pa, mut pr) = (before.map(|t| t.action), before.map_or(0.0, |t| t.reward));
    for k in 0..len as u64 - 1 {
        let cur = buffer.get(start + k)?;
        let next = buffer.get(start + k + 1)?;
        s.targets.push(pixel_change(&Image(cur.obs.clone()), &Image(next.obs.clone())));
        s.obs.push(cur.obs.clone());
        s.actions.push(cur.action);
        s.prev_actions.push(pa);
        s.prev_rewards.push(pr);
        pa = Some(cur.action);
        pr = cur.reward;
    }
    Some(s)
}

/// `sum_t || predicted_t - target_t ||^2`, unrolled from a zero state.
pub fn pixel_change_loss<T: Scalar>(g: &mut Graph<'_, T>, net: &ActorCriticNet, s: &PcSample) -> Result<NodeId, NnError> {
    let mut state = net.state_nodes(g, &net.zero_state())?;
    let mut terms = Vec::with_capacity(s.obs.len());
    for t in 0..s.obs.len() {
        let x = net.obs_input(g, &s.obs[t])?;
        let out = net.step(g, x, s.prev_actions[t], s.prev_rewards[t], state)?;
        state = out.state;
        let pred = net.pixel_change(g, state.h, s.actions[t])?;
        let shape = g.shape(pred).to_vec();
        let target = g.input(mazelab_nn::Tensor::new(
            &shape,
            s.targets[t].iter().map(|&v| T::from_f32(v).expect("finite")).collect(),
        ));
        let d = g.sub(pred, target);
        let sq = g.square(d);
        terms.push(g.sum(sq));
    }
    Ok(g.add_n(&terms))
}

/// Everything one update consumes.
#[derive(Debug, Clone)]
pub struct LossBatch<'a> {
    pub traj: &'a Trajectory,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub reward_prediction: Option<RpSample>,
    pub pixel_change: Option<PcSample>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: NodeId,
    pub a3c: A3cTerms,
    pub reward_prediction: Option<NodeId>,
    pub pixel_change: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub mean_entropy: f64,
    pub value: f64,
    pub reward_prediction: f64,
    pub pixel_change: f64,
}

pub fn total_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    net: &ActorCriticNet,
    batch: &LossBatch<'_>,
    hyper: &Hyperparams,
) -> Result<LossNodes, NnError> {
    let a3c = a3c_loss(g, net, batch.traj, &batch.advantages, &batch.returns, hyper.beta)?;
    let mut terms = vec![a3c.total];
    let rp = match &batch.reward_prediction {
        Some(s) if hyper.reward_prediction_weight > 0.0 => {
            let l = reward_prediction_loss(g, net, s)?;
            terms.push(g.scale(l, T::from_f64c(hyper.reward_prediction_weight)));
            Some(l)
        }
        _ => None,
    };
    let pc = match &batch.pixel_change {
        Some(s) if hyper.pixel_change_weight > 0.0 && !s.obs.is_empty() => {
            let l = pixel_change_loss(g, net, s)?;
            terms.push(g.scale(l, T::from_f64c(hyper.pixel_change_weight)));
            Some(l)
        }
        _ => None,
    };
    let total = g.add_n(&terms);
    Ok(LossNodes {
        total,
        a3c,
        reward_prediction: rp,
        pixel_change: pc,
    })
}

impl LossStats {
    pub fn read<T: Scalar>(g: &Graph<'_, T>, n: &LossNodes, steps: usize) -> Self {
        LossStats {
            total: scalar(g, n.total),
            policy: scalar(g, n.a3c.policy),
            mean_entropy: scalar(g, n.a3c.entropy) / steps.max(1) as f64,
            value: scalar(g, n.a3c.value),
            reward_prediction: n.reward_prediction.map_or(0.0, |x| scalar(g, x)),
            pixel_change: n.pixel_change.map_or(0.0, |x| scalar(g, x)),
        }
    }
}
