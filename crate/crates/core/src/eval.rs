//! Policy evaluation without learning.

use mazelab_nn::ParamSet;
use mazelab_sim::{Action, EnvConfig, MazeEnv};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::net::{policy_value_forward, ActorCriticNet};
use crate::worker::sample_action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicy {
    /// Most probable action.
    Greedy,
    /// Sample from the policy.
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub seed: u64,
    pub reward: f64,
    pub length: u64,
    pub solved: bool,
    pub domain_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_episodes: usize,
    pub success_rate: f64,
    pub mean_length: f64,
    pub median_length: f64,
    pub mean_reward: f64,
    pub episodes: Vec<EvalEpisode>,
}

impl EvalReport {
    /// Summary statistics recomputed from the per-episode series.
    pub fn from_episodes(episodes: Vec<EvalEpisode>) -> Self {
        let n = episodes.len();
        let nf = n.max(1) as f64;
        let mut lengths: Vec<u64> = episodes.iter().map(|e| e.length).collect();
        lengths.sort_unstable();
        let median_length = match n {
            0 => 0.0,
            _ if n % 2 == 1 => lengths[n / 2] as f64,
            _ => 0.5 * (lengths[n / 2 - 1] + lengths[n / 2]) as f64,
        };
        EvalReport {
            n_episodes: n,
            success_rate: episodes.iter().filter(|e| e.solved).count() as f64 / nf,
            mean_length: lengths.iter().sum::<u64>() as f64 / nf,
            median_length,
            mean_reward: episodes.iter().map(|e| e.reward).sum::<f64>() / nf,
            episodes,
        }
    }
}

/// Rolls out `n_episodes` episodes; episode `i` resets with seed `seed + i`.
pub fn evaluate(
    net: &ActorCriticNet,
    params: &ParamSet<f32>,
    env_config: &EnvConfig,
    n_episodes: usize,
    seed: u64,
    policy: EvalPolicy,
) -> Result<EvalReport, CoreError> {
    if n_episodes == 0 {
        return Err(CoreError::Config("evaluation needs at least one episode".into()));
    }
    let mut env = MazeEnv::new(env_config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes as u64 {
        env.reseed(seed.wrapping_add(i));
        let mut obs = env.reset()?.values().to_vec();
        let domain_hash = env.episode().expect("reset").domain.hash().to_string();
        let mut state = net.zero_state();
        let (mut prev_a, mut prev_r) = (None, 0.0);
        let (mut reward, mut length) = (0.0, 0);
        loop {
            let out = policy_value_forward(net, params, &obs, prev_a, prev_r, &state)?;
            let a = match policy {
                EvalPolicy::Greedy => out.argmax(),
                EvalPolicy::Stochastic => sample_action(&out, 0.0, &mut rng),
            };
            let step = env.step(Action::ALL[a])?;
            reward += step.reward;
            length += 1;
            state = out.state;
            prev_a = Some(a);
            prev_r = step.reward;
            obs = step.observation.values().to_vec();
            if step.terminal {
                break;
            }
        }
        episodes.push(EvalEpisode {
            seed: seed.wrapping_add(i),
            reward,
            length,
            solved: env.episode().expect("episode").solved(),
            domain_hash,
        });
    }
    Ok(EvalReport::from_episodes(episodes))
}

/// Steps completed before the first `window`-episode run whose success rate
/// reaches `threshold`; `None` if no such run exists. `episodes` holds
/// `(cumulative steps at episode end, solved)` in completion order.
pub fn steps_to_criterion(episodes: &[(u64, bool)], window: usize, threshold: f64) -> Option<u64> {
    if window == 0 || episodes.len() < window {
        return None;
    }
    let need = (threshold * window as f64).ceil() as usize;
    let mut solved = episodes[..window].iter().filter(|e| e.1).count();
    for start in 0..=episodes.len() - window {
        if start > 0 {
            solved -= episodes[start - 1].1 as usize;
            solved += episodes[start + window - 1].1 as usize;
        }
        if solved >= need {
            return Some(if start == 0 { 0 } else { episodes[start - 1].0 });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criterion_zero_when_solved_from_the_start() {
        let eps: Vec<(u64, bool)> = (1..=60).map(|i| (i * 10, true)).collect();
        assert_eq!(steps_to_criterion(&eps, 50, 0.9), Some(0));
    }

    #[test]
    fn criterion_counts_steps_before_window() {
        let mut eps: Vec<(u64, bool)> = (1..=20).map(|i| (i * 100, false)).collect();
        eps.extend((21..=80).map(|i| (i * 100, true)));
        // first window with >= 45 of 50 solved starts at episode index 15
        assert_eq!(steps_to_criterion(&eps, 50, 0.9), Some(1500));
        assert_eq!(steps_to_criterion(&eps[..40], 50, 0.9), None);
    }

    #[test]
    fn report_statistics() {
        let ep = |len, solved| EvalEpisode {
            seed: 0,
            reward: if solved { 2.0 } else { 0.0 },
            length: len,
            solved,
            domain_hash: String::new(),
        };
        let r = EvalReport::from_episodes(vec![ep(10, true), ep(30, false), ep(20, true), ep(40, true)]);
        assert_eq!(r.success_rate, 0.75);
        assert_eq!(r.median_length, 25.0);
        assert_eq!(r.mean_length, 25.0);
        assert_eq!(r.mean_reward, 1.5);
    }
}
