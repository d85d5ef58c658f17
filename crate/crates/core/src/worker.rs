//! One agent: its environment, experience buffer and recurrent state.
//! Both training loops drive workers through `collect` and `compute_update`.

use mazelab_nn::{Gradients, Graph, LstmState, ModelParams};
use mazelab_sim::{Action, DomainHash, EnvConfig, MazeEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffer::{BufferTuple, ExperienceBuffer};
use crate::error::CoreError;
use crate::gae::compute_gae;
use crate::loss::{sample_pixel_change, sample_reward_prediction, total_loss, Hyperparams, LossBatch, LossStats};
use crate::net::{policy_value_forward, ActorCriticNet, PolicyOutput, N_ACTIONS};
use crate::trajectory::{TrajStep, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub reward: f64,
    pub length: u64,
    pub solved: bool,
    pub domain_hash: DomainHash,
    pub substitutions: u64,
}

#[derive(Debug, Clone)]
struct Live {
    obs: Vec<f32>,
    state: LstmState<f32>,
    prev_action: Option<usize>,
    prev_reward: f64,
    index: u64,
    length: u64,
    reward: f64,
    substitutions: u64,
    domain_hash: DomainHash,
}

/// Independent random streams so collection and update sampling do not
/// perturb each other when their interleaving changes.
pub fn worker_seeds(seed: u64, worker: usize) -> (u64, u64, u64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(worker as u64 + 1)));
    (r.random(), r.random(), r.random())
}

pub fn sample_action<R: Rng + ?Sized>(out: &PolicyOutput, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random_bool(epsilon) {
        return rng.random_range(0..N_ACTIONS);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, &p) in out.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    N_ACTIONS - 1
}

pub struct Worker {
    pub id: usize,
    env: MazeEnv,
    net: ActorCriticNet,
    hyper: Hyperparams,
    buffer: ExperienceBuffer,
    act_rng: ChaCha8Rng,
    aux_rng: ChaCha8Rng,
    live: Option<Live>,
    episodes_started: u64,
    warned_lowdim_pc: bool,
}

impl Worker {
    pub fn new(id: usize, env: &EnvConfig, net: ActorCriticNet, hyper: Hyperparams, seed: u64) -> Result<Self, CoreError> {
        let (env_seed, act_seed, aux_seed) = worker_seeds(seed, id);
        if env.observation == mazelab_sim::ObsKind::Image && !net.config().is_image()
            || env.observation == mazelab_sim::ObsKind::Lowdim && net.config().is_image()
        {
            return Err(CoreError::Config("observation kind does not match the network trunk".into()));
        }
        Ok(Worker {
            id,
            env: MazeEnv::new(env.clone(), env_seed)?,
            net,
            hyper,
            buffer: ExperienceBuffer::default(),
            act_rng: ChaCha8Rng::seed_from_u64(act_seed),
            aux_rng: ChaCha8Rng::seed_from_u64(aux_seed),
            live: None,
            episodes_started: 0,
            warned_lowdim_pc: false,
        })
    }

    pub fn buffer(&self) -> &ExperienceBuffer {
        &self.buffer
    }

    pub fn env(&self) -> &MazeEnv {
        &self.env
    }

    pub fn net(&self) -> &ActorCriticNet {
        &self.net
    }

    fn start_episode(&mut self) -> Result<(), CoreError> {
        let obs = self.env.reset()?;
        let ep = self.env.episode().expect("just reset");
        self.live = Some(Live {
            obs: obs.values().to_vec(),
            state: self.net.zero_state(),
            prev_action: None,
            prev_reward: 0.0,
            index: self.episodes_started,
            length: 0,
            reward: 0.0,
            substitutions: 0,
            domain_hash: ep.domain.hash(),
        });
        self.episodes_started += 1;
        Ok(())
    }

    /// Collects up to `max_len` steps under `params`, stopping early at the
    /// end of an episode. `gate` is asked once per step whether the sampled
    /// action must be replaced by a no-op.
    pub fn collect(
        &mut self,
        params: &ModelParams,
        max_len: usize,
        gate: &mut dyn FnMut() -> bool,
    ) -> Result<(Trajectory, Vec<EpisodeSummary>), CoreError> {
        if self.live.is_none() {
            self.start_episode()?;
        }
        let ps = &params.params;
        let live = self.live.as_mut().expect("started above");
        let initial_state = live.state.clone();
        let episode = live.index;
        let mut steps = Vec::with_capacity(max_len);
        let mut finished = Vec::new();
        let mut terminal = false;
        while steps.len() < max_len {
            let out = policy_value_forward(&self.net, ps, &live.obs, live.prev_action, live.prev_reward, &live.state)?;
            let mut action = sample_action(&out, self.hyper.epsilon, &mut self.act_rng);
            let substituted = gate();
            if substituted {
                action = Action::NoOp.index();
                live.substitutions += 1;
            }
            let step = self.env.step(Action::ALL[action])?;
            self.buffer.push(BufferTuple {
                obs: live.obs.clone(),
                action,
                reward: step.reward,
                episode: live.index + ((self.id as u64) << 40),
            });
            let next_obs = step.observation.values().to_vec();
            steps.push(TrajStep {
                obs: std::mem::replace(&mut live.obs, next_obs),
                action,
                reward: step.reward,
                terminal: step.terminal,
                value: out.value,
                log_prob: out.log_probs[action],
                prev_action: live.prev_action,
                prev_reward: live.prev_reward,
                substituted,
            });
            live.state = out.state;
            live.prev_action = Some(action);
            live.prev_reward = step.reward;
            live.length += 1;
            live.reward += step.reward;
            if step.terminal {
                let ep = self.env.episode().expect("episode running");
                finished.push(EpisodeSummary {
                    episode: live.index,
                    reward: live.reward,
                    length: live.length,
                    solved: ep.solved(),
                    domain_hash: live.domain_hash,
                    substitutions: live.substitutions,
                });
                terminal = true;
                break;
            }
        }
        let bootstrap_value = if terminal {
            self.live = None;
            0.0
        } else {
            policy_value_forward(&self.net, ps, &live.obs, live.prev_action, live.prev_reward, &live.state)?.value
        };
        Ok((
            Trajectory {
                steps,
                initial_state,
                bootstrap_value,
                param_version: params.version(),
                episode,
            },
            finished,
        ))
    }

    /// Gradient of the combined loss for `traj`, evaluated at `params`.
    pub fn compute_update(
        &mut self,
        params: &ModelParams,
        traj: &Trajectory,
    ) -> Result<(Gradients<f32>, LossStats), CoreError> {
        let (advantages, returns) = compute_gae(
            &traj.rewards(),
            &traj.values(),
            &traj.terminals(),
            traj.bootstrap_value,
            self.hyper.gamma,
            self.hyper.lambda,
        );
        let reward_prediction = if self.hyper.reward_prediction_weight > 0.0 {
            sample_reward_prediction(&self.buffer, &mut self.aux_rng)
        } else {
            None
        };
        let pixel_change = if self.hyper.pixel_change_weight > 0.0 {
            if self.net.config().is_image() {
                sample_pixel_change(&self.buffer, &mut self.aux_rng)
            } else {
                if !self.warned_lowdim_pc {
                    log::warn!("worker {}: pixel-change loss inactive for state-vector observations", self.id);
                    self.warned_lowdim_pc = true;
                }
                None
            }
        } else {
            None
        };
        let batch = LossBatch {
            traj,
            advantages,
            returns,
            reward_prediction,
            pixel_change,
        };
        let mut g = Graph::new(&params.params);
        let nodes = total_loss(&mut g, &self.net, &batch, &self.hyper)?;
        let stats = LossStats::read(&g, &nodes, traj.len());
        Ok((g.backward(nodes.total, 1.0), stats))
    }
}
