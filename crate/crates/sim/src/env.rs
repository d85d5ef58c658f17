//! Episode lifecycle: reset, stepping, gate-crossing rewards and domain
//! randomization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{sample_domain, DomainRange, DomainSample, Scheme};
use crate::error::EnvError;
use crate::geometry::{build_maze, MazeConfig, MazeGeometry};
use crate::physics::{apply_action, step_physics, Action, GateEvent, Integrator, Marble, SimState, Vec2};
use crate::render::{add_noise, observe_lowdim, DelayBuffer, ObsKind, Observation, Renderer};

const PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    OneMarble,
    TwoMarble,
}

impl Variant {
    pub fn marbles(self) -> usize {
        match self {
            Variant::OneMarble => 1,
            Variant::TwoMarble => 2,
        }
    }
}

/// Reward for the gate crossings of one control interval.
///
/// One marble: +1 per inward crossing, -1 per outward one. Two marbles:
/// crossings are weighted 1, 2, 4, 8, ... from the outermost boundary
/// towards the center, signed by direction.
pub fn reward_from_events(events: &[GateEvent], variant: Variant, n_boundaries: usize) -> f64 {
    events
        .iter()
        .map(|e| {
            let sign = if e.inward() { 1.0 } else { -1.0 };
            let weight = match variant {
                Variant::OneMarble => 1.0,
                Variant::TwoMarble => {
                    let from_rim = n_boundaries - 1 - e.boundary();
                    (1u64 << from_rim) as f64
                }
            };
            sign * weight
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub maze: MazeConfig,
    pub variant: Variant,
    pub observation: ObsKind,
    pub domain: DomainRange,
    /// Maximum episode length L_e.
    pub max_steps: u64,
    pub integrator: Integrator,
    /// Credit rewards when the delayed camera shows them instead of at
    /// physics time.
    pub reward_with_camera_delay: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            maze: MazeConfig::standard(),
            variant: Variant::OneMarble,
            observation: ObsKind::Image,
            domain: DomainRange::randomized(),
            max_steps: 3000,
            integrator: Integrator::default(),
            reward_with_camera_delay: false,
        }
    }
}

impl EnvConfig {
    /// Desk-scale setup: two rings, state-vector observations.
    pub fn desk() -> Self {
        EnvConfig {
            maze: MazeConfig::two_ring(),
            observation: ObsKind::Lowdim,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub sim: SimState,
    pub domain: DomainSample,
    pub step: u64,
    pub accumulated_reward: f64,
    pub marbles_home: usize,
    pub variant: Variant,
    pub max_steps: u64,
    pub terminal: bool,
}

impl EpisodeState {
    /// All marbles reached the center.
    pub fn solved(&self) -> bool {
        self.sim.all_home()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
    pub events: Vec<GateEvent>,
}

/// One simulated maze owned by a single agent.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    config: EnvConfig,
    geometry: MazeGeometry,
    renderer: Renderer,
    rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    agent_sample: Option<DomainSample>,
    episode: Option<EpisodeState>,
    delay: Option<DelayBuffer>,
    pending_rewards: std::collections::VecDeque<f64>,
}

impl MazeEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        let geometry = build_maze(&config.maze)?;
        config.domain.validate()?;
        let renderer = Renderer::new(&geometry, Default::default());
        Ok(MazeEnv {
            config,
            geometry,
            renderer,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise_rng: ChaCha8Rng::seed_from_u64(0),
            agent_sample: None,
            episode: None,
            delay: None,
            pending_rewards: Default::default(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn geometry(&self) -> &MazeGeometry {
        &self.geometry
    }

    pub fn episode(&self) -> Option<&EpisodeState> {
        self.episode.as_ref()
    }

    pub fn renderer(&self) -> &Renderer {
        &self.renderer
    }

    /// Restarts the episode random stream; a fixed-per-agent draw is kept.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Observation length for the configured kind.
    pub fn observation_len(&self) -> usize {
        match self.config.observation {
            ObsKind::Image => crate::render::IMAGE_SIZE * crate::render::IMAGE_SIZE,
            ObsKind::Lowdim => crate::render::lowdim_len(self.config.variant.marbles()),
        }
    }

    fn draw_domain(&mut self) -> DomainSample {
        match self.config.domain.scheme {
            Scheme::PerEpisode => sample_domain(&self.config.domain, &mut self.rng),
            Scheme::FixedPerAgent => {
                if self.agent_sample.is_none() {
                    self.agent_sample = Some(sample_domain(&self.config.domain, &mut self.rng));
                }
                let mut s = self.agent_sample.clone().expect("drawn above");
                // noise stream still differs per episode
                s.sample_seed = self.rng.random();
                s
            }
        }
    }

    fn place_marbles(&mut self) -> Result<Vec<Marble>, EnvError> {
        let n = self.config.variant.marbles();
        let region = self.geometry.outermost_region();
        let (lo, hi) = self.geometry.region_span(region);
        let min_gap = 2.0 * self.geometry.marble_radius();
        let mut placed: Vec<Marble> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut ok = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                // uniform over the annulus area
                let r = self.rng.random_range(lo * lo..=hi * hi).sqrt();
                let a = self.rng.random_range(0.0..std::f64::consts::TAU);
                let pos = Vec2::from_polar(r, a);
                if placed.iter().all(|m| (m.pos - pos).norm() > min_gap) {
                    placed.push(Marble::at_rest(pos, region));
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(EnvError::Placement {
                    marbles: n,
                    attempts: PLACEMENT_ATTEMPTS,
                });
            }
        }
        Ok(placed)
    }

    fn observe(&self, sim: &SimState) -> Observation {
        match self.config.observation {
            ObsKind::Image => self.renderer.render(sim),
            ObsKind::Lowdim => observe_lowdim(sim, &self.geometry),
        }
    }

    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        let domain = self.draw_domain();
        domain.physics.validate()?;
        if *self.renderer.appearance() != domain.appearance {
            self.renderer = Renderer::new(&self.geometry, domain.appearance);
        }
        self.noise_rng = ChaCha8Rng::seed_from_u64(domain.sample_seed);
        let marbles = self.place_marbles()?;
        let sim = SimState::new(marbles);
        let fresh = self.observe(&sim);
        self.delay = Some(DelayBuffer::new(domain.delay_k as usize, fresh.clone()));
        self.pending_rewards.clear();
        if self.config.reward_with_camera_delay {
            self.pending_rewards.extend(std::iter::repeat_n(0.0, domain.delay_k as usize));
        }
        let obs = add_noise(&fresh, domain.noise_sigma, &mut self.noise_rng);
        self.episode = Some(EpisodeState {
            sim,
            domain,
            step: 0,
            accumulated_reward: 0.0,
            marbles_home: 0,
            variant: self.config.variant,
            max_steps: self.config.max_steps,
            terminal: false,
        });
        Ok(obs)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if ep.terminal {
            return Err(EnvError::Terminal);
        }
        let target = apply_action(ep.sim.tilt, action);
        let stepped = step_physics(&ep.sim, target, &ep.domain.physics, &self.geometry, &self.config.integrator);
        let (sim, events) = match stepped {
            Ok(v) => v,
            Err(e) => {
                ep.terminal = true;
                log::warn!("episode aborted at step {}: {e}", ep.step);
                return Err(e.into());
            }
        };
        let mut reward = reward_from_events(&events, ep.variant, self.geometry.n_boundaries());
        if self.config.reward_with_camera_delay {
            self.pending_rewards.push_back(reward);
            reward = self.pending_rewards.pop_front().unwrap_or(0.0);
        }
        ep.sim = sim;
        ep.step += 1;
        ep.accumulated_reward += reward;
        ep.marbles_home = ep.sim.marbles.iter().filter(|m| m.ring == 0).count();
        ep.terminal = ep.sim.all_home() || ep.step >= ep.max_steps;
        let terminal = ep.terminal;
        let sigma = ep.domain.noise_sigma;
        let fresh = match self.config.observation {
            ObsKind::Image => self.renderer.render(&ep.sim),
            ObsKind::Lowdim => observe_lowdim(&ep.sim, &self.geometry),
        };
        let delayed = self.delay.as_mut().expect("set at reset").delayed(fresh);
        let observation = add_noise(&delayed, sigma, &mut self.noise_rng);
        Ok(StepOutcome {
            observation,
            reward,
            terminal,
            events,
        })
    }
}
