//! Transfer experiment at desk scale: offline pretraining with and without
//! domain randomization, online fine-tuning on a held-out target domain, and
//! the steps-to-criterion comparison between the two.

use std::path::{Path, PathBuf};

use mazelab_nn::{Checkpoint, ModelParams};
use mazelab_sim::{build_maze, sample_domain, DomainRange, EnvConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::eval::{evaluate, EvalPolicy, EvalReport};
use crate::loss::Hyperparams;
use crate::net::{ActorCriticNet, NetConfig};
use crate::trainer::{
    run_offpolicy_with_log, run_parallel_with_log, GlobalStore, LatencyModel, StopRule, TrainConfig, TrainFailure,
    TrainLog, TrainMode, UpdateDuration,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainScheme {
    /// Fresh physics, delay and noise draw every episode.
    Robust,
    /// Nominal parameters throughout.
    Nonrobust,
}

/// When a run counts as having learned the task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Criterion {
    /// Success rate over a sliding window of training episodes, which are
    /// sampled from the policy.
    Training { window: usize, success: f64 },
    /// Success rate of `episodes` greedy rollouts, evaluated before training
    /// and then every `every` steps.
    Greedy { every: u64, episodes: usize, success: f64 },
}

impl Criterion {
    pub fn greedy(every: u64) -> Self {
        Criterion::Greedy {
            every,
            episodes: 50,
            success: 0.9,
        }
    }

    /// Sets the stop rule or the periodic evaluation of `train`.
    pub fn apply(&self, train: &mut TrainConfig) {
        match *self {
            Criterion::Training { window, success } => {
                train.stop = Some(StopRule { window, success });
                train.eval_every = None;
                train.eval_target = None;
            }
            Criterion::Greedy { every, episodes, success } => {
                train.stop = None;
                train.eval_every = Some(every);
                train.eval_episodes = episodes;
                train.eval_target = Some(success);
            }
        }
    }

    /// Steps at which the criterion was first met.
    pub fn reached(&self, log: &TrainLog) -> Option<u64> {
        match self {
            Criterion::Training { .. } => log.converged_at,
            Criterion::Greedy { .. } => log.eval_reached_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub n_workers: usize,
    pub max_steps: u64,
    pub episode_len: u64,
    pub segment_len: usize,
    /// Training stops once this is met.
    pub criterion: Criterion,
    /// Greedy episodes on the training distribution after training.
    pub eval_episodes: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            n_workers: 4,
            max_steps: 2_000_000,
            episode_len: 1000,
            segment_len: 200,
            // stricter than the 0.9 bar so a fresh 100-episode evaluation clears it
            criterion: Criterion::Greedy {
                every: 50_000,
                episodes: 100,
                success: 0.95,
            },
            eval_episodes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    /// Budget per run; runs that never meet the criterion are censored here.
    pub max_steps: u64,
    pub episode_len: u64,
    pub segment_len: usize,
    pub latency: Option<LatencyModel>,
    pub update_duration: UpdateDuration,
    /// Fine-tuning stops once this is met; the step count is the transfer cost.
    pub criterion: Criterion,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            max_steps: 400_000,
            episode_len: 2500,
            segment_len: 200,
            latency: Some(LatencyModel::default()),
            update_duration: UpdateDuration::default(),
            criterion: Criterion::greedy(10_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub net: NetConfig,
    /// Maze, variant and observation kind; the domain is set per scheme.
    pub env: EnvConfig,
    pub hyper: Hyperparams,
    pub robust_domain: DomainRange,
    pub nominal_domain: DomainRange,
    /// Held-out fine-tuning target.
    pub target: DomainRange,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = EnvConfig::desk();
        ExperimentConfig {
            net: NetConfig::desk(mazelab_sim::render::lowdim_len(env.variant.marbles())),
            env,
            hyper: Hyperparams {
                learning_rate: 5e-3,
                ..Default::default()
            },
            robust_domain: DomainRange::randomized(),
            nominal_domain: DomainRange::nominal(),
            target: DomainRange::real_proxy(),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Full-size image configuration kept for long runs.
    pub fn image() -> Self {
        let env = EnvConfig {
            observation: mazelab_sim::ObsKind::Image,
            ..EnvConfig::default()
        };
        ExperimentConfig {
            net: NetConfig::image(),
            env,
            hyper: Hyperparams::default(),
            pretrain: PretrainConfig {
                max_steps: 20_000_000,
                episode_len: 3000,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let obs_matches = self.net.is_image() == (self.env.observation == mazelab_sim::ObsKind::Image);
        if !obs_matches {
            return Err(CoreError::Config("network trunk does not match the observation kind".into()));
        }
        if !self.net.is_image() && self.net.obs_len() != mazelab_sim::render::lowdim_len(self.env.variant.marbles()) {
            return Err(CoreError::Config("state-vector width does not match the marble count".into()));
        }
        self.hyper.validate().map_err(CoreError::Config)?;
        for d in [&self.robust_domain, &self.nominal_domain, &self.target] {
            d.validate()?;
        }
        build_maze(&self.env.maze)?;
        Ok(())
    }

    pub fn domain(&self, scheme: DomainScheme) -> &DomainRange {
        match scheme {
            DomainScheme::Robust => &self.robust_domain,
            DomainScheme::Nonrobust => &self.nominal_domain,
        }
    }

    pub fn env_with(&self, domain: &DomainRange, episode_len: u64) -> EnvConfig {
        EnvConfig {
            domain: domain.clone(),
            max_steps: episode_len,
            ..self.env.clone()
        }
    }

    pub fn pretrain_config(&self, scheme: DomainScheme, seed: u64) -> TrainConfig {
        let p = &self.pretrain;
        let mut train = TrainConfig {
            mode: TrainMode::ParallelOffline,
            n_workers: p.n_workers,
            total_steps: p.max_steps,
            episode_len: p.episode_len,
            segment_len: p.segment_len,
            seed,
            env: self.env_with(self.domain(scheme), p.episode_len),
            hyper: self.hyper,
            ..Default::default()
        };
        p.criterion.apply(&mut train);
        train
    }

    pub fn finetune_config(&self, target: &DomainRange, seed: u64) -> TrainConfig {
        let f = &self.finetune;
        let mut train = TrainConfig {
            mode: TrainMode::OffpolicyOnline,
            n_workers: 1,
            total_steps: f.max_steps,
            episode_len: f.episode_len,
            segment_len: f.segment_len,
            seed,
            env: self.env_with(target, f.episode_len),
            hyper: self.hyper,
            latency: f.latency,
            update_duration: f.update_duration,
            ..Default::default()
        };
        f.criterion.apply(&mut train);
        train
    }
}

#[derive(Debug)]
pub struct Pretrained {
    pub scheme: DomainScheme,
    pub seed: u64,
    pub net: ActorCriticNet,
    pub params: ModelParams,
    pub log: TrainLog,
    /// Greedy evaluation on the training distribution.
    pub eval: EvalReport,
}

impl Pretrained {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.params.clone(),
            meta: serde_json::to_string(self.net.config()).expect("net config serializes"),
        }
    }
}

/// Rebuilds the network described by a checkpoint's metadata.
pub fn restore(ckpt: &Checkpoint) -> Result<ActorCriticNet, CoreError> {
    let config: NetConfig = serde_json::from_str(&ckpt.meta)
        .map_err(|e| CoreError::Config(format!("checkpoint metadata is not a network description: {e}")))?;
    Ok(ActorCriticNet::attach(&config, &ckpt.model.params)?)
}

pub fn pretrain(
    cfg: &ExperimentConfig,
    scheme: DomainScheme,
    seed: u64,
    log: TrainLog,
) -> Result<Pretrained, TrainFailure> {
    pretrain_with(cfg, scheme, cfg.pretrain_config(scheme, seed), log)
}

/// `pretrain` with a caller-adjusted trainer configuration, e.g. to add
/// periodic checkpoints.
pub fn pretrain_with(
    cfg: &ExperimentConfig,
    scheme: DomainScheme,
    train: TrainConfig,
    log: TrainLog,
) -> Result<Pretrained, TrainFailure> {
    if let Err(error) = cfg.validate() {
        return Err(TrainFailure { log, error });
    }
    let seed = train.seed;
    let (net, ps) = ActorCriticNet::init(&cfg.net, seed);
    let store = GlobalStore::new(ModelParams::new(ps), cfg.hyper.optim());
    let log = run_parallel_with_log(&train, &net, &store, log)?;
    let params = store.into_params();
    let eval = match evaluate(
        &net,
        &params.params,
        &train.env_config(),
        cfg.pretrain.eval_episodes.max(1),
        seed ^ 0x5eed,
        EvalPolicy::Greedy,
    ) {
        Ok(r) => r,
        Err(error) => return Err(TrainFailure { log, error }),
    };
    Ok(Pretrained {
        scheme,
        seed,
        net,
        params,
        log,
        eval,
    })
}

#[derive(Debug)]
pub struct FineTuneResult {
    pub seed: u64,
    /// `None` when the criterion was not met within the budget.
    pub steps_to_criterion: Option<u64>,
    pub params: ModelParams,
    pub log: TrainLog,
}

/// Off-policy fine-tuning of pretrained parameters on `target`.
pub fn fine_tune(
    cfg: &ExperimentConfig,
    net: &ActorCriticNet,
    params: &ModelParams,
    target: &DomainRange,
    seed: u64,
    log: TrainLog,
) -> Result<FineTuneResult, TrainFailure> {
    fine_tune_with(cfg, net, params, cfg.finetune_config(target, seed), log)
}

pub fn fine_tune_with(
    cfg: &ExperimentConfig,
    net: &ActorCriticNet,
    params: &ModelParams,
    train: TrainConfig,
    log: TrainLog,
) -> Result<FineTuneResult, TrainFailure> {
    if !params.params.same_layout(&ActorCriticNet::init(net.config(), 0).1) {
        return Err(TrainFailure {
            log,
            error: CoreError::Config("checkpoint does not match the network architecture".into()),
        });
    }
    let store = GlobalStore::new(params.clone(), cfg.hyper.optim());
    let log = run_offpolicy_with_log(&train, net, &store, log)?;
    Ok(FineTuneResult {
        seed: train.seed,
        steps_to_criterion: cfg.finetune.criterion.reached(&log),
        params: store.into_params(),
        log,
    })
}

/// Median of the steps-to-criterion values, counting censored runs at
/// `budget`.
pub fn censored_median(values: &[Option<u64>], budget: u64) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(budget) as f64).collect();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub label: String,
    pub steps_to_criterion: Vec<Option<u64>>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub budget: u64,
    pub a: ArmSummary,
    pub b: ArmSummary,
}

impl ComparisonReport {
    pub fn new(seeds: Vec<u64>, budget: u64, a: (String, Vec<Option<u64>>), b: (String, Vec<Option<u64>>)) -> Self {
        let arm = |(label, steps): (String, Vec<Option<u64>>)| ArmSummary {
            median: censored_median(&steps, budget),
            label,
            steps_to_criterion: steps,
        };
        ComparisonReport {
            seeds,
            budget,
            a: arm(a),
            b: arm(b),
        }
    }

    /// `median(b) / median(a)`: how many times longer the second arm takes.
    pub fn ratio(&self) -> f64 {
        self.b.median / self.a.median
    }

    pub fn swapped(&self) -> Self {
        ComparisonReport {
            seeds: self.seeds.clone(),
            budget: self.budget,
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }

    /// `median(a) <= factor * median(b)`.
    pub fn a_within(&self, factor: f64) -> bool {
        self.a.median <= factor * self.b.median
    }
}

/// Paired greedy success rates of two policies on domains drawn from
/// `range`: entry `i` is `(rate_a, rate_b)` on the `i`-th draw.
#[allow(clippy::too_many_arguments)]
pub fn paired_domain_probe(
    cfg: &ExperimentConfig,
    net: &ActorCriticNet,
    a: &ModelParams,
    b: &ModelParams,
    range: &DomainRange,
    n_domains: usize,
    episodes: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>, CoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_domains)
        .map(|i| {
            let sample = sample_domain(range, &mut rng);
            let env = cfg.env_with(&DomainRange::fixed(&sample), cfg.pretrain.episode_len);
            let s = seed.wrapping_add(1000 * i as u64);
            let ra = evaluate(net, &a.params, &env, episodes, s, EvalPolicy::Greedy)?;
            let rb = evaluate(net, &b.params, &env, episodes, s, EvalPolicy::Greedy)?;
            Ok((ra.success_rate, rb.success_rate))
        })
        .collect()
}

/// Everything needed to re-run a training or fine-tuning job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub mode: TrainMode,
    pub scheme: Option<DomainScheme>,
    pub seeds: Vec<u64>,
    pub geometry_hash: String,
    pub code_hash: String,
    pub config: ExperimentConfig,
    /// Domain ranges the run actually sampled from.
    pub domain: DomainRange,
    pub checkpoints: Vec<PathBuf>,
    pub source_checkpoint: Option<PathBuf>,
    pub total_steps: u64,
    pub steps_to_criterion: Option<u64>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        let text = toml::to_string(self).map_err(|e| CoreError::Config(format!("manifest: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CoreError::Config(format!("manifest {}: {e}", path.display())))
    }
}

pub fn geometry_hash(env: &EnvConfig) -> Result<String, CoreError> {
    Ok(build_maze(&env.maze)?.hash().to_string())
}
