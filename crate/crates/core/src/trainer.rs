//! Parallel A3C workers over a shared parameter store, and the single-agent
//! off-policy loop that overlaps collection with the update of the previous
//! segment on a virtual clock.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use mazelab_nn::{Checkpoint, Gradients, ModelParams, NnError, OptimConfig};
use mazelab_sim::EnvConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CoreError;
use crate::eval::{evaluate, steps_to_criterion, EvalPolicy};
use crate::loss::{Hyperparams, LossStats};
use crate::net::ActorCriticNet;
use crate::trajectory::Trajectory;
use crate::worker::{EpisodeSummary, Worker};

/// Single-writer, many-reader parameter store. Readers get an `Arc` to an
/// immutable version; the writer publishes a complete new version.
pub struct GlobalStore {
    current: RwLock<Arc<ModelParams>>,
    writer: Mutex<()>,
    optim: OptimConfig,
    rejected: AtomicU64,
}

impl GlobalStore {
    pub fn new(params: ModelParams, optim: OptimConfig) -> Self {
        GlobalStore {
            current: RwLock::new(Arc::new(params)),
            writer: Mutex::new(()),
            optim,
            rejected: AtomicU64::new(0),
        }
    }

    pub fn snapshot(&self) -> Arc<ModelParams> {
        self.current.read().expect("store lock poisoned").clone()
    }

    pub fn version(&self) -> u64 {
        self.snapshot().version()
    }

    pub fn rejected(&self) -> u64 {
        self.rejected.load(Ordering::SeqCst)
    }

    /// Applies one optimizer step and publishes the result. Non-finite
    /// gradients are dropped, counted and reported.
    pub fn update(&self, grads: &Gradients<f32>) -> Result<u64, NnError> {
        let _w = self.writer.lock().expect("writer lock poisoned");
        let mut next = (*self.snapshot()).clone();
        match next.apply(grads, &self.optim) {
            Ok(stats) => {
                *self.current.write().expect("store lock poisoned") = Arc::new(next);
                Ok(stats.version)
            }
            Err(e) => {
                self.rejected.fetch_add(1, Ordering::SeqCst);
                log::warn!("update dropped: {e}");
                Err(e)
            }
        }
    }

    pub fn into_params(self) -> ModelParams {
        Arc::try_unwrap(self.current.into_inner().expect("store lock poisoned")).unwrap_or_else(|a| (*a).clone())
    }
}

/// Timing of the physical loop, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub actuation_ms: f64,
    pub compute_ms: (f64, f64),
    /// Forward-pass time while an update runs concurrently.
    pub inflated_compute_ms: (f64, f64),
    pub frame_interval_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            actuation_ms: 190.0,
            compute_ms: (20.0, 30.0),
            inflated_compute_ms: (60.0, 120.0),
            frame_interval_ms: 233.0,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        let range_ok = |(lo, hi): (f64, f64)| lo >= 0.0 && lo <= hi;
        if !(self.frame_interval_ms > 0.0) || self.actuation_ms < 0.0 {
            return Err("frame interval must be positive and actuation non-negative".into());
        }
        if !range_ok(self.compute_ms) || !range_ok(self.inflated_compute_ms) {
            return Err("compute ranges must be non-negative with lo <= hi".into());
        }
        Ok(())
    }

    pub fn sample_compute_ms<R: Rng + ?Sized>(&self, update_in_flight: bool, rng: &mut R) -> f64 {
        let (lo, hi) = if update_in_flight {
            self.inflated_compute_ms
        } else {
            self.compute_ms
        };
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Proceed,
    SubstituteNoOp,
}

/// No-op when the command cannot take effect before the next frame.
pub fn gate_for(model: &LatencyModel, compute_ms: f64) -> GateDecision {
    if compute_ms + model.actuation_ms > model.frame_interval_ms {
        GateDecision::SubstituteNoOp
    } else {
        GateDecision::Proceed
    }
}

/// Samples the forward-pass time and decides.
pub fn latency_gate<R: Rng + ?Sized>(model: &LatencyModel, update_in_flight: bool, rng: &mut R) -> GateDecision {
    gate_for(model, model.sample_compute_ms(update_in_flight, rng))
}

/// Virtual duration of one update in the off-policy loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UpdateDuration {
    /// Milliseconds, uniform in `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// A multiple of the full segment duration `L_se * frame_interval`.
    Segments { factor: f64 },
}

impl Default for UpdateDuration {
    fn default() -> Self {
        UpdateDuration::Uniform { lo: 2000.0, hi: 4000.0 }
    }
}

impl UpdateDuration {
    fn sample<R: Rng + ?Sized>(&self, segment_ms: f64, rng: &mut R) -> f64 {
        match *self {
            UpdateDuration::Uniform { lo, hi } if lo == hi => lo,
            UpdateDuration::Uniform { lo, hi } => rng.random_range(lo..=hi),
            UpdateDuration::Segments { factor } => factor * segment_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    ParallelOffline,
    OffpolicyOnline,
}

/// Sliding-window success rule over training episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub window: usize,
    pub success: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            window: 50,
            success: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub n_workers: usize,
    pub total_steps: u64,
    /// Maximum episode length L_e; overrides the environment's value.
    pub episode_len: u64,
    /// Segment length L_se between updates.
    pub segment_len: usize,
    pub seed: u64,
    pub env: EnvConfig,
    pub hyper: Hyperparams,
    /// Stop once the training-episode window reaches this rule.
    pub stop: Option<StopRule>,
    /// Greedy evaluation every this many steps (worker 0).
    pub eval_every: Option<u64>,
    pub eval_episodes: usize,
    /// Stop when a periodic evaluation reaches this success rate.
    pub eval_target: Option<f64>,
    pub checkpoint_every: Option<u64>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Latency gate for the off-policy loop; `None` disables it.
    pub latency: Option<LatencyModel>,
    pub update_duration: UpdateDuration,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::ParallelOffline,
            n_workers: 4,
            total_steps: 2_000_000,
            episode_len: 3000,
            segment_len: 200,
            seed: 0,
            env: EnvConfig::desk(),
            hyper: Hyperparams::default(),
            stop: None,
            eval_every: None,
            eval_episodes: 50,
            eval_target: None,
            checkpoint_every: None,
            checkpoint_dir: None,
            latency: None,
            update_duration: UpdateDuration::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n_workers == 0 {
            return Err(CoreError::Config("n_workers must be at least 1".into()));
        }
        if self.mode == TrainMode::OffpolicyOnline && self.n_workers != 1 {
            return Err(CoreError::Config("the off-policy loop trains a single agent".into()));
        }
        if self.segment_len == 0 || self.episode_len == 0 {
            return Err(CoreError::Config("segment and episode lengths must be positive".into()));
        }
        self.hyper.validate().map_err(CoreError::Config)?;
        if let Some(l) = &self.latency {
            l.validate().map_err(CoreError::Config)?;
        }
        self.env.domain.validate()?;
        Ok(())
    }

    /// Environment with the episode length applied.
    pub fn env_config(&self) -> EnvConfig {
        let mut e = self.env.clone();
        e.max_steps = self.episode_len;
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Global steps when the episode ended.
    pub step: u64,
    pub worker: usize,
    pub episode: u64,
    pub reward: f64,
    pub length: u64,
    pub solved: bool,
    pub domain_hash: String,
    pub param_version: u64,
    pub deferrals: u64,
    pub substitutions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub index: u64,
    pub worker: usize,
    pub steps: usize,
    /// Version the whole segment was collected under.
    pub behavior_version: u64,
    /// Every tensor of the snapshot carried `behavior_version`.
    pub consistent: bool,
    /// Newest version whose computation had finished when the segment ended.
    pub latest_version: u64,
    /// Segment boundaries between the start of the update that produced
    /// `behavior_version` and its swap into the collector.
    pub staleness: u64,
    /// SHA-256 over actions, rewards and observations, hex.
    pub digest: String,
    /// Loss terms of the update computed from this segment, if any.
    pub loss: Option<LossStats>,
    /// Gradient norm before clipping.
    pub grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub success_rate: f64,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Episode(EpisodeRecord),
    Segment(SegmentRecord),
    Eval(EvalRecord),
}

#[derive(Debug, Default)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeRecord>,
    pub segments: Vec<SegmentRecord>,
    pub evals: Vec<EvalRecord>,
    pub total_steps: u64,
    pub updates: u64,
    pub rejected_updates: u64,
    pub deferrals: u64,
    pub substitutions: u64,
    pub dropped_segments: u64,
    /// Steps before the first window satisfying the stop rule.
    pub converged_at: Option<u64>,
    /// Steps at the first periodic evaluation reaching the target.
    pub eval_reached_at: Option<u64>,
    pub final_version: u64,
    sink: Option<BufWriter<File>>,
}

impl TrainLog {
    /// Appends every record to `path` as JSON lines while training.
    pub fn with_sink(path: &Path) -> Result<Self, CoreError> {
        Ok(TrainLog {
            sink: Some(BufWriter::new(File::create(path)?)),
            ..Default::default()
        })
    }

    fn write(&mut self, line: LogLine) {
        if let Some(s) = self.sink.as_mut() {
            let ok = serde_json::to_writer(&mut *s, &line).is_ok() && s.write_all(b"\n").is_ok();
            if !ok {
                log::error!("training log write failed; further records kept in memory only");
                self.sink = None;
            }
        }
    }

    fn push_episode(&mut self, r: EpisodeRecord, stop: Option<StopRule>) {
        self.write(LogLine::Episode(r.clone()));
        self.episodes.push(r);
        if let (Some(rule), None) = (stop, self.converged_at) {
            let n = self.episodes.len();
            if n >= rule.window {
                let tail: Vec<(u64, bool)> =
                    self.episodes[n - rule.window..].iter().map(|e| (e.step, e.solved)).collect();
                if steps_to_criterion(&tail, rule.window, rule.success).is_some() {
                    self.converged_at = Some(if n == rule.window {
                        0
                    } else {
                        self.episodes[n - rule.window - 1].step
                    });
                }
            }
        }
    }

    fn push_segment(&mut self, r: SegmentRecord) {
        self.write(LogLine::Segment(r.clone()));
        self.segments.push(r);
    }

    /// Records an evaluation; true if it reaches `target`.
    fn push_eval(&mut self, r: EvalRecord, target: Option<f64>) -> bool {
        let hit = target.is_some_and(|t| r.success_rate >= t);
        if hit && self.eval_reached_at.is_none() {
            self.eval_reached_at = Some(r.step);
        }
        self.write(LogLine::Eval(r.clone()));
        self.evals.push(r);
        hit
    }

    pub fn flush(&mut self) {
        if let Some(s) = self.sink.as_mut() {
            let _ = s.flush();
        }
    }

    /// `(step, solved)` for every episode in completion order.
    pub fn solve_series(&self) -> Vec<(u64, bool)> {
        self.episodes.iter().map(|e| (e.step, e.solved)).collect()
    }

    /// Reads a JSON-lines log back.
    pub fn read_lines(path: &Path) -> Result<Vec<LogLine>, CoreError> {
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| CoreError::Config(format!("bad log line: {e}"))))
            .collect()
    }
}

/// A run that stopped on an error, with everything logged so far.
#[derive(Debug)]
pub struct TrainFailure {
    pub log: TrainLog,
    pub error: CoreError,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training aborted after {} steps: {}", self.log.total_steps, self.error)
    }
}

impl std::error::Error for TrainFailure {}

pub fn trajectory_digest(traj: &Trajectory) -> String {
    let mut h = Sha256::new();
    for s in &traj.steps {
        h.update([s.action as u8, s.terminal as u8, s.substituted as u8]);
        h.update(s.reward.to_le_bytes());
        for v in &s.obs {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn episode_record(e: &EpisodeSummary, step: u64, worker: usize, version: u64, deferrals: u64) -> EpisodeRecord {
    EpisodeRecord {
        step,
        worker,
        episode: e.episode,
        reward: e.reward,
        length: e.length,
        solved: e.solved,
        domain_hash: e.domain_hash.to_string(),
        param_version: version,
        deferrals,
        substitutions: e.substitutions,
    }
}

/// Greedy evaluation of `params` on the training environment.
fn periodic_eval(cfg: &TrainConfig, net: &ActorCriticNet, params: &ModelParams, step: u64) -> Result<EvalRecord, CoreError> {
    let report = evaluate(
        net,
        &params.params,
        &cfg.env_config(),
        cfg.eval_episodes.max(1),
        cfg.seed ^ 0xe7a1 ^ step,
        EvalPolicy::Greedy,
    )?;
    log::info!("step {step}: greedy success {:.2}", report.success_rate);
    Ok(EvalRecord {
        step,
        success_rate: report.success_rate,
        mean_length: report.mean_length,
    })
}

/// Evaluation before any training when periodic evaluation is enabled;
/// true if the untrained parameters already reach the target.
fn initial_eval(cfg: &TrainConfig, net: &ActorCriticNet, store: &GlobalStore, log: &mut TrainLog) -> Result<bool, CoreError> {
    if cfg.eval_every.is_none() {
        return Ok(false);
    }
    let r = periodic_eval(cfg, net, &store.snapshot(), 0)?;
    Ok(log.push_eval(r, cfg.eval_target))
}

fn save_checkpoint(dir: &Path, step: u64, params: &ModelParams, net: &ActorCriticNet) -> Result<PathBuf, CoreError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("ckpt_{step:09}.mzck"));
    Checkpoint {
        model: params.clone(),
        meta: serde_json::to_string(net.config()).expect("net config serializes"),
    }
    .save(&path)?;
    Ok(path)
}

struct Shared<'a> {
    config: &'a TrainConfig,
    net: &'a ActorCriticNet,
    store: &'a GlobalStore,
    steps: AtomicU64,
    claimed: AtomicU64,
    stop: AtomicBool,
    log: Mutex<TrainLog>,
    next_checkpoint: AtomicU64,
    next_eval: AtomicU64,
    /// Segments hold it shared; evaluation holds it exclusively so the
    /// evaluated parameters are the ones training stops with.
    pause: RwLock<()>,
}

impl Shared<'_> {
    fn after_steps(&self, worker: usize, done: u64) -> Result<(), CoreError> {
        let cfg = self.config;
        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, cfg.checkpoint_dir.as_ref()) {
            let due = self.next_checkpoint.load(Ordering::SeqCst);
            if done >= due
                && self
                    .next_checkpoint
                    .compare_exchange(due, due + every, Ordering::SeqCst, Ordering::SeqCst)
                    .is_ok()
            {
                save_checkpoint(dir, done, &self.store.snapshot(), self.net)?;
            }
        }
        if let Some(every) = cfg.eval_every {
            let due = self.next_eval.load(Ordering::SeqCst);
            if worker == 0 && done >= due {
                self.next_eval.store(due + every, Ordering::SeqCst);
                let _paused = self.pause.write().expect("pause lock");
                let at = self.steps.load(Ordering::SeqCst);
                let r = periodic_eval(cfg, self.net, &self.store.snapshot(), at)?;
                if self.log.lock().expect("log lock").push_eval(r, cfg.eval_target) {
                    self.stop.store(true, Ordering::SeqCst);
                }
            }
        }
        Ok(())
    }

    /// Reserves up to one segment of the global step budget.
    fn claim(&self) -> Option<u64> {
        let seg = self.config.segment_len as u64;
        let total = self.config.total_steps;
        self.claimed
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| (c < total).then(|| c + seg.min(total - c)))
            .ok()
            .map(|c| seg.min(total - c))
    }

    fn worker_loop(&self, mut worker: Worker) -> Result<(), CoreError> {
        let cfg = self.config;
        let mut segment = 0u64;
        while !self.stop.load(Ordering::SeqCst) {
            let running = self.pause.read().expect("pause lock");
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let Some(budget) = self.claim() else { break };
            let snap = self.store.snapshot();
            let (traj, finished) = worker.collect(&snap, budget as usize, &mut || false)?;
            let n = traj.len() as u64;
            self.claimed.fetch_sub(budget - n, Ordering::SeqCst);
            let done = self.steps.fetch_add(n, Ordering::SeqCst) + n;
            let (grads, stats) = worker.compute_update(&snap, &traj)?;
            let grad_norm = grads.global_norm();
            let applied = match self.store.update(&grads) {
                Ok(_) => true,
                Err(NnError::NonFiniteGradient) => false,
                Err(e) => return Err(e.into()),
            };
            {
                let mut log = self.log.lock().expect("log lock");
                log.updates += applied as u64;
                log.push_segment(SegmentRecord {
                    index: segment,
                    worker: worker.id,
                    steps: traj.len(),
                    behavior_version: snap.version(),
                    consistent: snap.is_consistent(),
                    latest_version: snap.version(),
                    staleness: 0,
                    digest: trajectory_digest(&traj),
                    loss: Some(stats),
                    grad_norm: Some(grad_norm),
                });
                for e in &finished {
                    log.push_episode(episode_record(e, done, worker.id, snap.version(), 0), cfg.stop);
                }
                if cfg.stop.is_some() && log.converged_at.is_some() {
                    self.stop.store(true, Ordering::SeqCst);
                }
            }
            segment += 1;
            drop(running);
            self.after_steps(worker.id, done)?;
        }
        Ok(())
    }
}

/// Multi-worker A3C. With one worker the run is fully deterministic.
pub fn run_parallel(config: &TrainConfig, net: &ActorCriticNet, store: &GlobalStore) -> Result<TrainLog, TrainFailure> {
    run_parallel_with_log(config, net, store, TrainLog::default())
}

pub fn run_parallel_with_log(
    config: &TrainConfig,
    net: &ActorCriticNet,
    store: &GlobalStore,
    log: TrainLog,
) -> Result<TrainLog, TrainFailure> {
    if let Err(error) = config.validate() {
        return Err(TrainFailure { log, error });
    }
    if config.mode != TrainMode::ParallelOffline {
        return Err(TrainFailure {
            log,
            error: CoreError::Config("run_parallel needs mode parallel_offline".into()),
        });
    }
    let env = config.env_config();
    let mut workers = Vec::with_capacity(config.n_workers);
    for i in 0..config.n_workers {
        match Worker::new(i, &env, net.clone(), config.hyper, config.seed) {
            Ok(w) => workers.push(w),
            Err(error) => return Err(TrainFailure { log, error }),
        }
    }
    let mut log = log;
    let done_already = match initial_eval(config, net, store, &mut log) {
        Ok(hit) => hit,
        Err(error) => return Err(TrainFailure { log, error }),
    };
    let shared = Shared {
        config,
        net,
        store,
        steps: AtomicU64::new(0),
        claimed: AtomicU64::new(0),
        stop: AtomicBool::new(done_already),
        log: Mutex::new(log),
        next_checkpoint: AtomicU64::new(config.checkpoint_every.unwrap_or(u64::MAX)),
        next_eval: AtomicU64::new(config.eval_every.unwrap_or(u64::MAX)),
        pause: RwLock::new(()),
    };
    let result: Result<(), CoreError> = if workers.len() == 1 {
        shared.worker_loop(workers.pop().expect("one worker"))
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = workers
                .into_iter()
                .map(|w| {
                    let sh = &shared;
                    s.spawn(move || {
                        let id = w.id;
                        let r = sh.worker_loop(w);
                        if r.is_err() {
                            sh.stop.store(true, Ordering::SeqCst);
                        }
                        r.map_err(|e| (id, e))
                    })
                })
                .collect();
            let mut first = Ok(());
            for h in handles {
                let r = match h.join() {
                    Ok(r) => r,
                    Err(_) => Err((usize::MAX, CoreError::Config("worker panicked".into()))),
                };
                if let (Err((worker, e)), Ok(())) = (r, &first) {
                    first = Err(CoreError::WorkerFailed {
                        worker,
                        message: e.to_string(),
                    });
                }
            }
            first
        })
    };
    let mut log = shared.log.into_inner().expect("log lock");
    log.total_steps = shared.steps.load(Ordering::SeqCst);
    log.rejected_updates = store.rejected();
    log.final_version = store.version();
    if let (Some(dir), Some(_)) = (config.checkpoint_dir.as_ref(), config.checkpoint_every) {
        if let Err(error) = save_checkpoint(dir, log.total_steps, &store.snapshot(), net) {
            log.flush();
            return Err(TrainFailure { log, error });
        }
    }
    log.flush();
    match result {
        Ok(()) => Ok(log),
        Err(error) => Err(TrainFailure { log, error }),
    }
}

struct InFlight {
    version: u64,
    done_at: f64,
    started_boundary: u64,
}

/// Off-policy A3C for one agent on a virtual clock.
///
/// Segment `t+1` is collected under a frozen snapshot while the update from
/// segment `t` runs. An update that finishes by a segment boundary is
/// swapped in at that boundary; otherwise the swap is deferred to the first
/// boundary after it finishes and the deferral is counted. While an update
/// is busy, completed segments queue and only the newest one is used next.
pub fn run_offpolicy(config: &TrainConfig, net: &ActorCriticNet, store: &GlobalStore) -> Result<TrainLog, TrainFailure> {
    run_offpolicy_with_log(config, net, store, TrainLog::default())
}

pub fn run_offpolicy_with_log(
    config: &TrainConfig,
    net: &ActorCriticNet,
    store: &GlobalStore,
    mut log: TrainLog,
) -> Result<TrainLog, TrainFailure> {
    if let Err(error) = config.validate() {
        return Err(TrainFailure { log, error });
    }
    if config.mode != TrainMode::OffpolicyOnline {
        return Err(TrainFailure {
            log,
            error: CoreError::Config("run_offpolicy needs mode offpolicy_online".into()),
        });
    }
    let result = offpolicy_loop(config, net, store, &mut log);
    log.rejected_updates = store.rejected();
    log.final_version = store.version();
    if let (Some(dir), Some(_)) = (config.checkpoint_dir.as_ref(), config.checkpoint_every) {
        if let Err(error) = save_checkpoint(dir, log.total_steps, &store.snapshot(), net) {
            return Err(TrainFailure { log, error });
        }
    }
    log.flush();
    match result {
        Ok(()) => Ok(log),
        Err(error) => Err(TrainFailure { log, error }),
    }
}

fn offpolicy_loop(config: &TrainConfig, net: &ActorCriticNet, store: &GlobalStore, log: &mut TrainLog) -> Result<(), CoreError> {
    let env = config.env_config();
    let mut worker = Worker::new(0, &env, net.clone(), config.hyper, config.seed)?;
    let (_, _, timing_seed) = crate::worker::worker_seeds(config.seed ^ 0x0ff, 0);
    let mut timing_rng = ChaCha8Rng::seed_from_u64(timing_seed);
    let frame_ms = config.latency.map_or(LatencyModel::default().frame_interval_ms, |l| l.frame_interval_ms);
    let segment_ms = config.segment_len as f64 * frame_ms;

    let mut behavior = store.snapshot();
    let mut behavior_staleness = 0u64;
    let mut in_flight: Option<InFlight> = None;
    let mut latest_done = behavior.version();
    let mut clock = 0.0f64;
    let mut steps = 0u64;
    let mut segment = 0u64;
    let mut next_checkpoint = config.checkpoint_every.unwrap_or(u64::MAX);
    let mut next_eval = config.eval_every.unwrap_or(u64::MAX);
    if initial_eval(config, net, store, log)? {
        return Ok(());
    }

    while steps < config.total_steps {
        let budget = (config.total_steps - steps).min(config.segment_len as u64) as usize;
        let seg_start = clock;
        let mut k = 0u64;
        let mut substitutions = 0u64;
        let busy_until = in_flight.as_ref().map(|f| f.done_at);
        let latency = config.latency;
        let mut gate = || {
            let now = seg_start + k as f64 * frame_ms;
            k += 1;
            let Some(model) = latency.as_ref() else { return false };
            let in_flight_now = busy_until.is_some_and(|d| now < d);
            let sub = latency_gate(model, in_flight_now, &mut timing_rng) == GateDecision::SubstituteNoOp;
            substitutions += sub as u64;
            sub
        };
        let collected_staleness = behavior_staleness;
        let (traj, finished) = worker.collect(&behavior, budget, &mut gate)?;
        let consistent = behavior.is_consistent() && traj.param_version == behavior.version();
        clock += traj.len() as f64 * frame_ms;
        steps += traj.len() as u64;
        log.total_steps = steps;
        log.substitutions += substitutions;
        segment += 1;

        // segment boundary: finish, swap, then start the next update
        if let Some(f) = &in_flight {
            if f.done_at <= clock {
                latest_done = f.version;
                behavior = store.snapshot();
                debug_assert_eq!(behavior.version(), f.version);
                behavior_staleness = segment - f.started_boundary;
                in_flight = None;
            } else {
                log.deferrals += 1;
            }
        }
        let latest_at_boundary = latest_done;
        let (mut loss, mut grad_norm) = (None, None);
        if in_flight.is_none() {
            let learner = store.snapshot();
            let (grads, stats) = worker.compute_update(&learner, &traj)?;
            loss = Some(stats);
            grad_norm = Some(grads.global_norm());
            match store.update(&grads) {
                Ok(version) => {
                    log.updates += 1;
                    let d = config.update_duration.sample(segment_ms, &mut timing_rng);
                    if d <= 0.0 {
                        latest_done = version;
                        behavior = store.snapshot();
                        behavior_staleness = 0;
                    } else {
                        in_flight = Some(InFlight {
                            version,
                            done_at: clock + d,
                            started_boundary: segment,
                        });
                    }
                }
                Err(NnError::NonFiniteGradient) => {}
                Err(e) => return Err(e.into()),
            }
        } else {
            log.dropped_segments += 1;
        }
        log.push_segment(SegmentRecord {
            index: segment - 1,
            worker: 0,
            steps: traj.len(),
            behavior_version: traj.param_version,
            consistent,
            latest_version: latest_at_boundary,
            staleness: collected_staleness,
            digest: trajectory_digest(&traj),
            loss,
            grad_norm,
        });
        for e in &finished {
            log.push_episode(
                episode_record(e, steps, 0, traj.param_version, log.deferrals),
                config.stop,
            );
        }
        if let (Some(every), Some(dir)) = (config.checkpoint_every, config.checkpoint_dir.as_ref()) {
            if steps >= next_checkpoint {
                save_checkpoint(dir, steps, &store.snapshot(), net)?;
                next_checkpoint += every;
            }
        }
        if let Some(every) = config.eval_every {
            if steps >= next_eval {
                next_eval += every;
                let r = periodic_eval(config, net, &store.snapshot(), steps)?;
                if log.push_eval(r, config.eval_target) {
                    break;
                }
            }
        }
        if config.stop.is_some() && log.converged_at.is_some() {
            break;
        }
    }
    Ok(())
}
