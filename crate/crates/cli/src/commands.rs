//! Command implementations. Each returns its outcome so the binary and the
//! tests share one code path; console output is a summary of files written.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use mazelab_core::eval::{evaluate, EvalEpisode, EvalPolicy, EvalReport};
use mazelab_core::experiment::{
    fine_tune_with, geometry_hash, paired_domain_probe, pretrain_with, restore, ComparisonReport, DomainScheme,
    ExperimentConfig, RunManifest,
};
use mazelab_core::net::policy_value_forward;
use mazelab_core::trainer::{EpisodeRecord, TrainFailure, TrainLog, TrainMode};
use mazelab_core::ActorCriticNet;
use mazelab_nn::{Checkpoint, ModelParams};
use mazelab_sim::render::dump_frame;
use mazelab_sim::{Action, DomainRange, EnvConfig, MazeEnv};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cli::{Cli, CompareArgs, EvalArgs, PlayArgs, TrainArgs, TransferArgs};
use crate::plot::{self, Curve};
use crate::series::{self, read_csv, write_csv, CompareRow, ProbeRow, NONROBUST, ROBUST};

pub const CODE_HASH: &str = env!("MAZELAB_CODE_HASH");

/// Episodes averaged per plotted point.
const SMOOTHING: usize = 50;
const PROBE_SEED: u64 = 0x9b0b_e5ee;

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub lowdim: bool,
    pub image: bool,
    pub seed: u64,
    pub domain: Option<String>,
}

impl From<&Cli> for Common {
    fn from(c: &Cli) -> Self {
        Common {
            config: c.config.clone(),
            lowdim: c.lowdim,
            image: c.image,
            seed: c.seed,
            domain: c.domain.clone(),
        }
    }
}

fn check_kind(c: &Common, cfg: &ExperimentConfig) -> Result<()> {
    if c.image && !cfg.net.is_image() {
        bail!("--image given but the configuration uses state-vector observations");
    }
    if c.lowdim && cfg.net.is_image() {
        bail!("--lowdim given but the configuration uses image observations");
    }
    Ok(())
}

pub fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<ExperimentConfig>(&text).with_context(|| format!("invalid config {}", p.display()))?
        }
        None if c.image => ExperimentConfig::image(),
        None => ExperimentConfig::default(),
    };
    check_kind(c, &cfg)?;
    cfg.validate().context("invalid config")?;
    Ok(cfg)
}

pub fn resolve_domain(c: &Common, cfg: &ExperimentConfig, default: &DomainRange) -> Result<DomainRange> {
    let d = match c.domain.as_deref() {
        None => default.clone(),
        Some("nominal") => cfg.nominal_domain.clone(),
        Some("randomized" | "robust") => cfg.robust_domain.clone(),
        Some("real-proxy" | "target") => cfg.target.clone(),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading domain file {p}"))?;
            toml::from_str::<DomainRange>(&text).with_context(|| format!("invalid domain file {p}"))?
        }
    };
    d.validate().context("invalid domain ranges")?;
    Ok(d)
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// A pretrained model together with the configuration it runs under.
pub struct Loaded {
    pub cfg: ExperimentConfig,
    pub net: ActorCriticNet,
    pub params: ModelParams,
    pub checkpoint: PathBuf,
    pub manifest: Option<RunManifest>,
}

/// Loads a checkpoint file, or the newest checkpoint listed in a manifest.
/// The checkpoint defines the network; a manifest also supplies the config
/// unless `--config` overrides it.
pub fn load_model(c: &Common, path: &Path) -> Result<Loaded> {
    let manifest = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => Some(RunManifest::load(path)?),
        _ => None,
    };
    let checkpoint = match &manifest {
        Some(m) => {
            let last = m.checkpoints.last().context("manifest lists no checkpoints")?;
            path.parent().unwrap_or(Path::new("")).join(last)
        }
        None => path.to_path_buf(),
    };
    let ckpt = Checkpoint::load(&checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let net = restore(&ckpt).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let mut cfg = match (&c.config, &manifest) {
        (None, Some(m)) => {
            check_kind(c, &m.config)?;
            m.config.clone()
        }
        _ => load_config(c)?,
    };
    cfg.net = net.config().clone();
    cfg.validate()
        .context("checkpoint architecture does not match the configured observations")?;
    Ok(Loaded {
        cfg,
        net,
        params: ckpt.model,
        checkpoint,
        manifest,
    })
}

fn failed(out: &Path, f: TrainFailure) -> anyhow::Error {
    if let Err(e) = write_csv(&out.join("episodes.csv"), &f.log.episodes) {
        log::warn!("could not write the partial episode series: {e:#}");
    }
    anyhow::Error::new(f.error).context("training failed")
}

fn checkpoint_list(out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join("checkpoints");
    let mut v: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(entries) => entries
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "mzck"))
            .filter_map(|p| p.file_name().map(|n| Path::new("checkpoints").join(n)))
            .collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    v.push(PathBuf::from("final.mzck"));
    Ok(v)
}

/// Writes the episode table and the figure drawn from it.
fn write_curves(out: &Path, title: &str, label: &str, episodes: &[EpisodeRecord]) -> Result<()> {
    let path = out.join("episodes.csv");
    write_csv(&path, episodes)?;
    let eps: Vec<EpisodeRecord> = read_csv(&path)?;
    plot::write(&out.join("curves.svg"), title, &[plot::curve(label, 0, &eps, SMOOTHING)])
}

fn criterion_text(s: Option<u64>) -> String {
    s.map_or_else(|| "not reached".to_string(), |v| format!("{v} steps"))
}

fn scheme_label(s: DomainScheme) -> &'static str {
    match s {
        DomainScheme::Robust => ROBUST,
        DomainScheme::Nonrobust => NONROBUST,
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainOutcome {
    pub manifest: RunManifest,
    pub final_checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub eval: EvalReport,
}

pub fn cmd_train(c: &Common, a: &TrainArgs) -> Result<TrainOutcome> {
    let (mut cfg, scheme, seed) = match &a.manifest {
        Some(p) => {
            let m = RunManifest::load(p)?;
            let scheme = m.scheme.context("manifest does not record a training scheme")?;
            let seed = *m.seeds.first().context("manifest records no seed")?;
            (m.config, scheme, seed)
        }
        None => {
            let scheme = if a.robust { DomainScheme::Robust } else { DomainScheme::Nonrobust };
            (load_config(c)?, scheme, c.seed)
        }
    };
    if let Some(s) = a.steps {
        cfg.pretrain.max_steps = s;
    }
    if let Some(w) = a.workers {
        cfg.pretrain.n_workers = w;
    }
    cfg.validate().context("invalid config")?;

    fs::create_dir_all(a.out.join("checkpoints"))?;
    let mut train = cfg.pretrain_config(scheme, seed);
    train.validate().context("invalid config")?;
    let every = a.checkpoint_every.unwrap_or(cfg.pretrain.max_steps / 10);
    if every > 0 {
        train.checkpoint_every = Some(every);
        train.checkpoint_dir = Some(a.out.join("checkpoints"));
    }
    let log = TrainLog::with_sink(&a.out.join("train.jsonl"))?;
    log::info!(
        "pretraining {} seed {seed}: {} workers, {} steps",
        scheme_label(scheme),
        cfg.pretrain.n_workers,
        cfg.pretrain.max_steps
    );
    let pre = pretrain_with(&cfg, scheme, train, log).map_err(|f| failed(&a.out, f))?;

    let reached = cfg.pretrain.criterion.reached(&pre.log);
    let final_checkpoint = a.out.join("final.mzck");
    pre.checkpoint().save(&final_checkpoint)?;
    write_curves(&a.out, &format!("pretraining ({})", scheme_label(scheme)), scheme_label(scheme), &pre.log.episodes)?;
    write_csv(&a.out.join("eval.csv"), &pre.eval.episodes)?;

    let manifest = RunManifest {
        command: "train".into(),
        mode: TrainMode::ParallelOffline,
        scheme: Some(scheme),
        seeds: vec![seed],
        geometry_hash: geometry_hash(&cfg.env)?,
        code_hash: CODE_HASH.into(),
        domain: cfg.domain(scheme).clone(),
        config: cfg,
        checkpoints: checkpoint_list(&a.out)?,
        source_checkpoint: None,
        total_steps: pre.log.total_steps,
        steps_to_criterion: reached,
    };
    manifest.save(&a.out.join("manifest.toml"))?;
    let checkpoint_sha256 = file_sha256(&final_checkpoint)?;
    println!(
        "pretrained {} seed {seed}: {} steps, {} episodes, criterion {}",
        scheme_label(scheme),
        pre.log.total_steps,
        pre.log.episodes.len(),
        criterion_text(reached)
    );
    println!(
        "greedy eval ({} episodes): success {:.3}, mean length {:.1}, mean reward {:.3}",
        pre.eval.n_episodes, pre.eval.success_rate, pre.eval.mean_length, pre.eval.mean_reward
    );
    println!("checkpoint {} sha256 {checkpoint_sha256}", final_checkpoint.display());
    Ok(TrainOutcome {
        manifest,
        final_checkpoint,
        checkpoint_sha256,
        eval: pre.eval,
    })
}

// ---------------------------------------------------------------------------
// transfer
// ---------------------------------------------------------------------------

pub struct TransferOutcome {
    pub manifest: RunManifest,
    pub steps_to_criterion: Option<u64>,
    pub final_checkpoint: PathBuf,
}

pub fn cmd_transfer(c: &Common, a: &TransferArgs) -> Result<TransferOutcome> {
    let m = load_model(c, &a.checkpoint)?;
    let mut cfg = m.cfg;
    if let Some(s) = a.steps {
        cfg.finetune.max_steps = s;
    }
    let target = resolve_domain(c, &cfg, &cfg.target)?;
    fs::create_dir_all(a.out.join("checkpoints"))?;
    let mut train = cfg.finetune_config(&target, c.seed);
    train.validate().context("invalid config")?;
    let every = a.checkpoint_every.unwrap_or(0);
    if every > 0 {
        train.checkpoint_every = Some(every);
        train.checkpoint_dir = Some(a.out.join("checkpoints"));
    }
    let log = TrainLog::with_sink(&a.out.join("finetune.jsonl"))?;
    let r = fine_tune_with(&cfg, &m.net, &m.params, train, log).map_err(|f| failed(&a.out, f))?;

    let final_checkpoint = a.out.join("final.mzck");
    Checkpoint {
        model: r.params.clone(),
        meta: serde_json::to_string(m.net.config())?,
    }
    .save(&final_checkpoint)?;
    write_curves(&a.out, "online fine-tuning", "fine-tuning", &r.log.episodes)?;
    let manifest = RunManifest {
        command: "transfer".into(),
        mode: TrainMode::OffpolicyOnline,
        scheme: m.manifest.as_ref().and_then(|x| x.scheme),
        seeds: vec![c.seed],
        geometry_hash: geometry_hash(&cfg.env)?,
        code_hash: CODE_HASH.into(),
        config: cfg,
        domain: target,
        checkpoints: checkpoint_list(&a.out)?,
        source_checkpoint: Some(fs::canonicalize(&m.checkpoint).unwrap_or(m.checkpoint)),
        total_steps: r.log.total_steps,
        steps_to_criterion: r.steps_to_criterion,
    };
    manifest.save(&a.out.join("manifest.toml"))?;
    println!(
        "fine-tuned seed {}: {} steps, {} episodes, {} updates, {} deferrals, {} substitutions",
        c.seed,
        r.log.total_steps,
        r.log.episodes.len(),
        r.log.updates,
        r.log.deferrals,
        r.log.substitutions
    );
    println!("steps to criterion: {}", criterion_text(r.steps_to_criterion));
    Ok(TransferOutcome {
        manifest,
        steps_to_criterion: r.steps_to_criterion,
        final_checkpoint,
    })
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_episodes: usize,
    pub success_rate: f64,
    pub mean_length: f64,
    pub median_length: f64,
    pub mean_reward: f64,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        EvalSummary {
            n_episodes: r.n_episodes,
            success_rate: r.success_rate,
            mean_length: r.mean_length,
            median_length: r.median_length,
            mean_reward: r.mean_reward,
        }
    }
}

pub fn cmd_eval(c: &Common, a: &EvalArgs) -> Result<EvalReport> {
    ensure!(a.episodes >= 1, "--episodes must be at least 1");
    let m = load_model(c, &a.checkpoint)?;
    let domain = resolve_domain(c, &m.cfg, &m.cfg.nominal_domain)?;
    let env = m.cfg.env_with(&domain, m.cfg.pretrain.episode_len);
    let mut report = evaluate(&m.net, &m.params.params, &env, a.episodes, c.seed, EvalPolicy::Greedy)?;
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        let path = out.join("eval.csv");
        series::write_eval(&path, &report.episodes)?;
        report = EvalReport::from_episodes(read_csv::<EvalEpisode>(&path)?);
        fs::write(out.join("eval.toml"), toml::to_string(&EvalSummary::from(&report))?)?;
    }
    println!("{:>10} {:>9} {:>12} {:>14} {:>12}", "episodes", "success", "mean length", "median length", "mean reward");
    println!(
        "{:>10} {:>9.3} {:>12.1} {:>14.1} {:>12.3}",
        report.n_episodes, report.success_rate, report.mean_length, report.median_length, report.mean_reward
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub seeds: Vec<u64>,
    pub budget: u64,
    pub robust_median: f64,
    pub nonrobust_median: f64,
    /// Nonrobust median over robust median.
    pub ratio: f64,
    pub probe_domains: usize,
    pub probe_robust_median: f64,
    pub probe_nonrobust_median: f64,
    /// Median over domains of robust minus nonrobust success.
    pub probe_median_gap: f64,
}

pub struct CompareOutcome {
    pub report: ComparisonReport,
    pub probe: Vec<ProbeRow>,
    pub summary: CompareSummary,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Summary computed only from the two tables on disk.
pub fn summarize(comparison_csv: &Path, probe_csv: &Path) -> Result<(ComparisonReport, Vec<ProbeRow>, CompareSummary)> {
    let report = series::report_from_rows(&read_csv::<CompareRow>(comparison_csv)?)?;
    let probe: Vec<ProbeRow> = read_csv(probe_csv)?;
    let summary = CompareSummary {
        seeds: report.seeds.clone(),
        budget: report.budget,
        robust_median: report.a.median,
        nonrobust_median: report.b.median,
        ratio: report.ratio(),
        probe_domains: probe.len(),
        probe_robust_median: median(probe.iter().map(|r| r.robust).collect()),
        probe_nonrobust_median: median(probe.iter().map(|r| r.nonrobust).collect()),
        probe_median_gap: series::probe_median_gap(&probe),
    };
    Ok((report, probe, summary))
}

/// Redraws the comparison figure from the per-run tables in `runs`.
pub fn compare_figure(out: &Path) -> Result<String> {
    let rows: Vec<CompareRow> = read_csv(&out.join("comparison.csv"))?;
    let mut curves: Vec<Curve> = Vec::with_capacity(rows.len());
    for r in &rows {
        let eps: Vec<EpisodeRecord> = read_csv(&out.join("runs").join(format!("{}_s{}.csv", r.arm, r.seed)))?;
        let color = usize::from(r.arm != ROBUST);
        curves.push(plot::curve(&format!("{} seed {}", r.arm, r.seed), color, &eps, SMOOTHING));
    }
    plot::render("online fine-tuning on the target domain", &curves)
}

pub fn cmd_compare(c: &Common, a: &CompareArgs) -> Result<CompareOutcome> {
    ensure!(a.seeds >= 1, "--seeds must be at least 1");
    let robust = load_model(c, &a.robust)?;
    let nonrobust = load_model(c, &a.nonrobust)?;
    ensure!(
        robust.net.config() == nonrobust.net.config(),
        "unmatched architectures: {} and {} describe different networks",
        robust.checkpoint.display(),
        nonrobust.checkpoint.display()
    );
    let mut cfg = robust.cfg.clone();
    if let Some(s) = a.steps {
        cfg.finetune.max_steps = s;
    }
    let target = resolve_domain(c, &cfg, &cfg.target)?;
    let runs = a.out.join("runs");
    fs::create_dir_all(&runs)?;

    let seeds: Vec<u64> = (0..a.seeds as u64).map(|k| c.seed + k).collect();
    let mut rows = Vec::with_capacity(2 * seeds.len());
    for (arm, model) in [(ROBUST, &robust), (NONROBUST, &nonrobust)] {
        for &seed in &seeds {
            let stem = runs.join(format!("{arm}_s{seed}"));
            let log = TrainLog::with_sink(&stem.with_extension("jsonl"))?;
            let train = cfg.finetune_config(&target, seed);
            let r = fine_tune_with(&cfg, &model.net, &model.params, train, log)
                .map_err(|f| anyhow::Error::new(f.error).context(format!("fine-tuning {arm} seed {seed}")))?;
            write_csv(&stem.with_extension("csv"), &r.log.episodes)?;
            println!("{arm:>9} seed {seed}: criterion {}", criterion_text(r.steps_to_criterion));
            rows.push(CompareRow {
                arm: arm.into(),
                seed,
                steps_to_criterion: r.steps_to_criterion,
                budget: cfg.finetune.max_steps,
            });
        }
    }
    write_csv(&a.out.join("comparison.csv"), &rows)?;
    fs::write(a.out.join("curves.svg"), compare_figure(&a.out)?)?;

    let pairs = if a.probe_domains > 0 {
        paired_domain_probe(
            &cfg,
            &robust.net,
            &robust.params,
            &nonrobust.params,
            &cfg.robust_domain,
            a.probe_domains,
            a.probe_episodes.max(1),
            c.seed ^ PROBE_SEED,
        )?
    } else {
        Vec::new()
    };
    let probe_rows: Vec<ProbeRow> = pairs
        .iter()
        .enumerate()
        .map(|(domain, &(robust, nonrobust))| ProbeRow {
            domain,
            robust,
            nonrobust,
        })
        .collect();
    write_csv(&a.out.join("probe.csv"), &probe_rows)?;

    let (report, probe, summary) = summarize(&a.out.join("comparison.csv"), &a.out.join("probe.csv"))?;
    fs::write(a.out.join("report.toml"), toml::to_string(&summary)?)?;

    println!();
    println!("{:>10} {:>8} {:>18} {:>10}", "arm", "runs", "median to criterion", "censored");
    for arm in [&report.a, &report.b] {
        let censored = arm.steps_to_criterion.iter().filter(|s| s.is_none()).count();
        println!(
            "{:>10} {:>8} {:>18.0} {:>10}",
            arm.label,
            arm.steps_to_criterion.len(),
            arm.median,
            censored
        );
    }
    println!("ratio nonrobust/robust: {:.3}", summary.ratio);
    if !probe.is_empty() {
        println!(
            "probe on {} unseen domains: median success robust {:.3}, nonrobust {:.3}, median paired gap {:+.3}",
            probe.len(),
            summary.probe_robust_median,
            summary.probe_nonrobust_median,
            summary.probe_median_gap
        );
    }
    Ok(CompareOutcome { report, probe, summary })
}

// ---------------------------------------------------------------------------
// play
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub step: u64,
    pub action: String,
    pub reward: f64,
    pub accumulated: f64,
    pub marbles_home: usize,
    pub terminal: bool,
}

/// Chooses an action from the observation, the previous action and the
/// previous reward.
pub type PlayPolicy<'a> = dyn FnMut(&[f32], Option<usize>, f64) -> Result<usize> + 'a;

fn clean_frame(env: &MazeEnv) -> Result<mazelab_sim::Image> {
    let ep = env.episode().context("no running episode")?;
    env.renderer()
        .render(&ep.sim)
        .image()
        .cloned()
        .ok_or_else(|| anyhow!("renderer produced no image"))
}

/// Runs one episode, writing the noise-free frame before each step and after
/// the last one into `out/frames`, and the transcript to `out/transcript.csv`.
pub fn play_episode(env_cfg: &EnvConfig, seed: u64, out: &Path, policy: &mut PlayPolicy<'_>) -> Result<Vec<TranscriptRow>> {
    let frames = out.join("frames");
    fs::create_dir_all(&frames)?;
    let mut env = MazeEnv::new(env_cfg.clone(), seed)?;
    let mut obs = env.reset()?.values().to_vec();
    dump_frame(&frames, 0, &clean_frame(&env)?)?;
    let mut rows = Vec::new();
    let (mut prev_a, mut prev_r, mut total) = (None, 0.0, 0.0);
    loop {
        let a = policy(&obs, prev_a, prev_r)?;
        let action = *Action::ALL.get(a).ok_or_else(|| anyhow!("policy chose invalid action {a}"))?;
        let step = env.step(action)?;
        total += step.reward;
        let ep = env.episode().context("no running episode")?;
        rows.push(TranscriptRow {
            step: ep.step,
            action: format!("{action:?}"),
            reward: step.reward,
            accumulated: total,
            marbles_home: ep.marbles_home,
            terminal: step.terminal,
        });
        dump_frame(&frames, ep.step, &clean_frame(&env)?)?;
        obs = step.observation.values().to_vec();
        prev_a = Some(a);
        prev_r = step.reward;
        if step.terminal {
            break;
        }
    }
    write_csv(&out.join("transcript.csv"), &rows)?;
    Ok(rows)
}

pub fn cmd_play(c: &Common, a: &PlayArgs) -> Result<Vec<TranscriptRow>> {
    let m = load_model(c, &a.checkpoint)?;
    let domain = resolve_domain(c, &m.cfg, &m.cfg.nominal_domain)?;
    let env = m.cfg.env_with(&domain, m.cfg.pretrain.episode_len);
    let mut state = m.net.zero_state();
    let mut greedy = |obs: &[f32], prev_a: Option<usize>, prev_r: f64| -> Result<usize> {
        let out = policy_value_forward(&m.net, &m.params.params, obs, prev_a, prev_r, &state)?;
        state = out.state.clone();
        Ok(out.argmax())
    };
    let rows = play_episode(&env, c.seed, &a.out, &mut greedy)?;
    let last = rows.last().context("episode has no steps")?;
    println!(
        "{} steps, net reward {:.3}, {} marble(s) home; frames in {}",
        rows.len(),
        last.accumulated,
        last.marbles_home,
        a.out.join("frames").display()
    );
    Ok(rows)
}

// ---------------------------------------------------------------------------
// serve
// ---------------------------------------------------------------------------

pub fn cmd_serve(c: &Common, addr: &str) -> Result<()> {
    let cfg = load_config(c)?;
    let domain = resolve_domain(c, &cfg, &cfg.nominal_domain)?;
    let env = cfg.env_with(&domain, cfg.pretrain.episode_len);
    println!("serving the maze environment on {addr}");
    mazelab_sim::server::serve(addr, env, c.seed).with_context(|| format!("serving on {addr}"))?;
    Ok(())
}
