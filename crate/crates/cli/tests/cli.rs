use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use mazelab_cli::cli::{Cli, CompareArgs, EvalArgs, PlayArgs, TrainArgs, TransferArgs};
use mazelab_cli::commands::{self, Common};
use mazelab_cli::plot;
use mazelab_cli::series::{self, read_csv, write_csv, CompareRow};
use mazelab_core::experiment::{Criterion, ExperimentConfig, RunManifest};
use mazelab_core::trainer::{EpisodeRecord, TrainMode};
use mazelab_core::{ActorCriticNet, NetConfig};
use mazelab_nn::{Checkpoint, ModelParams};
use mazelab_sim::{render, Action};
use tempfile::TempDir;

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.pretrain.n_workers = 1;
    cfg.pretrain.max_steps = 3000;
    cfg.pretrain.episode_len = 100;
    cfg.pretrain.eval_episodes = 3;
    cfg.pretrain.criterion = Criterion::Training {
        window: 50,
        success: 1.0,
    };
    cfg.finetune.max_steps = 1000;
    cfg.finetune.episode_len = 100;
    cfg.finetune.criterion = Criterion::Greedy {
        every: 500,
        episodes: 3,
        success: 1.0,
    };
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, toml::to_string(cfg).unwrap()).unwrap();
    p
}

fn common(config: &Path) -> Common {
    Common {
        config: Some(config.to_path_buf()),
        ..Default::default()
    }
}

fn train_args(out: PathBuf, robust: bool) -> TrainArgs {
    TrainArgs {
        robust,
        nonrobust: !robust,
        manifest: None,
        steps: None,
        workers: None,
        checkpoint_every: None,
        out,
    }
}

fn untrained_checkpoint(dir: &Path, net: &NetConfig, seed: u64) -> PathBuf {
    let (_, ps) = ActorCriticNet::init(net, seed);
    let p = dir.join(format!("untrained_{seed}.mzck"));
    Checkpoint {
        model: ModelParams::new(ps),
        meta: serde_json::to_string(net).unwrap(),
    }
    .save(&p)
    .unwrap();
    p
}

fn hashes(out: &Path) -> HashSet<String> {
    let eps: Vec<EpisodeRecord> = read_csv(&out.join("episodes.csv")).unwrap();
    assert!(eps.len() >= 5, "only {} episodes", eps.len());
    eps.into_iter().map(|e| e.domain_hash).collect()
}

// ---------------------------------------------------------------------------
// flags
// ---------------------------------------------------------------------------

#[test]
fn scheme_flags_are_exclusive_and_required() {
    assert!(Cli::try_parse_from(["mazelab", "train", "--robust", "--nonrobust", "--out", "x"]).is_err());
    assert!(Cli::try_parse_from(["mazelab", "train", "--out", "x"]).is_err());
    assert!(Cli::try_parse_from(["mazelab", "train", "--robust", "--out", "x"]).is_ok());
    assert!(Cli::try_parse_from(["mazelab", "train", "--manifest", "m.toml", "--out", "x"]).is_ok());
    assert!(Cli::try_parse_from(["mazelab", "--image", "--lowdim", "eval", "--checkpoint", "c"]).is_err());
}

#[test]
fn serve_cannot_be_combined_with_a_subcommand() {
    let cli = Cli::try_parse_from(["mazelab", "--serve", "127.0.0.1:0", "eval", "--checkpoint", "c"]).unwrap();
    assert!(mazelab_cli::run(&cli).is_err());
    let cli = Cli::try_parse_from(["mazelab"]).unwrap();
    assert!(mazelab_cli::run(&cli).is_err());
}

#[test]
fn invalid_config_exits_non_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[hyper]\ngamma = 3.0\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_mazelab"))
        .args(["train", "--robust", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid config"), "{err}");
}

#[test]
fn corrupt_checkpoint_exits_non_zero() {
    let dir = TempDir::new().unwrap();
    let ck = dir.path().join("broken.mzck");
    std::fs::write(&ck, b"not a checkpoint").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_mazelab"))
        .args(["transfer", "--checkpoint"])
        .arg(&ck)
        .arg("--out")
        .arg(dir.path().join("ft"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("loading checkpoint"));
}

// ---------------------------------------------------------------------------
// train and transfer
// ---------------------------------------------------------------------------

#[test]
fn robust_training_varies_the_domain_and_nonrobust_does_not() {
    let dir = TempDir::new().unwrap();
    let c = common(&write_config(dir.path(), &tiny_config()));
    let r = commands::cmd_train(&c, &train_args(dir.path().join("robust"), true)).unwrap();
    let n = commands::cmd_train(&c, &train_args(dir.path().join("nonrobust"), false)).unwrap();

    let robust_hashes = hashes(&dir.path().join("robust"));
    assert!(robust_hashes.len() > 1);
    assert_eq!(hashes(&dir.path().join("nonrobust")).len(), 1);

    for (o, out) in [(&r, "robust"), (&n, "nonrobust")] {
        let out = dir.path().join(out);
        let m = RunManifest::load(&out.join("manifest.toml")).unwrap();
        assert_eq!(&m, &o.manifest);
        assert_eq!(m.mode, TrainMode::ParallelOffline);
        assert_eq!(m.total_steps, 3000);
        assert_eq!(m.code_hash, commands::CODE_HASH);
        assert_eq!(m.code_hash.len(), 64);
        assert!(m.checkpoints.len() >= 2);
        for ck in &m.checkpoints {
            assert!(out.join(ck).is_file(), "{}", ck.display());
        }
        assert!(out.join("curves.svg").is_file());
        assert!(out.join("train.jsonl").is_file());
        let eval: Vec<mazelab_core::eval::EvalEpisode> = read_csv(&out.join("eval.csv")).unwrap();
        assert_eq!(eval.len(), 3);
    }
}

#[test]
fn rerunning_a_manifest_with_one_worker_reproduces_the_checkpoint() {
    let dir = TempDir::new().unwrap();
    let c = common(&write_config(dir.path(), &tiny_config()));
    let first = commands::cmd_train(&c, &train_args(dir.path().join("a"), true)).unwrap();
    let rerun = TrainArgs {
        robust: false,
        nonrobust: false,
        manifest: Some(dir.path().join("a/manifest.toml")),
        workers: Some(1),
        ..train_args(dir.path().join("b"), true)
    };
    let second = commands::cmd_train(&Common::default(), &rerun).unwrap();
    assert_eq!(first.checkpoint_sha256, second.checkpoint_sha256);
    assert_eq!(
        std::fs::read(dir.path().join("a/episodes.csv")).unwrap(),
        std::fs::read(dir.path().join("b/episodes.csv")).unwrap()
    );
}

#[test]
fn transfer_from_a_manifest_records_its_source() {
    let dir = TempDir::new().unwrap();
    let c = common(&write_config(dir.path(), &tiny_config()));
    commands::cmd_train(&c, &train_args(dir.path().join("pre"), true)).unwrap();
    let args = TransferArgs {
        checkpoint: dir.path().join("pre/manifest.toml"),
        steps: None,
        checkpoint_every: None,
        out: dir.path().join("ft"),
    };
    let t = commands::cmd_transfer(&Common::default(), &args).unwrap();
    let m = RunManifest::load(&dir.path().join("ft/manifest.toml")).unwrap();
    assert_eq!(m.mode, TrainMode::OffpolicyOnline);
    assert_eq!(m.domain, tiny_config().target);
    assert!(m.source_checkpoint.as_ref().unwrap().ends_with("final.mzck"));
    assert!(m.total_steps <= 1000);
    assert_eq!(m.steps_to_criterion, t.steps_to_criterion);
    assert!(t.final_checkpoint.is_file());
    let ck = Checkpoint::load(&t.final_checkpoint).unwrap();
    assert!(ck.model.version() > 0, "fine-tuning applied no update");
}

#[test]
fn transfer_rejects_a_mismatched_observation_setup() {
    let dir = TempDir::new().unwrap();
    let ck = untrained_checkpoint(dir.path(), &NetConfig::tiny_image(), 0);
    let args = TransferArgs {
        checkpoint: ck,
        steps: None,
        checkpoint_every: None,
        out: dir.path().join("ft"),
    };
    let err = commands::cmd_transfer(&Common::default(), &args).err().unwrap();
    assert!(format!("{err:#}").contains("does not match"), "{err:#}");
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[test]
fn untrained_network_rarely_solves() {
    let dir = TempDir::new().unwrap();
    let ck = untrained_checkpoint(dir.path(), &ExperimentConfig::default().net, 3);
    let args = EvalArgs {
        checkpoint: ck,
        episodes: 50,
        out: Some(dir.path().join("eval")),
    };
    let r = commands::cmd_eval(&Common::default(), &args).unwrap();
    assert_eq!(r.episodes.len(), 50);
    assert!(r.success_rate < 0.2, "untrained success {}", r.success_rate);
    let solved = r.episodes.iter().filter(|e| e.solved).count();
    assert_eq!(r.success_rate, solved as f64 / 50.0);
}

#[test]
fn single_episode_report_and_table_agree() {
    let dir = TempDir::new().unwrap();
    let ck = untrained_checkpoint(dir.path(), &ExperimentConfig::default().net, 1);
    let args = EvalArgs {
        checkpoint: ck,
        episodes: 1,
        out: Some(dir.path().join("eval")),
    };
    let r = commands::cmd_eval(&Common::default(), &args).unwrap();
    assert_eq!(r.n_episodes, 1);
    assert_eq!(r.episodes.len(), 1);
    let rows: Vec<mazelab_core::eval::EvalEpisode> = read_csv(&dir.path().join("eval/eval.csv")).unwrap();
    assert_eq!(rows, r.episodes);
    let summary: commands::EvalSummary =
        toml::from_str(&std::fs::read_to_string(dir.path().join("eval/eval.toml")).unwrap()).unwrap();
    assert_eq!(summary, commands::EvalSummary::from(&r));

    let zero = EvalArgs {
        episodes: 0,
        ..args
    };
    assert!(commands::cmd_eval(&Common::default(), &zero).is_err());
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[test]
fn compare_reports_are_recomputable_from_the_tables() {
    let dir = TempDir::new().unwrap();
    let c = common(&write_config(dir.path(), &tiny_config()));
    commands::cmd_train(&c, &train_args(dir.path().join("robust"), true)).unwrap();
    commands::cmd_train(&c, &train_args(dir.path().join("nonrobust"), false)).unwrap();
    let out = dir.path().join("cmp");
    let args = CompareArgs {
        robust: dir.path().join("robust/manifest.toml"),
        nonrobust: dir.path().join("nonrobust/manifest.toml"),
        seeds: 2,
        steps: Some(600),
        probe_domains: 2,
        probe_episodes: 1,
        out: out.clone(),
    };
    let o = commands::cmd_compare(&Common::default(), &args).unwrap();
    assert_eq!(o.report.seeds, vec![0, 1]);
    assert_eq!(o.report.budget, 600);
    assert_eq!(o.report.ratio(), o.report.b.median / o.report.a.median);
    assert_eq!(o.report.a.label, series::ROBUST);
    assert_eq!(o.probe.len(), 2);

    let rows: Vec<CompareRow> = read_csv(&out.join("comparison.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    let (again, probe, summary) = commands::summarize(&out.join("comparison.csv"), &out.join("probe.csv")).unwrap();
    assert_eq!(again, o.report);
    assert_eq!(probe, o.probe);
    assert_eq!(summary, o.summary);
    let on_disk: commands::CompareSummary =
        toml::from_str(&std::fs::read_to_string(out.join("report.toml")).unwrap()).unwrap();
    assert_eq!(on_disk.seeds, summary.seeds);
    assert_eq!(on_disk.budget, summary.budget);

    // the figure is a pure function of the tables
    let svg = std::fs::read_to_string(out.join("curves.svg")).unwrap();
    assert_eq!(commands::compare_figure(&out).unwrap(), svg);
    assert!(svg.starts_with("<svg"));
}

#[test]
fn swapping_the_arms_inverts_the_ratio() {
    let rows = |r: [Option<u64>; 3], n: [Option<u64>; 3]| -> Vec<CompareRow> {
        let mk = |arm: &'static str, v: [Option<u64>; 3]| {
            v.into_iter().enumerate().map(move |(i, s)| CompareRow {
                arm: arm.to_string(),
                seed: i as u64,
                steps_to_criterion: s,
                budget: 1000,
            })
        };
        mk(series::ROBUST, r).chain(mk(series::NONROBUST, n)).collect()
    };
    let forward = series::report_from_rows(&rows([Some(100), Some(300), None], [Some(700), None, None])).unwrap();
    let backward = series::report_from_rows(&rows([Some(700), None, None], [Some(100), Some(300), None])).unwrap();
    assert_eq!(forward.a.median, 300.0);
    assert_eq!(forward.b.median, 1000.0);
    assert_eq!(forward.ratio(), 1000.0 / 300.0);
    assert_eq!(backward.ratio(), 1.0 / forward.ratio());
    assert_eq!(forward.swapped().swapped(), forward);
    assert_eq!(forward.swapped().ratio(), backward.ratio());
}

#[test]
fn compare_rejects_unmatched_architectures() {
    let dir = TempDir::new().unwrap();
    let desk = ExperimentConfig::default().net;
    let mut wider = desk.clone();
    wider.lstm_hidden += 8;
    let a = untrained_checkpoint(dir.path(), &desk, 0);
    let b_dir = dir.path().join("b");
    std::fs::create_dir_all(&b_dir).unwrap();
    let b = untrained_checkpoint(&b_dir, &wider, 0);
    let args = CompareArgs {
        robust: a,
        nonrobust: b,
        seeds: 1,
        steps: Some(200),
        probe_domains: 0,
        probe_episodes: 1,
        out: dir.path().join("cmp"),
    };
    let err = commands::cmd_compare(&Common::default(), &args).err().unwrap();
    assert!(err.to_string().contains("unmatched architectures"), "{err}");
}

// ---------------------------------------------------------------------------
// plots and series
// ---------------------------------------------------------------------------

fn records(n: u64) -> Vec<EpisodeRecord> {
    (0..n)
        .map(|i| EpisodeRecord {
            step: 100 * (i + 1),
            worker: (i % 2) as usize,
            episode: i,
            reward: if i % 3 == 0 { 2.0 } else { -1.0 },
            length: 100 - i % 7,
            solved: i % 3 == 0,
            domain_hash: format!("{i:016x}"),
            param_version: i,
            deferrals: 0,
            substitutions: i % 4,
        })
        .collect()
}

#[test]
fn figures_regenerate_bit_identically_from_the_series() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("episodes.csv");
    write_csv(&path, &records(120)).unwrap();
    let draw = || {
        let eps: Vec<EpisodeRecord> = read_csv(&path).unwrap();
        plot::render("curves", &[plot::curve("run", 0, &eps, 10)]).unwrap()
    };
    let a = draw();
    assert_eq!(a, draw());
    assert!(a.contains("steps per episode") && a.contains("accumulated reward"));
}

#[test]
fn smoothed_curve_is_a_trailing_mean() {
    let eps = records(30);
    let c = plot::curve("x", 0, &eps, 4);
    assert_eq!(c.points.len(), 30);
    for (i, p) in c.points.iter().enumerate() {
        let lo = i.saturating_sub(3);
        let w = &eps[lo..=i];
        let len = w.iter().map(|e| e.length as f64).sum::<f64>() / w.len() as f64;
        let rew = w.iter().map(|e| e.reward).sum::<f64>() / w.len() as f64;
        assert_eq!(p.0, eps[i].step as f64);
        assert!((p.1 - len).abs() < 1e-12 && (p.2 - rew).abs() < 1e-12);
    }
}

// ---------------------------------------------------------------------------
// play
// ---------------------------------------------------------------------------

#[test]
fn no_op_policy_never_scores() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config();
    let env = cfg.env_with(&cfg.nominal_domain, 60);
    let mut noop = |_: &[f32], _: Option<usize>, _: f64| Ok(Action::NoOp.index());
    let rows = commands::play_episode(&env, 4, dir.path(), &mut noop).unwrap();
    assert_eq!(rows.len(), 60);
    assert!(rows.iter().all(|r| r.reward == 0.0 && r.marbles_home == 0 && r.action == "NoOp"));
    assert!(rows.last().unwrap().terminal);
    let frames = std::fs::read_dir(dir.path().join("frames")).unwrap().count();
    assert_eq!(frames, 61);
    let first = std::fs::read(dir.path().join("frames/frame_00000.pgm")).unwrap();
    let header = format!("P5\n{} {}\n255\n", render::IMAGE_SIZE, render::IMAGE_SIZE);
    assert!(first.starts_with(header.as_bytes()));
}

#[test]
fn play_is_deterministic_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let cfg_path = write_config(dir.path(), &tiny_config());
    let ck = untrained_checkpoint(dir.path(), &tiny_config().net, 2);
    let c = Common {
        seed: 11,
        ..common(&cfg_path)
    };
    let play = |out: &str| {
        let args = PlayArgs {
            checkpoint: ck.clone(),
            out: dir.path().join(out),
        };
        commands::cmd_play(&c, &args).unwrap()
    };
    let a = play("a");
    let b = play("b");
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(dir.path().join("a/transcript.csv")).unwrap(),
        std::fs::read(dir.path().join("b/transcript.csv")).unwrap()
    );
    let total: f64 = a.iter().map(|r| r.reward).sum();
    assert!((total - a.last().unwrap().accumulated).abs() < 1e-12);
}
