//! `lyasim` command line.
//!
//! Four subcommands drive the library: `train` runs PPO episodes and
//! appends per-episode metrics, `eval` replays frozen controllers on the
//! shared evaluation seed streams, `sweep` retrains and evaluates across
//! values of one config variable, and `selfcheck` runs the independent
//! solver/gradient/queue cross-checks.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid config or input,
//! 3 failed selfcheck. Log verbosity comes from `RUST_LOG` (default
//! `info`); logs go to stderr, results to files and stdout.

use clap::{Args, Parser, Subcommand};
use lyasim::ppo::{observation_len, Checkpoint, PpoAgent};
use lyasim::sim::{
    self, Algo, EpisodeMetrics, ExperimentConfig, Instance, SweepPointResult, SweepVar,
};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

const EPISODE_HEADER: &str = "episode,algo,seed,reward,energy_j,local_backlog_cycles,\
                              transmit_backlog_bits,edge_backlog_cycles,mean_partition,\
                              completed_tasks,actor_loss,critic_loss";
const SWEEP_HEADER: &str = "var,value,algo,train_episodes,eval_episodes,reward,energy_j,\
                            local_backlog_cycles,transmit_backlog_bits,edge_backlog_cycles,\
                            mean_partition,completed_tasks";

#[derive(Parser)]
#[command(
    name = "lyasim",
    version,
    about = "Two-timescale DNN offloading simulator: per-slot drift-plus-penalty \
             resource allocation under a learned partition policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the partition policy, appending one CSV row per episode.
    ///
    /// Resumes from <out>/checkpoint.json when present; the episode seed
    /// streams continue from the lifetime episode counter, so a resumed
    /// run reproduces an uninterrupted one byte for byte.
    Train(TrainArgs),
    /// Evaluate one controller with frozen weights.
    Eval(EvalArgs),
    /// Train and evaluate every algorithm across values of one variable.
    Sweep(SweepArgs),
    /// Run the built-in cross-checks and report one line per family.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config JSON; built-in defaults when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Master seed; every random stream derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Episodes to train in this invocation (default: config value).
    #[arg(long)]
    episodes: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Controller to evaluate.
    #[arg(long, default_value = "lyappo", value_parser = parse_algo)]
    algo: Algo,
    /// Episodes to evaluate on seed streams 0..N.
    #[arg(long, default_value_t = 10)]
    episodes: u64,
    /// Checkpoint for lyappo (default: <out>/checkpoint.json).
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Config variable to sweep.
    #[arg(long, value_parser = parse_var)]
    var: SweepVar,
    /// Comma-separated values for --var.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Restrict the sweep to one algorithm (default: all three).
    #[arg(long, value_parser = parse_algo)]
    algo: Option<Algo>,
    /// Training episodes per lyappo point (default: config value). With
    /// --finetune this is the one-off base training length instead.
    #[arg(long)]
    train_episodes: Option<u64>,
    /// Evaluation episodes per point.
    #[arg(long, default_value_t = 10)]
    episodes: u64,
    /// Warm-start mode: train once at the base config, then fine-tune
    /// this many episodes per point, chaining from the largest value
    /// down. Default is fresh retraining per point.
    #[arg(long, value_name = "EPISODES")]
    finetune: Option<u64>,
}

#[derive(Args)]
struct SelfcheckArgs {
    /// Master seed of the check instances.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    s.parse()
}

fn parse_var(s: &str) -> Result<SweepVar, String> {
    s.parse()
}

/// Errors past argument parsing; all map to exit code 2.
#[derive(Debug)]
struct CliError(String);

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError(e.to_string())
}

fn file_error(verb: &str, path: &Path, e: &std::io::Error) -> CliError {
    CliError(format!("cannot {verb} {}: {e}", path.display()))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            e.print().expect("stderr is writable");
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Selfcheck(args) => cmd_selfcheck(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| file_error("read", p, &e))?;
            ExperimentConfig::from_json_str(&text)
                .map_err(|e| CliError(format!("config {}: {e}", p.display())))
        }
    }
}

fn load_agent(inst: &Instance, path: &Path) -> Result<PpoAgent, CliError> {
    let text = fs::read_to_string(path).map_err(|e| file_error("read", path, &e))?;
    let cp: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| CliError(format!("checkpoint {}: {e}", path.display())))?;
    PpoAgent::from_checkpoint(
        &cp,
        observation_len(inst.layout),
        &inst.head_sizes,
        inst.k_min,
        inst.config.ppo.clone(),
        &inst.config.hash(),
    )
    .map_err(|e| CliError(format!("checkpoint {}: {e}", path.display())))
}

/// Deterministic run label: config hash prefix plus the master seed.
fn run_id(config_hash: &str, seed: u64) -> String {
    format!("{}-{seed:016x}", &config_hash[..12])
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| file_error("write", path, &e))
}

/// Writes the checkpoint through a sibling temp file so an interrupted
/// run never leaves a truncated checkpoint behind.
fn write_checkpoint(path: &Path, cp: &Checkpoint) -> Result<(), CliError> {
    let text = serde_json::to_string(cp).expect("checkpoint serializes");
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| file_error("write", &tmp, &e))?;
    fs::rename(&tmp, path).map_err(|e| file_error("rename", &tmp, &e))
}

fn episode_row(algo: Algo, seed: u64, m: &EpisodeMetrics) -> String {
    format!(
        "{},{algo},{seed},{},{},{},{},{},{},{},{},{}",
        m.episode,
        m.cumulative_reward,
        m.mean_energy_j,
        m.mean_local_backlog,
        m.mean_transmit_backlog,
        m.mean_edge_backlog,
        m.mean_partition,
        m.completed_tasks,
        m.actor_loss,
        m.critic_loss
    )
}

fn sweep_row(p: &SweepPointResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        p.var,
        p.value,
        p.algo,
        p.train_episodes,
        p.eval_episodes,
        p.mean_reward,
        p.mean_energy_j,
        p.mean_local_backlog,
        p.mean_transmit_backlog,
        p.mean_edge_backlog,
        p.mean_partition,
        p.completed_tasks
    )
}

fn cmd_train(args: &TrainArgs) -> Result<i32, CliError> {
    let config = load_config(args.common.config.as_deref())?;
    let inst = Instance::new(config, args.common.seed).map_err(validation)?;
    let episodes = args.episodes.unwrap_or(inst.config.episodes);
    let out = &args.common.out;
    fs::create_dir_all(out).map_err(|e| file_error("create", out, &e))?;

    let hash = inst.config.hash();
    let ckpt_path = out.join("checkpoint.json");
    let mut agent = if ckpt_path.exists() {
        let agent = load_agent(&inst, &ckpt_path)?;
        log::info!(
            "resuming from {} at episode {}",
            ckpt_path.display(),
            agent.episodes_trained
        );
        agent
    } else {
        inst.new_agent()
    };
    log::info!(
        "run {}: training {episodes} episodes, seed {}",
        run_id(&hash, args.common.seed),
        args.common.seed
    );

    let csv_path = out.join("train.csv");
    let fresh = fs::metadata(&csv_path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&csv_path)
        .map_err(|e| file_error("open", &csv_path, &e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut io_err: Option<std::io::Error> = None;
    if fresh {
        io_err = writeln!(w, "{EPISODE_HEADER}").err();
    }

    sim::train(&inst, &mut agent, episodes, |m| {
        if io_err.is_none() {
            io_err = writeln!(w, "{}", episode_row(Algo::Lyappo, args.common.seed, m)).err();
        }
        if (m.episode + 1) % 50 == 0 {
            log::info!(
                "episode {}: reward {:.4}, energy {:.3e} J/slot, mean k {:.2}",
                m.episode,
                m.cumulative_reward,
                m.mean_energy_j,
                m.mean_partition
            );
        }
    })
    .map_err(validation)?;
    if io_err.is_none() {
        io_err = w.flush().err();
    }
    if let Some(e) = io_err {
        return Err(file_error("write", &csv_path, &e));
    }

    write_checkpoint(&ckpt_path, &agent.to_checkpoint(&hash))?;
    let manifest = serde_json::json!({
        "tool": "lyasim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "train",
        "run_id": run_id(&hash, args.common.seed),
        "master_seed": args.common.seed,
        "config_hash": hash,
        "episodes_this_run": episodes,
        "episodes_trained_total": agent.episodes_trained,
        "config": serde_json::to_value(&inst.config).expect("config serializes"),
    });
    write_json(&out.join("train.manifest.json"), &manifest)?;
    log::info!("done: {} lifetime episodes", agent.episodes_trained);
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> Result<i32, CliError> {
    let config = load_config(args.common.config.as_deref())?;
    let inst = Instance::new(config, args.common.seed).map_err(validation)?;
    let out = &args.common.out;
    fs::create_dir_all(out).map_err(|e| file_error("create", out, &e))?;

    let agent = match args.algo {
        Algo::Lyappo => {
            let path = args
                .checkpoint
                .clone()
                .unwrap_or_else(|| out.join("checkpoint.json"));
            if !path.exists() {
                return Err(CliError(format!(
                    "checkpoint {} not found; train first or pass --checkpoint",
                    path.display()
                )));
            }
            Some(load_agent(&inst, &path)?)
        }
        Algo::Fixcov | Algo::Randomcov => None,
    };

    let hash = inst.config.hash();
    let stem = format!("eval_{}", args.algo);
    let csv_path = out.join(format!("{stem}.csv"));
    let mut w = std::io::BufWriter::new(
        fs::File::create(&csv_path).map_err(|e| file_error("write", &csv_path, &e))?,
    );
    let mut io_err = writeln!(w, "{EPISODE_HEADER}").err();
    sim::evaluate(&inst, args.algo, agent.as_ref(), args.episodes, |m| {
        if io_err.is_none() {
            io_err = writeln!(w, "{}", episode_row(args.algo, args.common.seed, m)).err();
        }
    })
    .map_err(validation)?;
    if io_err.is_none() {
        io_err = w.flush().err();
    }
    if let Some(e) = io_err {
        return Err(file_error("write", &csv_path, &e));
    }

    let manifest = serde_json::json!({
        "tool": "lyasim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "eval",
        "run_id": run_id(&hash, args.common.seed),
        "master_seed": args.common.seed,
        "config_hash": hash,
        "algo": args.algo.to_string(),
        "episodes": args.episodes,
        "config": serde_json::to_value(&inst.config).expect("config serializes"),
    });
    write_json(&out.join(format!("{stem}.manifest.json")), &manifest)?;
    log::info!("evaluated {} for {} episodes", args.algo, args.episodes);
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let base = load_config(args.common.config.as_deref())?;
    base.validate().map_err(validation)?;
    let algos: Vec<Algo> = match args.algo {
        Some(a) => vec![a],
        None => vec![Algo::Lyappo, Algo::Fixcov, Algo::Randomcov],
    };
    let train_episodes = args.train_episodes.unwrap_or(base.episodes);
    let finetune = args.finetune.map(|episodes| sim::FinetuneSpec {
        episodes,
        ..sim::FinetuneSpec::default()
    });
    let out = &args.common.out;
    fs::create_dir_all(out).map_err(|e| file_error("create", out, &e))?;

    let csv_path = out.join("sweep.csv");
    let mut w = std::io::BufWriter::new(
        fs::File::create(&csv_path).map_err(|e| file_error("write", &csv_path, &e))?,
    );
    let mut io_err = writeln!(w, "{SWEEP_HEADER}").err();
    sim::run_sweep(
        &base,
        args.common.seed,
        args.var,
        &args.values,
        &algos,
        train_episodes,
        args.episodes,
        finetune,
        |p| {
            if io_err.is_none() {
                io_err = writeln!(w, "{}", sweep_row(p)).err();
            }
            log::info!(
                "{} = {:.4e}, {}: reward {:.4}, energy {:.3e} J/slot",
                p.var,
                p.value,
                p.algo,
                p.mean_reward,
                p.mean_energy_j
            );
        },
    )
    .map_err(validation)?;
    if io_err.is_none() {
        io_err = w.flush().err();
    }
    if let Some(e) = io_err {
        return Err(file_error("write", &csv_path, &e));
    }

    let hash = base.hash();
    let manifest = serde_json::json!({
        "tool": "lyasim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "sweep",
        "run_id": run_id(&hash, args.common.seed),
        "master_seed": args.common.seed,
        "config_hash": hash,
        "var": args.var.to_string(),
        "values": args.values,
        "algos": algos.iter().map(Algo::to_string).collect::<Vec<_>>(),
        "train_episodes": train_episodes,
        "eval_episodes": args.episodes,
        "finetune": finetune.map(|f| serde_json::to_value(f).expect("spec serializes")),
        "config": serde_json::to_value(&base).expect("config serializes"),
    });
    write_json(&out.join("sweep.manifest.json"), &manifest)?;
    Ok(0)
}

fn cmd_selfcheck(args: &SelfcheckArgs) -> Result<i32, CliError> {
    let reports = lyasim::checks::run_all_checks(args.seed);
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed { "ok  " } else { "FAIL" };
        println!(
            "{status} {:<28} cases {:>4}  worst {:>10.3e}  {}",
            r.name, r.cases, r.worst, r.detail
        );
        failed += usize::from(!r.passed);
    }
    if failed == 0 {
        println!("{} check families passed", reports.len());
        Ok(0)
    } else {
        println!("{failed} of {} check families FAILED", reports.len());
        Ok(3)
    }
}
