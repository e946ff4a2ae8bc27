//! `ltm`: batch simulation, replay, reports and operator sessions.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

mod plan;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ltm_core::protocol::{ProtocolConfig, Variant};
use ltm_core::report::Report;
use ltm_core::session::{replay, run_simulated_session, ParticipantDescriptor, SessionLog};
use rayon::prelude::*;
use tracing::info;

use plan::ExperimentPlan;

/// `println!` that tolerates a closed stdout, e.g. when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "ltm", version, about = "Least-to-most prompting protocol engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProtocolArgs {
    /// Protocol config document (TOML); omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ltm-ri, mris or improved.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    max_attempts: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment plan against simulated participants.
    Simulate {
        /// Experiment plan (TOML). Defaults to one calibrated participant.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        protocol: ProtocolArgs,
        /// Seed base for per-session seed derivation.
        #[arg(long)]
        seed: Option<u64>,
        /// Trials per session.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        trials: Option<u32>,
        /// Sessions per participant.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        sessions: Option<u32>,
        /// Sessions run in parallel.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        jobs: u32,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Build metric tables from session logs.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Report logs with different protocol configs side by side.
        #[arg(long)]
        allow_mixed: bool,
        /// Write report.json and report.csv here instead of printing JSON.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Verify session logs by re-running or re-deriving them.
    Replay {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Serve an operator-driven session over the websocket control channel.
    Serve {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Directory of console assets to serve.
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value = "operator")]
        operator: String,
        /// Where the session log is written.
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: ltm_core::protocol::ProtocolError| e.to_string())
}

fn protocol_config(args: &ProtocolArgs, variant: Option<Variant>) -> Result<ProtocolConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => ProtocolConfig::default(),
    };
    if let Some(v) = variant.or(args.variant) {
        cfg.variant = v;
    }
    if let Some(m) = args.max_attempts {
        cfg.max_attempts = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `dir` and proves it is writable.
fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let probe = dir.join(".ltm-write-test");
    fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", dir.display()))?;
    fs::remove_file(&probe).ok();
    Ok(())
}

fn write_report(report: &Report, dir: &Path, stem: &str) -> Result<()> {
    fs::write(dir.join(format!("{stem}.json")), report.to_json() + "\n")?;
    fs::write(dir.join(format!("{stem}.csv")), report.to_csv())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    plan: Option<PathBuf>,
    protocol: ProtocolArgs,
    seed: Option<u64>,
    trials: Option<u32>,
    sessions: Option<u32>,
    jobs: u32,
    output_dir: Option<PathBuf>,
) -> Result<()> {
    let mut plan = match &plan {
        Some(p) => ExperimentPlan::load(p)?,
        None => {
            // no plan: the config document, if any, names the variant
            let mut plan = ExperimentPlan::default();
            if protocol.config.is_some() {
                plan.variants = vec![protocol_config(&protocol, None)?.variant];
            }
            plan
        }
    };
    if let Some(s) = seed {
        plan.seed_base = s;
    }
    if let Some(t) = trials {
        plan.trials_per_session = t;
    }
    if let Some(s) = sessions {
        plan.sessions_per_participant = s;
    }
    if let Some(v) = protocol.variant {
        plan.variants = vec![v];
    }
    let out = output_dir
        .or_else(|| plan.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("ltm-out"));
    let jobs_list = plan.jobs()?;
    let configs = plan
        .variants
        .iter()
        .map(|&v| Ok((v, protocol_config(&protocol, Some(v))?)))
        .collect::<Result<Vec<_>>>()?;
    prepare_output_dir(&out)?;
    for (v, _) in &configs {
        fs::create_dir_all(out.join("logs").join(v.name()))?;
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs as usize).build()?;
    let trials = plan.trials_per_session;
    let logs: Vec<SessionLog> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|job| {
                let cfg = &configs.iter().find(|(v, _)| *v == job.variant).expect("variant configured").1;
                let desc = ParticipantDescriptor::Simulated {
                    id: job.participant.clone(),
                    session: job.session,
                    model: job.model.clone(),
                };
                let log = run_simulated_session(cfg, trials, desc, job.seed)?;
                let path = out
                    .join("logs")
                    .join(job.variant.name())
                    .join(format!("{}_s{}.jsonl", job.participant, job.session));
                log.save(&path).with_context(|| format!("writing {}", path.display()))?;
                info!(path = %path.display(), "session written");
                Ok(log)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let report = Report::from_logs(&logs, true)?;
    write_report(&report, &out, "summary")?;
    say!("{} session logs written under {}", logs.len(), out.join("logs").display());
    for e in &report.entries {
        let key = e.metric.starts_with("session_index[")
            || e.metric.starts_with("signed_rank_first_vs_last.p_value")
            || e.metric == "avg_hit_prompt_level";
        if key {
            say!("{:<48} {:>10.4}  ({}, n={}, config {})", e.metric, e.value, e.method, e.n, &e.config_hash[..8]);
        }
    }
    say!("summary: {}", out.join("summary.json").display());
    Ok(())
}

fn load_logs(paths: &[PathBuf]) -> Result<Vec<SessionLog>> {
    paths
        .iter()
        .map(|p| SessionLog::load(p).with_context(|| format!("reading log {}", p.display())))
        .collect()
}

fn report(logs: Vec<PathBuf>, allow_mixed: bool, output_dir: Option<PathBuf>) -> Result<()> {
    let loaded = load_logs(&logs)?;
    let report = Report::from_logs(&loaded, allow_mixed)?;
    match output_dir {
        Some(dir) => {
            prepare_output_dir(&dir)?;
            write_report(&report, &dir, "report")?;
            say!("report written to {}", dir.display());
        }
        None => say!("{}", report.to_json()),
    }
    Ok(())
}

fn replay_logs(logs: Vec<PathBuf>) -> Result<()> {
    for path in &logs {
        let log = SessionLog::load(path).with_context(|| format!("reading log {}", path.display()))?;
        let outcomes = replay(&log).with_context(|| format!("replaying {}", path.display()))?;
        let valid = outcomes.iter().filter(|o| o.is_valid()).count();
        say!("{}: ok, {} trials ({valid} valid)", path.display(), outcomes.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn serve(
    protocol: ProtocolArgs,
    trials: u32,
    seed: u64,
    bind: SocketAddr,
    assets: Option<PathBuf>,
    operator: String,
    output_dir: PathBuf,
) -> Result<()> {
    let cfg = protocol_config(&protocol, None)?;
    prepare_output_dir(&output_dir)?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or_default();
    let log_path = output_dir.join(format!("operator-{stamp}.jsonl"));
    let mut server_cfg = ltm_control::ServerConfig::new(cfg, trials);
    server_cfg.seed = seed;
    server_cfg.operator_id = operator;
    server_cfg.assets_dir = assets;
    server_cfg.log_path = Some(log_path.clone());

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let server = ltm_control::start(server_cfg, bind).await?;
        say!("control channel: ws://{}/ws", server.local_addr);
        say!("session log: {}", log_path.display());
        let stop = server.shutdown_handle();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                stop.shutdown();
            }
        });
        let log = server.wait().await?;
        say!("session ended after {} events", log.events.len());
        Ok::<_, anyhow::Error>(())
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            plan,
            protocol,
            seed,
            trials,
            sessions,
            jobs,
            output_dir,
        } => simulate(plan, protocol, seed, trials, sessions, jobs, output_dir),
        Command::Report {
            logs,
            allow_mixed,
            output_dir,
        } => report(logs, allow_mixed, output_dir),
        Command::Replay { logs } => replay_logs(logs),
        Command::Serve {
            protocol,
            trials,
            seed,
            bind,
            assets,
            operator,
            output_dir,
        } => serve(protocol, trials, seed, bind, assets, operator, output_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
