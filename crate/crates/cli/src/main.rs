use clap::{Args, Parser, Subcommand};
use rwre_cli::config::parse_config;
use rwre_cli::error::{CliError, CliResult};
use rwre_cli::ledger::run_campaign;
use rwre_cli::params::Kind;
use rwre_cli::report::report;
use rwre_cli::selftest::{run_selftest, DEFAULT_SEED};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rwre", version, about = "Reproducible experiment campaigns for random walks in random environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Campaign config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Run only the block with this id.
    #[arg(long)]
    id: Option<String>,
    /// Worker threads; overrides the config.
    #[arg(short, long)]
    workers: Option<usize>,
    /// Ledger directory; overrides the config.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every block of a config.
    Run(RunArgs),
    Simulate(RunArgs),
    Regen(RunArgs),
    ExitHist(RunArgs),
    ExitCompare(RunArgs),
    Llt(RunArgs),
    Classify(RunArgs),
    Tgamma(RunArgs),
    Slowdown(RunArgs),
    Trap(RunArgs),
    AuxRun(RunArgs),
    Wevent(RunArgs),
    Returns(RunArgs),
    Reduction(RunArgs),
    /// Merge a ledger directory into per-kind tables.
    Report {
        dir: PathBuf,
    },
    /// Run the acceptance suite.
    Selftest {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn campaign(args: &RunArgs, kind: Option<Kind>) -> CliResult<()> {
    let cfg = parse_config(&args.config)?.with_env_seed()?;
    let workers = args.workers.or(cfg.workers).unwrap_or(1);
    if workers == 0 {
        return Err(CliError::Schema("workers must be at least 1".into()));
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let outcome = run_campaign(&cfg, args.id.as_deref(), kind, workers, &out)?;
    for e in &outcome.entries {
        println!("{:<24} {:<12} {:?} {} {:.2}s", e.experiment_id, e.kind, e.status, &e.output_hash[..12], e.wall_time_s);
    }
    println!("{} blocks, {} failed, ledger in {}", outcome.entries.len(), outcome.failures(), out.display());
    match outcome.entries.iter().find(|e| e.error.is_some()) {
        Some(e) => Err(CliError::Experiment { id: e.experiment_id.clone(), message: e.error.clone().unwrap_or_default() }),
        None => Ok(()),
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    let (args, kind) = match cmd {
        Command::Report { dir } => {
            let r = report(&dir)?;
            for f in &r.files {
                println!("{}", f.display());
            }
            println!("{} entries, {} skipped", r.entries, r.skipped.len());
            if r.is_partial() {
                return Err(CliError::PartialReport(r.skipped.len()));
            }
            return Ok(());
        }
        Command::Selftest { seed } => {
            let r = run_selftest(seed, |line| println!("{line}"));
            let failed: Vec<u8> = r.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect();
            println!("total {:.0}s", r.total_wall_time_s);
            return if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Experiment { id: "selftest".into(), message: format!("criteria {failed:?} failed") })
            };
        }
        Command::Run(a) => (a, None),
        Command::Simulate(a) => (a, Some(Kind::Simulate)),
        Command::Regen(a) => (a, Some(Kind::Regen)),
        Command::ExitHist(a) => (a, Some(Kind::ExitHist)),
        Command::ExitCompare(a) => (a, Some(Kind::ExitCompare)),
        Command::Llt(a) => (a, Some(Kind::Llt)),
        Command::Classify(a) => (a, Some(Kind::Classify)),
        Command::Tgamma(a) => (a, Some(Kind::Tgamma)),
        Command::Slowdown(a) => (a, Some(Kind::Slowdown)),
        Command::Trap(a) => (a, Some(Kind::Trap)),
        Command::AuxRun(a) => (a, Some(Kind::AuxRun)),
        Command::Wevent(a) => (a, Some(Kind::Wevent)),
        Command::Returns(a) => (a, Some(Kind::Returns)),
        Command::Reduction(a) => (a, Some(Kind::Reduction)),
    };
    campaign(&args, kind)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
