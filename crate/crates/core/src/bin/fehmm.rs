use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fehmm_core::cache::{hex, TensorCache};
use fehmm_core::config::ScenarioConfig;
use fehmm_core::harness;
use fehmm_core::studies::Study;
use fehmm_core::{Error, Result};

/// Heterogeneous multiscale solver for dispersive Maxwell systems.
#[derive(Parser)]
#[command(name = "fehmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` of the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the cell problems.
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed for random test vectors; defaults to `scenario.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Ignore the tensor cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problems and write the effective tensors.
    Micro(Common),
    /// Integrate the macroscopic system.
    Run(Common),
    /// Run a convergence study.
    Converge {
        /// micro-M, micro-R, micro-G, micro-J, sobolev or macro.
        study: Study,
        /// Comma-separated mesh levels (at least three).
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the invariant suite.
    Verify(Common),
    /// Inspect or empty the tensor cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Ls(CacheArgs),
    Clear(CacheArgs),
}

#[derive(Args)]
struct CacheArgs {
    /// Scenario whose `output.cache_dir` is used.
    #[arg(long, conflicts_with = "dir")]
    config: Option<PathBuf>,
    /// Cache directory.
    #[arg(long)]
    dir: Option<PathBuf>,
}

fn setup(c: &Common) -> Result<ScenarioConfig> {
    if let Some(jobs) = c.jobs {
        if jobs == 0 {
            return Err(Error::config("--jobs: must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::config(format!("--jobs: {e}")))?;
    }
    let mut cfg = ScenarioConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.scenario.seed = s;
    }
    Ok(cfg)
}

fn cache_for(cfg: &ScenarioConfig, c: &Common) -> Option<TensorCache> {
    (!c.no_cache).then(|| TensorCache::new(&cfg.output.cache_dir))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Micro(c) => {
            let cfg = setup(&c)?;
            let cache = cache_for(&cfg, &c);
            let out = harness::cmd_micro(&cfg, c.out.as_deref(), cache.as_ref())?;
            println!("{} entries, table {}", out.table.entries.len(), hex(&out.table.hash));
        }
        Command::Run(c) => {
            let cfg = setup(&c)?;
            let cache = cache_for(&cfg, &c);
            let out = harness::cmd_run(&cfg, c.out.as_deref(), cache.as_ref())?;
            let last = out.trajectory.records.last().expect("trajectory has the initial record");
            println!(
                "t = {}: ||u|| = {:e}, bound {:e}{}",
                last.t,
                last.norm_mh,
                last.bound,
                if out.from_cache { " (cached tensors)" } else { "" }
            );
        }
        Command::Converge { study, levels, common } => {
            let cfg = setup(&common)?;
            if levels.len() < 3 {
                return Err(Error::config("--levels: at least three levels are required"));
            }
            let report = harness::cmd_converge(&cfg, study, &levels, common.out.as_deref())?;
            for f in &report.fits {
                let slope = f.fit.as_ref().map_or("-".to_string(), |x| format!("{:.3}", x.slope));
                println!("{study} t = {}: slope {slope} (theory {}) {}", f.t, f.theory, f.status.as_str());
            }
        }
        Command::Verify(c) => {
            let cfg = setup(&c)?;
            let r = harness::cmd_verify(&cfg, cfg.scenario.seed, c.out.as_deref())?;
            for ch in &r.checks {
                let status = if ch.pass { "pass" } else { "FAIL" };
                println!("{:<24} {:>12.4e}  limit {:>10.3e}  {status}", ch.name, ch.value, ch.limit);
            }
            if let Some(e) = harness::verify_failure(&r) {
                return Err(e);
            }
        }
        Command::Cache { action } => {
            let (args, clear) = match action {
                CacheAction::Ls(a) => (a, false),
                CacheAction::Clear(a) => (a, true),
            };
            let dir = match (args.dir, args.config) {
                (Some(d), _) => d,
                (None, Some(p)) => ScenarioConfig::load(&p)?.output.cache_dir,
                (None, None) => PathBuf::from(".fehmm-cache"),
            };
            let cache = TensorCache::new(dir);
            if clear {
                println!("removed {} files", cache.clear()?);
            } else {
                for f in cache.list()? {
                    println!("{}\t{}", f.bytes, f.path.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
