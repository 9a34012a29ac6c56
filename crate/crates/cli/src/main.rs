use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pickfleet::orders::DayOrders;
use pickfleet::sim::{self, Env, SimConfig, SimError, SweepDim, TrainOutputs};

#[derive(Parser)]
#[command(name = "pickfleet", version, about = "Hybrid human/AGV order-picking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a NeurADP value function and write its checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training-log CSV (defaults to the checkpoint path with a .log.csv suffix).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Override the configured training budget.
        #[arg(long)]
        days: Option<u32>,
    },
    /// Compare policies on common-random-number test days.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated, e.g. neuradp:ckpt.bin,myopic-ilp,myopic-hf-20
        #[arg(long)]
        policy: String,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate policies across values of one configuration dimension.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// worker_mix, speed, delay, capacity or availability
        #[arg(long)]
        dim: String,
        #[arg(long)]
        policy: String,
        /// Comma-separated values (defaults to the dimension's standard values).
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write sampled order streams as CSV traces.
    GenOrders {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        days: usize,
        /// First day's seed (defaults to the evaluation seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Output path; with several days, `-<day>` is appended to the file stem.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one policy over a recorded order trace.
    Replay {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        policy: String,
        /// Per-epoch JSON-lines trace of worker states, actions and completions.
        #[arg(long)]
        day_trace: Option<PathBuf>,
    },
}

fn load_env(config: Option<&Path>) -> Result<Env, SimError> {
    let cfg = match config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    Env::new(cfg)
}

fn numbered(path: &Path, day: usize, days: usize) -> PathBuf {
    if days <= 1 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}-{day:03}.{ext}"))
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Train { config, out, log, days } => {
            let mut env = load_env(config.as_deref())?;
            if let Some(d) = days {
                env.config.training.days = d;
            }
            let log = log.unwrap_or_else(|| out.with_extension("log.csv"));
            let outcome = sim::train(&env, TrainOutputs { checkpoint: Some(&out), log: Some(&log) })?;
            let last = outcome.days.last();
            println!(
                "trained {} days, {} updates; checkpoint {}, log {}",
                outcome.days.len(),
                outcome.log.len(),
                out.display(),
                log.display()
            );
            if let Some(d) = last {
                println!("last training day: filled {} of {}", d.orders_filled, d.orders_seen);
            }
        }
        Command::Evaluate { config, policy, days, out } => {
            let env = load_env(config.as_deref())?;
            let policies = sim::parse_policies(&policy)?.iter().map(sim::load_policy).collect::<Result<Vec<_>, _>>()?;
            let seeds = env.eval_seeds(days.unwrap_or(env.config.sim.eval_days));
            let cmp = sim::evaluate(&env, &policies, &seeds)?;
            print!("{}", cmp.table());
            if let Some(dir) = out {
                sim::write_comparison(&cmp, &dir, "evaluation")?;
            }
        }
        Command::Sweep { config, dim, policy, values, days, out } => {
            let env = load_env(config.as_deref())?;
            let dim: SweepDim = dim.parse()?;
            let policies = sim::parse_policies(&policy)?.iter().map(sim::load_policy).collect::<Result<Vec<_>, _>>()?;
            let values = match values {
                Some(v) => v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                None => dim.default_values(),
            };
            let days = days.unwrap_or(env.config.sim.eval_days);
            for (value, cmp) in sim::sweep(&env.config, dim, &values, &policies, days)? {
                println!("== {dim:?} = {value}");
                print!("{}", cmp.table());
                if let Some(dir) = &out {
                    let stem = format!("sweep-{dim:?}-{}", value.replace(['/', '+', '%'], "_")).to_lowercase();
                    sim::write_comparison(&cmp, dir, &stem)?;
                }
            }
        }
        Command::GenOrders { config, days, seed, out } => {
            let env = load_env(config.as_deref())?;
            let first = seed.unwrap_or(env.config.sim.eval_seed);
            for d in 0..days {
                let orders = env.day_orders(first + d as u64);
                let path = numbered(&out, d, days);
                orders.write_csv(fs::File::create(&path)?).map_err(|e| SimError::Output(e.to_string()))?;
                println!("{}: {} orders", path.display(), orders.total());
            }
        }
        Command::Replay { config, trace, policy, day_trace } => {
            let env = load_env(config.as_deref())?;
            let specs = sim::parse_policies(&policy)?;
            let [spec] = specs.as_slice() else {
                return Err(SimError::Config("replay takes exactly one policy".into()));
            };
            let policy = sim::load_policy(spec)?;
            let file = fs::File::open(&trace).map_err(|e| SimError::Config(format!("{}: {e}", trace.display())))?;
            let orders = DayOrders::read_csv(file, env.horizon()).map_err(|e| SimError::Config(e.to_string()))?;
            env.check_orders(&orders)?;
            let mut sink = match &day_trace {
                Some(p) => Some(std::io::BufWriter::new(fs::File::create(p)?)),
                None => None,
            };
            let stats = sim::run_day_with_orders(
                &env,
                &policy,
                &orders,
                0,
                sink.as_mut().map(|w| w as &mut dyn std::io::Write),
            )?;
            println!("{}", serde_json::to_string_pretty(&stats).map_err(|e| SimError::Output(e.to_string()))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
