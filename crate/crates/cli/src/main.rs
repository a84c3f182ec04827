use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use prefkg::benchmarks::simulated_error_rate;
use prefkg::experiment::{group_by_config, read_dir, run_seeds};
use prefkg::{
    calibrate_sigma, export_case_study, run_experiment, summarize, test_function, Error,
    ExperimentConfig, Method, NoiseMode, RandomSource,
};

#[derive(Parser)]
#[command(
    name = "prefkg",
    version,
    about = "Preferential Bayesian optimization benchmarks and live sessions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark for a range of seeds, one JSONL log per seed.
    Run(RunArgs),
    /// Per-iteration median and IQR of the optimality gap for every
    /// configuration found in a directory of run logs.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate the oracle noise for a target top-1% error rate.
    Calibrate {
        #[arg(long)]
        function: String,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one 2D benchmark and export its queries and posterior-mean grid.
    CaseStudy {
        #[arg(long, default_value = "levy2")]
        function: String,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long, default_value = "det")]
        noise: NoiseMode,
        #[arg(long, default_value_t = 50)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of session event logs; sessions are in-memory without it.
        #[arg(long)]
        state: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    function: String,
    #[arg(long)]
    method: Method,
    #[arg(long)]
    noise: NoiseMode,
    /// `a..b` (b excluded), `a..=b`, or a comma-separated list.
    #[arg(long, default_value = "0..1", value_parser = parse_seeds)]
    seeds: Seeds,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long)]
    out: PathBuf,
    /// Initial Sobol pairs (default 4 × dimension).
    #[arg(long)]
    init_pairs: Option<usize>,
    #[arg(long, default_value_t = 5)]
    refit_every: usize,
    #[arg(long, default_value_t = 0)]
    calibration_seed: u64,
    /// Record wall time per iteration (makes logs differ between reruns).
    #[arg(long)]
    timing: bool,
    /// JSON file with a full ExperimentConfig; other flags are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|e| format!("bad seed `{t}`: {e}"))
    };
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("`{s}` contains no seeds"));
    }
    Ok(Seeds(seeds))
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(Error::from)?
        }
        None => {
            let mut c = ExperimentConfig::new(&args.function, args.method, args.noise);
            c.seeds = args.seeds.0;
            c.iterations = args.iters;
            c.init_pairs = args.init_pairs;
            c.refit_every = args.refit_every;
            c.calibration_seed = args.calibration_seed;
            c.record_timing = args.timing;
            c
        }
    };
    let resolved = cfg.resolve()?;
    if let Some(c) = &resolved.calibration {
        log::info!("calibrated sigma {:.6e} for target {}", c.sigma, c.target);
    }
    let records = run_seeds(&resolved, Some(&args.out))?;
    let summary = summarize(&records)?;
    let name = format!("{}_{}_{}_summary.csv", cfg.function, cfg.method, cfg.noise);
    std::fs::write(args.out.join(name), summary.to_csv())?;
    let mut ok = true;
    for r in &records {
        match &r.error {
            Some(e) => {
                ok = false;
                println!("seed {}: stopped early ({e})", r.seed);
            }
            None => println!(
                "seed {}: final gap {:.6e}",
                r.seed,
                r.final_gap().unwrap_or(f64::NAN)
            ),
        }
    }
    Ok(ok)
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Summarize { input, out } => {
            let groups = group_by_config(read_dir(&input)?);
            if groups.is_empty() {
                return Err(
                    Error::InvalidArgument(format!("no run logs in {}", input.display())).into(),
                );
            }
            let mut csv = String::new();
            for g in &groups {
                let s = summarize(g)?.to_csv();
                let body = if csv.is_empty() {
                    &s[..]
                } else {
                    s.split_once('\n').map_or("", |(_, b)| b)
                };
                csv.push_str(body);
            }
            std::fs::write(&out, csv)?;
            println!("{} configuration(s) summarized", groups.len());
            Ok(true)
        }
        Command::Calibrate {
            function,
            target,
            seed,
        } => {
            let t = test_function(&function)?;
            let c = calibrate_sigma(&t, target, &mut RandomSource::new(seed))?;
            let fresh =
                simulated_error_rate(&t, c.sigma, 100_000, &mut RandomSource::derive(seed, 1))?;
            let out = serde_json::json!({
                "function": function,
                "target": c.target,
                "sigma": c.sigma,
                "achieved": c.achieved,
                "fresh_error_rate": fresh,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(true)
        }
        Command::CaseStudy {
            function,
            method,
            seed,
            iters,
            noise,
            resolution,
            out,
        } => {
            let mut cfg = ExperimentConfig::new(&function, method, noise);
            cfg.seeds = vec![seed];
            cfg.iterations = iters;
            let t = test_function(&function)?;
            if t.dim() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "case study needs a 2D function, {function} is {}D",
                    t.dim()
                ))
                .into());
            }
            let record = run_experiment(&cfg.resolve()?, seed)?;
            let cs = export_case_study(&record, resolution)?;
            std::fs::write(&out, serde_json::to_string_pretty(&cs)?)?;
            println!("final gap {:.6e}, collapse {:?}", cs.final_gap, cs.collapse);
            Ok(record.error.is_none())
        }
        Command::Serve { port, host, state } => {
            let addr = format!("{host}:{port}").parse().context("bad host/port")?;
            tokio::runtime::Runtime::new()?
                .block_on(prefkg_service::serve(addr, state.as_deref()))?;
            Ok(true)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(e) if e.is_numeric() => 3,
        Some(Error::Io(_)) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
