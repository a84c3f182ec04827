//! The benchmark loop: Sobol initialization, then fit / acquire / query /
//! record for a fixed number of iterations, with JSONL persistence, summary
//! curves and the 2D case-study export.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acquisition::{
    argmax_posterior_mean, next_duel, AcquisitionConfig, DuelQuery, Method, Outcome,
};
use crate::benchmarks::{
    calibrate_sigma, oracle_compare, test_function, Calibration, OracleConfig, TestFunction,
};
use crate::dataset::PrefDataset;
use crate::error::{Error, Result};
use crate::kernel::{HyperPriors, KernelHypers};
use crate::laplace::{fit_hypers, fit_map, HyperFitOptions, LaplacePosterior};
use crate::optim::MultiStartOptions;
use crate::stats::{sobol_sample, RandomSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Top-1% comparisons err 10% of the time.
    Low,
    /// Top-1% comparisons err 30% of the time.
    High,
    /// Noise-free comparisons.
    Det,
}

impl NoiseMode {
    pub fn target_error(&self) -> Option<f64> {
        match self {
            NoiseMode::Low => Some(0.10),
            NoiseMode::High => Some(0.30),
            NoiseMode::Det => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseMode::Low => "low",
            NoiseMode::High => "high",
            NoiseMode::Det => "det",
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(NoiseMode::Low),
            "high" => Ok(NoiseMode::High),
            "det" | "deterministic" => Ok(NoiseMode::Det),
            _ => Err(Error::Unknown {
                kind: "noise mode",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub function: String,
    pub method: Method,
    pub noise: NoiseMode,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    /// Initial Sobol pairs; `4d` when absent.
    pub init_pairs: Option<usize>,
    /// Hyperparameters are refit on iterations divisible by this.
    pub refit_every: usize,
    pub acquisition: AcquisitionConfig,
    pub hyper_fit: HyperFitOptions,
    pub priors: HyperPriors,
    /// Optimizer for the estimated maximizer `x̂`.
    pub argmax: MultiStartOptions,
    pub calibration_seed: u64,
    /// Store per-iteration wall time. Off by default so that reruns are
    /// byte-identical.
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(function: &str, method: Method, noise: NoiseMode) -> Self {
        Self {
            function: function.to_string(),
            method,
            noise,
            seeds: vec![0],
            iterations: 100,
            init_pairs: None,
            refit_every: 5,
            acquisition: AcquisitionConfig::default(),
            hyper_fit: HyperFitOptions::default(),
            priors: HyperPriors::default(),
            argmax: MultiStartOptions::default(),
            calibration_seed: 0,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<TestFunction> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.refit_every == 0 {
            return Err(Error::invalid("refit_every must be at least 1"));
        }
        if self.init_pairs == Some(0) {
            return Err(Error::invalid("init_pairs must be at least 1"));
        }
        test_function(&self.function)
    }

    /// Validates the config and calibrates the oracle noise.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let t = self.validate()?;
        let calibration = match self.noise.target_error() {
            Some(target) => Some(calibrate_sigma(
                &t,
                target,
                &mut RandomSource::new(self.calibration_seed),
            )?),
            None => None,
        };
        let oracle = match &calibration {
            Some(c) => OracleConfig::noisy(c.sigma)?,
            None => OracleConfig::deterministic(),
        };
        Ok(ResolvedConfig {
            config: self.clone(),
            dim: t.dim(),
            init_pairs: self.init_pairs.unwrap_or(4 * t.dim()),
            oracle,
            calibration,
        })
    }
}

/// A config with its derived quantities, stored as the JSONL header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub dim: usize,
    pub init_pairs: usize,
    pub oracle: OracleConfig,
    pub calibration: Option<Calibration>,
}

impl ResolvedConfig {
    /// Identity of the experiment regardless of which seeds were run.
    fn identity(&self) -> ResolvedConfig {
        let mut c = self.clone();
        c.config.seeds.clear();
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub query: DuelQuery,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Absent at iteration 0, the post-initialization state.
    pub comparison: Option<Comparison>,
    pub x_hat: Vec<f64>,
    pub gap: f64,
    pub hypers: KernelHypers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ResolvedConfig,
    pub seed: u64,
    pub init: Vec<Comparison>,
    pub iterations: Vec<IterationRecord>,
    pub final_dataset: PrefDataset,
    pub oracle_calls: usize,
    /// Set when a fit failed and the run stopped early.
    pub error: Option<String>,
}

impl RunRecord {
    pub fn gaps(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.gap).collect()
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.gap)
    }

    pub fn is_complete(&self) -> bool {
        self.error.is_none() && self.iterations.len() == self.config.config.iterations + 1
    }

    /// Acquired (non-initial) queries in order.
    pub fn acquired(&self) -> impl Iterator<Item = &Comparison> {
        self.iterations.iter().filter_map(|r| r.comparison.as_ref())
    }

    /// Mean `‖x₁ − x₂‖` over the last `k` acquired queries.
    pub fn collapse_metric(&self, k: usize) -> Option<f64> {
        let q: Vec<&Comparison> = self.acquired().collect();
        if q.is_empty() || k == 0 {
            return None;
        }
        let tail = &q[q.len().saturating_sub(k)..];
        Some(tail.iter().map(|c| c.query.separation()).sum::<f64>() / tail.len() as f64)
    }
}

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header {
        config: ResolvedConfig,
        seed: u64,
    },
    Init {
        comparisons: Vec<Comparison>,
    },
    Iteration(IterationRecord),
    Footer {
        final_dataset: PrefDataset,
        oracle_calls: usize,
        error: Option<String>,
    },
}

fn write_line<W: Write>(out: &mut W, line: &LogLine) -> Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

// Independent random streams per run, so paired runs share the same
// initialization and oracle draws regardless of method.
const STREAM_INIT: u64 = 1;
const STREAM_ORACLE: u64 = 2;
const STREAM_ACQUIRE: u64 = 3;
const STREAM_HYPERS: u64 = 4;
const STREAM_ARGMAX: u64 = 5;

struct Runner<'a> {
    cfg: &'a ResolvedConfig,
    t: TestFunction,
    oracle_rng: RandomSource,
    acquire_rng: RandomSource,
    hyper_rng: RandomSource,
    argmax_rng: RandomSource,
    dataset: PrefDataset,
    hypers: KernelHypers,
    oracle_calls: usize,
}

impl Runner<'_> {
    fn query(&mut self, q: DuelQuery) -> Result<Comparison> {
        let outcome = oracle_compare(&self.t, &self.cfg.oracle, &q, &mut self.oracle_rng)?;
        self.oracle_calls += 1;
        let (w, l) = match outcome {
            Outcome::FirstWins => (&q.x1, &q.x2),
            Outcome::SecondWins => (&q.x2, &q.x1),
        };
        self.dataset.add_comparison(w, l)?;
        Ok(Comparison { query: q, outcome })
    }

    fn refit(&mut self, iteration: usize) -> Result<LaplacePosterior> {
        let c = &self.cfg.config;
        if iteration % c.refit_every == 0 && self.dataset.n_duels() > 0 {
            let fit = fit_hypers(
                &self.dataset,
                &c.priors,
                &self.hypers,
                &c.hyper_fit,
                &mut self.hyper_rng,
            )?;
            if fit.fallback {
                log::warn!("iteration {iteration}: hyperparameter fit fell back to prior medians");
            }
            self.hypers = fit.hypers;
        }
        fit_map(&self.dataset, &self.hypers)
    }

    fn record(
        &mut self,
        iteration: usize,
        comparison: Option<Comparison>,
        started: Instant,
    ) -> Result<(IterationRecord, LaplacePosterior)> {
        let post = self.refit(iteration)?;
        let (x_hat, _) =
            argmax_posterior_mean(&post, &self.cfg.config.argmax, &mut self.argmax_rng)?;
        let gap = self.t.gap(&x_hat)?;
        let wall_ms = self
            .cfg
            .config
            .record_timing
            .then(|| started.elapsed().as_secs_f64() * 1e3);
        let rec = IterationRecord {
            iteration,
            comparison,
            x_hat,
            gap,
            hypers: self.hypers.clone(),
            wall_ms,
        };
        Ok((rec, post))
    }
}

/// Runs one seed and writes its log line by line to `out`.
pub fn run_experiment_logged<W: Write>(
    cfg: &ResolvedConfig,
    seed: u64,
    out: &mut W,
) -> Result<RunRecord> {
    let c = &cfg.config;
    let t = c.validate()?;
    let mut runner = Runner {
        cfg,
        hypers: c.priors.median(t.dim()),
        dataset: PrefDataset::new(t.domain().clone()),
        t,
        oracle_rng: RandomSource::derive(seed, STREAM_ORACLE),
        acquire_rng: RandomSource::derive(seed, STREAM_ACQUIRE),
        hyper_rng: RandomSource::derive(seed, STREAM_HYPERS),
        argmax_rng: RandomSource::derive(seed, STREAM_ARGMAX),
        oracle_calls: 0,
    };
    write_line(
        out,
        &LogLine::Header {
            config: cfg.clone(),
            seed,
        },
    )?;

    let started = Instant::now();
    let product = runner.t.domain().product(runner.t.domain());
    let d = runner.t.dim();
    let mut init_rng = RandomSource::derive(seed, STREAM_INIT);
    let mut init = Vec::with_capacity(cfg.init_pairs);
    for z in sobol_sample(cfg.init_pairs, &product, &mut init_rng)? {
        init.push(runner.query(DuelQuery::new(z[..d].to_vec(), z[d..].to_vec()))?);
    }
    write_line(
        out,
        &LogLine::Init {
            comparisons: init.clone(),
        },
    )?;

    let mut iterations = Vec::with_capacity(c.iterations + 1);
    let mut error = None;
    let mut post = match runner.record(0, None, started) {
        Ok((rec, post)) => {
            write_line(out, &LogLine::Iteration(rec.clone()))?;
            iterations.push(rec);
            Some(post)
        }
        Err(e) if !matches!(e, Error::Io(_)) => {
            error = Some(e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    for i in 1..=c.iterations {
        let Some(p) = post.take() else { break };
        let started = Instant::now();
        let step = next_duel(&p, c.method, &c.acquisition, &mut runner.acquire_rng)
            .and_then(|q| runner.query(q))
            .and_then(|cmp| runner.record(i, Some(cmp), started));
        match step {
            Ok((rec, next)) => {
                write_line(out, &LogLine::Iteration(rec.clone()))?;
                iterations.push(rec);
                post = Some(next);
            }
            Err(e @ Error::Io(_)) => return Err(e),
            Err(e) => {
                log::warn!("seed {seed}, iteration {i}: {e}");
                error = Some(format!("iteration {i}: {e}"));
            }
        }
    }

    write_line(
        out,
        &LogLine::Footer {
            final_dataset: runner.dataset.clone(),
            oracle_calls: runner.oracle_calls,
            error: error.clone(),
        },
    )?;
    Ok(RunRecord {
        config: cfg.clone(),
        seed,
        init,
        iterations,
        final_dataset: runner.dataset,
        oracle_calls: runner.oracle_calls,
        error,
    })
}

pub fn run_experiment(cfg: &ResolvedConfig, seed: u64) -> Result<RunRecord> {
    run_experiment_logged(cfg, seed, &mut std::io::sink())
}

/// The JSONL log of a finished run, byte-identical to the one streamed by
/// [`run_experiment_logged`].
pub fn to_jsonl(record: &RunRecord) -> Result<String> {
    let mut buf = Vec::new();
    write_line(
        &mut buf,
        &LogLine::Header {
            config: record.config.clone(),
            seed: record.seed,
        },
    )?;
    write_line(
        &mut buf,
        &LogLine::Init {
            comparisons: record.init.clone(),
        },
    )?;
    for r in &record.iterations {
        write_line(&mut buf, &LogLine::Iteration(r.clone()))?;
    }
    write_line(
        &mut buf,
        &LogLine::Footer {
            final_dataset: record.final_dataset.clone(),
            oracle_calls: record.oracle_calls,
            error: record.error.clone(),
        },
    )?;
    Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
}

/// Parses a run log. A log without a footer (interrupted run) is returned
/// with an error marker.
pub fn from_jsonl<R: BufRead>(input: R) -> Result<RunRecord> {
    let mut header = None;
    let mut init = Vec::new();
    let mut iterations = Vec::new();
    let mut footer = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogLine>(&line)? {
            LogLine::Header { config, seed } => header = Some((config, seed)),
            LogLine::Init { comparisons } => init = comparisons,
            LogLine::Iteration(r) => iterations.push(r),
            LogLine::Footer {
                final_dataset,
                oracle_calls,
                error,
            } => footer = Some((final_dataset, oracle_calls, error)),
        }
    }
    let (config, seed) = header.ok_or_else(|| Error::invalid("run log has no header line"))?;
    let (final_dataset, oracle_calls, error) = match footer {
        Some(f) => f,
        None => {
            let domain = test_function(&config.config.function)?.domain().clone();
            (
                PrefDataset::new(domain),
                0,
                Some("run log has no footer (interrupted)".to_string()),
            )
        }
    };
    Ok(RunRecord {
        config,
        seed,
        init,
        iterations,
        final_dataset,
        oracle_calls,
        error,
    })
}

pub fn read_run(path: &Path) -> Result<RunRecord> {
    from_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// `<function>_<method>_<noise>_seed<seed>.jsonl`
pub fn run_file_name(cfg: &ExperimentConfig, seed: u64) -> String {
    format!(
        "{}_{}_{}_seed{}.jsonl",
        cfg.function, cfg.method, cfg.noise, seed
    )
}

/// Runs one seed, streaming its log into `dir`.
pub fn run_to_dir(cfg: &ResolvedConfig, seed: u64, dir: &Path) -> Result<RunRecord> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(run_file_name(&cfg.config, seed));
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    run_experiment_logged(cfg, seed, &mut file)
}

/// Runs every configured seed in parallel. With `dir`, each run streams
/// its own JSONL file there. Records come back in seed order.
pub fn run_seeds(cfg: &ResolvedConfig, dir: Option<&Path>) -> Result<Vec<RunRecord>> {
    use rayon::prelude::*;
    cfg.config
        .seeds
        .par_iter()
        .map(|&seed| match dir {
            Some(d) => run_to_dir(cfg, seed, d),
            None => run_experiment(cfg, seed),
        })
        .collect()
}

/// Reads every `*.jsonl` run log in `dir`, sorted by file name.
pub fn read_dir(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_run(p)).collect()
}

/// Splits records into groups sharing a configuration, in first-seen order.
pub fn group_by_config(records: Vec<RunRecord>) -> Vec<Vec<RunRecord>> {
    let mut groups: Vec<Vec<RunRecord>> = Vec::new();
    for r in records {
        match groups
            .iter_mut()
            .find(|g| g[0].config.identity() == r.config.identity())
        {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    groups
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub iteration: usize,
    /// Runs that reached this iteration.
    pub runs: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub function: String,
    pub method: Method,
    pub noise: NoiseMode,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("function,method,noise,iteration,runs,median_gap,q25_gap,q75_gap\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.function, self.method, self.noise, r.iteration, r.runs, r.median, r.q25, r.q75
            ));
        }
        s
    }
}

/// Per-iteration median and interquartile range of the optimality gap.
pub fn summarize(records: &[RunRecord]) -> Result<Summary> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("no records to summarize"))?;
    let id = first.config.identity();
    if records.iter().any(|r| r.config.identity() != id) {
        return Err(Error::invalid("records come from different configurations"));
    }
    let longest = records
        .iter()
        .map(|r| r.iterations.len())
        .max()
        .unwrap_or(0);
    let rows = (0..longest)
        .map(|i| {
            let mut gaps: Vec<f64> = records
                .iter()
                .filter_map(|r| r.iterations.get(i))
                .map(|r| r.gap)
                .collect();
            gaps.sort_by(f64::total_cmp);
            SummaryRow {
                iteration: i,
                runs: gaps.len(),
                median: quantile_sorted(&gaps, 0.5),
                q25: quantile_sorted(&gaps, 0.25),
                q75: quantile_sorted(&gaps, 0.75),
            }
        })
        .collect();
    let c = &first.config.config;
    Ok(Summary {
        function: c.function.clone(),
        method: c.method,
        noise: c.noise,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyPair {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub outcome: Outcome,
    /// Sobol initialization rather than acquisition.
    pub init: bool,
}

/// Everything needed to redraw the 2D query scatter over the posterior mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudy {
    pub function: String,
    pub method: Method,
    pub seed: u64,
    pub pairs: Vec<CaseStudyPair>,
    /// Grid coordinates along each axis.
    pub axis_x: Vec<f64>,
    pub axis_y: Vec<f64>,
    /// `mean[j][i]` is the posterior mean at `(axis_x[i], axis_y[j])`.
    pub mean: Vec<Vec<f64>>,
    pub x_hat: Vec<f64>,
    pub final_gap: f64,
    /// Mean pair distance over the last 10 acquired queries.
    pub collapse: Option<f64>,
}

/// Rebuilds the final posterior of a 2D run and tabulates its mean on a
/// `resolution × resolution` grid.
pub fn export_case_study(record: &RunRecord, resolution: usize) -> Result<CaseStudy> {
    let t = test_function(&record.config.config.function)?;
    if t.dim() != 2 {
        return Err(Error::invalid(format!(
            "case study needs a 2D function, {} is {}D",
            t.name(),
            t.dim()
        )));
    }
    if resolution < 2 {
        return Err(Error::invalid("grid resolution must be at least 2"));
    }
    let last = record
        .iterations
        .last()
        .ok_or_else(|| Error::invalid("run has no iterations"))?;
    let post = fit_map(&record.final_dataset, &last.hypers)?;
    let dom = t.domain();
    let axis = |k: usize| -> Vec<f64> {
        (0..resolution)
            .map(|i| dom.lower()[k] + dom.width(k) * i as f64 / (resolution - 1) as f64)
            .collect()
    };
    let (axis_x, axis_y) = (axis(0), axis(1));
    let mean = axis_y
        .iter()
        .map(|y| {
            axis_x
                .iter()
                .map(|x| post.mean_unit(&dom.to_unit(&[*x, *y])))
                .collect()
        })
        .collect();
    let pair = |c: &Comparison, init: bool| CaseStudyPair {
        x1: c.query.x1.clone(),
        x2: c.query.x2.clone(),
        outcome: c.outcome,
        init,
    };
    let pairs = record
        .init
        .iter()
        .map(|c| pair(c, true))
        .chain(record.acquired().map(|c| pair(c, false)))
        .collect();
    Ok(CaseStudy {
        function: t.name().to_string(),
        method: record.config.config.method,
        seed: record.seed,
        pairs,
        axis_x,
        axis_y,
        mean,
        x_hat: last.x_hat.clone(),
        final_gap: last.gap,
        collapse: record.collapse_metric(10),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(
        function: &str,
        method: Method,
        noise: NoiseMode,
        iterations: usize,
    ) -> ResolvedConfig {
        let mut c = ExperimentConfig::new(function, method, noise);
        c.iterations = iterations;
        c.acquisition.optimizer = MultiStartOptions {
            raw_samples: 64,
            restarts: 2,
            max_evals: 60,
            simplex_scale: 0.05,
        };
        c.argmax = MultiStartOptions {
            raw_samples: 128,
            restarts: 2,
            max_evals: 100,
            simplex_scale: 0.05,
        };
        c.hyper_fit = HyperFitOptions {
            starts: 2,
            max_evals: 40,
        };
        c.resolve().unwrap()
    }

    #[test]
    fn counts_oracle_calls() {
        let cfg = quick("quadratic2", Method::Random, NoiseMode::Low, 5);
        let r = run_experiment(&cfg, 3).unwrap();
        assert!(r.is_complete());
        assert_eq!(r.init.len(), 8);
        assert_eq!(r.iterations.len(), 6);
        assert_eq!(r.oracle_calls, 13);
        assert_eq!(r.final_dataset.n_duels(), 13);
        assert!(r.gaps().iter().all(|g| *g >= -1e-9));
        assert!(r.iterations[0].comparison.is_none());
        assert!(r.iterations[1..].iter().all(|it| it.comparison.is_some()));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = quick("branin2", Method::Kg, NoiseMode::Det, 3);
        let mut a = Vec::new();
        let ra = run_experiment_logged(&cfg, 7, &mut a).unwrap();
        let mut b = Vec::new();
        run_experiment_logged(&cfg, 7, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(to_jsonl(&ra).unwrap().as_bytes(), &a[..]);
    }

    #[test]
    fn jsonl_round_trips() {
        let cfg = quick("quadratic2", Method::Eubo, NoiseMode::High, 2);
        let r = run_experiment(&cfg, 1).unwrap();
        let text = to_jsonl(&r).unwrap();
        let back = from_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn interrupted_log_is_flagged() {
        let cfg = quick("quadratic2", Method::Random, NoiseMode::Det, 2);
        let r = run_experiment(&cfg, 1).unwrap();
        let text = to_jsonl(&r).unwrap();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        let back = from_jsonl(cut.as_bytes()).unwrap();
        assert!(back.error.is_some());
        assert_eq!(back.iterations.len(), 1);
    }

    #[test]
    fn timing_is_opt_in() {
        let mut cfg = quick("quadratic2", Method::Random, NoiseMode::Det, 1);
        let r = run_experiment(&cfg, 0).unwrap();
        assert!(r.iterations.iter().all(|it| it.wall_ms.is_none()));
        cfg.config.record_timing = true;
        let r = run_experiment(&cfg, 0).unwrap();
        assert!(r.iterations.iter().all(|it| it.wall_ms.is_some()));
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new("quadratic2", Method::Kg, NoiseMode::Low);
        c.iterations = 0;
        assert!(c.resolve().is_err());
        c.iterations = 1;
        c.seeds.clear();
        assert!(c.resolve().is_err());
        let c = ExperimentConfig::new("nope", Method::Kg, NoiseMode::Low);
        assert!(matches!(c.resolve(), Err(Error::Unknown { .. })));
        assert_eq!("det".parse::<NoiseMode>().unwrap(), NoiseMode::Det);
        assert!("medium".parse::<NoiseMode>().is_err());
    }

    fn fake(gaps: &[f64], method: Method) -> RunRecord {
        let cfg = quick("quadratic2", method, NoiseMode::Det, gaps.len().max(2) - 1);
        let hypers = KernelHypers::new(&[0.3, 0.3], 1.0).unwrap();
        RunRecord {
            config: cfg,
            seed: 0,
            init: vec![],
            iterations: gaps
                .iter()
                .enumerate()
                .map(|(i, g)| IterationRecord {
                    iteration: i,
                    comparison: None,
                    x_hat: vec![0.0, 0.0],
                    gap: *g,
                    hypers: hypers.clone(),
                    wall_ms: None,
                })
                .collect(),
            final_dataset: PrefDataset::new(crate::stats::BoxDomain::cube(2, -1.0, 1.0).unwrap()),
            oracle_calls: 0,
            error: None,
        }
    }

    #[test]
    fn summary_statistics() {
        let one = summarize(&[fake(&[0.5, 0.2], Method::Kg)]).unwrap();
        assert_eq!(one.rows[1].median, 0.2);
        let two =
            summarize(&[fake(&[0.5, 0.2], Method::Kg), fake(&[0.3, 0.6], Method::Kg)]).unwrap();
        assert!((two.rows[0].median - 0.4).abs() < 1e-15);
        assert!((two.rows[1].median - 0.4).abs() < 1e-15);
        let many: Vec<RunRecord> = (0..20)
            .map(|i| fake(&[i as f64, (i * 7 % 20) as f64], Method::Kg))
            .collect();
        let s = summarize(&many).unwrap();
        for r in &s.rows {
            assert!(r.q25 <= r.median && r.median <= r.q75);
        }
        assert!(s.to_csv().lines().count() == 3);
        assert!(summarize(&[fake(&[0.5], Method::Kg), fake(&[0.5], Method::Eubo)]).is_err());
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn case_study_export() {
        let cfg = quick("levy2", Method::Eubo, NoiseMode::Det, 1);
        let mut r = run_experiment(&cfg, 2).unwrap();
        r.iterations.truncate(1);
        let cs = export_case_study(&r, 5).unwrap();
        assert!(cs.pairs.iter().all(|p| p.init));
        assert_eq!(cs.pairs.len(), 8);
        let last = r.iterations.last().unwrap();
        let post = fit_map(&r.final_dataset, &last.hypers).unwrap();
        let m = post.predict_mean(&[cs.axis_x[1], cs.axis_y[3]]).unwrap();
        assert!((cs.mean[3][1] - m).abs() < 1e-12);

        let cfg6 = quick("levy6", Method::Random, NoiseMode::Det, 1);
        let r6 = run_experiment(&cfg6, 0).unwrap();
        assert!(export_case_study(&r6, 5).is_err());
    }
}
