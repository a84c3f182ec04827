//! Session state as a fold over an append-only event log.
//!
//! Everything here is synchronous and deterministic: replaying the same
//! events always yields the same [`SessionState`], byte for byte once
//! serialized.

use prefkg::acquisition::{argmax_posterior_mean, next_duel, AcquisitionConfig, DuelQuery, Method};
use prefkg::laplace::{fit_hypers, fit_map, HyperFitOptions, LaplacePosterior};
use prefkg::stats::sobol_sample;
use prefkg::{
    BoxDomain, Error, HyperPriors, KernelHypers, MultiStartOptions, PrefDataset, RandomSource,
    Result,
};
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 10;
/// Heat grids are only produced up to this dimension.
pub const MAX_GRID_DIM: usize = 2;

// Random streams derived from the session seed.
const STREAM_COLD_START: u64 = 0;
const STREAM_ACQUIRE: u64 = 1 << 32;
const STREAM_HYPERS: u64 = 2 << 32;
const STREAM_ESTIMATE: u64 = 3 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub acquisition: AcquisitionConfig,
    pub hyper_fit: HyperFitOptions,
    pub priors: HyperPriors,
    pub argmax: MultiStartOptions,
    /// Hyperparameters are refit whenever the duel count is a multiple of this.
    pub refit_every: usize,
    /// Sobol duels served before the acquisition function takes over.
    pub cold_start_duels: usize,
    /// Nodes per axis of the posterior-mean grid.
    pub grid_resolution: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            acquisition: AcquisitionConfig::default(),
            hyper_fit: HyperFitOptions::default(),
            priors: HyperPriors::default(),
            argmax: MultiStartOptions::default(),
            refit_every: 5,
            cold_start_duels: 2,
            grid_resolution: 25,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.refit_every == 0 {
            return Err(Error::InvalidArgument(
                "refit_every must be at least 1".into(),
            ));
        }
        if self.grid_resolution < 2 {
            return Err(Error::InvalidArgument(
                "grid_resolution must be at least 2".into(),
            ));
        }
        if self.acquisition.optimizer.raw_samples == 0 || self.argmax.raw_samples == 0 {
            return Err(Error::InvalidArgument(
                "optimizer raw_samples must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ready,
    AwaitingFeedback,
    Fitting,
}

/// Which side of the pending duel the user chose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Winner {
    First,
    Second,
}

impl TryFrom<u8> for Winner {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Winner::First),
            2 => Ok(Winner::Second),
            _ => Err(format!("winner must be 1 or 2, got {v}")),
        }
    }
}

impl From<Winner> for u8 {
    fn from(w: Winner) -> u8 {
        match w {
            Winner::First => 1,
            Winner::Second => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// One coordinate vector per dimension.
    pub axes: Vec<Vec<f64>>,
    /// `values[j][i]` is the mean at `(axes[0][i], axes[1][j])`; a single
    /// row in 1D.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub x_hat: Vec<f64>,
    pub mean_at_x_hat: f64,
    /// No feedback yet: the posterior is the flat zero-mean prior and
    /// `x_hat` is just the domain centre.
    pub flat_prior: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub index: usize,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub winner: Winner,
    pub x_hat: Vec<f64>,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        domain: BoxDomain,
        labels: Option<Vec<String>>,
        method: Method,
        config: SessionConfig,
        seed: u64,
        at_ms: u64,
    },
    Next {
        query: DuelQuery,
        at_ms: u64,
    },
    Feedback {
        winner: Winner,
        at_ms: u64,
    },
}

/// The persistent part of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub domain: BoxDomain,
    pub labels: Option<Vec<String>>,
    pub method: Method,
    pub config: SessionConfig,
    pub seed: u64,
    pub status: Status,
    pub pending: Option<DuelQuery>,
    pub dataset: PrefDataset,
    pub hypers: KernelHypers,
    pub estimate: Estimate,
    pub history: Vec<HistoryEntry>,
    pub created_ms: u64,
    pub updated_ms: u64,
}

/// A session with its cached posterior.
#[derive(Debug, Clone)]
pub struct Session {
    state: SessionState,
    posterior: LaplacePosterior,
}

pub fn check_create(
    domain: &BoxDomain,
    labels: Option<&[String]>,
    config: &SessionConfig,
) -> Result<()> {
    if domain.dim() > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_DIM} dimensions are supported, got {}",
            domain.dim()
        )));
    }
    if let Some(l) = labels {
        if l.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: l.len(),
            });
        }
    }
    config.validate()
}

impl Session {
    /// Builds a session from its creation event.
    pub fn create(event: &Event) -> Result<Self> {
        let Event::Created {
            id,
            domain,
            labels,
            method,
            config,
            seed,
            at_ms,
        } = event
        else {
            return Err(Error::InvalidArgument(
                "session log must start with a created event".into(),
            ));
        };
        check_create(domain, labels.as_deref(), config)?;
        let hypers = config.priors.median(domain.dim());
        let dataset = PrefDataset::new(domain.clone());
        let posterior = fit_map(&dataset, &hypers)?;
        let center: Vec<f64> = (0..domain.dim())
            .map(|k| domain.lower()[k] + 0.5 * domain.width(k))
            .collect();
        let estimate = Estimate {
            x_hat: center,
            mean_at_x_hat: 0.0,
            flat_prior: true,
            grid: grid(&posterior, config.grid_resolution),
        };
        Ok(Self {
            state: SessionState {
                id: id.clone(),
                domain: domain.clone(),
                labels: labels.clone(),
                method: *method,
                config: config.clone(),
                seed: *seed,
                status: Status::Ready,
                pending: None,
                dataset,
                hypers,
                estimate,
                history: Vec::new(),
                created_ms: *at_ms,
                updated_ms: *at_ms,
            },
            posterior,
        })
    }

    /// Replays a full event log.
    pub fn replay(events: &[Event]) -> Result<Self> {
        let (first, rest) = events
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty session log".into()))?;
        let mut s = Session::create(first)?;
        for e in rest {
            s.apply(e)?;
        }
        Ok(s)
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn posterior(&self) -> &LaplacePosterior {
        &self.posterior
    }

    pub fn n_duels(&self) -> usize {
        self.state.dataset.n_duels()
    }

    pub fn in_cold_start(&self) -> bool {
        self.n_duels() < self.state.config.cold_start_duels
    }

    /// The random stream used to choose the duel following `n_duels` duels.
    pub fn acquisition_rng(&self) -> RandomSource {
        RandomSource::derive(self.state.seed, STREAM_ACQUIRE + self.n_duels() as u64)
    }

    /// Computes (without recording) the next duel to show.
    pub fn propose(&self) -> Result<DuelQuery> {
        if let Some(q) = &self.state.pending {
            return Ok(q.clone());
        }
        let n = self.n_duels();
        if self.in_cold_start() {
            let dom = &self.state.domain;
            let d = dom.dim();
            let product = dom.product(dom);
            let mut rng = RandomSource::derive(self.state.seed, STREAM_COLD_START);
            let pts = sobol_sample(self.state.config.cold_start_duels, &product, &mut rng)?;
            let z = &pts[n];
            return Ok(DuelQuery::new(z[..d].to_vec(), z[d..].to_vec()));
        }
        next_duel(
            &self.posterior,
            self.state.method,
            &self.state.config.acquisition,
            &mut self.acquisition_rng(),
        )
    }

    pub fn apply(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::Created { .. } => Err(Error::InvalidArgument("session already created".into())),
            Event::Next { query, at_ms } => {
                if self.state.pending.is_some() {
                    return Err(Error::InvalidArgument("a duel is already pending".into()));
                }
                self.state.domain.check_point(&query.x1)?;
                self.state.domain.check_point(&query.x2)?;
                self.state.pending = Some(query.clone());
                self.state.status = Status::AwaitingFeedback;
                self.state.updated_ms = *at_ms;
                Ok(())
            }
            Event::Feedback { winner, at_ms } => self.feedback(*winner, *at_ms),
        }
    }

    fn feedback(&mut self, winner: Winner, at_ms: u64) -> Result<()> {
        let q = self
            .state
            .pending
            .clone()
            .ok_or_else(|| Error::InvalidArgument("no duel is pending".into()))?;
        let mut dataset = self.state.dataset.clone();
        match winner {
            Winner::First => dataset.add_comparison(&q.x1, &q.x2)?,
            Winner::Second => dataset.add_comparison(&q.x2, &q.x1)?,
        };
        let n = dataset.n_duels();
        let cfg = &self.state.config;
        let mut hypers = self.state.hypers.clone();
        if n % cfg.refit_every == 0 {
            let mut rng = RandomSource::derive(self.state.seed, STREAM_HYPERS + n as u64);
            hypers = fit_hypers(&dataset, &cfg.priors, &hypers, &cfg.hyper_fit, &mut rng)?.hypers;
        }
        let posterior = fit_map(&dataset, &hypers)?;
        let mut rng = RandomSource::derive(self.state.seed, STREAM_ESTIMATE + n as u64);
        let (x_hat, mean) = argmax_posterior_mean(&posterior, &cfg.argmax, &mut rng)?;
        let estimate = Estimate {
            x_hat: x_hat.clone(),
            mean_at_x_hat: mean,
            flat_prior: false,
            grid: grid(&posterior, cfg.grid_resolution),
        };

        self.state.history.push(HistoryEntry {
            index: n - 1,
            x1: q.x1,
            x2: q.x2,
            winner,
            x_hat,
            at_ms,
        });
        self.state.dataset = dataset;
        self.state.hypers = hypers;
        self.state.estimate = estimate;
        self.state.pending = None;
        self.state.status = Status::Ready;
        self.state.updated_ms = at_ms;
        self.posterior = posterior;
        Ok(())
    }
}

fn grid(post: &LaplacePosterior, resolution: usize) -> Option<Grid> {
    let dom = post.dataset().domain();
    let d = dom.dim();
    if d > MAX_GRID_DIM {
        return None;
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            (0..resolution)
                .map(|i| dom.lower()[k] + dom.width(k) * i as f64 / (resolution - 1) as f64)
                .collect()
        })
        .collect();
    let values = match d {
        1 => vec![axes[0]
            .iter()
            .map(|x| post.mean_unit(&dom.to_unit(&[*x])))
            .collect()],
        _ => axes[1]
            .iter()
            .map(|y| {
                axes[0]
                    .iter()
                    .map(|x| post.mean_unit(&dom.to_unit(&[*x, *y])))
                    .collect()
            })
            .collect(),
    };
    Some(Grid { axes, values })
}
