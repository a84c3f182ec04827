use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::BoxDomain;

/// Points closer than this (max-norm, domain units) are the same point.
pub const DEDUP_TOL: f64 = 1e-9;

/// One comparison: the point at `winner` was preferred to the point at `loser`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Duel {
    pub winner: usize,
    pub loser: usize,
}

/// Distinct input points plus the duels observed among them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct PrefDataset {
    domain: BoxDomain,
    points: Vec<Vec<f64>>,
    duels: Vec<Duel>,
}

#[derive(Deserialize)]
struct RawDataset {
    domain: BoxDomain,
    points: Vec<Vec<f64>>,
    duels: Vec<Duel>,
}

impl TryFrom<RawDataset> for PrefDataset {
    type Error = Error;
    fn try_from(raw: RawDataset) -> Result<Self> {
        let mut ds = PrefDataset::new(raw.domain);
        for p in &raw.points {
            let before = ds.points.len();
            if ds.add_point(p)? != before {
                return Err(Error::invalid("dataset contains duplicate points"));
            }
        }
        for d in raw.duels {
            ds.push_duel(d)?;
        }
        Ok(ds)
    }
}

impl PrefDataset {
    pub fn new(domain: BoxDomain) -> Self {
        Self {
            domain,
            points: Vec::new(),
            duels: Vec::new(),
        }
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn duels(&self) -> &[Duel] {
        &self.duels
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_duels(&self) -> usize {
        self.duels.len()
    }

    pub fn find_point(&self, x: &[f64]) -> Option<usize> {
        self.points
            .iter()
            .position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= DEDUP_TOL))
    }

    /// Index of `x`, inserting it unless an equal point is already present.
    pub fn add_point(&mut self, x: &[f64]) -> Result<usize> {
        self.domain.check_point(x)?;
        if let Some(i) = self.find_point(x) {
            return Ok(i);
        }
        self.points.push(x.to_vec());
        Ok(self.points.len() - 1)
    }

    pub fn push_duel(&mut self, duel: Duel) -> Result<()> {
        let n = self.points.len();
        if duel.winner >= n || duel.loser >= n {
            return Err(Error::invalid(format!(
                "duel {duel:?} indexes past {n} points"
            )));
        }
        if duel.winner == duel.loser {
            return Err(Error::invalid("a point cannot duel itself"));
        }
        self.duels.push(duel);
        Ok(())
    }

    /// Records `winner ≻ loser`.
    ///
    /// Comparing a point with itself carries no information; such a duel is
    /// skipped and `None` returned.
    pub fn add_comparison(&mut self, winner: &[f64], loser: &[f64]) -> Result<Option<Duel>> {
        let w = self.add_point(winner)?;
        let l = self.add_point(loser)?;
        if w == l {
            return Ok(None);
        }
        let duel = Duel {
            winner: w,
            loser: l,
        };
        self.duels.push(duel);
        Ok(Some(duel))
    }

    pub fn unit_points(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| self.domain.to_unit(p)).collect()
    }
}
