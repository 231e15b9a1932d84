//! Non-intersecting simple random walks and bridges on the parity lattice:
//! exact laws, sequential samplers and enumeration oracles.

mod enumerate;
mod io;
mod laws;
mod sample;

pub use enumerate::{enumerate_bridges, visit_bridges, Budget, BridgeCounter};
pub use io::{read_sample_csv, write_sample_csv, write_sample_json, SampleEnvelope};
pub use laws::{
    bridge_transition, bridge_transition_exact, conditional_drift, conditional_drift_exact,
    drift_bound, free_step_law, km_log_det, km_weight, km_weight_exact, macmahon_count,
    radon_nikodym, radon_nikodym_exact, radon_nikodym_ratio_exact, vandermonde,
};
pub use sample::{sample_bridge, sample_free_walk, BridgeSampler, FreeWalk};

use serde::{Deserialize, Serialize};

use crate::rng::SeedRecord;
use crate::{Error, Result};

/// Strictly increasing configuration of d walkers with pairwise even gaps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeylConfig(Vec<i64>);

impl WeylConfig {
    pub fn new(positions: Vec<i64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Domain("configuration needs at least one walker".into()));
        }
        for w in positions.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Domain(format!("positions not strictly increasing: {positions:?}")));
            }
            if (w[1] - w[0]) % 2 != 0 {
                return Err(Error::Parity(format!("odd gap in {positions:?}")));
            }
        }
        Ok(Self(positions))
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_vec_unchecked(positions: Vec<i64>) -> Self {
        Self(positions)
    }

    pub fn positions(&self) -> &[i64] {
        &self.0
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, x: i64) -> bool {
        self.0.binary_search(&x).is_ok()
    }

    pub fn is_valid(positions: &[i64]) -> bool {
        positions.windows(2).all(|w| w[1] > w[0] && (w[1] - w[0]) % 2 == 0)
    }
}

/// δ_d(base) = (base, base+2, …, base+2(d−1)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaConfig {
    pub base: i64,
}

impl DeltaConfig {
    pub fn expand(self, d: usize) -> WeylConfig {
        WeylConfig((0..d as i64).map(|i| self.base + 2 * i).collect())
    }
}

pub fn delta(d: usize, base: i64) -> WeylConfig {
    DeltaConfig { base }.expand(d)
}

/// Endpoint data of a bridge ensemble: d walkers from δ_d(0) to δ_d(x*)
/// in n* steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub d: usize,
    pub n_star: i64,
    pub x_star: i64,
}

impl BridgeSpec {
    pub fn new(d: usize, n_star: i64, x_star: i64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("d must be positive".into()));
        }
        if n_star <= 0 {
            return Err(Error::Domain(format!("n* must be positive, got {n_star}")));
        }
        if (n_star + x_star).rem_euclid(2) != 0 {
            return Err(Error::Parity(format!("n* + x* must be even, got {n_star} + {x_star}")));
        }
        Ok(Self { d, n_star, x_star })
    }

    pub fn start(&self) -> WeylConfig {
        delta(self.d, 0)
    }

    pub fn end(&self) -> WeylConfig {
        delta(self.d, self.x_star)
    }

    /// True when at least one trajectory exists.
    pub fn is_nonempty(&self) -> bool {
        self.x_star.abs() <= self.n_star
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.is_nonempty() {
            Ok(())
        } else {
            Err(Error::EmptyBridge { d: self.d, n_star: self.n_star, x_star: self.x_star })
        }
    }
}

/// One realized trajectory: row n holds the d positions at step n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsembleSample {
    pub spec: BridgeSpec,
    trajectory: Vec<i64>,
    pub seed_record: Option<SeedRecord>,
}

impl PathEnsembleSample {
    pub fn from_rows(spec: BridgeSpec, rows: &[Vec<i64>], seed_record: Option<SeedRecord>) -> Result<Self> {
        if rows.len() as i64 != spec.n_star + 1 || rows.iter().any(|r| r.len() != spec.d) {
            return Err(Error::Domain("trajectory shape does not match spec".into()));
        }
        let s = Self { spec, trajectory: rows.concat(), seed_record };
        s.validate()?;
        Ok(s)
    }

    pub(crate) fn from_flat(spec: BridgeSpec, trajectory: Vec<i64>, seed_record: Option<SeedRecord>) -> Self {
        Self { spec, trajectory, seed_record }
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn steps(&self) -> i64 {
        self.spec.n_star
    }

    pub fn row(&self, n: usize) -> &[i64] {
        &self.trajectory[n * self.spec.d..(n + 1) * self.spec.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i64]> {
        self.trajectory.chunks(self.spec.d)
    }

    pub fn walker(&self, k: usize) -> impl Iterator<Item = i64> + '_ {
        self.rows().map(move |r| r[k])
    }

    /// Checks endpoints, ±1 increments and ordering of every row.
    pub fn validate(&self) -> Result<()> {
        let d = self.spec.d;
        if self.row(0) != self.spec.start().positions() {
            return Err(Error::Domain("trajectory does not start at δ(0)".into()));
        }
        if self.row(self.spec.n_star as usize) != self.spec.end().positions() {
            return Err(Error::Domain("trajectory does not end at δ(x*)".into()));
        }
        for n in 0..self.spec.n_star as usize {
            let (a, b) = (self.row(n), self.row(n + 1));
            if (0..d).any(|k| (a[k] - b[k]).abs() != 1) {
                return Err(Error::Domain(format!("non-unit step at time {n}")));
            }
            if !WeylConfig::is_valid(b) {
                return Err(Error::Domain(format!("walkers collide at time {}", n + 1)));
            }
        }
        Ok(())
    }
}
