//! Determinantal correlation kernels: the Hermite kernel of non-intersecting
//! Brownian bridges, the Hahn kernel of non-intersecting walk bridges, their
//! k-point functions and the N → ∞ convergence study.

mod continuum;
mod discrete;
mod l2;

mod study;

pub use continuum::{brownian_bridge_density, heat_density, ContinuumKernel};
pub use discrete::{lattice_psi, rescaled_psi_k, DiscreteKernel, LatticePoint};
pub use l2::{psi1_l2_quadrature, psi_l2_norm, psi_l2_series, L2Estimate, L2Series};
pub use study::{d1_grid, kernel_convergence_study, ConvergenceReport, ConvergenceRow, SupError};

use serde::{Deserialize, Serialize};

use crate::walk_ensembles::BridgeSpec;
use crate::{Error, Result};

/// Terminal data (t*, z*) of the continuum bridges; all start at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumEndpoint {
    pub t_star: f64,
    pub z_star: f64,
}

impl ContinuumEndpoint {
    pub fn new(t_star: f64, z_star: f64) -> Result<Self> {
        if !(t_star > 0.0) || !z_star.is_finite() {
            return Err(Error::Domain(format!("bad endpoint t*={t_star}, z*={z_star}")));
        }
        Ok(Self { t_star, z_star })
    }

    /// Drift z*/t* of the straight line joining the endpoints.
    pub fn slope(&self) -> f64 {
        self.z_star / self.t_star
    }

    pub fn check_interior(&self, p: SpaceTimePoint) -> Result<()> {
        if !(p.t > 0.0 && p.t < self.t_star) || !p.z.is_finite() {
            return Err(Error::Domain(format!("point ({}, {}) not inside (0, {})", p.t, p.z, self.t_star)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub z: f64,
}

impl SpaceTimePoint {
    pub fn new(t: f64, z: f64) -> Self {
        Self { t, z }
    }
}

/// The k points at which a correlation function is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationQuery {
    pub points: Vec<SpaceTimePoint>,
}

impl CorrelationQuery {
    pub fn new(points: Vec<SpaceTimePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("query needs at least one point".into()));
        }
        Ok(Self { points })
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn has_duplicates(&self) -> bool {
        let p = &self.points;
        (0..p.len()).any(|i| (i + 1..p.len()).any(|j| p[i] == p[j]))
    }
}

/// Rounding of continuum coordinates to the parity lattice at scale N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeRounding {
    pub n_scale: u64,
    pub t_star: f64,
    pub z_star: f64,
    pub n_star: i64,
    pub x_star: i64,
}

// Absorbs representation error when t·N or z·√N is an exact lattice value.
const ROUND_SLACK: f64 = 1e-9;

/// (a, b)₂: time ⌊a⌋ and the largest x ≤ b with x + ⌊a⌋ even.
pub fn round_pair(a: f64, b: f64) -> (i64, i64) {
    let n = (a + ROUND_SLACK).floor() as i64;
    let mut x = (b + ROUND_SLACK).floor() as i64;
    if (x + n).rem_euclid(2) != 0 {
        x -= 1;
    }
    (n, x)
}

impl LatticeRounding {
    pub fn new(n_scale: u64, end: ContinuumEndpoint) -> Result<Self> {
        if n_scale == 0 {
            return Err(Error::Domain("scale N must be positive".into()));
        }
        let s = (n_scale as f64).sqrt();
        let (n_star, x_star) = round_pair(n_scale as f64 * end.t_star, s * end.z_star);
        if n_star <= 0 {
            return Err(Error::Domain(format!("N·t* rounds to {n_star}")));
        }
        Ok(Self { n_scale, t_star: end.t_star, z_star: end.z_star, n_star, x_star })
    }

    pub fn spec(&self, d: usize) -> Result<BridgeSpec> {
        BridgeSpec::new(d, self.n_star, self.x_star)
    }

    pub fn round(&self, p: SpaceTimePoint) -> (i64, i64) {
        let nf = self.n_scale as f64;
        round_pair(nf * p.t, nf.sqrt() * p.z)
    }

    /// Lebesgue measure 2/(N√N) of one tessellation cell.
    pub fn cell_volume(&self) -> f64 {
        let nf = self.n_scale as f64;
        2.0 / (nf * nf.sqrt())
    }

    /// Factor √N/2 converting a lattice occupation probability to a density.
    pub fn density_factor(&self) -> f64 {
        (self.n_scale as f64).sqrt() / 2.0
    }
}

/// α_t = sqrt(t*/(2t(t*−t))).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaFactor {
    pub t: f64,
    pub value: f64,
}

impl AlphaFactor {
    pub fn new(end: &ContinuumEndpoint, t: f64) -> Result<Self> {
        end.check_interior(SpaceTimePoint::new(t, 0.0))?;
        Ok(Self { t, value: (end.t_star / (2.0 * t * (end.t_star - t))).sqrt() })
    }
}
