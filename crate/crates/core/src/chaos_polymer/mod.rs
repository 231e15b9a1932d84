//! Multi-path polymer partition functions in a random environment, their
//! polynomial-chaos expansion, and the intermediate-disorder pipeline.

mod chaos;
mod partition;
mod scaling;

pub use chaos::{
    chaos_expansion_exact, chaos_expansion_rational, product_weight_average, product_weight_average_rational,
    ChaosTerms,
};
pub use partition::{energy, partition_exact, partition_mc, partition_transfer, PartitionEstimate};
pub use scaling::{
    intermediate_disorder_run, reflection_check, sigma_ratio, DisorderRunConfig, DisorderRunReport, InnerAverage, ReflectionCheck,
    ReplicaDraw, ScaleSummary,
};

use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{splitmix64, stream_rng, Rng};
use crate::{Error, Result};

/// Law of a single environment variable. Every variant has mean 0 and
/// variance 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisorderDistribution {
    Rademacher,
    Gaussian,
    /// Exp(1) − 1.
    ShiftedExponential,
    /// Finite support with the given probabilities.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl DisorderDistribution {
    pub fn validate(&self) -> Result<()> {
        if let Self::Discrete { values, probs } = self {
            if values.len() != probs.len() || values.is_empty() {
                return Err(Error::Domain("discrete law needs matching values and probabilities".into()));
            }
            if probs.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::Domain("negative probability in discrete law".into()));
            }
            let total: f64 = probs.iter().sum();
            let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
            let var: f64 = values.iter().zip(probs).map(|(v, p)| v * v * p).sum::<f64>() - mean * mean;
            if (total - 1.0).abs() > 1e-12 || mean.abs() > 1e-12 || (var - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "discrete law must have total 1, mean 0, variance 1 (got {total}, {mean}, {var})"
                )));
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Gaussian => rng.sample(StandardNormal),
            Self::ShiftedExponential => -(1.0 - rng.random::<f64>()).ln() - 1.0,
            Self::Discrete { values, probs } => {
                let mut u = rng.random::<f64>();
                for (v, p) in values.iter().zip(probs) {
                    if u < *p {
                        return *v;
                    }
                    u -= p;
                }
                *values.last().expect("validated nonempty")
            }
        }
    }

    /// Λ(β) = log E[exp(βω)].
    pub fn lambda(&self, beta: f64) -> Result<f64> {
        match self {
            Self::Rademacher => Ok((2.0 * (0.5 * beta).sinh().powi(2)).ln_1p()),
            Self::Gaussian => Ok(0.5 * beta * beta),
            Self::ShiftedExponential => {
                if beta >= 1.0 {
                    return Err(Error::Domain(format!("exponential moment infinite at beta = {beta}")));
                }
                Ok(shifted_exponential_mgf(beta).ln())
            }
            Self::Discrete { values, probs } => {
                let m = values.iter().map(|v| beta * v).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = values.iter().zip(probs).map(|(v, p)| p * (beta * v - m).exp()).sum();
                Ok(m + s.ln())
            }
        }
    }
}

/// E[exp(β(E−1))] for E ~ Exp(1) by adaptive Simpson quadrature on
/// [0, 60/(1−β)], beyond which the integrand is below e^{−60}.
fn shifted_exponential_mgf(beta: f64) -> f64 {
    let f = |x: f64| (beta * (x - 1.0) - x).exp();
    let hi = 60.0 / (1.0 - beta);
    adaptive_simpson(&f, 0.0, hi, 1e-13, 50)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, depth)
}

/// β ↦ Λ(β) for a given environment law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantSpec {
    pub distribution: DisorderDistribution,
}

impl CumulantSpec {
    pub fn lambda(&self, beta: f64) -> Result<f64> {
        self.distribution.lambda(beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum FieldSource {
    Random { distribution: DisorderDistribution, seed: u64 },
    Fixed(HashMap<(i64, i64), f64>),
}

/// Environment ω(n, x). Random fields derive each site's value from its own
/// stream keyed by (seed, n, x), so a value never depends on access order and
/// repeated reads agree without shared state.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderField {
    source: FieldSource,
    reflect_about: Option<i64>,
}

impl DisorderField {
    pub fn random(distribution: DisorderDistribution, seed: u64) -> Result<Self> {
        distribution.validate()?;
        Ok(Self { source: FieldSource::Random { distribution, seed }, reflect_about: None })
    }

    /// Hand-placed values; unlisted sites hold 0.
    pub fn fixed(values: HashMap<(i64, i64), f64>) -> Self {
        Self { source: FieldSource::Fixed(values), reflect_about: None }
    }

    pub fn zero() -> Self {
        Self::fixed(HashMap::new())
    }

    /// The field x ↦ ω(n, 2c − x).
    pub fn reflected(&self, center: i64) -> Self {
        Self { source: self.source.clone(), reflect_about: Some(center) }
    }

    pub fn value(&self, n: i64, x: i64) -> f64 {
        let x = match self.reflect_about {
            Some(c) => 2 * c - x,
            None => x,
        };
        match &self.source {
            FieldSource::Fixed(m) => m.get(&(n, x)).copied().unwrap_or(0.0),
            FieldSource::Random { distribution, seed } => {
                let mut r = stream_rng(splitmix64(seed ^ splitmix64(n as u64)), x as u64);
                distribution.sample(&mut r)
            }
        }
    }
}

/// ζ(ω) = (2/√N)(exp(β_N ω − Λ(β_N)) − 1) at scale N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZetaVariables {
    pub n_scale: u64,
    pub beta_n: f64,
    pub lambda: f64,
    pub lambda_double: f64,
}

impl ZetaVariables {
    pub fn new(n_scale: u64, beta: f64, law: &DisorderDistribution) -> Result<Self> {
        let beta_n = beta * (n_scale as f64).powf(-0.25);
        Ok(Self { n_scale, beta_n, lambda: law.lambda(beta_n)?, lambda_double: law.lambda(2.0 * beta_n)? })
    }

    pub fn weight(&self, omega: f64) -> f64 {
        (self.beta_n * omega - self.lambda).exp()
    }

    pub fn zeta(&self, omega: f64) -> f64 {
        2.0 / (self.n_scale as f64).sqrt() * (self.weight(omega) - 1.0)
    }

    /// Var ζ = (4/N)(exp(Λ(2β_N) − 2Λ(β_N)) − 1).
    pub fn variance(&self) -> f64 {
        4.0 / self.n_scale as f64 * (self.lambda_double - 2.0 * self.lambda).exp_m1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulants_match_closed_forms() {
        for b in [0.0, 0.1, 0.5, 0.9] {
            let q = DisorderDistribution::ShiftedExponential.lambda(b).unwrap();
            let exact = -b - (1.0 - b).ln();
            assert!((q - exact).abs() < 1e-12, "{b}: {q} vs {exact}");
        }
        assert!((DisorderDistribution::Rademacher.lambda(1.0).unwrap() - 1f64.cosh().ln()).abs() < 1e-15);
        let rad = DisorderDistribution::Discrete { values: vec![-1.0, 1.0], probs: vec![0.5, 0.5] };
        assert!((rad.lambda(0.7).unwrap() - 0.7f64.cosh().ln()).abs() < 1e-15);
        assert!(DisorderDistribution::ShiftedExponential.lambda(1.0).is_err());
    }

    #[test]
    fn lambda_is_quadratic_near_zero() {
        for law in [DisorderDistribution::Rademacher, DisorderDistribution::Gaussian, DisorderDistribution::ShiftedExponential] {
            let b = 1e-3;
            let l = law.lambda(b).unwrap();
            assert!((l / (b * b) - 0.5).abs() < 1e-3, "{law:?}");
            assert!(law.lambda(0.0).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_law_is_validated() {
        let bad = DisorderDistribution::Discrete { values: vec![0.0, 1.0], probs: vec![0.5, 0.5] };
        assert!(DisorderField::random(bad, 1).is_err());
    }

    #[test]
    fn field_reads_are_stable_and_independent_of_order() {
        let f = DisorderField::random(DisorderDistribution::Gaussian, 9).unwrap();
        let a = f.value(3, -1);
        let _ = f.value(5, 7);
        assert_eq!(a, f.value(3, -1));
        assert_ne!(a, f.value(3, 1));
        assert_eq!(f.reflected(1).value(3, 3), a);
    }

    #[test]
    fn zeta_has_mean_zero() {
        let zv = ZetaVariables::new(256, 1.0, &DisorderDistribution::Rademacher).unwrap();
        let m = 0.5 * (zv.zeta(1.0) + zv.zeta(-1.0));
        assert!(m.abs() < 1e-14, "{m}");
        let var = 0.5 * (zv.zeta(1.0).powi(2) + zv.zeta(-1.0).powi(2));
        assert!((var - zv.variance()).abs() < 1e-14);
    }

    #[test]
    fn samplers_have_unit_variance() {
        let mut r = stream_rng(4, 0);
        for law in [DisorderDistribution::Rademacher, DisorderDistribution::Gaussian, DisorderDistribution::ShiftedExponential] {
            let xs: Vec<f64> = (0..200_000).map(|_| law.sample(&mut r)).collect();
            let (m, se) = crate::numeric::mean_se(&xs);
            assert!(m.abs() < 4.0 * se, "{law:?} mean {m}");
            let v = crate::numeric::sample_variance(&xs);
            assert!((v - 1.0).abs() < 0.03, "{law:?} var {v}");
        }
    }
}
