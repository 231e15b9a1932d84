use std::io::Write;

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{forced_points, ln_tau_lgv, WeightMatrix};
use crate::numeric::{histogram_fd, ln_binom, ln_factorial, mean_se, sample_variance, Histogram};
use crate::rng::{splitmix64, Rng};
use crate::{Error, Result};

/// One Γ^{−1}(θ) draw: the reciprocal of a Gamma(θ, 1) draw.
pub fn inverse_gamma_sample(theta: f64, rng: &mut Rng) -> Result<f64> {
    let g = Gamma::new(theta, 1.0).map_err(|e| Error::Domain(format!("theta = {theta}: {e}")))?;
    Ok(1.0 / g.sample(rng))
}

/// E g = (θ−1)^{−1}, finite for θ > 1.
pub fn inverse_gamma_mean(theta: f64) -> Result<f64> {
    if !(theta > 1.0) {
        return Err(Error::Domain(format!("inverse-gamma mean needs theta > 1, got {theta}")));
    }
    Ok(1.0 / (theta - 1.0))
}

/// (E g, Var g) = ((θ−1)^{−1}, (θ−1)^{−2}(θ−2)^{−1}), both finite for θ > 2.
pub fn inverse_gamma_moments(theta: f64) -> Result<(f64, f64)> {
    let mean = inverse_gamma_mean(theta)?;
    if !(theta > 2.0) {
        return Err(Error::Domain(format!("inverse-gamma variance needs theta > 2, got {theta}")));
    }
    Ok((mean, mean * mean / (theta - 2.0)))
}

/// √N·Var g/(E g)² for g ~ Γ^{−1}(θ), which simplifies to √N/(θ−2).
pub fn variance_ratio(theta: f64, n_scale: u64) -> Result<f64> {
    let (m, v) = inverse_gamma_moments(theta)?;
    Ok((n_scale as f64).sqrt() * v / (m * m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRunConfig {
    pub beta: f64,
    pub d: usize,
    pub n_list: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TauScale {
    pub n_scale: u64,
    /// θ = √N/β.
    pub theta: f64,
    pub mean_weight: f64,
    /// √N·Var g/(E g)²; tends to β.
    pub variance_ratio: f64,
    /// ln of (E g)^{−d(2N+d)} / (2^{d(2N+d)} N^{−d²/2} ∏_{j<d} j!).
    pub ln_prefactor: f64,
    /// Exact E of the rescaled τ: |Ω^{(2N,0)}| / (2^{d(2N+d)} N^{−d²/2} ∏ j!).
    pub exact_mean: f64,
    pub mean: f64,
    pub std_error: f64,
    pub variance: f64,
    /// Mean over replicas of ∏_{forced} g/E g.
    pub forced_factor_mean: f64,
    pub histogram: Histogram,
    #[serde(skip)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TauRunReport {
    pub config: TauRunConfig,
    pub scales: Vec<TauScale>,
    /// Large-N value of `exact_mean` from MacMahon's product:
    /// 2^{−d(d+1)/2} π^{−d/2}.
    pub limit_mean: f64,
    /// (4π)^{−d/2}, the mean the normalization aims at; it agrees with
    /// `limit_mean` only for d = 1.
    pub target_mean: f64,
}

impl TauRunReport {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// CSV with columns N, replica, rescaled_tau.
    pub fn write_values_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "replica", "rescaled_tau"])?;
        for s in &self.scales {
            for (r, v) in s.values.iter().enumerate() {
                w.write_record(&[s.n_scale.to_string(), r.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

// ln of 2^{d(2N+d)} N^{−d²/2} ∏_{j<d} j!.
fn ln_normalizer(d: usize, n: u64) -> f64 {
    let (df, nf) = (d as f64, n as f64);
    df * (2.0 * nf + df) * 2f64.ln() - 0.5 * df * df * nf.ln() + (0..d as u64).map(ln_factorial).sum::<f64>()
}

// ln |Ω^{(2N,0)}| by MacMahon's product.
fn ln_macmahon(d: usize, n: u64) -> f64 {
    let n = n as i64;
    (0..d as i64)
        .map(|i| ln_binom(2 * n + 2 * i, n + i).unwrap_or(f64::NAN) - ln_binom(2 * n + 2 * i, i).unwrap_or(f64::NAN))
        .sum()
}

/// Rescaled τ^{(N)}_{N+d,d}(N+d) under iid Γ^{−1}(√N/β) weights, for each N.
pub fn rescaled_tau_run(cfg: &TauRunConfig) -> Result<TauRunReport> {
    if cfg.replicas < 2 || cfg.d == 0 {
        return Err(Error::Domain("need d >= 1 and at least two replicas".into()));
    }
    if !(cfg.beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive, got {}", cfg.beta)));
    }
    let d = cfg.d;
    let mut scales = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let theta = (n as f64).sqrt() / cfg.beta;
        let (mean_weight, _) = inverse_gamma_moments(theta)?;
        let vr = variance_ratio(theta, n)?;
        let sites = (d as u64 * (2 * n + d as u64)) as f64;
        let ln_prefactor = -sites * mean_weight.ln() - ln_normalizer(d, n);
        let size = n as usize + d;
        let forced = forced_points(d, n as usize);
        let pairs: Vec<(f64, f64)> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let seed = splitmix64(splitmix64(cfg.seed ^ splitmix64(n)) ^ r as u64);
                let w = WeightMatrix::random_inverse_gamma(size, size, theta, seed)?;
                let lt = ln_tau_lgv(&w, d, size, size)?;
                let ff: f64 = forced.iter().map(|&(i, j)| w.get(i, j) / mean_weight).product();
                Ok(((lt + ln_prefactor).exp(), ff))
            })
            .collect::<Result<_>>()?;
        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let (mean, std_error) = mean_se(&values);
        scales.push(TauScale {
            n_scale: n,
            theta,
            mean_weight,
            variance_ratio: vr,
            ln_prefactor,
            exact_mean: (ln_macmahon(d, n) - ln_normalizer(d, n)).exp(),
            mean,
            std_error,
            variance: sample_variance(&values),
            forced_factor_mean: pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64,
            histogram: histogram_fd(&values),
            values,
        });
    }
    Ok(TauRunReport {
        config: cfg.clone(),
        scales,
        limit_mean: limit_mean(d),
        target_mean: (4.0 * std::f64::consts::PI).powf(-0.5 * d as f64),
    })
}

// |Ω^{(2N,0)}| ~ 2^{2dN + d(d−1)/2} π^{−d/2} N^{−d²/2} ∏ j!, so the exact
// mean of the rescaled τ tends to 2^{−d(d+1)/2} π^{−d/2}.
fn limit_mean(d: usize) -> f64 {
    let df = d as f64;
    (-(df * (df + 1.0) / 2.0) * 2f64.ln() - 0.5 * df * std::f64::consts::PI.ln()).exp()
}
