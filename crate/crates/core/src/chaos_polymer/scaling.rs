use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partition::{energy_flat, partition_transfer};
use super::{DisorderDistribution, DisorderField, ZetaVariables};
use crate::kernels::{psi_l2_series, ContinuumEndpoint, L2Series, LatticeRounding};
use crate::numeric::{histogram_fd, ks_two_sample, mean_se, Histogram};
use crate::rng::{splitmix64, SeedRecord};
use crate::walk_ensembles::{BridgeSampler, BridgeSpec};
use crate::{Error, Result};

/// (σ^{(N)})²/v^{(N)} = 2√N·(exp(Λ(2β_N) − 2Λ(β_N)) − 1) with β_N = βN^{−1/4}.
pub fn sigma_ratio(law: &DisorderDistribution, beta: f64, n_scale: u64) -> Result<f64> {
    let z = ZetaVariables::new(n_scale, beta, law)?;
    Ok(2.0 * (n_scale as f64).sqrt() * (z.lambda_double - 2.0 * z.lambda).exp_m1())
}

/// How the path average is taken inside one environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerAverage {
    /// Exact transfer recursion (d ≤ 2) inside a window of `window_sd`
    /// bridge standard deviations.
    Transfer { window_sd: f64 },
    /// Path Monte Carlo, split into two independent halves of `paths / 2`.
    MonteCarlo { paths: usize },
}

impl Default for InnerAverage {
    fn default() -> Self {
        Self::Transfer { window_sd: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRunConfig {
    pub end: ContinuumEndpoint,
    pub d: usize,
    pub beta: f64,
    pub n_list: Vec<u64>,
    /// Independent environments per N.
    pub replicas: usize,
    pub inner: InnerAverage,
    pub distribution: DisorderDistribution,
    pub seed: u64,
    /// Monte Carlo samples per ‖ψ_k‖² for the variance prediction; 0 skips it.
    #[serde(default)]
    pub chaos_samples: usize,
}

impl DisorderRunConfig {
    fn check(&self) -> Result<()> {
        self.distribution.validate()?;
        if self.replicas < 2 {
            return Err(Error::Domain("need at least two replicas".into()));
        }
        match self.inner {
            InnerAverage::MonteCarlo { paths } if paths < 2 || paths % 2 != 0 => {
                return Err(Error::Domain("Monte Carlo inner average needs an even path count >= 2".into()));
            }
            InnerAverage::Transfer { window_sd } if self.d > 2 || !(window_sd > 0.0) => {
                return Err(Error::Domain("transfer inner average needs d <= 2 and a positive window".into()));
            }
            _ => {}
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("N list must be nonempty and strictly ascending".into()));
        }
        Ok(())
    }
}

/// One environment draw at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicaDraw {
    pub replica: usize,
    /// Centered by exp(−d(n*−1)Λ(β_N)); mean exactly 1.
    pub z_interior: f64,
    /// Centered by exp(−d·N t*·Λ(β_N)).
    pub z_line: f64,
    pub half_a: f64,
    pub half_b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleSummary {
    pub n_scale: u64,
    pub n_star: i64,
    pub x_star: i64,
    pub beta_n: f64,
    pub lambda: f64,
    pub sigma_ratio: f64,
    pub mean: f64,
    pub std_error: f64,
    /// (mean − 1)/SE for the interior centering.
    pub z_score: f64,
    pub mean_line: f64,
    pub std_error_line: f64,
    /// Spread of the estimates, path noise included.
    pub variance: f64,
    /// Var over ω of the quenched Z. Equals `variance` for the transfer
    /// average; for Monte Carlo it is the covariance of the two independent
    /// half-averages, in which path noise cancels.
    pub disorder_variance: f64,
    pub disorder_variance_se: f64,
    pub histogram: Histogram,
    #[serde(skip)]
    pub draws: Vec<ReplicaDraw>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DisorderRunReport {
    pub config: DisorderRunConfig,
    pub scales: Vec<ScaleSummary>,
    /// Σ_{1≤k≤3} (2β²)^k/k!·‖ψ_k‖², the truncated chaos prediction for
    /// Var Z in the limit.
    pub chaos_prediction: Option<L2Series>,
    pub notes: Vec<String>,
}

impl DisorderRunReport {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// CSV with columns N, replica, z_interior, z_line, half_a, half_b.
    pub fn write_draws_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "replica", "z_interior", "z_line", "half_a", "half_b"])?;
        for s in &self.scales {
            for d in &s.draws {
                w.write_record(&[
                    s.n_scale.to_string(),
                    d.replica.to_string(),
                    d.z_interior.to_string(),
                    d.z_line.to_string(),
                    d.half_a.to_string(),
                    d.half_b.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct Scale {
    spec: BridgeSpec,
    sampler: Option<BridgeSampler>,
    zeta: ZetaVariables,
    n_star: i64,
    x_star: i64,
    line_shift: f64,
}

fn prepare(cfg: &DisorderRunConfig, n_scale: u64) -> Result<Scale> {
    let r = LatticeRounding::new(n_scale, cfg.end)?;
    let spec = r.spec(cfg.d)?;
    let zeta = ZetaVariables::new(n_scale, cfg.beta, &cfg.distribution)?;
    let d = cfg.d as f64;
    // exp(−d(n*−1)Λ) → exp(−d·N t*·Λ).
    let line_shift = (-(d * n_scale as f64 * cfg.end.t_star) + d * (spec.n_star - 1) as f64) * zeta.lambda;
    let sampler = match cfg.inner {
        InnerAverage::MonteCarlo { .. } => Some(BridgeSampler::new(&spec)?),
        InnerAverage::Transfer { .. } => None,
    };
    Ok(Scale { spec, sampler, zeta, n_star: spec.n_star, x_star: spec.x_star, line_shift })
}

// Path average of exp(β_N H − d(n*−1)Λ). Monte Carlo returns two
// independent half-averages; the transfer recursion returns its exact value twice.
fn quenched_halves(cfg: &DisorderRunConfig, sc: &Scale, field: &DisorderField, record: SeedRecord) -> Result<(f64, f64)> {
    match (cfg.inner, &sc.sampler) {
        (InnerAverage::MonteCarlo { paths }, Some(sampler)) => {
            let mut rng = record.rng();
            let half = paths / 2;
            let shift = cfg.d as f64 * (sc.n_star - 1) as f64 * sc.zeta.lambda;
            let mut sums = [0.0; 2];
            for i in 0..paths {
                let t = sampler.sample_flat(&mut rng);
                sums[i / half] += (sc.zeta.beta_n * energy_flat(&t, cfg.d, field) - shift).exp();
            }
            Ok((sums[0] / half as f64, sums[1] / half as f64))
        }
        (InnerAverage::Transfer { window_sd }, _) => {
            let z = partition_transfer(&sc.spec, field, sc.zeta.beta_n, sc.zeta.lambda, Some(window_sd))?;
            Ok((z, z))
        }
        _ => unreachable!("sampler is built for Monte Carlo runs"),
    }
}

fn replica_record(seed: u64, n_scale: u64, r: usize) -> (u64, SeedRecord) {
    let rec = SeedRecord::new(seed, n_scale).child(r as u64);
    (splitmix64(rec.seed ^ splitmix64(r as u64)), rec)
}

/// Outer loop over environments, inner path average per environment, for
/// each N. Replicas run in parallel on disjoint streams.
pub fn intermediate_disorder_run(cfg: &DisorderRunConfig) -> Result<DisorderRunReport> {
    cfg.check()?;
    let mut scales = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let sc = prepare(cfg, n)?;
        let draws: Vec<ReplicaDraw> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let (field_seed, rec) = replica_record(cfg.seed, n, r);
                let field = DisorderField::random(cfg.distribution.clone(), field_seed)?;
                let (a, b) = quenched_halves(cfg, &sc, &field, rec)?;
                let z = 0.5 * (a + b);
                Ok(ReplicaDraw { replica: r, z_interior: z, z_line: z * sc.line_shift.exp(), half_a: a, half_b: b })
            })
            .collect::<Result<_>>()?;
        let zi: Vec<f64> = draws.iter().map(|d| d.z_interior).collect();
        let zl: Vec<f64> = draws.iter().map(|d| d.z_line).collect();
        let (mean, std_error) = mean_se(&zi);
        let (mean_line, std_error_line) = mean_se(&zl);
        let ma = draws.iter().map(|d| d.half_a).sum::<f64>() / draws.len() as f64;
        let mb = draws.iter().map(|d| d.half_b).sum::<f64>() / draws.len() as f64;
        let products: Vec<f64> = draws.iter().map(|d| (d.half_a - ma) * (d.half_b - mb)).collect();
        let (pm, pse) = mean_se(&products);
        let rf = draws.len() as f64 / (draws.len() - 1) as f64;
        scales.push(ScaleSummary {
            n_scale: n,
            n_star: sc.n_star,
            x_star: sc.x_star,
            beta_n: sc.zeta.beta_n,
            lambda: sc.zeta.lambda,
            sigma_ratio: sigma_ratio(&cfg.distribution, cfg.beta, n)?,
            mean,
            std_error,
            z_score: (mean - 1.0) / std_error,
            mean_line,
            std_error_line,
            variance: crate::numeric::sample_variance(&zi),
            disorder_variance: pm * rf,
            disorder_variance_se: pse * rf,
            histogram: histogram_fd(&zi),
            draws,
        });
    }
    let chaos_prediction = if cfg.chaos_samples > 0 {
        let mut s = psi_l2_series(cfg.end, cfg.d, 2.0 * cfg.beta * cfg.beta, 3, cfg.chaos_samples, splitmix64(cfg.seed))?;
        s.value -= 1.0;
        Some(s)
    } else {
        None
    };
    Ok(DisorderRunReport {
        config: cfg.clone(),
        scales,
        chaos_prediction,
        notes: vec![
            "mean/std_error use the interior centering exp(-d(n*-1)Lambda), whose expectation is exactly 1".into(),
            "mean_line uses exp(-d N t* Lambda); it is the interior value times exp(-d Lambda(beta_N)) = 1 - O(N^-1/2)".into(),
        ],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReflectionCheck {
    pub n_scale: u64,
    pub replicas: usize,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub passed: bool,
}

/// Two-sample KS test between centered Z under independent environments and
/// under independent mirrored environments x ↦ 2(d−1) − x, which reflects
/// the ensemble about its axis. Requires x* = 0 after rounding.
pub fn reflection_check(cfg: &DisorderRunConfig, n_scale: u64) -> Result<ReflectionCheck> {
    cfg.check()?;
    let sc = prepare(cfg, n_scale)?;
    if sc.x_star != 0 {
        return Err(Error::Domain(format!("reflection needs x* = 0, got {}", sc.x_star)));
    }
    let center = cfg.d as i64 - 1;
    let run = |salt: u64, mirror: bool| -> Result<Vec<f64>> {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let (field_seed, rec) = replica_record(splitmix64(cfg.seed ^ salt), n_scale, r);
                let mut field = DisorderField::random(cfg.distribution.clone(), field_seed)?;
                if mirror {
                    field = field.reflected(center);
                }
                let (a, b) = quenched_halves(cfg, &sc, &field, rec)?;
                Ok(0.5 * (a + b))
            })
            .collect()
    };
    let plain = run(0xA5A5, false)?;
    let mirrored = run(0x5A5A, true)?;
    let (ks_statistic, p_value) = ks_two_sample(&plain, &mirrored);
    Ok(ReflectionCheck { n_scale, replicas: cfg.replicas, ks_statistic, p_value, passed: p_value > 1e-3 })
}
