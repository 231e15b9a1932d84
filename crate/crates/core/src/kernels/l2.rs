use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{ContinuumEndpoint, ContinuumKernel, CorrelationQuery, SpaceTimePoint};
use crate::numeric::{ln_factorial, mean_se};
use crate::rng::stream_rng;
use crate::{Error, Result};

const BATCH: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2Estimate {
    pub k: usize,
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L2Series {
    pub coupling: f64,
    pub norms: Vec<L2Estimate>,
    /// 1 + Σ_k coupling^k/k! · ‖ψ_k‖².
    pub value: f64,
    pub std_error: f64,
}

fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + (2.0 * std::f64::consts::PI * var).ln())
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// One importance-sampling draw of k!·ψ_k² / q.
///
/// Times: Dirichlet(½,…,½) gaps on (0,t*), which matches the (gap)^{−1/2}
/// singularities of ψ_k². Positions: an even mixture of a Brownian-bridge
/// step from the previous point (capturing the same-walker peak at close
/// times) and a wide Gaussian around the line z*t/t* covering all d walkers.
fn draw(kernel: &ContinuumKernel, k: usize, rng: &mut crate::rng::Rng, half: &Gamma<f64>) -> Result<f64> {
    let end = kernel.end;
    let ts = end.t_star;
    let gaps: Vec<f64> = (0..=k).map(|_| half.sample(rng).max(f64::MIN_POSITIVE)).collect();
    let total: f64 = gaps.iter().sum();
    let u: Vec<f64> = gaps.iter().map(|g| g / total).collect();
    // ln density of the ordered times.
    let mut ln_q = ln_gamma_half_multiple(k + 1) - (k + 1) as f64 * ln_gamma_half_multiple(1)
        - u.iter().map(|v| 0.5 * v.ln()).sum::<f64>()
        - k as f64 * ts.ln();
    let wide = 2.0 * kernel.d as f64;
    let mut points = Vec::with_capacity(k);
    let (mut tp, mut zp) = (0.0, 0.0);
    let mut acc = 0.0;
    for g in u.iter().take(k) {
        acc += g;
        let t = (ts * acc).clamp(1e-300, ts * (1.0 - 1e-16));
        let loc_mean = zp + (t - tp) / (ts - tp) * (end.z_star - zp);
        let loc_var = ((t - tp) * (ts - t) / (ts - tp)).max(1e-300);
        let wide_mean = end.z_star * t / ts;
        let wide_var = wide * t * (ts - t) / ts;
        let n: f64 = rng.sample(StandardNormal);
        let z = if rng.random::<bool>() { loc_mean + loc_var.sqrt() * n } else { wide_mean + wide_var.sqrt() * n };
        ln_q += log_sum_exp(normal_ln_pdf(z, loc_mean, loc_var), normal_ln_pdf(z, wide_mean, wide_var)) - 2f64.ln();
        points.push(SpaceTimePoint::new(t, z));
        tp = t;
        zp = z;
    }
    if points.iter().any(|p| !(p.t > 0.0 && p.t < ts)) {
        return Ok(0.0);
    }
    let psi = kernel.psi_k(&CorrelationQuery::new(points)?)?;
    Ok((2.0 * psi.abs().ln() + ln_factorial(k as u64) - ln_q).exp())
}

// ln Γ(m/2).
fn ln_gamma_half_multiple(m: usize) -> f64 {
    statrs::function::gamma::ln_gamma(0.5 * m as f64)
}

/// Monte Carlo estimate of ‖ψ_k‖² over ((0,t*)×ℝ)^k. Samples are drawn in
/// fixed batches, batch b on stream b of `seed`, so the result does not
/// depend on the number of worker threads.
pub fn psi_l2_norm(end: ContinuumEndpoint, d: usize, k: usize, samples: usize, seed: u64) -> Result<L2Estimate> {
    if k == 0 || k > 3 {
        return Err(Error::Domain(format!("k = {k} outside 1..=3")));
    }
    if samples < 2 {
        return Err(Error::Domain("need at least two samples".into()));
    }
    let kernel = ContinuumKernel::new(end, d);
    let half = Gamma::new(0.5, 1.0).expect("valid shape");
    let batches = samples.div_ceil(BATCH);
    let values: Vec<f64> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let n = BATCH.min(samples - b * BATCH);
            (0..n).map(|_| draw(&kernel, k, &mut rng, &half)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .concat();
    let (value, std_error) = mean_se(&values);
    Ok(L2Estimate { k, value, std_error, samples })
}

/// 1 + Σ_{k ≤ k_max} coupling^k/k! · ‖ψ_k‖², each norm from its own stream.
pub fn psi_l2_series(
    end: ContinuumEndpoint,
    d: usize,
    coupling: f64,
    k_max: usize,
    samples: usize,
    seed: u64,
) -> Result<L2Series> {
    let mut norms = Vec::with_capacity(k_max);
    let mut value = 1.0;
    let mut var = 0.0;
    for k in 1..=k_max {
        let e = psi_l2_norm(end, d, k, samples, crate::rng::splitmix64(seed ^ k as u64))?;
        let c = (k as f64 * coupling.abs().ln() - ln_factorial(k as u64)).exp() * coupling.signum().powi(k as i32);
        let c = if coupling == 0.0 { 0.0 } else { c };
        value += c * e.value;
        var += (c * e.std_error).powi(2);
        norms.push(e);
    }
    Ok(L2Series { coupling, norms, value, std_error: var.sqrt() })
}

/// Deterministic quadrature of ‖ψ_1‖²: time substitution t = t*·sin²θ with
/// the midpoint rule in θ, and the trapezoid rule in z on the line-centred
/// window of ±12 bridge standard deviations.
pub fn psi1_l2_quadrature(end: ContinuumEndpoint, d: usize, nt: usize, nz: usize) -> Result<f64> {
    let kernel = ContinuumKernel::new(end, d);
    let ts = end.t_star;
    let mut total = 0.0;
    let h = std::f64::consts::FRAC_PI_2 / nt as f64;
    for i in 0..nt {
        let th = (i as f64 + 0.5) * h;
        let t = ts * th.sin().powi(2);
        let jac = ts * 2.0 * th.sin() * th.cos();
        let sd = (t * (ts - t) / ts).sqrt() * (2.0 * d as f64).sqrt();
        let c = end.z_star * t / ts;
        let (lo, hi) = (c - 12.0 * sd, c + 12.0 * sd);
        let dz = (hi - lo) / (nz - 1) as f64;
        let mut inner = 0.0;
        for j in 0..nz {
            let z = lo + dz * j as f64;
            let w = if j == 0 || j == nz - 1 { 0.5 } else { 1.0 };
            let v = kernel.eval(SpaceTimePoint::new(t, z), SpaceTimePoint::new(t, z))?;
            inner += w * v * v;
        }
        total += inner * dz * jac * h;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_matches_closed_form() {
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        let q = psi1_l2_quadrature(end, 1, 400, 801).unwrap();
        let exact = std::f64::consts::PI.sqrt() / 2.0;
        assert!((q - exact).abs() < 1e-6, "{q} vs {exact}");
    }

    #[test]
    fn single_walker_norm_within_three_se() {
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        let e = psi_l2_norm(end, 1, 1, 40_000, 17).unwrap();
        let exact = std::f64::consts::PI.sqrt() / 2.0;
        assert!((e.value - exact).abs() < 3.0 * e.std_error, "{e:?}");
        assert!(e.std_error < 0.01 * exact);
    }

    #[test]
    fn single_walker_norms_all_orders() {
        // For one walker the squared heat kernels integrate in closed form:
        // ‖ψ_k‖² = k!·√π / (2^k Γ((k+1)/2)) at t* = 1, z* = 0.
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        for (k, exact) in [(2, 1.0), (3, 1.329_340_388_179_137)] {
            let e = psi_l2_norm(end, 1, k, 100_000, 40 + k as u64).unwrap();
            assert!((e.value - exact).abs() < 3.0 * e.std_error, "{e:?} vs {exact}");
        }
    }

    #[test]
    fn two_walkers_against_quadrature() {
        let end = ContinuumEndpoint::new(1.0, 0.5).unwrap();
        let q = psi1_l2_quadrature(end, 2, 400, 801).unwrap();
        let e = psi_l2_norm(end, 2, 1, 40_000, 3).unwrap();
        assert!((e.value - q).abs() < 3.0 * e.std_error, "{e:?} vs {q}");
    }

    #[test]
    fn series_edge_cases() {
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        let s = psi_l2_series(end, 2, 0.0, 2, 1000, 1).unwrap();
        assert_eq!(s.value, 1.0);
        let lo = psi_l2_series(end, 2, 0.2, 2, 4000, 1).unwrap();
        let hi = psi_l2_series(end, 2, 0.4, 2, 4000, 1).unwrap();
        assert!(hi.value > lo.value);
    }

    #[test]
    fn higher_order_norms_are_finite_and_stable() {
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        let a = psi_l2_norm(end, 2, 2, 20_000, 5).unwrap();
        let b = psi_l2_norm(end, 2, 2, 20_000, 6).unwrap();
        assert!(a.value.is_finite() && a.std_error < 0.1 * a.value, "{a:?}");
        assert!((a.value - b.value).abs() < 4.0 * (a.std_error.hypot(b.std_error)), "{a:?} {b:?}");
    }
}
