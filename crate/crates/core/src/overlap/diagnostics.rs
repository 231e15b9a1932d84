use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use super::moments::{moment_rows, MomentRow};
use crate::kernels::{ContinuumEndpoint, LatticeRounding};
use crate::numeric::{mean_se, rat_to_f64};
use crate::rng::{stream_rng, SeedRecord};
use crate::walk_ensembles::{
    conditional_drift_exact, drift_bound, free_step_law, radon_nikodym, sample_free_walk, BridgeCounter, FreeWalk,
    PathEnsembleSample, WeylConfig,
};
use crate::{Error, Result};

/// Row access shared by bridge samples and free walks.
pub trait Trajectory {
    fn d(&self) -> usize;
    fn len_steps(&self) -> usize;
    fn at(&self, n: usize) -> &[i64];
}

impl Trajectory for PathEnsembleSample {
    fn d(&self) -> usize {
        self.spec.d
    }
    fn len_steps(&self) -> usize {
        self.steps() as usize
    }
    fn at(&self, n: usize) -> &[i64] {
        self.row(n)
    }
}

impl Trajectory for FreeWalk {
    fn d(&self) -> usize {
        self.d
    }
    fn len_steps(&self) -> usize {
        self.steps()
    }
    fn at(&self, n: usize) -> &[i64] {
        self.row(n)
    }
}

fn check_pair(d: usize, a_idx: usize, b_idx: usize) -> Result<()> {
    if !(1 <= a_idx && a_idx < b_idx && b_idx <= d) {
        return Err(Error::Domain(format!("need 1 <= a < b <= d, got a={a_idx}, b={b_idx}, d={d}")));
    }
    Ok(())
}

/// (1/√N) Σ_{i=1}^{⌊tN⌋} 1/(X_b(i) − X_a(i)); indices are 1-based and the
/// sum stops at the end of the trajectory.
pub fn inverse_gap_sum<T: Trajectory>(sample: &T, a_idx: usize, b_idx: usize, t: f64, n_scale: u64) -> Result<f64> {
    check_pair(sample.d(), a_idx, b_idx)?;
    let last = ((t * n_scale as f64 + 1e-9).floor().max(0.0) as usize).min(sample.len_steps());
    let s: f64 = (1..=last)
        .map(|i| {
            let r = sample.at(i);
            1.0 / (r[b_idx - 1] - r[a_idx - 1]) as f64
        })
        .sum();
    Ok(s / (n_scale as f64).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub n: usize,
    pub start: Vec<i64>,
    /// E[√n/(X_b(n) − X_a(n))].
    pub value: f64,
    /// Zero for exact rows.
    pub std_error: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InverseGapReport {
    pub a_idx: usize,
    pub b_idx: usize,
    pub rows: Vec<GapRow>,
    pub max_value: f64,
    pub ceiling: f64,
    pub passed: bool,
}

// Exact law of the conditioned walk after n steps.
fn free_law(start: &[i64], n: usize) -> HashMap<Vec<i64>, BigRational> {
    let mut law = HashMap::from([(start.to_vec(), BigRational::from_integer(1.into()))]);
    for _ in 0..n {
        let mut next: HashMap<Vec<i64>, BigRational> = HashMap::new();
        for (x, p) in &law {
            for (y, q) in free_step_law(x) {
                *next.entry(y).or_insert_with(BigRational::zero) += p * q;
            }
        }
        law = next;
    }
    law
}

/// Largest d·n handled by exact propagation of the free-walk law.
pub const EXACT_GAP_STEPS: usize = 16;

/// E[√n/(X_b(n)−X_a(n))] for the conditioned free walk from each start.
/// Small (d·n ≤ 16) entries are exact, the rest Monte Carlo. Passes when
/// every entry lies below `ceiling`.
pub fn expected_inverse_gap_check(
    a_idx: usize,
    b_idx: usize,
    n_list: &[usize],
    starts: &[Vec<i64>],
    samples: usize,
    seed: u64,
    ceiling: f64,
) -> Result<InverseGapReport> {
    let d = starts.first().map_or(0, |s| s.len());
    check_pair(d, a_idx, b_idx)?;
    for s in starts {
        if s.len() != d {
            return Err(Error::Domain("all starts need the same d".into()));
        }
        WeylConfig::new(s.clone())?;
    }
    if n_list.contains(&0) || samples < 2 {
        return Err(Error::Domain("need n >= 1 and at least two samples".into()));
    }
    let mut rows = Vec::new();
    for (si, start) in starts.iter().enumerate() {
        for &n in n_list {
            let rn = (n as f64).sqrt();
            if d * n <= EXACT_GAP_STEPS {
                let mut v = BigRational::zero();
                for (x, p) in free_law(start, n) {
                    v += p / BigRational::from_integer((x[b_idx - 1] - x[a_idx - 1]).into());
                }
                rows.push(GapRow { n, start: start.clone(), value: rn * rat_to_f64(&v), std_error: 0.0, exact: true });
            } else {
                let rec = SeedRecord::new(seed, ((si as u64) << 32) | n as u64);
                let vals: Vec<f64> = (0..samples)
                    .into_par_iter()
                    .map(|r| {
                        let mut rng = rec.child(r as u64).rng();
                        let w = sample_free_walk(start, n, &mut rng);
                        let x = w.row(n);
                        rn / (x[b_idx - 1] - x[a_idx - 1]) as f64
                    })
                    .collect();
                let (value, std_error) = mean_se(&vals);
                rows.push(GapRow { n, start: start.clone(), value, std_error, exact: false });
            }
        }
    }
    let max_value = rows.iter().map(|r| r.value).fold(0.0, f64::max);
    let passed = rows.iter().all(|r| r.value.is_finite() && r.value <= ceiling);
    Ok(InverseGapReport { a_idx, b_idx, rows, max_value, ceiling, passed })
}

#[derive(Debug, Clone, Serialize)]
pub struct GapFit {
    pub rows: Vec<MomentRow>,
    /// Smallest C with E[S^k]/k! ≤ (C√t)^k Γ(½)^k/Γ(k/2+1) on every row.
    pub fitted_c: f64,
}

/// Moments E[S_t^k]/k! of the inverse-gap sum S_t along free walks from
/// δ(0), with the constant C fitted to the bound (C√t)^k Γ(½)^k/Γ(k/2+1).
#[allow(clippy::too_many_arguments)]
pub fn inverse_gap_moment_fit(
    d: usize,
    a_idx: usize,
    b_idx: usize,
    n_scale: u64,
    t_grid: &[f64],
    k_max: usize,
    replicas: usize,
    seed: u64,
) -> Result<GapFit> {
    check_pair(d, a_idx, b_idx)?;
    let steps = t_grid.iter().map(|t| (t * n_scale as f64 + 1e-9).floor() as usize).max().unwrap_or(0);
    let start = crate::walk_ensembles::delta(d, 0);
    let rec = SeedRecord::new(seed, n_scale);
    let values: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let w = sample_free_walk(start.positions(), steps, &mut rec.child(r as u64).rng());
            t_grid.iter().map(|&t| inverse_gap_sum(&w, a_idx, b_idx, t, n_scale)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let rows = moment_rows(n_scale, t_grid, k_max, &values)?;
    let ln_half = ln_gamma(0.5);
    let fitted_c = rows
        .iter()
        .filter(|r| r.t > 0.0 && r.moment > 0.0)
        .map(|r| {
            let k = r.k as f64;
            ((r.moment.ln() + ln_gamma(0.5 * k + 1.0) - k * ln_half) / k).exp() / r.t.sqrt()
        })
        .fold(0.0, f64::max);
    Ok(GapFit { rows, fitted_c })
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftSweepReport {
    pub d: usize,
    pub configs: usize,
    /// Walker-configuration pairs compared.
    pub checks: usize,
    pub violations: usize,
    /// max |E[ΔX_k|x]| / (2^d Σ 1/|x_k−x_i|), over pairs with a nonzero bound.
    pub max_ratio: f64,
}

/// Compares |E[ΔX_k | x]| with 2^d Σ_{i≠k} 1/|x_k − x_i| in exact
/// arithmetic on random configurations with gaps in {2, 4, …, 2·max_half_gap}.
pub fn drift_bound_sweep(d: usize, configs: usize, max_half_gap: i64, seed: u64) -> Result<DriftSweepReport> {
    if d == 0 || d > 5 || max_half_gap < 1 {
        return Err(Error::Domain(format!("need 1 <= d <= 5 and max_half_gap >= 1, got d={d}")));
    }
    let mut rng = stream_rng(seed, d as u64);
    let mut rep = DriftSweepReport { d, configs, checks: 0, violations: 0, max_ratio: 0.0 };
    for _ in 0..configs {
        let mut x = vec![rng.random_range(-50..=50i64)];
        for _ in 1..d {
            let last = *x.last().unwrap();
            x.push(last + 2 * rng.random_range(1..=max_half_gap));
        }
        let cfg = WeylConfig::new(x)?;
        for k in 1..=d {
            let drift = conditional_drift_exact(&cfg, k)?.abs();
            let bound = drift_bound(&cfg, k);
            rep.checks += 1;
            if drift > bound {
                rep.violations += 1;
            }
            if !bound.is_zero() {
                rep.max_ratio = rep.max_ratio.max(rat_to_f64(&(drift / bound)));
            }
        }
    }
    Ok(rep)
}

fn vandermonde_f64(x: &[i64]) -> f64 {
    let mut h = 1.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            h *= (x[j] - x[i]) as f64;
        }
    }
    h
}

// E[ΔX_k | x] in floating point, k 0-based.
fn drift_f64(x: &[i64], k: usize) -> f64 {
    let d = x.len();
    let hx = vandermonde_f64(x);
    let mut y = x.to_vec();
    let mut s = 0.0;
    for mask in 0..(1u32 << d) {
        for i in 0..d {
            y[i] = x[i] + if mask >> i & 1 == 1 { 1 } else { -1 };
        }
        let hy = vandermonde_f64(&y);
        if hy > 0.0 {
            s += hy * (y[k] - x[k]) as f64;
        }
    }
    s / (hx * (1u64 << d) as f64)
}

/// Moments of (1/√N) Σ_{i<⌊tN⌋} |E[ΔX_k | X(i)]| along free walks from δ(0).
/// `walker` is 1-based.
pub fn drift_path_moments(
    d: usize,
    walker: usize,
    n_scale: u64,
    t_grid: &[f64],
    k_max: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<MomentRow>> {
    if walker == 0 || walker > d {
        return Err(Error::Domain(format!("walker {walker} outside 1..={d}")));
    }
    let cut = |t: f64| (t * n_scale as f64 + 1e-9).floor().max(0.0) as usize;
    let steps = t_grid.iter().map(|&t| cut(t)).max().unwrap_or(0);
    let start = crate::walk_ensembles::delta(d, 0);
    let rec = SeedRecord::new(seed, n_scale);
    let rn = (n_scale as f64).sqrt();
    let values: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let w = sample_free_walk(start.positions(), steps, &mut rec.child(r as u64).rng());
            let mut cum = vec![0.0; steps + 1];
            for i in 0..steps {
                cum[i + 1] = cum[i] + drift_f64(w.row(i), walker - 1).abs();
            }
            t_grid.iter().map(|&t| cum[cut(t)] / rn).collect()
        })
        .collect();
    moment_rows(n_scale, t_grid, k_max, &values)
}

#[derive(Debug, Clone, Serialize)]
pub struct RnCeilingRow {
    pub n_scale: u64,
    pub n_star: i64,
    /// Times 0..=last_time were scanned (all n < 2n*/3).
    pub last_time: i64,
    pub states: usize,
    pub max_value: f64,
    pub argmax_time: i64,
    pub finite: bool,
}

/// Largest bridge-to-free-walk density over every reachable configuration
/// at times before 2/3 of the bridge length.
pub fn rn_ceiling_report(end: ContinuumEndpoint, d: usize, n_list: &[u64], max_states: u128) -> Result<Vec<RnCeilingRow>> {
    let mut rows = Vec::new();
    for &n in n_list {
        let r = LatticeRounding::new(n, end)?;
        let spec = r.spec(d)?;
        let counter = BridgeCounter::new(&spec, max_states)?;
        let last_time = (2 * spec.n_star - 1) / 3;
        let mut row = RnCeilingRow {
            n_scale: n,
            n_star: spec.n_star,
            last_time,
            states: 0,
            max_value: 0.0,
            argmax_time: 0,
            finite: true,
        };
        for t in 0..=last_time {
            for x in counter.layer_configs(t) {
                let v = radon_nikodym(&spec, t, x)?;
                row.states += 1;
                row.finite &= v.is_finite();
                if v > row.max_value {
                    row.max_value = v;
                    row.argmax_time = t;
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk_ensembles::BridgeSpec;

    #[test]
    fn constant_gap_sum() {
        let spec = BridgeSpec::new(2, 6, 0).unwrap();
        let rows: Vec<Vec<i64>> = [0, 1, 2, 3, 2, 1, 0].iter().map(|&x| vec![x, x + 2]).collect();
        let s = PathEnsembleSample::from_rows(spec, &rows, None).unwrap();
        let n = 6u64;
        let v = inverse_gap_sum(&s, 1, 2, 0.5, n).unwrap();
        assert!((v - 1.5 / 6f64.sqrt()).abs() < 1e-15);
        let mut prev = 0.0;
        for t in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let v = inverse_gap_sum(&s, 1, 2, t, n).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(inverse_gap_sum(&s, 2, 1, 0.5, n).is_err());
    }

    #[test]
    fn one_step_gap_expectation() {
        // Moves from (0,2): (−1,1) w.p. 1/4, (−1,3) w.p. 1/2, (1,3) w.p. 1/4.
        let rep = expected_inverse_gap_check(1, 2, &[1], &[vec![0, 2]], 10, 0, 10.0).unwrap();
        assert!((rep.rows[0].value - 0.375).abs() < 1e-15);
        assert!(rep.rows[0].exact);
        assert!(expected_inverse_gap_check(1, 2, &[1], &[vec![0]], 10, 0, 10.0).is_err());
    }

    #[test]
    fn inverse_gap_stays_bounded() {
        let starts = vec![vec![0, 2], vec![0, 20]];
        let rep = expected_inverse_gap_check(1, 2, &[4, 16, 64, 256], &starts, 2000, 3, 2.0).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.rows.iter().filter(|r| r.exact).count(), 2);
        // Exact and Monte Carlo entries agree where both are cheap.
        let mc = expected_inverse_gap_check(1, 2, &[8], &[vec![0, 2]], 20_000, 4, 2.0).unwrap();
        let exact = free_law(&[0, 2], 8)
            .into_iter()
            .map(|(x, p)| rat_to_f64(&p) / (x[1] - x[0]) as f64)
            .sum::<f64>()
            * 8f64.sqrt();
        assert!(mc.rows[0].exact);
        assert!((mc.rows[0].value - exact).abs() < 1e-12);
        let d3 = expected_inverse_gap_check(1, 3, &[6], &[vec![0, 2, 4]], 20_000, 5, 2.0).unwrap();
        assert!(!d3.rows[0].exact);
        let ex3 = free_law(&[0, 2, 4], 6)
            .into_iter()
            .map(|(x, p)| rat_to_f64(&p) / (x[2] - x[0]) as f64)
            .sum::<f64>()
            * 6f64.sqrt();
        assert!((d3.rows[0].value - ex3).abs() < 4.0 * d3.rows[0].std_error, "{d3:?} vs {ex3}");
    }

    #[test]
    fn gap_moment_fit_is_finite() {
        let fit = inverse_gap_moment_fit(2, 1, 2, 100, &[0.0, 0.25, 1.0], 3, 400, 9).unwrap();
        assert!(fit.fitted_c.is_finite() && fit.fitted_c > 0.0);
        for r in fit.rows.iter().filter(|r| r.t == 0.0) {
            assert_eq!(r.moment, 0.0);
        }
    }

    #[test]
    fn drift_sweep_finds_no_violation() {
        for d in 1..=4 {
            let rep = drift_bound_sweep(d, 500, 6, 11).unwrap();
            assert_eq!(rep.violations, 0);
            assert!(rep.max_ratio <= 1.0);
        }
        assert!(drift_bound_sweep(6, 10, 3, 0).is_err());
    }

    #[test]
    fn float_drift_matches_exact() {
        for x in [vec![0, 2], vec![-3, 1, 3], vec![0, 2, 4, 10]] {
            let c = WeylConfig::new(x.clone()).unwrap();
            for k in 1..=x.len() {
                let e = rat_to_f64(&conditional_drift_exact(&c, k).unwrap());
                assert!((drift_f64(&x, k - 1) - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn drift_statistic_vanishes_at_zero_and_grows() {
        let rows = drift_path_moments(2, 1, 64, &[0.0, 0.1, 0.5, 1.0], 2, 300, 2).unwrap();
        let m = |t: f64, k: usize| rows.iter().find(|r| r.t == t && r.k == k).unwrap().moment;
        assert_eq!(m(0.0, 1), 0.0);
        assert!(m(0.1, 1) < m(0.5, 1) && m(0.5, 1) < m(1.0, 1));
        assert!(m(0.1, 2) < m(1.0, 2));
    }

    #[test]
    fn rn_ceiling_is_finite() {
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        let rows = rn_ceiling_report(end, 2, &[12, 24, 48], 1 << 22).unwrap();
        for r in &rows {
            assert!(r.finite && r.max_value > 0.0, "{r:?}");
            assert!(r.last_time * 3 < 2 * r.n_star);
        }
    }
}
