use std::io::Write;

use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use super::{open_window, row_overlap};
use crate::kernels::{ContinuumEndpoint, DiscreteKernel, LatticePoint, LatticeRounding};
use crate::numeric::{ks_two_sample, ln_factorial, mean_se, rat_to_f64};
use crate::rng::SeedRecord;
use crate::walk_ensembles::{BridgeSampler, BridgeSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub n_scale: u64,
    pub t: f64,
    pub k: usize,
    /// E[S^k]/k!.
    pub moment: f64,
    pub std_error: f64,
}

/// Rows (N, t, k) of E[S^k]/k! from `values[replica][t index]`.
pub(crate) fn moment_rows(n_scale: u64, t_grid: &[f64], k_max: usize, values: &[Vec<f64>]) -> Result<Vec<MomentRow>> {
    if k_max == 0 || values.len() < 2 {
        return Err(Error::Domain("need k_max >= 1 and at least two replicas".into()));
    }
    let mut rows = Vec::with_capacity(t_grid.len() * k_max);
    for (ti, &t) in t_grid.iter().enumerate() {
        for k in 1..=k_max {
            let scale = (-ln_factorial(k as u64)).exp();
            let xs: Vec<f64> = values.iter().map(|v| v[ti].powi(k as i32) * scale).collect();
            let (moment, std_error) = mean_se(&xs);
            rows.push(MomentRow { n_scale, t, k, moment, std_error });
        }
    }
    Ok(rows)
}

/// CSV with columns N, t, k, moment, SE.
pub fn write_moment_csv<W: Write>(rows: &[MomentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "t", "k", "moment", "SE"])?;
    for r in rows {
        w.write_record(&[
            r.n_scale.to_string(),
            r.t.to_string(),
            r.k.to_string(),
            r.moment.to_string(),
            r.std_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// Per-time overlap counts |X(n) ∩ X′(n)|, n = 0..=n*, of two independent
// bridges drawn from sub-streams 2r and 2r+1 of `rec`.
fn pair_counts(sampler: &BridgeSampler, rec: SeedRecord, r: usize) -> Vec<u64> {
    let d = sampler.spec().d;
    let a = sampler.sample_flat(&mut rec.child(2 * r as u64).rng());
    let b = sampler.sample_flat(&mut rec.child(2 * r as u64 + 1).rng());
    a.chunks(d).zip(b.chunks(d)).map(|(x, y)| row_overlap(x, y)).collect()
}

fn window_total(counts: &[u64], w: Option<(i64, i64)>) -> u64 {
    w.map_or(0, |(a, b)| counts[a as usize..=b as usize].iter().sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentDiagnostics {
    pub rows: Vec<MomentRow>,
    /// For every (t, k): max over N ≤ 2·(min over N + 3 SE).
    pub uniform_in_n: bool,
    /// For every (N, k): moments nondecreasing along the sorted t grid.
    pub monotone_in_t: bool,
    /// For every (N, k): the smallest-t moment is below the largest-t one,
    /// and zero when the window is empty.
    pub decays_to_zero: bool,
    /// (N, moment_{k_max}/moment_{k_max−1}) at the largest t; reported only.
    pub tail_ratios: Vec<(u64, f64)>,
    /// (N, exact E[O^{(N)}[0, t_max]]) for lattices small enough to sum exactly.
    pub first_moment_oracle: Vec<(u64, f64)>,
}

impl MomentDiagnostics {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_moment_csv(&self.rows, out)
    }
}

/// Largest n* for which the diagnostics also sum the exact first moment.
const ORACLE_MAX_STEPS: i64 = 64;

/// E[(O^{(N)}[0, t])^k]/k! for two independent ensembles, where the window
/// counts interior times 0 < n < tN.
pub fn overlap_moment_diagnostics(
    end: ContinuumEndpoint,
    d: usize,
    n_list: &[u64],
    t_grid: &[f64],
    k_max: usize,
    replicas: usize,
    seed: u64,
) -> Result<MomentDiagnostics> {
    if k_max == 0 || k_max > 6 {
        return Err(Error::Domain(format!("k_max must lie in 1..=6, got {k_max}")));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    if grid.iter().any(|&t| t < 0.0 || t > end.t_star) {
        return Err(Error::Domain("t grid must lie in [0, t*]".into()));
    }
    let mut rows = Vec::new();
    let mut tail_ratios = Vec::new();
    let mut first_moment_oracle = Vec::new();
    for &n in n_list {
        let r = LatticeRounding::new(n, end)?;
        let spec = r.spec(d)?;
        let sampler = BridgeSampler::new(&spec)?;
        let windows: Vec<Option<(i64, i64)>> = grid.iter().map(|&t| open_window(n, spec.n_star, 0.0, t)).collect();
        let rn = (n as f64).sqrt();
        let rec = SeedRecord::new(seed, n);
        let values: Vec<Vec<f64>> = (0..replicas)
            .into_par_iter()
            .map(|rep| {
                let c = pair_counts(&sampler, rec, rep);
                windows.iter().map(|&w| window_total(&c, w) as f64 / rn).collect()
            })
            .collect();
        let block = moment_rows(n, &grid, k_max, &values)?;
        if k_max >= 2 {
            let m = |k: usize| block.iter().rev().find(|row| row.k == k).map_or(f64::NAN, |row| row.moment);
            tail_ratios.push((n, m(k_max) / m(k_max - 1)));
        }
        if spec.n_star <= ORACLE_MAX_STEPS {
            if let Some((a, b)) = windows.last().copied().flatten() {
                first_moment_oracle.push((n, rat_to_f64(&expected_overlap_exact(&spec, a, b)?) / rn));
            }
        }
        rows.extend(block);
    }
    let find = |n: u64, t: f64, k: usize| rows.iter().find(|r| r.n_scale == n && r.t == t && r.k == k).copied();
    let mut uniform_in_n = true;
    for &t in &grid {
        for k in 1..=k_max {
            let col: Vec<MomentRow> = n_list.iter().filter_map(|&n| find(n, t, k)).collect();
            let lo = col.iter().min_by(|a, b| a.moment.total_cmp(&b.moment));
            let hi = col.iter().map(|r| r.moment).fold(0.0, f64::max);
            if let Some(lo) = lo {
                uniform_in_n &= hi <= 2.0 * (lo.moment + 3.0 * lo.std_error);
            }
        }
    }
    let mut monotone_in_t = true;
    let mut decays_to_zero = true;
    for &n in n_list {
        for k in 1..=k_max {
            let line: Vec<MomentRow> = grid.iter().filter_map(|&t| find(n, t, k)).collect();
            monotone_in_t &= line.windows(2).all(|w| w[0].moment <= w[1].moment);
            if let (Some(first), Some(last)) = (line.first(), line.last()) {
                decays_to_zero &= first.moment < last.moment || last.moment == 0.0;
                if open_window(n, (n as f64 * end.t_star) as i64, 0.0, first.t).is_none() {
                    decays_to_zero &= first.moment == 0.0;
                }
            }
        }
    }
    Ok(MomentDiagnostics { rows, uniform_in_n, monotone_in_t, decays_to_zero, tail_ratios, first_moment_oracle })
}

// Sites of the reachable cone at time n.
fn cone_sites(spec: &BridgeSpec, n: i64) -> Vec<LatticePoint> {
    let gap = 2 * (spec.d as i64 - 1);
    let rem = spec.n_star - n;
    let lo = (-n).max(spec.x_star - rem);
    let hi = n.min(spec.x_star + rem) + gap;
    (lo..=hi).filter(|x| (x + n).rem_euclid(2) == 0).map(|x| (n, x)).collect()
}

/// E[Σ_{n=a}^{b} |X(n) ∩ X′(n)|] = Σ_n Σ_x P(x ∈ X(n))², exactly.
pub fn expected_overlap_exact(spec: &BridgeSpec, a: i64, b: i64) -> Result<BigRational> {
    let kernel = DiscreteKernel::new(*spec)?;
    let mut s = BigRational::zero();
    for n in a..=b {
        for p in cone_sites(spec, n) {
            let q = kernel.eval_exact(p, p)?;
            s += &q * &q;
        }
    }
    Ok(s)
}

// Exact Σ over ordered times n1 < … < nk in [a, b] of Σ_z P(z ∈ X(n))²
// (k ≤ 2), together with E[c^k]/k! for the raw window count c.
fn exact_cell_sums(spec: &BridgeSpec, a: i64, b: i64, k: usize) -> Result<(BigRational, BigRational)> {
    let kernel = DiscreteKernel::new(*spec)?;
    let sites: Vec<LatticePoint> = (a..=b).flat_map(|n| cone_sites(spec, n)).collect();
    let m = sites.len();
    let mut kmat = Vec::with_capacity(m * m);
    for p in &sites {
        for q in &sites {
            kmat.push(kernel.eval_exact(*p, *q)?);
        }
    }
    let diag: Vec<BigRational> = (0..m).map(|i| kmat[i * m + i].clone()).collect();
    let first: BigRational = diag.iter().map(|p| p * p).sum();
    if k == 1 {
        return Ok((first.clone(), first));
    }
    let mut ordered = BigRational::zero();
    let mut same_time = BigRational::zero();
    for i in 0..m {
        for j in 0..m {
            if i == j || sites[i].0 > sites[j].0 {
                continue;
            }
            let det = &diag[i] * &diag[j] - &kmat[i * m + j] * &kmat[j * m + i];
            let sq = &det * &det;
            if sites[i].0 < sites[j].0 {
                ordered += sq;
            } else {
                same_time += sq;
            }
        }
    }
    // E[c²] = 2·(ordered pairs of distinct times) + Σ_n E[|X(n) ∩ X′(n)|²].
    let second = (BigRational::from_integer(2.into()) * &ordered + same_time + first) / BigRational::from_integer(2.into());
    Ok((ordered, second))
}

#[derive(Debug, Clone, Serialize)]
pub struct L2BoundReport {
    pub n_scale: u64,
    pub n_star: i64,
    pub d: usize,
    pub k: usize,
    pub window: Option<(i64, i64)>,
    /// Σ over ordered cells of |ψ_k^{(N)}|²·(cell volume)^k.
    pub lhs: f64,
    /// Monte Carlo E[(O^{(N)})^k]/(2^k k!).
    pub rhs: f64,
    pub rhs_se: f64,
    /// The same right-hand side summed exactly.
    pub rhs_exact: f64,
    pub passed: bool,
}

/// Compares the ordered-simplex integral of |ψ_k^{(N)}|² over times in
/// (s, s′) with E[(O^{(N)}[s, s′])^k]/(2^k k!). Exact on both sides for
/// k ≤ 2; the right side is also estimated from `replicas` pairs.
#[allow(clippy::too_many_arguments)]
pub fn overlap_l2_bound_check(
    end: ContinuumEndpoint,
    d: usize,
    n_scale: u64,
    s: f64,
    s2: f64,
    k: usize,
    replicas: usize,
    seed: u64,
) -> Result<L2BoundReport> {
    if k == 0 || k > 2 {
        return Err(Error::Domain(format!("the exact cell sum supports k in 1..=2, got {k}")));
    }
    if !(0.0 <= s && s <= s2 && s2 <= end.t_star) {
        return Err(Error::Domain(format!("need 0 <= s <= s' <= t*, got [{s}, {s2}]")));
    }
    let r = LatticeRounding::new(n_scale, end)?;
    let spec = r.spec(d)?;
    let window = open_window(n_scale, spec.n_star, s, s2);
    // Both sides carry the same factor: (√N/2)^{2k}·(2/(N√N))^k on the
    // integral and (2√N)^{−k} from rescaling the count.
    let unit = (r.density_factor().powi(2) * r.cell_volume()).powi(k as i32);
    let (lhs_raw, rhs_raw) = match window {
        Some((a, b)) => exact_cell_sums(&spec, a, b, k)?,
        None => (BigRational::zero(), BigRational::zero()),
    };
    let sampler = BridgeSampler::new(&spec)?;
    let rec = SeedRecord::new(seed, n_scale);
    let fact = (-ln_factorial(k as u64)).exp();
    let vals: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|rep| (window_total(&pair_counts(&sampler, rec, rep), window) as f64).powi(k as i32) * fact)
        .collect();
    let (m, se) = mean_se(&vals);
    let lhs = rat_to_f64(&lhs_raw) * unit;
    let (rhs, rhs_se) = (m * unit, se * unit);
    Ok(L2BoundReport {
        n_scale,
        n_star: spec.n_star,
        d,
        k,
        window,
        lhs,
        rhs,
        rhs_se,
        rhs_exact: rat_to_f64(&rhs_raw) * unit,
        passed: lhs <= rhs + 3.0 * rhs_se,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeReversalReport {
    pub window: Option<(i64, i64)>,
    pub reversed: Option<(i64, i64)>,
    pub mean_forward: f64,
    pub mean_reversed: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
    /// p > 0.001.
    pub passed: bool,
}

/// Two-sample KS test of O^{(N)}[s, s′] against O^{(N)}[t*−s′, t*−s] from
/// independent pairs. The reversed window is the forward one reflected
/// through n*/2 on the lattice.
#[allow(clippy::too_many_arguments)]
pub fn time_reversal_check(
    end: ContinuumEndpoint,
    d: usize,
    n_scale: u64,
    s: f64,
    s2: f64,
    replicas: usize,
    seed: u64,
) -> Result<TimeReversalReport> {
    let r = LatticeRounding::new(n_scale, end)?;
    let spec = r.spec(d)?;
    let sampler = BridgeSampler::new(&spec)?;
    let window = open_window(n_scale, spec.n_star, s, s2);
    let reversed = window.map(|(a, b)| (spec.n_star - b, spec.n_star - a));
    let rn = (n_scale as f64).sqrt();
    let draw = |salt: u64, w: Option<(i64, i64)>| -> Vec<f64> {
        let rec = SeedRecord::new(seed ^ salt, n_scale);
        (0..replicas)
            .into_par_iter()
            .map(|rep| window_total(&pair_counts(&sampler, rec, rep), w) as f64 / rn)
            .collect()
    };
    let fwd = draw(0x0F0F, window);
    let rev = draw(0xF0F0, reversed);
    let (ks_statistic, p_value) = ks_two_sample(&fwd, &rev);
    Ok(TimeReversalReport {
        window,
        reversed,
        mean_forward: mean_se(&fwd).0,
        mean_reversed: mean_se(&rev).0,
        ks_statistic,
        p_value,
        passed: p_value > 1e-3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk_ensembles::{visit_bridges, Budget};

    fn end(z: f64) -> ContinuumEndpoint {
        ContinuumEndpoint::new(1.0, z).unwrap()
    }

    #[test]
    fn expected_overlap_matches_pair_enumeration() {
        let spec = BridgeSpec::new(2, 6, 0).unwrap();
        let mut all = Vec::new();
        visit_bridges(&spec, &Budget::default(), |s| all.push(s.clone())).unwrap();
        let mut total = 0u64;
        for x in &all {
            for y in &all {
                total += super::super::overlap_time(x, y, 1, 5).unwrap().total;
            }
        }
        let n = all.len() as i64;
        let exact = expected_overlap_exact(&spec, 1, 5).unwrap();
        assert_eq!(exact, BigRational::new(total.into(), (n * n).into()));
    }

    #[test]
    fn second_moment_matches_pair_enumeration() {
        let spec = BridgeSpec::new(2, 6, 0).unwrap();
        let mut all = Vec::new();
        visit_bridges(&spec, &Budget::default(), |s| all.push(s.clone())).unwrap();
        let mut sq = 0u64;
        for x in &all {
            for y in &all {
                let c = super::super::overlap_time(x, y, 1, 5).unwrap().total;
                sq += c * c;
            }
        }
        let n = all.len() as i64;
        let (_, half_second) = exact_cell_sums(&spec, 1, 5, 2).unwrap();
        assert_eq!(half_second, BigRational::new(sq.into(), (2 * n * n).into()));
    }

    #[test]
    fn first_moment_oracle_matches_monte_carlo() {
        let diag = overlap_moment_diagnostics(end(0.0), 1, &[16, 32], &[0.0, 0.5, 1.0], 3, 4000, 21).unwrap();
        for (n, exact) in &diag.first_moment_oracle {
            let row = diag.rows.iter().find(|r| r.n_scale == *n && r.t == 1.0 && r.k == 1).unwrap();
            assert!((row.moment - exact).abs() < 4.0 * row.std_error, "{row:?} vs {exact}");
        }
        assert_eq!(diag.first_moment_oracle.len(), 2);
        assert!(diag.monotone_in_t && diag.decays_to_zero && diag.uniform_in_n, "{diag:?}");
        for r in diag.rows.iter().filter(|r| r.t == 0.0) {
            assert_eq!(r.moment, 0.0);
        }
        assert!(overlap_moment_diagnostics(end(0.0), 1, &[16], &[1.0], 7, 10, 0).is_err());
    }

    #[test]
    fn moment_csv_schema() {
        let diag = overlap_moment_diagnostics(end(0.0), 2, &[8], &[0.5], 2, 50, 1).unwrap();
        let mut buf = Vec::new();
        diag.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "N,t,k,moment,SE");
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn first_order_bound_is_an_equality() {
        let rep = overlap_l2_bound_check(end(0.0), 1, 10, 0.0, 1.0, 1, 2000, 3).unwrap();
        assert!((rep.lhs - rep.rhs_exact).abs() < 1e-14);
        assert!((rep.rhs - rep.rhs_exact).abs() < 4.0 * rep.rhs_se);
        assert!(rep.passed);
    }

    #[test]
    fn second_order_bound_holds_with_slack() {
        for (s, s2) in [(0.0, 1.0), (0.25, 0.75)] {
            let rep = overlap_l2_bound_check(end(0.0), 2, 12, s, s2, 2, 4000, 8).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert!(rep.lhs < rep.rhs_exact, "{rep:?}");
            assert!((rep.rhs - rep.rhs_exact).abs() < 4.0 * rep.rhs_se, "{rep:?}");
        }
    }

    #[test]
    fn empty_window_gives_zero_on_both_sides() {
        let rep = overlap_l2_bound_check(end(0.0), 2, 12, 0.5, 0.5, 2, 20, 0).unwrap();
        assert_eq!((rep.lhs, rep.rhs, rep.rhs_exact), (0.0, 0.0, 0.0));
        assert!(overlap_l2_bound_check(end(0.0), 2, 12, 0.0, 1.0, 3, 20, 0).is_err());
    }

    #[test]
    fn reversed_window_has_the_same_law() {
        let rep = time_reversal_check(end(0.5), 2, 64, 0.1, 0.4, 3000, 17).unwrap();
        assert_eq!(rep.reversed, Some((39, 57)));
        assert!(rep.passed, "{rep:?}");
    }
}
