use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{ContinuumEndpoint, ContinuumKernel, DiscreteKernel, LatticeRounding, SpaceTimePoint};
use crate::numeric::loglog_slope;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_scale: u64,
    pub pair_id: usize,
    pub a: SpaceTimePoint,
    pub b: SpaceTimePoint,
    pub discrete: f64,
    pub continuum: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupError {
    pub n_scale: u64,
    pub sup_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub end: ContinuumEndpoint,
    pub d: usize,
    /// Rows grouped by N, in the order of `n_list`.
    #[serde(skip)]
    pub rows: Vec<ConvergenceRow>,
    pub sup_errors: Vec<SupError>,
    /// Least-squares slope of log sup-error against log N.
    pub slope: f64,
    /// True when the sup-error strictly decreases along N.
    pub strictly_decreasing: bool,
    /// True when the sup-error at the largest N is below the one at the smallest.
    pub decreased_overall: bool,
    /// Reference kernel used: the continuum kernel conjugated by the lattice gauge.
    pub reference: &'static str,
    pub rate_note: &'static str,
}

impl ConvergenceReport {
    /// CSV with columns N, pair_id, t, z, t', z', K_N, K, abs_err.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "pair_id", "t", "z", "t'", "z'", "K_N", "K", "abs_err"])?;
        for r in &self.rows {
            w.write_record(&[
                r.n_scale.to_string(),
                r.pair_id.to_string(),
                r.a.t.to_string(),
                r.a.z.to_string(),
                r.b.t.to_string(),
                r.b.z.to_string(),
                r.discrete.to_string(),
                r.continuum.to_string(),
                r.abs_err.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Pairs of points with t, t′ on an even grid in [δ, t*−δ], |t − t′| ≥ η
/// or t = t′ excluded, and z, z′ on an even grid in [−M, M].
pub fn d1_grid(
    end: &ContinuumEndpoint,
    delta: f64,
    eta: f64,
    m: f64,
    times: usize,
    spaces: usize,
) -> Vec<(SpaceTimePoint, SpaceTimePoint)> {
    let lerp = |lo: f64, hi: f64, i: usize, n: usize| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    let ts: Vec<f64> = (0..times).map(|i| lerp(delta, end.t_star - delta, i, times)).collect();
    let zs: Vec<f64> = (0..spaces).map(|i| lerp(-m, m, i, spaces)).collect();
    let mut out = Vec::new();
    for &t in &ts {
        for &tp in &ts {
            if (t - tp).abs() < eta {
                continue;
            }
            for &z in &zs {
                for &zp in &zs {
                    out.push((SpaceTimePoint::new(t, z), SpaceTimePoint::new(tp, zp)));
                }
            }
        }
    }
    out
}

/// Entrywise comparison of √N/2·K_RW at the rounded points with the
/// continuum kernel, for each N in `n_list`.
pub fn kernel_convergence_study(
    end: ContinuumEndpoint,
    d: usize,
    grid: &[(SpaceTimePoint, SpaceTimePoint)],
    n_list: &[u64],
) -> Result<ConvergenceReport> {
    let cont = ContinuumKernel::new(end, d);
    let reference: Vec<f64> =
        grid.iter().map(|(a, b)| cont.eval_lattice_gauge(*a, *b)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(grid.len() * n_list.len());
    let mut sup_errors = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let r = LatticeRounding::new(n, end)?;
        let kernel = DiscreteKernel::new(r.spec(d)?)?;
        let scale = r.density_factor();
        let chunk: Vec<ConvergenceRow> = grid
            .par_iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let v = scale * kernel.eval(r.round(*a), r.round(*b))?;
                Ok(ConvergenceRow {
                    n_scale: n,
                    pair_id: i,
                    a: *a,
                    b: *b,
                    discrete: v,
                    continuum: reference[i],
                    abs_err: (v - reference[i]).abs(),
                })
            })
            .collect::<Result<_>>()?;
        let sup = chunk.iter().map(|r| r.abs_err).fold(0.0, f64::max);
        sup_errors.push(SupError { n_scale: n, sup_err: sup });
        rows.extend(chunk);
    }
    let scales: Vec<f64> = sup_errors.iter().map(|s| s.n_scale as f64).collect();
    let errs: Vec<f64> = sup_errors.iter().map(|s| s.sup_err).collect();
    let slope = if errs.len() >= 2 && errs.iter().all(|e| *e > 0.0) { loglog_slope(&scales, &errs) } else { f64::NAN };
    let strictly_decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let decreased_overall = errs.len() >= 2 && errs[errs.len() - 1] < errs[0];
    Ok(ConvergenceReport {
        end,
        d,
        rows,
        sup_errors,
        slope,
        strictly_decreasing,
        decreased_overall,
        reference: "continuum kernel conjugated by exp(2az - 1.5a^2 t), a = z*/t*",
        rate_note: "the N^-1/2 rate window is an empirical expectation, not a proven rate",
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_walker_rate_is_near_root_n() {
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        let grid = d1_grid(&end, 0.1, 0.1, 2.0, 5, 7);
        let rep = kernel_convergence_study(end, 1, &grid, &[100, 400, 1600, 6400]).unwrap();
        assert!(rep.slope > -0.75 && rep.slope < -0.25, "{:?}", rep.sup_errors);
        assert!(rep.decreased_overall);
    }

    #[test]
    fn shifted_endpoint_converges_in_lattice_gauge() {
        let end = ContinuumEndpoint::new(1.0, 0.7).unwrap();
        let grid = d1_grid(&end, 0.1, 0.1, 2.0, 4, 5);
        let rep = kernel_convergence_study(end, 2, &grid, &[100, 1600]).unwrap();
        assert!(rep.sup_errors[1].sup_err < 0.5 * rep.sup_errors[0].sup_err, "{:?}", rep.sup_errors);
    }

    #[test]
    fn csv_has_schema_header() {
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        let grid = d1_grid(&end, 0.2, 0.2, 1.0, 2, 2);
        let rep = kernel_convergence_study(end, 2, &grid, &[50]).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("N,pair_id,t,z,t',z',K_N,K,abs_err\n"));
        assert_eq!(s.lines().count(), 1 + grid.len());
    }
}
