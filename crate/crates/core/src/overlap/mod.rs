//! Overlap times of two independent bridge ensembles, the discrete Tanaka
//! identity, and the gap, drift and moment diagnostics built on them.
//!
//! Counts stay integers; division by √N happens only when reporting.

mod diagnostics;
mod moments;
mod tanaka;

pub use diagnostics::{
    drift_bound_sweep, drift_path_moments, expected_inverse_gap_check, inverse_gap_moment_fit, inverse_gap_sum,
    rn_ceiling_report, DriftSweepReport, GapFit, GapRow, InverseGapReport, RnCeilingRow, Trajectory,
};
pub use moments::{
    expected_overlap_exact, overlap_l2_bound_check, overlap_moment_diagnostics, time_reversal_check, L2BoundReport,
    write_moment_csv, MomentDiagnostics, MomentRow, TimeReversalReport,
};
pub use tanaka::{tanaka_check, tanaka_decomposition, TanakaDecomposition};

use serde::Serialize;

use crate::walk_ensembles::PathEnsembleSample;
use crate::{Error, Result};

/// Overlap counts of two ensembles on the time window [a, b].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapRecord {
    pub d: usize,
    /// Row-major d×d: entry (k, ℓ) counts n in [a, b] with X_k(n) = X′_ℓ(n).
    pub pairwise: Vec<u64>,
    pub total: u64,
    pub window: (i64, i64),
}

impl OverlapRecord {
    pub fn get(&self, k: usize, l: usize) -> u64 {
        self.pairwise[k * self.d + l]
    }

    /// total/√N.
    pub fn rescaled(&self, n_scale: u64) -> f64 {
        self.total as f64 / (n_scale as f64).sqrt()
    }
}

/// Pairwise and total overlap counts of `s1` and `s2` over [a, b].
pub fn overlap_time(s1: &PathEnsembleSample, s2: &PathEnsembleSample, a: i64, b: i64) -> Result<OverlapRecord> {
    if s1.spec != s2.spec {
        return Err(Error::SpecMismatch);
    }
    if a < 0 || a > b || b > s1.steps() {
        return Err(Error::Domain(format!("window [{a}, {b}] outside [0, {}]", s1.steps())));
    }
    let d = s1.d();
    let mut pairwise = vec![0u64; d * d];
    for n in a..=b {
        let (r1, r2) = (s1.row(n as usize), s2.row(n as usize));
        for (k, x) in r1.iter().enumerate() {
            for (l, y) in r2.iter().enumerate() {
                if x == y {
                    pairwise[k * d + l] += 1;
                }
            }
        }
    }
    Ok(OverlapRecord { d, total: pairwise.iter().sum(), pairwise, window: (a, b) })
}

// |X(n) ∩ X′(n)| for sorted rows.
fn row_overlap(r1: &[i64], r2: &[i64]) -> u64 {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < r1.len() && j < r2.len() {
        match r1[i].cmp(&r2[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Integer times strictly inside (N·s, N·s′), clipped to the interior
/// 1..=n*−1. `None` when empty.
pub fn open_window(n_scale: u64, n_star: i64, s: f64, s2: f64) -> Option<(i64, i64)> {
    const SLACK: f64 = 1e-9;
    let nf = n_scale as f64;
    let a = ((nf * s + SLACK).floor() as i64 + 1).max(1);
    let b = ((nf * s2 - SLACK).ceil() as i64 - 1).min(n_star - 1);
    (a <= b).then_some((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRecord;
    use crate::walk_ensembles::{sample_bridge, BridgeSpec};

    #[test]
    fn self_overlap_is_full() {
        let spec = BridgeSpec::new(3, 10, 2).unwrap();
        let s = sample_bridge(&spec, SeedRecord::new(1, 0)).unwrap();
        let r = overlap_time(&s, &s, 2, 7).unwrap();
        assert_eq!(r.total, 3 * 6);
        for k in 0..3 {
            assert_eq!(r.get(k, k), 6);
        }
    }

    #[test]
    fn opposite_zigzags_never_meet() {
        let spec = BridgeSpec::new(1, 4, 0).unwrap();
        let up = PathEnsembleSample::from_rows(spec, &[vec![0], vec![1], vec![0], vec![1], vec![0]], None).unwrap();
        let down = PathEnsembleSample::from_rows(spec, &[vec![0], vec![-1], vec![0], vec![-1], vec![0]], None).unwrap();
        assert_eq!(overlap_time(&up, &down, 1, 1).unwrap().total, 0);
        assert_eq!(overlap_time(&up, &down, 1, 3).unwrap().total, 1);
        assert_eq!(overlap_time(&up, &down, 0, 4).unwrap().total, 3);
    }

    #[test]
    fn hand_count_on_serialized_pair() {
        let spec = BridgeSpec::new(2, 8, 0).unwrap();
        let a = sample_bridge(&spec, SeedRecord::new(4, 1)).unwrap();
        let b = sample_bridge(&spec, SeedRecord::new(4, 2)).unwrap();
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        crate::walk_ensembles::write_sample_csv(&a, &mut ca).unwrap();
        crate::walk_ensembles::write_sample_csv(&b, &mut cb).unwrap();
        let parse = |bytes: &[u8]| -> Vec<Vec<i64>> {
            String::from_utf8(bytes.to_vec())
                .unwrap()
                .lines()
                .skip(1)
                .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
                .collect()
        };
        let (ra, rb) = (parse(&ca), parse(&cb));
        let mut hand = 0;
        for n in 0..=8 {
            for x in &ra[n] {
                hand += rb[n].iter().filter(|y| *y == x).count() as u64;
            }
        }
        let r = overlap_time(&a, &b, 0, 8).unwrap();
        assert_eq!(r.total, hand);
        assert_eq!(r.total, r.pairwise.iter().sum::<u64>());
        assert!(r.total <= 2 * 9);
        assert_eq!(r.total, (0..=8).map(|n| row_overlap(a.row(n), b.row(n))).sum::<u64>());
    }

    #[test]
    fn mismatched_specs_and_bad_windows() {
        let s1 = sample_bridge(&BridgeSpec::new(2, 8, 0).unwrap(), SeedRecord::new(0, 0)).unwrap();
        let s2 = sample_bridge(&BridgeSpec::new(2, 8, 2).unwrap(), SeedRecord::new(0, 0)).unwrap();
        assert_eq!(overlap_time(&s1, &s2, 0, 8), Err(Error::SpecMismatch));
        assert!(overlap_time(&s1, &s1, 3, 2).is_err());
        assert!(overlap_time(&s1, &s1, 0, 9).is_err());
    }

    #[test]
    fn open_windows() {
        assert_eq!(open_window(12, 12, 0.0, 1.0), Some((1, 11)));
        assert_eq!(open_window(12, 12, 0.25, 0.75), Some((4, 8)));
        assert_eq!(open_window(12, 12, 0.5, 0.5), None);
        assert_eq!(open_window(12, 12, 0.0, 0.0), None);
        assert_eq!(open_window(10, 10, 0.12, 0.33), Some((2, 3)));
    }
}
