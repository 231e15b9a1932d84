use std::collections::HashSet;

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{visit_path_tuples, RationalWeights, Vertex, WeightMatrix};
use crate::walk_ensembles::{visit_bridges, BridgeSpec, Budget, PathEnsembleSample};
use crate::{Error, Result};

/// The d(d+1) vertices every tuple in Π^d_{N+d,N+d} visits: path ℓ runs
/// along row ℓ through (i, ℓ), i ≤ d−ℓ+1, at the start and through
/// (N+i, N+ℓ), i ≥ d−ℓ+1, at the end.
pub fn forced_points(d: usize, n_half: usize) -> Vec<Vertex> {
    let mut a = Vec::with_capacity(d * (d + 1));
    for l in 1..=d {
        a.extend((1..=d - l + 1).map(|i| (i, l)));
        a.extend((d - l + 1..=d).map(|i| (n_half + i, n_half + l)));
    }
    a
}

/// λ(n, m) = (n+m−d−1, n−m+d−1): the 45° turn taking free path vertices to
/// walk coordinates (time, space). Meaningful off the forced set.
pub fn rotate_lambda(d: usize, v: Vertex) -> (i64, i64) {
    let (n, m, d) = (v.0 as i64, v.1 as i64, d as i64);
    (n + m - d - 1, n - m + d - 1)
}

pub fn rotate_lambda_inverse(d: usize, p: (i64, i64)) -> Result<Vertex> {
    let (t, x) = p;
    if (t + x).rem_euclid(2) != 0 {
        return Err(Error::Parity(format!("time + space odd at {p:?}")));
    }
    let n = (t + x + 2) / 2;
    let m = (t - x + 2 * d as i64) / 2;
    if n < 1 || m < 1 {
        return Err(Error::Domain(format!("{p:?} maps outside the positive quadrant")));
    }
    Ok((n as usize, m as usize))
}

/// The walk ensemble in Ω^{(2N,0)} traced by the free parts of a tuple in
/// Π^d_{N+d,N+d}.
pub fn rotate_tuple(d: usize, n_half: usize, tuple: &[&[Vertex]]) -> Result<PathEnsembleSample> {
    let steps = 2 * n_half;
    let mut rows = vec![Vec::with_capacity(d); steps + 1];
    for path in tuple {
        for &v in path.iter() {
            let (t, x) = rotate_lambda(d, v);
            if (0..=steps as i64).contains(&t) {
                rows[t as usize].push(x);
            }
        }
    }
    for r in rows.iter_mut() {
        r.sort_unstable();
    }
    PathEnsembleSample::from_rows(BridgeSpec::new(d, steps as i64, 0)?, &rows, None)
}

/// True when every tuple in Π^d_{n,m} contains all of `points`.
pub fn tuples_contain(points: &[Vertex], d: usize, n: usize, m: usize) -> Result<bool> {
    let want: HashSet<Vertex> = points.iter().copied().collect();
    let mut all = true;
    visit_path_tuples(d, n, m, |t| {
        let seen: HashSet<Vertex> = t.iter().flat_map(|p| p.iter().copied()).collect();
        all &= want.is_subset(&seen);
    })?;
    Ok(all)
}

fn check_window(rows: usize, cols: usize, d: usize, n_half: usize) -> Result<()> {
    if rows < n_half + d || cols < n_half + d {
        return Err(Error::Domain(format!("weights must cover {0}x{0}", n_half + d)));
    }
    Ok(())
}

/// Σ over Ω^{(2N,0)} of ∏_ℓ ∏_{t=1}^{2N−1} g(λ^{−1}(t, X_ℓ(t))), summed on
/// the walk side by listing bridges.
pub fn free_region_sum(w: &WeightMatrix, d: usize, n_half: usize, budget: &Budget) -> Result<f64> {
    check_window(w.rows(), w.cols(), d, n_half)?;
    let spec = BridgeSpec::new(d, 2 * n_half as i64, 0)?;
    let mut sum = 0.0;
    let mut err = None;
    visit_bridges(&spec, budget, |s| {
        let mut p = 1.0;
        for t in 1..2 * n_half {
            for &x in s.row(t) {
                match rotate_lambda_inverse(d, (t as i64, x)) {
                    Ok((i, j)) => p *= w.get(i, j),
                    Err(e) => err = Some(e),
                }
            }
        }
        sum += p;
    })?;
    err.map_or(Ok(sum), Err)
}

pub fn free_region_sum_exact(w: &RationalWeights, d: usize, n_half: usize, budget: &Budget) -> Result<BigRational> {
    check_window(w.rows, w.cols, d, n_half)?;
    let spec = BridgeSpec::new(d, 2 * n_half as i64, 0)?;
    let mut sum = BigRational::zero();
    let mut err = None;
    visit_bridges(&spec, budget, |s| {
        let mut p = BigRational::one();
        for t in 1..2 * n_half {
            for &x in s.row(t) {
                match rotate_lambda_inverse(d, (t as i64, x)) {
                    Ok((i, j)) => p *= w.get(i, j),
                    Err(e) => err = Some(e),
                }
            }
        }
        sum += p;
    })?;
    err.map_or(Ok(sum), Err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grsk::{tau_enumerate_exact, tau_lgv_exact};
    use crate::numeric::rat;
    use crate::walk_ensembles::macmahon_count;
    use num_bigint::BigInt;

    #[test]
    fn forced_set_sizes() {
        assert_eq!(forced_points(1, 5), vec![(1, 1), (6, 6)]);
        for d in 1..=5 {
            let a = forced_points(d, 7);
            assert_eq!(a.len(), d * (d + 1));
            assert_eq!(a.iter().collect::<HashSet<_>>().len(), a.len());
        }
    }

    #[test]
    fn every_tuple_visits_the_forced_set() {
        for (d, n) in [(1, 3), (2, 2), (2, 3), (3, 2)] {
            assert!(tuples_contain(&forced_points(d, n), d, n + d, n + d).unwrap(), "d={d} N={n}");
        }
        assert!(!tuples_contain(&[(2, 2)], 2, 4, 4).unwrap());
    }

    #[test]
    fn rotation_examples_and_round_trip() {
        for d in 1..=4 {
            assert_eq!(rotate_lambda(d, (1, d)), (0, 0));
        }
        for d in 1..=3 {
            for n in 1..=6 {
                for m in 1..=6 {
                    let (t, x) = rotate_lambda(d, (n, m));
                    assert_eq!((t + x).rem_euclid(2), 0);
                    assert_eq!(rotate_lambda_inverse(d, (t, x)).unwrap(), (n, m));
                }
            }
        }
        assert!(matches!(rotate_lambda_inverse(2, (1, 0)), Err(Error::Parity(_))));
    }

    #[test]
    fn free_tuples_are_walk_bridges_bijectively() {
        for (d, n) in [(1, 3), (2, 2), (2, 3), (3, 2)] {
            let mut seen = HashSet::new();
            let count = visit_path_tuples(d, n + d, n + d, |t| {
                let s = rotate_tuple(d, n, t).unwrap();
                s.validate().unwrap();
                seen.insert(s.rows().map(|r| r.to_vec()).collect::<Vec<_>>());
            })
            .unwrap();
            assert_eq!(seen.len() as u64, count);
            assert_eq!(BigInt::from(count), macmahon_count(n as u64, d));
        }
    }

    #[test]
    fn tau_factors_through_forced_points() {
        for (d, n) in [(1, 4), (2, 2), (2, 3), (3, 2)] {
            let w = RationalWeights::from_fn(n + d, n + d, |i, j| {
                BigRational::new(BigInt::from(2 + (i * 7 + j * 3) % 5), BigInt::from(1 + (i + 2 * j) % 4))
            });
            let tau = tau_enumerate_exact(&w, d, n + d, n + d).unwrap();
            let forced = forced_points(d, n).iter().fold(rat(1), |acc, &(i, j)| acc * w.get(i, j));
            let free = free_region_sum_exact(&w, d, n, &Budget::default()).unwrap();
            assert_eq!(tau, forced * free, "d={d} N={n}");
        }
    }

    #[test]
    fn all_ones_free_count_is_macmahon() {
        for d in 1..=3 {
            for n in 1..=6usize {
                let ones = RationalWeights::from_fn(n + d, n + d, |_, _| rat(1));
                let c = tau_lgv_exact(&ones, d, n + d, n + d).unwrap();
                assert_eq!(c, BigRational::from_integer(macmahon_count(n as u64, d)), "d={d} N={n}");
            }
        }
    }

    #[test]
    fn float_free_sum_matches_exact() {
        let w = WeightMatrix::random_uniform(5, 5, 0.5, 2.0, 3).unwrap();
        let f = free_region_sum(&w, 2, 3, &Budget::default()).unwrap();
        let forced: f64 = forced_points(2, 3).iter().map(|&(i, j)| w.get(i, j)).product();
        let tau = crate::grsk::tau_enumerate(&w, 2, 5, 5).unwrap();
        assert!((forced * f - tau).abs() < 1e-12 * tau);
    }
}
