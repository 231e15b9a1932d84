use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};

use super::{delta, BridgeSpec, WeylConfig};
use crate::numeric::{
    binom_big, clamp_probability, det_from_logs, det_rational, ln_binom, poch_rat, rat,
    rat_to_f64, ScaledDet,
};
use crate::{Error, Result};

/// Index into the single-walk binomial for a move from x to y in n steps.
fn step_index(n: i64, x: i64, y: i64) -> Option<i64> {
    let s = n + x - y;
    if s.rem_euclid(2) != 0 {
        None
    } else {
        Some(s / 2)
    }
}

/// ln|q_n(from, to)| as a row-scaled determinant of the matrix
/// 2^{−n} binom(n, (n + x_i − y_j)/2).
pub fn km_log_det(n: i64, from: &[i64], to: &[i64]) -> ScaledDet {
    let d = from.len();
    let ln2n = n as f64 * std::f64::consts::LN_2;
    let mut logs = vec![f64::NEG_INFINITY; d * d];
    for i in 0..d {
        for j in 0..d {
            if let Some(k) = step_index(n, from[i], to[j]) {
                if let Some(l) = ln_binom(n, k) {
                    logs[i * d + j] = l - ln2n;
                }
            }
        }
    }
    det_from_logs(&logs, d)
}

/// Exact q_n(from, to).
pub fn km_weight_exact(n: i64, from: &WeylConfig, to: &WeylConfig) -> BigRational {
    let d = from.d();
    let (a, b) = (from.positions(), to.positions());
    let mut m = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let v = step_index(n, a[i], b[j]).map_or(BigInt::zero(), |k| binom_big(n, k));
            m.push(BigRational::from_integer(v));
        }
    }
    let det = det_rational(m, d);
    det / BigRational::from_integer(BigInt::from(2).pow((n as usize * d) as u32))
}

/// Probability that d independent simple walks go from `from` to `to` in n
/// steps without meeting. Exact arithmetic when d·n ≤ 64, scaled floating
/// point otherwise.
pub fn km_weight(n: i64, from: &WeylConfig, to: &WeylConfig) -> Result<f64> {
    if n < 0 {
        return Err(Error::Domain(format!("negative step count {n}")));
    }
    if from.d() != to.d() {
        return Err(Error::Domain("configurations of different size".into()));
    }
    if from.d() as i64 * n <= 64 {
        Ok(rat_to_f64(&km_weight_exact(n, from, to)))
    } else {
        clamp_probability(km_log_det(n, from.positions(), to.positions()))
    }
}

fn check_times(spec: &BridgeSpec, n: i64, n_prime: i64) -> Result<()> {
    if !(0 <= n && n < n_prime && n_prime <= spec.n_star) {
        return Err(Error::Domain(format!("need 0 ≤ n < n' ≤ n*, got {n}, {n_prime}")));
    }
    Ok(())
}

/// q_{n'−n}(x, x') q_{n*−n'}(x', δ(x*)) / q_{n*−n}(x, δ(x*)).
pub fn bridge_transition(
    spec: &BridgeSpec,
    n: i64,
    x: &WeylConfig,
    n_prime: i64,
    x_prime: &WeylConfig,
) -> Result<f64> {
    check_times(spec, n, n_prime)?;
    let end = spec.end();
    let den = km_log_det(spec.n_star - n, x.positions(), end.positions());
    if den.value <= 0.0 {
        return Err(Error::UnreachableState(format!("{:?} at time {n}", x.positions())));
    }
    let a = km_log_det(n_prime - n, x.positions(), x_prime.positions());
    let b = km_log_det(spec.n_star - n_prime, x_prime.positions(), end.positions());
    if a.value <= 0.0 || b.value <= 0.0 {
        return Ok(0.0);
    }
    Ok((a.value * b.value / den.value) * (a.log_scale + b.log_scale - den.log_scale).exp())
}

pub fn bridge_transition_exact(
    spec: &BridgeSpec,
    n: i64,
    x: &WeylConfig,
    n_prime: i64,
    x_prime: &WeylConfig,
) -> Result<BigRational> {
    check_times(spec, n, n_prime)?;
    let end = spec.end();
    let den = km_weight_exact(spec.n_star - n, x, &end);
    if den.is_zero() {
        return Err(Error::UnreachableState(format!("{:?} at time {n}", x.positions())));
    }
    let a = km_weight_exact(n_prime - n, x, x_prime);
    let b = km_weight_exact(spec.n_star - n_prime, x_prime, &end);
    Ok(a * b / den)
}

/// Vandermonde product h_d(x) = ∏_{i<j} (x_j − x_i).
pub fn vandermonde(x: &[i64]) -> BigInt {
    let mut h = BigInt::one();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            h *= BigInt::from(x[j] - x[i]);
        }
    }
    h
}

/// One-step law of the conditioned walk: every δ ∈ {±1}^d with its
/// probability 2^{−d} h(x+δ)/h(x) (zero-probability moves omitted).
pub fn free_step_law(x: &[i64]) -> Vec<(Vec<i64>, BigRational)> {
    let d = x.len();
    let hx = vandermonde(x);
    let denom = hx * BigInt::from(1u64 << d);
    let mut out = Vec::new();
    for mask in 0..(1u32 << d) {
        let y: Vec<i64> = (0..d).map(|i| x[i] + if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
        let hy = vandermonde(&y);
        if hy > BigInt::zero() {
            out.push((y, BigRational::new(hy, denom.clone())));
        }
    }
    out
}

/// E[ΔX_k | X = x] for the conditioned walk, exactly. `k` is 1-based.
pub fn conditional_drift_exact(x: &WeylConfig, k: usize) -> Result<BigRational> {
    if k == 0 || k > x.d() {
        return Err(Error::Domain(format!("walker index {k} outside 1..={}", x.d())));
    }
    let base = x.positions();
    let mut drift = BigRational::zero();
    for (y, p) in free_step_law(base) {
        let step = y[k - 1] - base[k - 1];
        drift += p * rat(step);
    }
    Ok(drift)
}

pub fn conditional_drift(x: &WeylConfig, k: usize) -> Result<f64> {
    conditional_drift_exact(x, k).map(|r| rat_to_f64(&r))
}

/// The ceiling 2^d Σ_{i≠k} 1/|x_k − x_i| as an exact rational.
pub fn drift_bound(x: &WeylConfig, k: usize) -> BigRational {
    let p = x.positions();
    let mut s = BigRational::zero();
    for (i, xi) in p.iter().enumerate() {
        if i != k - 1 {
            s += BigRational::new(BigInt::one(), BigInt::from((p[k - 1] - xi).abs()));
        }
    }
    s * rat(1i64 << x.d())
}

/// |Ω^{(2N,0)}| = ∏_{i<d} binom(2N+2i, N+i) / binom(2N+2i, i).
pub fn macmahon_count(half_length: u64, d: usize) -> BigInt {
    let n = half_length as i64;
    let mut acc = BigRational::one();
    for i in 0..d as i64 {
        acc *= BigRational::new(binom_big(2 * n + 2 * i, n + i), binom_big(2 * n + 2 * i, i));
    }
    debug_assert!(acc.is_integer());
    acc.to_integer()
}

fn check_rn_args(spec: &BridgeSpec, n: i64, x: &WeylConfig) -> Result<()> {
    if x.d() != spec.d {
        return Err(Error::Domain("configuration size differs from d".into()));
    }
    if n < 0 || n > spec.n_star {
        return Err(Error::Domain(format!("time {n} outside [0, {}]", spec.n_star)));
    }
    if x.positions().iter().any(|xi| (n + xi).rem_euclid(2) != 0) {
        return Err(Error::Parity(format!("n + x_i odd at n={n}, x={:?}", x.positions())));
    }
    Ok(())
}

/// Product formula for the density of the bridge marginal at time n with
/// respect to the conditioned free walk.
pub fn radon_nikodym_exact(spec: &BridgeSpec, n: i64, x: &WeylConfig) -> Result<BigRational> {
    check_rn_args(spec, n, x)?;
    let d = spec.d as i64;
    let (ns, xs) = (spec.n_star, spec.x_star);
    let rem = ns - n;
    let mut acc = BigRational::one();
    for (idx, xi) in x.positions().iter().enumerate() {
        let i = idx as i64 + 1;
        let top = binom_big(rem + d - 1, (rem + xi - xs) / 2);
        if top.is_zero() {
            return Ok(BigRational::zero());
        }
        let bottom = binom_big(ns + d - 1, (ns + xs) / 2 + i - 1);
        let two_n = BigInt::from(2).pow(n as u32);
        acc *= BigRational::new(two_n * top, bottom);
        acc *= poch_rat(&rat(ns + d - i + 1), i - 1) / poch_rat(&rat(rem + d - i + 1), i - 1);
    }
    Ok(acc)
}

pub fn radon_nikodym(spec: &BridgeSpec, n: i64, x: &WeylConfig) -> Result<f64> {
    check_rn_args(spec, n, x)?;
    let d = spec.d as i64;
    let (ns, xs) = (spec.n_star, spec.x_star);
    let rem = ns - n;
    let mut ln = 0.0;
    for (idx, xi) in x.positions().iter().enumerate() {
        let i = idx as i64 + 1;
        let Some(top) = ln_binom(rem + d - 1, (rem + xi - xs) / 2) else {
            return Ok(0.0);
        };
        let bottom = ln_binom(ns + d - 1, (ns + xs) / 2 + i - 1).unwrap_or(f64::NEG_INFINITY);
        ln += n as f64 * std::f64::consts::LN_2 + top - bottom;
        for m in 0..i - 1 {
            ln += ((ns + d - i + 1 + m) as f64).ln() - ((rem + d - i + 1 + m) as f64).ln();
        }
    }
    Ok(ln.exp())
}

/// The same density computed as a ratio of laws:
/// P(bridge at x) / P(conditioned walk at x)
/// = q_{n*−n}(x, δ(x*)) h(δ(0)) / (q_{n*}(δ(0), δ(x*)) h(x)).
pub fn radon_nikodym_ratio_exact(spec: &BridgeSpec, n: i64, x: &WeylConfig) -> Result<BigRational> {
    check_rn_args(spec, n, x)?;
    let start = delta(spec.d, 0);
    let end = spec.end();
    let total = km_weight_exact(spec.n_star, &start, &end);
    if total.is_zero() {
        return Err(Error::EmptyBridge { d: spec.d, n_star: spec.n_star, x_star: spec.x_star });
    }
    let q = km_weight_exact(spec.n_star - n, x, &end);
    let h0 = BigRational::from_integer(vandermonde(start.positions()));
    let hx = BigRational::from_integer(vandermonde(x.positions()));
    Ok(q * h0 / (total * hx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk_ensembles::BridgeCounter;
    use proptest::prelude::*;

    fn w(v: &[i64]) -> WeylConfig {
        WeylConfig::new(v.to_vec()).unwrap()
    }

    fn frac(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn km_small_values() {
        assert_eq!(km_weight_exact(2, &w(&[0]), &w(&[0])), frac(1, 2));
        assert_eq!(km_weight_exact(2, &w(&[0, 2]), &w(&[0, 2])), frac(3, 16));
        assert_eq!(km_weight(3, &w(&[0, 2]), &w(&[0, 2])).unwrap(), 0.0);
        // float path agrees with the exact path beyond the threshold
        let a = w(&[0, 2, 4]);
        let b = w(&[4, 6, 8]);
        let exact = rat_to_f64(&km_weight_exact(30, &a, &b));
        let float = clamp_probability(km_log_det(30, a.positions(), b.positions())).unwrap();
        assert!((exact - float).abs() <= 1e-12 * exact);
    }

    #[test]
    fn transition_examples() {
        let spec = BridgeSpec::new(1, 2, 0).unwrap();
        let p = bridge_transition_exact(&spec, 0, &w(&[0]), 1, &w(&[1])).unwrap();
        assert_eq!(p, frac(1, 2));
        let spec = BridgeSpec::new(2, 6, 2).unwrap();
        let x = w(&[1, 3]);
        let end = spec.end();
        assert_eq!(bridge_transition_exact(&spec, 1, &x, 6, &end).unwrap(), BigRational::one());
        assert!(matches!(
            bridge_transition(&spec, 5, &w(&[-5, 1]), 6, &end),
            Err(Error::UnreachableState(_))
        ));
    }

    #[test]
    fn one_step_rows_sum_to_one() {
        let spec = BridgeSpec::new(3, 10, 2).unwrap();
        let counter = BridgeCounter::new(&spec, 1_000_000).unwrap();
        for n in 0..spec.n_star {
            for x in counter.layer_configs(n) {
                let mut s = 0.0;
                for y in counter.layer_configs(n + 1) {
                    s += bridge_transition(&spec, n, x, n + 1, y).unwrap();
                }
                assert!((s - 1.0).abs() < 1e-12, "n={n} x={:?} s={s}", x.positions());
            }
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let spec = BridgeSpec::new(2, 8, 0).unwrap();
        let counter = BridgeCounter::new(&spec, 1_000_000).unwrap();
        let x = spec.start();
        for z in counter.layer_configs(6) {
            let direct = bridge_transition_exact(&spec, 0, &x, 6, z).unwrap();
            let mut composed = BigRational::zero();
            for y in counter.layer_configs(3) {
                composed += bridge_transition_exact(&spec, 0, &x, 3, y).unwrap()
                    * bridge_transition_exact(&spec, 3, y, 6, z).unwrap();
            }
            assert_eq!(direct, composed);
            let float: f64 = counter
                .layer_configs(3)
                .iter()
                .map(|y| bridge_transition(&spec, 0, &x, 3, y).unwrap() * bridge_transition(&spec, 3, y, 6, z).unwrap())
                .sum();
            assert!((float - rat_to_f64(&direct)).abs() < 1e-12);
        }
    }

    #[test]
    fn macmahon_small() {
        assert_eq!(macmahon_count(1, 1), BigInt::from(2));
        assert_eq!(macmahon_count(1, 2), BigInt::from(3));
    }

    #[test]
    fn drift_examples() {
        assert!(conditional_drift_exact(&w(&[5]), 1).unwrap().is_zero());
        assert_eq!(conditional_drift_exact(&w(&[0, 2]), 2).unwrap(), frac(1, 2));
        assert_eq!(conditional_drift_exact(&w(&[0, 2]), 1).unwrap(), frac(-1, 2));
        for m in [4u32, 10, 20] {
            let g = 2i64.pow(m);
            let dr = conditional_drift(&w(&[0, g]), 2).unwrap();
            assert!((dr * g as f64 - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn h_is_harmonic_for_free_walks() {
        for x in [vec![0, 2], vec![-3, 1, 7], vec![0, 2, 4, 10]] {
            let d = x.len();
            let hx = vandermonde(&x);
            let mut acc = BigInt::zero();
            for mask in 0..(1u32 << d) {
                let y: Vec<i64> = (0..d).map(|i| x[i] + if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
                acc += vandermonde(&y);
            }
            assert_eq!(acc, hx * BigInt::from(1u64 << d));
        }
    }

    #[test]
    fn radon_nikodym_examples() {
        let spec = BridgeSpec::new(1, 2, 0).unwrap();
        assert_eq!(radon_nikodym_exact(&spec, 1, &w(&[1])).unwrap(), BigRational::one());
        assert!(matches!(radon_nikodym(&spec, 1, &w(&[0])), Err(Error::Parity(_))));
    }

    #[test]
    fn radon_nikodym_formula_matches_ratio_of_laws() {
        for d in 1..=3usize {
            for ns in 1..=10i64 {
                for xs in (-ns..=ns).filter(|x| (ns + x) % 2 == 0) {
                    let spec = BridgeSpec::new(d, ns, xs).unwrap();
                    let counter = BridgeCounter::new(&spec, 1_000_000).unwrap();
                    for n in [0, ns / 2, ns] {
                        for x in counter.layer_configs(n) {
                            let a = radon_nikodym_exact(&spec, n, x).unwrap();
                            let b = radon_nikodym_ratio_exact(&spec, n, x).unwrap();
                            assert_eq!(a, b, "d={d} ns={ns} xs={xs} n={n} x={:?}", x.positions());
                            let f = radon_nikodym(&spec, n, x).unwrap();
                            assert!((f - rat_to_f64(&a)).abs() <= 1e-10 * f.abs());
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn drift_within_bound(d in 1usize..=4, gaps in proptest::collection::vec(1i64..=50, 3), base in -20i64..20) {
            let mut pos = vec![base];
            for g in gaps.iter().take(d - 1) {
                let last = *pos.last().unwrap();
                pos.push(last + 2 * g);
            }
            let x = w(&pos);
            for k in 1..=d {
                let dr = conditional_drift_exact(&x, k).unwrap();
                let bound = drift_bound(&x, k);
                prop_assert!(dr.clone() <= bound.clone() && -dr <= bound);
            }
        }
    }
}
