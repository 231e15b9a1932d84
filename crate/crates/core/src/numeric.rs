//! Shared numerical helpers: log-factorials, binomials, Pochhammer symbols,
//! determinants in three arithmetics, and small statistics utilities.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

const LN_FACT_TABLE: usize = 1 << 16;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for i in 1..LN_FACT_TABLE {
            acc += (i as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// ln(n!) for nonnegative integer n.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACT_TABLE {
        ln_fact_table()[n as usize]
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// ln binom(n, k) with the convention that the binomial vanishes unless
/// 0 ≤ k ≤ n; `None` encodes the zero.
pub fn ln_binom(n: i64, k: i64) -> Option<f64> {
    if n < 0 || k < 0 || k > n {
        return None;
    }
    Some(ln_factorial(n as u64) - ln_factorial(k as u64) - ln_factorial((n - k) as u64))
}

/// binom(n, k) as f64 (zero outside 0 ≤ k ≤ n).
pub fn binom_f64(n: i64, k: i64) -> f64 {
    ln_binom(n, k).map_or(0.0, f64::exp)
}

/// ln binom for real upper argument, via log-gamma.
pub fn ln_binom_real(m: f64, j: u64) -> f64 {
    ln_gamma(m + 1.0) - ln_factorial(j) - ln_gamma(m - j as f64 + 1.0)
}

/// Exact binomial coefficient, zero outside 0 ≤ k ≤ n.
pub fn binom_big(n: i64, k: i64) -> BigInt {
    if n < 0 || k < 0 || k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc *= BigInt::from(n - i);
        acc /= BigInt::from(i + 1);
    }
    acc
}

pub fn factorial_big(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Rising factorial (a)_m. Negative m = −1 follows (a)_{−1} = 1/(a−1).
pub fn poch(a: f64, m: i64) -> f64 {
    match m {
        m if m >= 0 => (0..m).map(|i| a + i as f64).product(),
        -1 => 1.0 / (a - 1.0),
        _ => {
            // (a)_{-k} = 1 / ((a-1)(a-2)...(a-k))
            1.0 / (1..=(-m)).map(|i| a - i as f64).product::<f64>()
        }
    }
}

pub fn poch_rat(a: &BigRational, m: i64) -> BigRational {
    if m >= 0 {
        let mut acc = BigRational::one();
        for i in 0..m {
            acc *= a + BigRational::from_integer(BigInt::from(i));
        }
        acc
    } else {
        let mut acc = BigRational::one();
        for i in 1..=(-m) {
            acc *= a - BigRational::from_integer(BigInt::from(i));
        }
        acc.recip()
    }
}

pub fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    // Scale to keep both parts representable.
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            let nb = r.numer().bits() as i64;
            let db = r.denom().bits() as i64;
            let shift = (nb.max(db) - 900).max(0) as u64;
            let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (r.denom() >> shift).to_f64().unwrap_or(f64::INFINITY);
            n / d
        }
    }
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Determinant of a row-major n×n matrix by LU with partial pivoting.
pub fn det_lu(mut a: Vec<f64>, n: usize) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for c in col + 1..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
            }
        }
    }
    det
}

/// A determinant held as `value · exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledDet {
    pub value: f64,
    pub log_scale: f64,
}

impl ScaledDet {
    pub fn to_f64(self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            self.value * self.log_scale.exp()
        }
    }

    /// Natural log of |det|; −∞ for zero.
    pub fn ln_abs(self) -> f64 {
        if self.value == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.value.abs().ln() + self.log_scale
        }
    }
}

/// Determinant of a matrix of nonnegative entries given by their logs
/// (−∞ for zero). Each row is divided by its maximum before LU, and the
/// extracted factors are carried in `log_scale`.
pub fn det_from_logs(logs: &[f64], n: usize) -> ScaledDet {
    let mut a = vec![0.0; n * n];
    let mut log_scale = 0.0;
    for r in 0..n {
        let row = &logs[r * n..(r + 1) * n];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return ScaledDet { value: 0.0, log_scale: 0.0 };
        }
        log_scale += m;
        for c in 0..n {
            a[r * n + c] = (row[c] - m).exp();
        }
    }
    ScaledDet { value: det_lu(a, n), log_scale }
}

/// Row-max scaled determinant of a general real matrix.
pub fn det_row_scaled(mut a: Vec<f64>, n: usize) -> ScaledDet {
    let mut log_scale = 0.0;
    for r in 0..n {
        let m = a[r * n..(r + 1) * n].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if m == 0.0 {
            return ScaledDet { value: 0.0, log_scale: 0.0 };
        }
        log_scale += m.ln();
        for c in 0..n {
            a[r * n + c] /= m;
        }
    }
    ScaledDet { value: det_lu(a, n), log_scale }
}

/// Clamp a scaled determinant that represents a probability. Tiny negative
/// values (relative to the row-scale product) become 0.
pub fn clamp_probability(d: ScaledDet) -> crate::Result<f64> {
    if d.value >= 0.0 {
        return Ok(d.to_f64());
    }
    let tol = 1e-13;
    if d.value.abs() < tol {
        Ok(0.0)
    } else {
        Err(crate::Error::NegativeProbability { value: d.to_f64(), tol: tol * d.log_scale.exp() })
    }
}

/// Exact determinant by fraction-preserving Gaussian elimination.
pub fn det_rational(mut a: Vec<BigRational>, n: usize) -> BigRational {
    let mut det = BigRational::one();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r * n + col].is_zero());
        let Some(piv) = piv else {
            return BigRational::zero();
        };
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            det = -det;
        }
        let p = a[col * n + col].clone();
        det *= &p;
        for r in col + 1..n {
            if a[r * n + col].is_zero() {
                continue;
            }
            let f = &a[r * n + col] / &p;
            for c in col + 1..n {
                let delta = &f * &a[col * n + c];
                a[r * n + c] -= delta;
            }
        }
    }
    det
}

/// Relative difference |a−b| / max(|a|,|b|), zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

pub fn is_nonneg_rat(r: &BigRational) -> bool {
    !r.is_negative()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Least-squares slope of ys against xs.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Slope of log(err) against log(scale).
pub fn loglog_slope(scales: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    ls_slope(&xs, &ys)
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Histogram with Freedman–Diaconis bin width.
pub fn histogram_fd(xs: &[f64]) -> Histogram {
    if xs.is_empty() {
        return Histogram { edges: vec![], counts: vec![] };
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    let iqr = q(0.75) - q(0.25);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    let bins = if width > 0.0 && hi > lo {
        (((hi - lo) / width).ceil() as usize).clamp(1, 1000)
    } else {
        1
    };
    let w = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for x in &v {
        let i = (((x - lo) / w) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram { edges, counts }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials_agree() {
        for n in 0..40 {
            for k in -1..=n + 1 {
                let exact = rat_to_f64(&BigRational::from_integer(binom_big(n, k)));
                assert!(rel_diff(exact, binom_f64(n, k)) < 1e-12, "{n} {k}");
            }
        }
    }

    #[test]
    fn poch_negative_one() {
        assert_eq!(poch(5.0, -1), 0.25);
        assert_eq!(poch_rat(&rat(5), -1), BigRational::new(1.into(), 4.into()));
        assert_eq!(poch(3.0, 3), 60.0);
    }

    #[test]
    fn determinants_agree() {
        let m = vec![2.0, -1.0, 0.5, 3.0, 4.0, 1.0, -2.0, 0.0, 7.0];
        let r: Vec<BigRational> = [4, -2, 1, 6, 8, 2, -4, 0, 14]
            .iter()
            .map(|&v| BigRational::new(v.into(), 2.into()))
            .collect();
        let exact = rat_to_f64(&det_rational(r, 3));
        assert!(rel_diff(det_lu(m.clone(), 3), exact) < 1e-14);
        assert!(rel_diff(det_row_scaled(m, 3).to_f64(), exact) < 1e-14);
    }

    #[test]
    fn log_det_matches_direct() {
        let m = [0.3f64, 0.1, 0.2, 0.5];
        let logs: Vec<f64> = m.iter().map(|v| v.ln()).collect();
        let d = det_from_logs(&logs, 2);
        assert!((d.to_f64() - (0.15 - 0.02)).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let s = [1e2, 1e3, 1e4];
        let e: Vec<f64> = s.iter().map(|m: &f64| 3.0 * m.powf(-0.5)).collect();
        assert!((loglog_slope(&s, &e) + 0.5).abs() < 1e-12);
    }
}
