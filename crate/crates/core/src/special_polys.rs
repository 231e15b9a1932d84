//! Hermite and Hahn polynomials, and the rescaled Hahn family whose limit is
//! the Hermite family.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::numeric::{ln_binom_real, ln_factorial, rat, Kahan};
use crate::walk_ensembles::BridgeSpec;
use crate::{Error, Result};

/// Physicists' Hermite polynomial H_j(y), by the three-term recurrence.
pub fn hermite(j: u32, y: f64) -> f64 {
    let mut prev = 1.0;
    if j == 0 {
        return prev;
    }
    let mut cur = 2.0 * y;
    for k in 1..j {
        let next = 2.0 * y * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// H_j(y) / sqrt(sqrt(π) j! 2^j).
pub fn hermite_normalized(j: u32, y: f64) -> f64 {
    let ln_norm =
        0.5 * (0.5 * std::f64::consts::PI.ln() + ln_factorial(j as u64) + j as f64 * std::f64::consts::LN_2);
    hermite(j, y) * (-ln_norm).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteEval {
    pub j: u32,
    pub y: f64,
    pub value: f64,
    pub normalized_value: f64,
}

impl HermiteEval {
    pub fn new(j: u32, y: f64) -> Self {
        Self { j, y, value: hermite(j, y), normalized_value: hermite_normalized(j, y) }
    }
}

/// Arguments of the Hahn polynomial Q_j(x; alpha, beta, size).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HahnParams {
    pub j: u32,
    pub x: f64,
    pub alpha: f64,
    pub beta: f64,
    pub size: f64,
}

/// Hahn polynomial as the terminating series
/// Σ_m (−j)_m (j+α+β+1)_m (−x)_m / ((α+1)_m (−size)_m m!), summed with
/// compensation. The series stops as soon as a numerator factor vanishes.
pub fn hahn(p: HahnParams) -> Result<f64> {
    let j = p.j as f64;
    let mut term = 1.0;
    let mut sum = Kahan::default();
    sum.add(1.0);
    for m in 1..=p.j {
        let k = (m - 1) as f64;
        let num = (-j + k) * (j + p.alpha + p.beta + 1.0 + k) * (-p.x + k);
        if num == 0.0 {
            break;
        }
        let den = (p.alpha + 1.0 + k) * (-p.size + k) * m as f64;
        if den == 0.0 {
            return Err(Error::Pole { term: m as usize });
        }
        term *= num / den;
        sum.add(term);
    }
    Ok(sum.value())
}

/// Exact-rational evaluation of the same terminating series.
pub fn hahn_exact(
    j: u32,
    x: &BigRational,
    alpha: &BigRational,
    beta: &BigRational,
    size: &BigRational,
) -> Result<BigRational> {
    let jr = rat(j as i64);
    let one = BigRational::one();
    let mut term = BigRational::one();
    let mut sum = BigRational::one();
    for m in 1..=j {
        let k = rat((m - 1) as i64);
        let num = (&k - &jr) * (&jr + alpha + beta + &one + &k) * (&k - x);
        if num.is_zero() {
            break;
        }
        let den = (alpha + &one + &k) * (&k - size) * rat(m as i64);
        if den.is_zero() {
            return Err(Error::Pole { term: m as usize });
        }
        term = term * num / den;
        sum += &term;
    }
    Ok(sum)
}

/// The integer Hahn arguments (x, alpha, beta, size) for P_j or P̃_j.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeHahnArgs {
    pub x: i64,
    pub alpha: i64,
    pub beta: i64,
    pub size: i64,
}

impl LatticeHahnArgs {
    pub fn to_params(self, j: u32) -> HahnParams {
        HahnParams {
            j,
            x: self.x as f64,
            alpha: self.alpha as f64,
            beta: self.beta as f64,
            size: self.size as f64,
        }
    }

    pub fn eval_exact(self, j: u32) -> Result<BigRational> {
        let r = |v: i64| BigRational::from_integer(BigInt::from(v));
        hahn_exact(j, &r(self.x), &r(self.alpha), &r(self.beta), &r(self.size))
    }
}

fn check_point(n: i64, x: i64, spec: &BridgeSpec) -> Result<()> {
    if (n + x).rem_euclid(2) != 0 {
        return Err(Error::Parity(format!("n + x must be even, got n={n}, x={x}")));
    }
    if n < 0 || n > spec.n_star {
        return Err(Error::Domain(format!("time {n} outside [0, {}]", spec.n_star)));
    }
    Ok(())
}

/// Arguments of the forward family P_j at lattice point (n, x). The size
/// parameter is n + d − 1, local to the evaluation time.
pub fn hahn_p_args(n: i64, x: i64, spec: &BridgeSpec) -> Result<LatticeHahnArgs> {
    check_point(n, x, spec)?;
    let d = spec.d as i64;
    Ok(LatticeHahnArgs {
        x: (n + x) / 2,
        alpha: -(spec.n_star + spec.x_star) / 2 - d,
        beta: -(spec.n_star - spec.x_star) / 2 - d,
        size: n + d - 1,
    })
}

/// Arguments of the reflected family P̃_j at lattice point (n, x).
pub fn hahn_p_tilde_args(n: i64, x: i64, spec: &BridgeSpec) -> Result<LatticeHahnArgs> {
    check_point(n, x, spec)?;
    let d = spec.d as i64;
    let rem = spec.n_star - n;
    Ok(LatticeHahnArgs {
        x: (rem + x - spec.x_star) / 2,
        alpha: -(spec.n_star - spec.x_star) / 2 - d,
        beta: -(spec.n_star + spec.x_star) / 2 - d,
        size: rem + d - 1,
    })
}

pub fn hahn_p(j: u32, n: i64, x: i64, spec: &BridgeSpec) -> Result<f64> {
    hahn(hahn_p_args(n, x, spec)?.to_params(j))
}

pub fn hahn_p_tilde(j: u32, n: i64, x: i64, spec: &BridgeSpec) -> Result<f64> {
    hahn(hahn_p_tilde_args(n, x, spec)?.to_params(j))
}

/// Rescaled Hahn polynomial G_j^{(M)}(y), which tends to H_j(y) as M → ∞.
///
/// Parameters: p_M = p + c/√M, argument p_M·M + y·sqrt(2p(1−p)M(1+1/γ)),
/// alpha = γ p_M M, beta = γ (1−p_M) M (bounded corrections set to zero).
pub fn rescaled_hahn_g(j: u32, y: f64, size: f64, p: f64, c: f64, gamma: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p = {p} not in (0,1)")));
    }
    if gamma == 0.0 || 1.0 + 1.0 / gamma <= 0.0 {
        return Err(Error::Domain(format!("gamma = {gamma} outside regime 1 + 1/gamma > 0")));
    }
    if size < j as f64 {
        return Err(Error::Domain(format!("size {size} < degree {j}")));
    }
    let ratio = gamma / (1.0 + gamma);
    let base = (p / (1.0 - p)) * ratio;
    if base < 0.0 && j % 2 == 1 {
        return Err(Error::Domain("negative square-root argument".into()));
    }
    let jf = j as f64;
    let ln_pref = 0.5
        * (ln_binom_real(size, j as u64)
            + jf * std::f64::consts::LN_2
            + ln_factorial(j as u64)
            + jf * base.abs().ln());
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    let p_m = p + c / size.sqrt();
    let arg = p_m * size + y * (2.0 * p * (1.0 - p) * size * (1.0 + 1.0 / gamma)).sqrt();
    let q = hahn(HahnParams {
        j,
        x: arg,
        alpha: gamma * p_m * size,
        beta: gamma * (1.0 - p_m) * size,
        size,
    })?;
    if j == 0 {
        return Ok(q);
    }
    Ok(sign * ln_pref.exp() * q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rat_to_f64;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn hermite_low_degrees() {
        assert_eq!(hermite(0, 3.7), 1.0);
        assert_eq!(hermite(2, 1.0), 2.0);
        assert!(close(hermite(3, 0.5), -5.0, 1e-15));
    }

    #[test]
    fn hermite_normalized_values() {
        assert!(close(hermite_normalized(0, 0.0), 0.751_125_544_464_942_5, 1e-14));
        assert!(close(hermite_normalized(1, 1.0), 2.0 / (2.0 * std::f64::consts::PI.sqrt()).sqrt(), 1e-14));
        let expect = -2.0 / (8.0 * std::f64::consts::PI.sqrt()).sqrt();
        assert!(close(hermite_normalized(2, 0.0), expect, 1e-14));
        let e = HermiteEval::new(2, 0.0);
        assert_eq!(e.value, -2.0);
    }

    #[test]
    fn hahn_degree_zero_and_one() {
        let p = HahnParams { j: 0, x: 3.3, alpha: -1.5, beta: 2.0, size: 7.0 };
        assert_eq!(hahn(p).unwrap(), 1.0);
        let (x, a, b, m) = (2.0, -4.0, -3.0, 5.0);
        let q1 = hahn(HahnParams { j: 1, x, alpha: a, beta: b, size: m }).unwrap();
        assert!(close(q1, 1.0 - (a + b + 2.0) * x / ((a + 1.0) * m), 1e-15));
    }

    #[test]
    fn hahn_at_zero_is_one() {
        for j in 0..8 {
            let p = HahnParams { j, x: 0.0, alpha: -9.0, beta: -11.0, size: 9.0 };
            assert_eq!(hahn(p).unwrap(), 1.0);
        }
    }

    #[test]
    fn hahn_pole_detected() {
        // (alpha+1)_1 = 0 with a nonvanishing numerator.
        let p = HahnParams { j: 2, x: 1.0, alpha: -1.0, beta: 3.0, size: 5.0 };
        assert_eq!(hahn(p), Err(Error::Pole { term: 1 }));
    }

    #[test]
    fn lattice_arguments() {
        let spec = BridgeSpec::new(2, 4, 0).unwrap();
        let a = hahn_p_args(2, 0, &spec).unwrap();
        assert_eq!(a, LatticeHahnArgs { x: 1, alpha: -4, beta: -4, size: 3 });
        let exact = a.eval_exact(1).unwrap();
        // 1 − (α+β+2)·x/((α+1)·M) = 1 − (−6)/(−3·3) = 1/3
        assert_eq!(exact, BigRational::new(1.into(), 3.into()));
        assert!(close(hahn_p(1, 2, 0, &spec).unwrap(), 1.0 / 3.0, 1e-15));
        let t = hahn_p_tilde_args(0, 0, &spec).unwrap();
        assert_eq!(t.x, (spec.n_star - spec.x_star) / 2);
        assert!(matches!(hahn_p(1, 2, 1, &spec), Err(Error::Parity(_))));
        assert_eq!(hahn_p(0, 3, 1, &spec).unwrap(), 1.0);
    }

    #[test]
    fn rescaled_g_degree_zero_and_domain() {
        assert_eq!(rescaled_hahn_g(0, 0.7, 1e3, 0.5, 0.3, -2.0).unwrap(), 1.0);
        assert!(matches!(rescaled_hahn_g(1, 0.0, 1e3, 0.5, 0.0, -0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn rescaled_g_near_hermite() {
        let g = rescaled_hahn_g(2, 0.3, 1e4, 0.5, 0.0, -2.0).unwrap();
        assert!((g - hermite(2, 0.3)).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn hermite_recurrence_residual(j in 1u32..20, y in -10.0f64..10.0) {
            let r = hermite(j + 1, y) - 2.0 * y * hermite(j, y) + 2.0 * j as f64 * hermite(j - 1, y);
            prop_assert!(r.abs() <= 1e-9 * hermite(j + 1, y).abs().max(1.0));
        }

        #[test]
        fn hahn_float_matches_rational(
            j in 0u32..=8,
            x in 0i64..=50,
            alpha in -50i64..=50,
            beta in -50i64..=50,
            size in 8i64..=50,
        ) {
            let r = |v: i64| rat(v);
            let exact = hahn_exact(j, &r(x), &r(alpha), &r(beta), &r(size));
            let float = hahn(HahnParams { j, x: x as f64, alpha: alpha as f64, beta: beta as f64, size: size as f64 });
            match (exact, float) {
                (Ok(e), Ok(f)) => {
                    let e = rat_to_f64(&e);
                    // Cancellation scale: the largest partial term bounds the absolute error.
                    let scale = hahn_term_scale(j, x as f64, alpha as f64, beta as f64, size as f64);
                    prop_assert!((e - f).abs() <= 1e-12 * scale.max(e.abs()), "{e} vs {f}");
                }
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "mismatch {:?} {:?}", a, b),
            }
        }
    }

    fn hahn_term_scale(j: u32, x: f64, a: f64, b: f64, m: f64) -> f64 {
        let jf = j as f64;
        let mut term = 1.0f64;
        let mut best = 1.0f64;
        for mm in 1..=j {
            let k = (mm - 1) as f64;
            let num = (-jf + k) * (jf + a + b + 1.0 + k) * (-x + k);
            let den = (a + 1.0 + k) * (-m + k) * mm as f64;
            if num == 0.0 || den == 0.0 {
                break;
            }
            term *= num / den;
            best = best.max(term.abs());
        }
        best
    }
}
