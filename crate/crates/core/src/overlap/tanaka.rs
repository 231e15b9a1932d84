use serde::Serialize;

use crate::{Error, Result};

/// Both sides of the discrete Tanaka identity for two ±1 walks A, B:
///
/// Σ_{i=0}^{n} 1{A(i)=B(i)} = |A(n+1)−B(n+1)| − |A(0)−B(0)|
///     − Σ_{i=0}^{n} sgn(A(i)−B(i)) α(i+1) + Σ_{i=0}^{n} sgn(A(i+1)−B(i)) β(i+1)
///
/// with sgn(0) = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TanakaDecomposition {
    pub lhs: i64,
    pub end_gap: i64,
    pub start_gap: i64,
    /// Σ sgn(A(i)−B(i)) α(i+1).
    pub a_sum: i64,
    /// Σ sgn(A(i+1)−B(i)) β(i+1).
    pub b_sum: i64,
}

impl TanakaDecomposition {
    pub fn rhs(&self) -> i64 {
        self.end_gap - self.start_gap - self.a_sum + self.b_sum
    }

    pub fn residual(&self) -> i64 {
        self.lhs - self.rhs()
    }
}

/// `alpha` and `beta` hold α(1), α(2), … and must have at least n+1 entries.
pub fn tanaka_decomposition(alpha: &[i64], beta: &[i64], a0: i64, b0: i64, n: usize) -> Result<TanakaDecomposition> {
    if (a0 + b0).rem_euclid(2) != 0 {
        return Err(Error::Parity(format!("A(0) + B(0) = {} is odd", a0 + b0)));
    }
    if alpha.len() <= n || beta.len() <= n {
        return Err(Error::Domain(format!("need n+1 = {} increments", n + 1)));
    }
    if alpha[..=n].iter().chain(&beta[..=n]).any(|s| s.abs() != 1) {
        return Err(Error::Domain("increments must be ±1".into()));
    }
    let (mut a, mut b) = (a0, b0);
    let mut t = TanakaDecomposition { lhs: 0, end_gap: 0, start_gap: (a0 - b0).abs(), a_sum: 0, b_sum: 0 };
    for i in 0..=n {
        t.lhs += i64::from(a == b);
        t.a_sum += (a - b).signum() * alpha[i];
        let a_next = a + alpha[i];
        t.b_sum += (a_next - b).signum() * beta[i];
        a = a_next;
        b += beta[i];
    }
    t.end_gap = (a - b).abs();
    Ok(t)
}

/// LHS − RHS of the identity; zero for every valid input.
pub fn tanaka_check(alpha: &[i64], beta: &[i64], a0: i64, b0: i64, n: usize) -> Result<i64> {
    tanaka_decomposition(alpha, beta, a0, b0, n).map(|t| t.residual())
}
