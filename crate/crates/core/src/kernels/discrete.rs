use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{ContinuumEndpoint, CorrelationQuery, LatticeRounding};
use crate::numeric::{binom_big, det_lu, det_rational, ln_binom, ln_factorial, poch_rat, rat};
use crate::special_polys::{hahn, hahn_p_args, hahn_p_tilde_args};
use crate::walk_ensembles::BridgeSpec;
use crate::{Error, Result};

/// A lattice site (time n, position x) with n + x even.
pub type LatticePoint = (i64, i64);

/// Hahn kernel of d non-intersecting walk bridges from δ(0) to δ(x*) in n*
/// steps. `weight_scale` multiplies every F_j and exists only so tests can
/// check that a perturbed kernel is caught; it is 1 otherwise.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    spec: BridgeSpec,
    weight_scale: BigRational,
    ln_weights: Vec<f64>,
    weights: Vec<BigRational>,
}

impl DiscreteKernel {
    pub fn new(spec: BridgeSpec) -> Result<Self> {
        Self::with_weight_scale(spec, BigRational::one())
    }

    pub fn with_weight_scale(spec: BridgeSpec, weight_scale: BigRational) -> Result<Self> {
        spec.ensure_nonempty()?;
        let d = spec.d as i64;
        let (ns, xs) = (spec.n_star, spec.x_star);
        let scale_f = crate::numeric::rat_to_f64(&weight_scale);
        let mut ln_weights = Vec::with_capacity(spec.d);
        let mut weights = Vec::with_capacity(spec.d);
        let norm_top = ns + 2 * d - 2;
        let norm_bot = (ns + xs) / 2 + d - 1;
        for j in 0..d {
            let lead = ns + 2 * d - 2 * j - 1;
            let a = ns + 2 * d - j;
            // (a)_{j−1} = (a+j−2)!/(a−1)!, which is 1/(a−1) at j = 0.
            let ln_poch = ln_factorial((a + j - 2) as u64) - ln_factorial((a - 1) as u64);
            let ln_norm = ln_binom(norm_top, norm_bot).expect("nonempty bridge has a positive normalizer");
            ln_weights.push((lead as f64).ln() + ln_poch - ln_factorial(j as u64) - ln_norm + scale_f.ln());
            let w = rat(lead) * poch_rat(&rat(a), j - 1)
                / BigRational::from_integer(crate::numeric::factorial_big(j as u64))
                / BigRational::from_integer(binom_big(norm_top, norm_bot))
                * &weight_scale;
            weights.push(w);
        }
        Ok(Self { spec, weight_scale, ln_weights, weights })
    }

    pub fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    pub fn weight_scale(&self) -> &BigRational {
        &self.weight_scale
    }

    /// The weights F_j, j = 0..d−1, in exact arithmetic.
    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    fn check(&self, p: LatticePoint) -> Result<()> {
        if (p.0 + p.1).rem_euclid(2) != 0 {
            return Err(Error::Parity(format!("n + x must be even at {p:?}")));
        }
        if p.0 < 0 || p.0 > self.spec.n_star {
            return Err(Error::Domain(format!("time {} outside [0, {}]", p.0, self.spec.n_star)));
        }
        Ok(())
    }

    /// K_RW((n,x); (n′,x′)) in double precision. Every term is assembled in
    /// log space with its sign and exponentiated last.
    pub fn eval(&self, a: LatticePoint, b: LatticePoint) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let (n, x) = a;
        let (np, xp) = b;
        let d = self.spec.d as i64;
        let (ns, xs) = (self.spec.n_star, self.spec.x_star);
        let gauge = (n - np) as f64 * std::f64::consts::LN_2;
        let mut total = 0.0;
        if n < np {
            if let Some(lb) = ln_binom(np - n, (np - n + xp - x) / 2) {
                total -= (gauge + lb).exp();
            }
        }
        let (Some(lb1), Some(lb2)) = (ln_binom(np + d - 1, (np + xp) / 2), ln_binom(ns - n + d - 1, (ns - n + x - xs) / 2))
        else {
            return Ok(total);
        };
        let pa = hahn_p_args(np, xp, &self.spec)?;
        let ta = hahn_p_tilde_args(n, x, &self.spec)?;
        for j in 0..self.spec.d {
            let p = hahn(pa.to_params(j as u32))?;
            let pt = hahn(ta.to_params(j as u32))?;
            let prod = p * pt;
            if prod == 0.0 {
                continue;
            }
            let ln = self.ln_weights[j] + lb1 + lb2 + gauge + prod.abs().ln();
            total += prod.signum() * ln.exp();
        }
        Ok(total)
    }

    /// The same kernel in exact rational arithmetic.
    pub fn eval_exact(&self, a: LatticePoint, b: LatticePoint) -> Result<BigRational> {
        self.check(a)?;
        self.check(b)?;
        let (n, x) = a;
        let (np, xp) = b;
        let d = self.spec.d as i64;
        let (ns, xs) = (self.spec.n_star, self.spec.x_star);
        let two_pow = |e: i64| BigRational::from_integer(BigInt::from(2).pow(e.unsigned_abs() as u32));
        // 2^{n−n′}
        let gauge = if n >= np { two_pow(n - np) } else { two_pow(np - n).recip() };
        let mut total = BigRational::zero();
        if n < np {
            total -= BigRational::from_integer(binom_big(np - n, (np - n + xp - x) / 2)) * &gauge;
        }
        let b1 = binom_big(np + d - 1, (np + xp) / 2);
        let b2 = binom_big(ns - n + d - 1, (ns - n + x - xs) / 2);
        if b1.is_zero() || b2.is_zero() {
            return Ok(total);
        }
        let outer = BigRational::from_integer(b1 * b2) * gauge;
        let pa = hahn_p_args(np, xp, &self.spec)?;
        let ta = hahn_p_tilde_args(n, x, &self.spec)?;
        for j in 0..self.spec.d {
            let p = pa.eval_exact(j as u32)?;
            let pt = ta.eval_exact(j as u32)?;
            total += &self.weights[j] * p * pt * &outer;
        }
        Ok(total)
    }

    /// det[K_RW(p_i; p_j)]: the probability that every listed site is occupied.
    pub fn det(&self, points: &[LatticePoint]) -> Result<f64> {
        if has_duplicates(points) {
            return Ok(0.0);
        }
        let k = points.len();
        let mut m = Vec::with_capacity(k * k);
        for a in points {
            for b in points {
                m.push(self.eval(*a, *b)?);
            }
        }
        Ok(det_lu(m, k))
    }

    pub fn det_exact(&self, points: &[LatticePoint]) -> Result<BigRational> {
        if has_duplicates(points) {
            return Ok(BigRational::zero());
        }
        let k = points.len();
        let mut m = Vec::with_capacity(k * k);
        for a in points {
            for b in points {
                m.push(self.eval_exact(*a, *b)?);
            }
        }
        Ok(det_rational(m, k))
    }
}

fn has_duplicates(points: &[LatticePoint]) -> bool {
    (0..points.len()).any(|i| (i + 1..points.len()).any(|j| points[i] == points[j]))
}

/// Occupation probability of the listed lattice sites, via the kernel.
pub fn lattice_psi(spec: &BridgeSpec, points: &[LatticePoint]) -> Result<f64> {
    DiscreteKernel::new(*spec)?.det(points)
}

/// ψ_k^{(N)} = (√N/2)^k · P(all rounded sites occupied), as a kernel determinant.
pub fn rescaled_psi_k(n_scale: u64, end: ContinuumEndpoint, d: usize, query: &CorrelationQuery) -> Result<f64> {
    let r = LatticeRounding::new(n_scale, end)?;
    let kernel = DiscreteKernel::new(r.spec(d)?)?;
    let pts: Vec<LatticePoint> = query.points.iter().map(|p| r.round(*p)).collect();
    for p in &pts {
        if p.0 < 0 || p.0 > r.n_star {
            return Err(Error::Domain(format!("rounded time {} outside [0, {}]", p.0, r.n_star)));
        }
    }
    Ok(r.density_factor().powi(query.k() as i32) * kernel.det(&pts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::SpaceTimePoint;
    use crate::numeric::{binom_f64, rel_diff};
    use crate::walk_ensembles::BridgeCounter;

    fn sites(d: usize, ns: i64) -> Vec<LatticePoint> {
        let mut out = Vec::new();
        for n in 1..ns {
            let lo = -(n.min(ns)) - 1;
            let hi = n + 2 * d as i64;
            for x in lo..=hi {
                if (x + n).rem_euclid(2) == 0 {
                    out.push((n, x));
                }
            }
        }
        out
    }

    #[test]
    fn one_point_function_matches_enumeration_exactly() {
        for (d, ns, xs) in [(1, 6, 0), (1, 7, 1), (2, 8, 0), (2, 7, -1), (3, 6, 2)] {
            let spec = BridgeSpec::new(d, ns, xs).unwrap();
            let c = BridgeCounter::new(&spec, 1 << 20).unwrap();
            let k = DiscreteKernel::new(spec).unwrap();
            for p in sites(d, ns) {
                assert_eq!(k.det_exact(&[p]).unwrap(), c.probability(&[p]), "d={d} n*={ns} x*={xs} p={p:?}");
            }
        }
    }

    #[test]
    fn two_point_function_matches_enumeration_exactly() {
        let spec = BridgeSpec::new(2, 6, 0).unwrap();
        let c = BridgeCounter::new(&spec, 1 << 20).unwrap();
        let k = DiscreteKernel::new(spec).unwrap();
        let s = sites(2, 6);
        for a in &s {
            for b in s.iter().filter(|b| *b != a) {
                let exact = k.det_exact(&[*a, *b]).unwrap();
                assert_eq!(exact, c.probability(&[*a, *b]), "{a:?} {b:?}");
                let fl = k.det(&[*a, *b]).unwrap();
                let ex = crate::numeric::rat_to_f64(&exact);
                assert!((fl - ex).abs() <= 1e-12 * ex.abs().max(1e-3), "{a:?} {b:?} {fl} {ex}");
            }
        }
    }

    #[test]
    fn midpoint_of_eight_step_pair() {
        let spec = BridgeSpec::new(2, 8, 0).unwrap();
        let k = DiscreteKernel::new(spec).unwrap();
        let c = BridgeCounter::new(&spec, 1 << 20).unwrap();
        assert_eq!(k.det_exact(&[(4, 0)]).unwrap(), c.probability(&[(4, 0)]));
    }

    #[test]
    fn single_walk_binomial_oracle() {
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        let q = CorrelationQuery::new(vec![SpaceTimePoint::new(0.5, 0.0)]).unwrap();
        let v = rescaled_psi_k(100, end, 1, &q).unwrap();
        let p = binom_f64(50, 25).powi(2) / binom_f64(100, 50);
        assert!(rel_diff(v, 5.0 * p) < 1e-12, "{v}");
    }

    #[test]
    fn same_cell_gives_zero() {
        let end = ContinuumEndpoint::new(1.0, 0.0).unwrap();
        let q = CorrelationQuery::new(vec![SpaceTimePoint::new(0.5, 0.01), SpaceTimePoint::new(0.501, 0.02)]).unwrap();
        assert_eq!(rescaled_psi_k(100, end, 2, &q).unwrap(), 0.0);
    }

    #[test]
    fn particle_counting() {
        for (d, ns) in [(1, 6), (2, 6), (3, 6)] {
            let spec = BridgeSpec::new(d, ns, 0).unwrap();
            let k = DiscreteKernel::new(spec).unwrap();
            for n in 1..ns {
                let xs: Vec<i64> = (-ns - 2..=ns + 2 * d as i64).filter(|x| (x + n).rem_euclid(2) == 0).collect();
                let s: BigRational = xs.iter().map(|&x| k.det_exact(&[(n, x)]).unwrap()).sum();
                assert_eq!(s, rat(d as i64));
                let m = n + 1;
                let ys: Vec<i64> = (-ns - 2..=ns + 2 * d as i64).filter(|x| (x + m).rem_euclid(2) == 0).collect();
                let mut s2 = BigRational::zero();
                for &x in &xs {
                    for &y in &ys {
                        s2 += k.det_exact(&[(n, x), (m, y)]).unwrap();
                    }
                }
                assert_eq!(s2, rat((d * d) as i64));
            }
        }
    }

    #[test]
    fn perturbed_weights_break_the_oracle() {
        let spec = BridgeSpec::new(2, 6, 0).unwrap();
        let c = BridgeCounter::new(&spec, 1 << 20).unwrap();
        let k = DiscreteKernel::with_weight_scale(spec, BigRational::new(101.into(), 100.into())).unwrap();
        assert_ne!(k.det_exact(&[(3, 1)]).unwrap(), c.probability(&[(3, 1)]));
    }

    #[test]
    fn parity_is_checked() {
        let k = DiscreteKernel::new(BridgeSpec::new(2, 6, 0).unwrap()).unwrap();
        assert!(matches!(k.eval((1, 0), (2, 0)), Err(Error::Parity(_))));
    }
}
