use std::f64::consts::PI;

use super::{AlphaFactor, ContinuumEndpoint, CorrelationQuery, SpaceTimePoint};
use crate::numeric::det_lu;
use crate::special_polys::hermite_normalized;
use crate::Result;

/// Heat kernel ρ(t, z) = exp(−z²/2t)/sqrt(2πt).
pub fn heat_density(t: f64, z: f64) -> f64 {
    (-z * z / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Density at (t, z) of one Brownian bridge from (0,0) to (t*, z*).
pub fn brownian_bridge_density(end: &ContinuumEndpoint, p: SpaceTimePoint) -> f64 {
    heat_density(p.t, p.z) * heat_density(end.t_star - p.t, end.z_star - p.z) / heat_density(end.t_star, end.z_star)
}

/// Hermite kernel of d non-intersecting Brownian bridges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumKernel {
    pub end: ContinuumEndpoint,
    pub d: usize,
}

impl ContinuumKernel {
    pub fn new(end: ContinuumEndpoint, d: usize) -> Self {
        Self { end, d }
    }

    /// Kernel for the endpoint z* = 0.
    fn eval_centered(&self, a: SpaceTimePoint, b: SpaceTimePoint) -> Result<f64> {
        let ts = self.end.t_star;
        let aa = AlphaFactor::new(&self.end, a.t)?.value;
        let ab = AlphaFactor::new(&self.end, b.t)?.value;
        let heat = if a.t < b.t { heat_density(b.t - a.t, b.z - a.z) } else { 0.0 };
        let pre = (ts / (2.0 * b.t * (ts - a.t))).sqrt();
        let q = (a.t * (ts - b.t) / ((ts - a.t) * b.t)).sqrt();
        let ea = (-a.z * a.z / (2.0 * (ts - a.t))).exp();
        let eb = (-b.z * b.z / (2.0 * b.t)).exp();
        let mut sum = 0.0;
        let mut qj = 1.0;
        for j in 0..self.d as u32 {
            sum += qj * hermite_normalized(j, a.z * aa) * hermite_normalized(j, b.z * ab);
            qj *= q;
        }
        Ok(-heat + pre * sum * ea * eb)
    }

    /// K((t,z); (t′,z′)). For z* ≠ 0 the centered kernel is evaluated at
    /// positions measured from the line z*t/t* and conjugated by exp(z*(·)/t*).
    pub fn eval(&self, a: SpaceTimePoint, b: SpaceTimePoint) -> Result<f64> {
        let s = self.end.slope();
        let sa = SpaceTimePoint::new(a.t, a.z - s * a.t);
        let sb = SpaceTimePoint::new(b.t, b.z - s * b.t);
        let k0 = self.eval_centered(sa, sb)?;
        Ok(k0 * (s * sb.z - s * sa.z).exp())
    }

    /// Gauge weight g with K^{(N)} → K·g(a)/g(b). The discrete kernel carries
    /// the factor exp(z*²/2t*) of its weights and no line shift, which differs
    /// from the shifted form by conjugation with g(t,z) = exp(2az − 3a²t/2),
    /// a = z*/t*.
    pub fn lattice_gauge(&self, p: SpaceTimePoint) -> f64 {
        let s = self.end.slope();
        (2.0 * s * p.z - 1.5 * s * s * p.t).exp()
    }

    /// The gauge-equivalent kernel that the rescaled discrete kernel
    /// approaches entrywise.
    pub fn eval_lattice_gauge(&self, a: SpaceTimePoint, b: SpaceTimePoint) -> Result<f64> {
        Ok(self.eval(a, b)? * self.lattice_gauge(a) / self.lattice_gauge(b))
    }

    /// ψ_k as det[K(p_i; p_j)]; zero when two points coincide.
    pub fn psi_k(&self, query: &CorrelationQuery) -> Result<f64> {
        for p in &query.points {
            self.end.check_interior(*p)?;
        }
        if query.has_duplicates() {
            return Ok(0.0);
        }
        let k = query.k();
        let mut m = Vec::with_capacity(k * k);
        for a in &query.points {
            for b in &query.points {
                m.push(self.eval(*a, *b)?);
            }
        }
        Ok(det_lu(m, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rel_diff;
    use proptest::prelude::*;

    fn q(points: &[(f64, f64)]) -> CorrelationQuery {
        CorrelationQuery::new(points.iter().map(|&(t, z)| SpaceTimePoint::new(t, z)).collect()).unwrap()
    }

    #[test]
    fn single_bridge_density_at_midpoint() {
        let k = ContinuumKernel::new(ContinuumEndpoint::new(1.0, 0.0).unwrap(), 1);
        let v = k.psi_k(&q(&[(0.5, 0.0)])).unwrap();
        assert!((v - (2.0 / PI).sqrt()).abs() < 1e-14, "{v}");
    }

    #[test]
    fn single_walker_matches_bridge_density() {
        for (ts, zs) in [(1.0, 0.0), (2.0, 0.7), (0.5, -1.3)] {
            let end = ContinuumEndpoint::new(ts, zs).unwrap();
            let k = ContinuumKernel::new(end, 1);
            for i in 1..10 {
                for z in [-2.0, -0.3, 0.0, 0.8, 1.9] {
                    let p = SpaceTimePoint::new(ts * i as f64 / 10.0, z);
                    let v = k.psi_k(&CorrelationQuery::new(vec![p]).unwrap()).unwrap();
                    assert!(rel_diff(v, brownian_bridge_density(&end, p)) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn duplicates_and_endpoints() {
        let k = ContinuumKernel::new(ContinuumEndpoint::new(1.0, 0.2).unwrap(), 2);
        assert_eq!(k.psi_k(&q(&[(0.3, 0.1), (0.3, 0.1)])).unwrap(), 0.0);
        assert!(k.psi_k(&q(&[(0.0, 0.1)])).is_err());
        assert!(k.psi_k(&q(&[(1.0, 0.1)])).is_err());
    }

    #[test]
    fn heat_term_only_forward_in_time() {
        let k = ContinuumKernel::new(ContinuumEndpoint::new(1.0, 0.0).unwrap(), 2);
        let a = SpaceTimePoint::new(0.6, 0.3);
        let at = |t: f64| k.eval(a, SpaceTimePoint::new(t, 0.3)).unwrap();
        // Without the heat term the kernel is continuous through t′ = t.
        assert!((at(0.6) - at(0.6 - 1e-9)).abs() < 1e-6);
        // Just after t the heat term dominates with a large negative value.
        assert!(at(0.6 + 1e-6) < -100.0);
    }

    proptest! {
        #[test]
        fn determinants_are_gauge_invariant(
            zs in proptest::collection::vec(-1.5f64..1.5, 3),
            ts in proptest::collection::vec(0.05f64..0.95, 3),
            zstar in -1.0f64..1.0,
        ) {
            let k = ContinuumKernel::new(ContinuumEndpoint::new(1.0, zstar).unwrap(), 3);
            let pts: Vec<SpaceTimePoint> = ts.iter().zip(&zs).map(|(&t, &z)| SpaceTimePoint::new(t, z)).collect();
            let g = |p: &SpaceTimePoint| (p.z + 0.3 * p.t).exp();
            let mut plain = Vec::new();
            let mut gauged = Vec::new();
            for a in &pts {
                for b in &pts {
                    let v = k.eval(*a, *b).unwrap();
                    plain.push(v);
                    gauged.push(v * g(b) / g(a));
                }
            }
            let d0 = det_lu(plain, 3);
            let d1 = det_lu(gauged, 3);
            prop_assert!((d0 - d1).abs() <= 1e-10 * d0.abs().max(1e-12));
        }

        #[test]
        fn psi_is_symmetric_and_nonnegative(
            zs in proptest::collection::vec(-1.5f64..1.5, 2),
            ts in proptest::collection::vec(0.05f64..0.95, 2),
        ) {
            let k = ContinuumKernel::new(ContinuumEndpoint::new(1.0, 0.4).unwrap(), 2);
            let a = (ts[0], zs[0]);
            let b = (ts[1], zs[1]);
            let v = k.psi_k(&q(&[a, b])).unwrap();
            let w = k.psi_k(&q(&[b, a])).unwrap();
            prop_assert!((v - w).abs() <= 1e-12 * v.abs().max(1e-12));
            prop_assert!(v >= -1e-10);
        }
    }
}
