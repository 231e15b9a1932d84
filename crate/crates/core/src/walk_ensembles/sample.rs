use rand::Rng as _;

use super::{km_log_det, BridgeSpec, PathEnsembleSample};
use crate::rng::{Rng, SeedRecord};
use crate::{Error, Result};

/// Sequential sampler for the uniform bridge measure. At each step the
/// candidate successors x+δ are weighted by the number of non-intersecting
/// completions q_{n*−n−1}(x+δ, δ(x*)).
#[derive(Debug, Clone)]
pub struct BridgeSampler {
    spec: BridgeSpec,
    end: Vec<i64>,
}

impl BridgeSampler {
    pub fn new(spec: &BridgeSpec) -> Result<Self> {
        spec.ensure_nonempty()?;
        let end = spec.end();
        let q = km_log_det(spec.n_star, spec.start().positions(), end.positions());
        if q.value <= 0.0 {
            return Err(Error::EmptyBridge { d: spec.d, n_star: spec.n_star, x_star: spec.x_star });
        }
        Ok(Self { spec: *spec, end: end.positions().to_vec() })
    }

    pub fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    /// Draws one trajectory from the given stream.
    pub fn sample(&self, record: SeedRecord) -> PathEnsembleSample {
        let mut rng = record.rng();
        let traj = self.sample_flat(&mut rng);
        PathEnsembleSample::from_flat(self.spec, traj, Some(record))
    }

    /// Draws one trajectory as a flat (n*+1)·d array using an existing stream.
    pub fn sample_flat(&self, rng: &mut Rng) -> Vec<i64> {
        let d = self.spec.d;
        let ns = self.spec.n_star;
        let mut traj = Vec::with_capacity((ns as usize + 1) * d);
        let mut x = self.spec.start().positions().to_vec();
        traj.extend_from_slice(&x);
        let mut cands: Vec<Vec<i64>> = Vec::with_capacity(1 << d);
        let mut lw: Vec<f64> = Vec::with_capacity(1 << d);
        for n in 0..ns {
            let rem = ns - n - 1;
            cands.clear();
            lw.clear();
            for mask in 0..(1u32 << d) {
                let y: Vec<i64> = (0..d).map(|i| x[i] + if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
                if !y.windows(2).all(|w| w[0] < w[1]) {
                    continue;
                }
                if y.iter().zip(&self.end).any(|(a, b)| (a - b).abs() > rem) {
                    continue;
                }
                let q = km_log_det(rem, &y, &self.end);
                if q.value > 0.0 {
                    lw.push(q.ln_abs());
                    cands.push(y);
                }
            }
            let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            x = cands.swap_remove(pick);
            traj.extend_from_slice(&x);
        }
        traj
    }
}

/// Samples one bridge trajectory; replayable from `record`.
pub fn sample_bridge(spec: &BridgeSpec, record: SeedRecord) -> Result<PathEnsembleSample> {
    Ok(BridgeSampler::new(spec)?.sample(record))
}

/// A trajectory of the conditioned (never-colliding) free walk.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeWalk {
    pub d: usize,
    pub trajectory: Vec<i64>,
}

impl FreeWalk {
    pub fn row(&self, n: usize) -> &[i64] {
        &self.trajectory[n * self.d..(n + 1) * self.d]
    }

    pub fn steps(&self) -> usize {
        self.trajectory.len() / self.d - 1
    }
}

fn vandermonde_f64(x: &[i64]) -> f64 {
    let mut h = 1.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            h *= (x[j] - x[i]) as f64;
        }
    }
    h
}

/// Samples n steps of the h-transformed walk started at `start`, whose
/// one-step law is 2^{−d} h(x+δ)/h(x).
pub fn sample_free_walk(start: &[i64], n: usize, rng: &mut Rng) -> FreeWalk {
    let d = start.len();
    let mut x = start.to_vec();
    let mut traj = Vec::with_capacity((n + 1) * d);
    traj.extend_from_slice(&x);
    let scale = (1u64 << d) as f64;
    for _ in 0..n {
        let hx = vandermonde_f64(&x);
        let mut u = rng.random::<f64>();
        let mut chosen = None;
        let mut last_valid = None;
        for mask in 0..(1u32 << d) {
            let y: Vec<i64> = (0..d).map(|i| x[i] + if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
            let hy = vandermonde_f64(&y);
            if hy <= 0.0 {
                continue;
            }
            let p = hy / (hx * scale);
            last_valid = Some(y.clone());
            if u < p {
                chosen = Some(y);
                break;
            }
            u -= p;
        }
        x = chosen.or(last_valid).expect("a non-colliding move always exists");
        traj.extend_from_slice(&x);
    }
    FreeWalk { d, trajectory: traj }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk_ensembles::{enumerate_bridges, Budget};
    use std::collections::HashMap;

    fn chi_square_uniformity(spec: &BridgeSpec, samples: usize, seed: u64) -> (f64, usize) {
        let all = enumerate_bridges(spec, &Budget::default()).unwrap();
        let index: HashMap<Vec<i64>, usize> = all
            .iter()
            .enumerate()
            .map(|(i, s)| (s.rows().flatten().copied().collect(), i))
            .collect();
        let sampler = BridgeSampler::new(spec).unwrap();
        let mut rng = crate::rng::stream_rng(seed, 0);
        let mut counts = vec![0usize; all.len()];
        for _ in 0..samples {
            let t = sampler.sample_flat(&mut rng);
            counts[index[&t]] += 1;
        }
        let e = samples as f64 / all.len() as f64;
        let chi2 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        (chi2, all.len() - 1)
    }

    #[test]
    fn sampler_is_uniform_over_bridges() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        for ns in [2, 4] {
            let spec = BridgeSpec::new(2, ns, 0).unwrap();
            let (chi2, dof) = chi_square_uniformity(&spec, 100_000, 11 + ns as u64);
            let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi2);
            assert!(p > 0.001, "n*={ns}: chi2={chi2} dof={dof} p={p}");
        }
    }

    #[test]
    fn single_walker_two_step_bridge() {
        let spec = BridgeSpec::new(1, 2, 0).unwrap();
        let (chi2, dof) = chi_square_uniformity(&spec, 20_000, 5);
        assert_eq!(dof, 1);
        assert!(chi2 < 10.83);
    }

    #[test]
    fn samples_are_valid_and_replayable() {
        let spec = BridgeSpec::new(3, 30, 4).unwrap();
        let rec = SeedRecord::new(42, 3);
        let a = sample_bridge(&spec, rec).unwrap();
        a.validate().unwrap();
        assert_eq!(a, sample_bridge(&spec, rec).unwrap());
        assert!(matches!(
            sample_bridge(&BridgeSpec::new(2, 2, 4).unwrap(), rec),
            Err(Error::EmptyBridge { .. })
        ));
    }

    #[test]
    fn free_walk_never_collides() {
        let mut rng = crate::rng::stream_rng(3, 0);
        let w = sample_free_walk(&[0, 2, 4], 200, &mut rng);
        for n in 0..=200 {
            assert!(w.row(n).windows(2).all(|p| p[0] < p[1]));
        }
    }
}
