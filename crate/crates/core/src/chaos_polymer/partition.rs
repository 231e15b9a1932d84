use serde::Serialize;

use super::DisorderField;
use crate::numeric::mean_se;
use crate::rng::SeedRecord;
use crate::walk_ensembles::{visit_bridges, BridgeSampler, BridgeSpec, Budget, PathEnsembleSample};
use crate::{Error, Result};

/// H = Σ_j Σ_{n=1}^{n*−1} ω(n, X_j(n)); the endpoints are excluded.
pub fn energy(sample: &PathEnsembleSample, field: &DisorderField) -> f64 {
    let ns = sample.steps() as usize;
    (1..ns).map(|n| sample.row(n).iter().map(|&x| field.value(n as i64, x)).sum::<f64>()).sum()
}

pub(crate) fn energy_flat(traj: &[i64], d: usize, field: &DisorderField) -> f64 {
    let steps = traj.len() / d - 1;
    let mut h = 0.0;
    for n in 1..steps {
        for &x in &traj[n * d..(n + 1) * d] {
            h += field.value(n as i64, x);
        }
    }
    h
}

/// Z = E[exp(βH)] under the uniform bridge measure, by exhaustive listing.
pub fn partition_exact(spec: &BridgeSpec, field: &DisorderField, beta: f64, budget: &Budget) -> Result<f64> {
    spec.ensure_nonempty()?;
    let mut energies = Vec::new();
    visit_bridges(spec, budget, |s| energies.push(beta * energy(s, field)))?;
    let m = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = energies.iter().map(|e| (e - m).exp()).sum();
    Ok(m.exp() * s / energies.len() as f64)
}

/// E[exp(Σ_{sites}(βω − shift))] under the uniform bridge measure by a
/// transfer recursion over configurations, for d ≤ 2.
///
/// Free walkers step with probability 2^{−d} per move and die on collision;
/// the weighted mass reaching the endpoint over the unweighted mass is the
/// bridge average. With `window_sd = Some(c)` the walkers are confined to
/// c bridge standard deviations around the line to x*, which conditions the
/// average on staying inside; `None` keeps every reachable site.
pub fn partition_transfer(
    spec: &BridgeSpec,
    field: &DisorderField,
    beta: f64,
    shift: f64,
    window_sd: Option<f64>,
) -> Result<f64> {
    spec.ensure_nonempty()?;
    if spec.d > 2 {
        return Err(Error::Domain(format!("transfer recursion supports d <= 2, got {}", spec.d)));
    }
    let d = spec.d;
    let (ns, xs) = (spec.n_star, spec.x_star);
    let gap = 2 * (d as i64 - 1);
    // Window for the lowest walker; the top one is offset by `gap`.
    let range = |n: i64| -> (i64, i64) {
        let mut lo = (-n).max(xs - (ns - n));
        let mut hi = n.min(xs + (ns - n));
        if let Some(c) = window_sd {
            let sd = ((n * (ns - n)) as f64 / ns as f64).sqrt();
            let mid = xs as f64 * n as f64 / ns as f64;
            let w = c * sd + 2.0 * gap as f64 + 2.0;
            lo = lo.max((mid - w).floor() as i64);
            hi = hi.min((mid + w).ceil() as i64);
        }
        if (lo + n).rem_euclid(2) != 0 {
            lo += 1;
        }
        (lo, hi)
    };
    let site = |n: i64, x: i64| (beta * field.value(n, x) - shift).exp();
    let step = 0.5f64.powi(d as i32);
    // Layer arrays indexed by (i, j) with x1 = lo + 2i, x2 = lo + 2j + gap.
    let mut lo_prev = 0;
    let mut w_prev = 1usize;
    let mut weighted = vec![1.0];
    let mut plain = vec![1.0];
    for n in 1..=ns {
        let (lo, hi) = range(n);
        let width = if hi >= lo { ((hi - lo) / 2 + 1) as usize } else { 0 };
        let cols = if d == 2 { width } else { 1 };
        let mut wn = vec![0.0; width * cols];
        let mut pn = vec![0.0; width * cols];
        let ws: Vec<f64> = if n < ns {
            (0..width).map(|i| site(n, lo + 2 * i as i64)).collect()
        } else {
            vec![1.0; width]
        };
        let ws_top: Vec<f64> = if d == 2 && n < ns {
            (0..width).map(|j| site(n, lo + 2 * j as i64 + gap)).collect()
        } else {
            vec![1.0; width]
        };
        let prev_index = |x: i64| -> Option<usize> {
            let k = x - lo_prev;
            (k >= 0 && k % 2 == 0 && ((k / 2) as usize) < w_prev).then(|| (k / 2) as usize)
        };
        for i in 0..width {
            let x1 = lo + 2 * i as i64;
            let jr = if d == 2 { i..width } else { 0..1 };
            for j in jr {
                let x2 = lo + 2 * j as i64 + gap;
                if d == 2 && x2 <= x1 {
                    continue;
                }
                let (mut a, mut b) = (0.0, 0.0);
                for s1 in [-1, 1] {
                    let Some(pi) = prev_index(x1 + s1) else { continue };
                    if d == 1 {
                        a += weighted[pi];
                        b += plain[pi];
                        continue;
                    }
                    for s2 in [-1, 1] {
                        let Some(pj) = prev_index(x2 + s2 - gap) else { continue };
                        if x2 + s2 > x1 + s1 {
                            a += weighted[pi * w_prev + pj];
                            b += plain[pi * w_prev + pj];
                        }
                    }
                }
                let k = i * cols + if d == 2 { j } else { 0 };
                wn[k] = a * step * ws[i] * if d == 2 { ws_top[j] } else { 1.0 };
                pn[k] = b * step;
            }
        }
        weighted = wn;
        plain = pn;
        lo_prev = lo;
        w_prev = width;
    }
    let end = ((xs - lo_prev) / 2) as usize;
    let k = if d == 2 { end * w_prev + end } else { end };
    match (weighted.get(k), plain.get(k)) {
        (Some(a), Some(b)) if *b > 0.0 => Ok(a / b),
        _ => Err(Error::Domain("endpoint fell outside the transfer window".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub replicas: usize,
    pub seed_record: SeedRecord,
}

/// Monte Carlo path average of exp(βH) for a fixed environment.
pub fn partition_mc(
    spec: &BridgeSpec,
    field: &DisorderField,
    beta: f64,
    replicas: usize,
    record: SeedRecord,
) -> Result<PartitionEstimate> {
    if replicas < 2 {
        return Err(Error::Domain("partition_mc needs at least two replicas".into()));
    }
    let sampler = BridgeSampler::new(spec)?;
    let mut rng = record.rng();
    let vals: Vec<f64> = (0..replicas)
        .map(|_| {
            let t = sampler.sample_flat(&mut rng);
            (beta * energy_flat(&t, spec.d, field)).exp()
        })
        .collect();
    let (estimate, std_error) = mean_se(&vals);
    Ok(PartitionEstimate { estimate, std_error, replicas, seed_record: record })
}
