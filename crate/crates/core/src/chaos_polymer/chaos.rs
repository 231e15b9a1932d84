use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::kernels::{DiscreteKernel, LatticePoint};
use crate::numeric::{det_lu, det_rational};
use crate::walk_ensembles::{visit_bridges, BridgeSpec, Budget};
use crate::{Error, Result};

/// Result of summing the chaos series: the total and its split by |I|.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosTerms {
    pub value: f64,
    pub by_order: Vec<f64>,
    pub sites: usize,
    pub nonzero_terms: u64,
}

// Sites that some walker can occupy at interior times, by time.
fn candidate_sites(spec: &BridgeSpec) -> Vec<Vec<LatticePoint>> {
    let d = spec.d as i64;
    let (ns, xs) = (spec.n_star, spec.x_star);
    (1..ns)
        .map(|n| {
            let lo = (-n).max(xs - (ns - n));
            let hi = (n + 2 * d - 2).min(xs + 2 * d - 2 + (ns - n));
            (lo..=hi).filter(|x| (x + n).rem_euclid(2) == 0).map(|x| (n, x)).collect()
        })
        .collect()
}

fn check_sites(total: usize, max_sites: usize) -> Result<()> {
    if total > max_sites {
        return Err(Error::BudgetExceeded(format!("{total} interior sites > {max_sites}")));
    }
    Ok(())
}

// Depth-first walk over sets with at most d sites per time. `visit` returns
// false to prune every superset of the current set.
fn walk_subsets(
    layers: &[Vec<usize>],
    d: usize,
    layer: usize,
    start: usize,
    in_layer: usize,
    chosen: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) {
    if layer == layers.len() {
        return;
    }
    if in_layer < d {
        for i in start..layers[layer].len() {
            chosen.push(layers[layer][i]);
            if visit(chosen) {
                walk_subsets(layers, d, layer, i + 1, in_layer + 1, chosen, visit);
            }
            chosen.pop();
        }
    }
    walk_subsets(layers, d, layer + 1, 0, 0, chosen, visit);
}

/// Σ_I P(I ⊂ occupied)·∏_{i∈I}(w_i − 1), which equals
/// Σ_I ψ^{(N)}(I)·ζ^I with ζ = (2/√N)(w − 1). Occupation probabilities are
/// kernel determinants; the sum runs over sets of reachable interior sites
/// with at most d sites per time, and a set whose probability vanishes
/// prunes all its supersets.
pub fn chaos_expansion_exact(spec: &BridgeSpec, w: &dyn Fn(i64, i64) -> f64, max_sites: usize) -> Result<ChaosTerms> {
    let kernel = DiscreteKernel::new(*spec)?;
    let mut sites = Vec::new();
    let mut layers = Vec::new();
    for layer in candidate_sites(spec) {
        let mut idx = Vec::new();
        for p in layer {
            if kernel.det(&[p])? > 1e-13 {
                idx.push(sites.len());
                sites.push(p);
            }
        }
        layers.push(idx);
    }
    check_sites(sites.len(), max_sites)?;
    let s = sites.len();
    let mut m = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..s {
            m[i * s + j] = kernel.eval(sites[i], sites[j])?;
        }
    }
    let zeta: Vec<f64> = sites.iter().map(|&(n, x)| w(n, x) - 1.0).collect();
    let mut by_order = vec![0.0; spec.d * (spec.n_star as usize) + 1];
    by_order[0] = 1.0;
    let mut nonzero = 1u64;
    let mut visit = |set: &[usize]| {
        let k = set.len();
        let mut sub = Vec::with_capacity(k * k);
        for &a in set {
            for &b in set {
                sub.push(m[a * s + b]);
            }
        }
        let p = det_lu(sub, k);
        if p.abs() <= 1e-13 {
            return false;
        }
        nonzero += 1;
        by_order[k] += p * set.iter().map(|&i| zeta[i]).product::<f64>();
        true
    };
    walk_subsets(&layers, spec.d, 0, 0, 0, &mut Vec::new(), &mut visit);
    while by_order.len() > 1 && by_order[by_order.len() - 1] == 0.0 {
        by_order.pop();
    }
    let value = by_order.iter().sum();
    Ok(ChaosTerms { value, by_order, sites: s, nonzero_terms: nonzero })
}

/// The chaos sum in exact rational arithmetic.
pub fn chaos_expansion_rational(
    spec: &BridgeSpec,
    w: &dyn Fn(i64, i64) -> BigRational,
    max_sites: usize,
) -> Result<BigRational> {
    let kernel = DiscreteKernel::new(*spec)?;
    let mut sites = Vec::new();
    let mut layers = Vec::new();
    for layer in candidate_sites(spec) {
        let mut idx = Vec::new();
        for p in layer {
            if !kernel.det_exact(&[p])?.is_zero() {
                idx.push(sites.len());
                sites.push(p);
            }
        }
        layers.push(idx);
    }
    check_sites(sites.len(), max_sites)?;
    let s = sites.len();
    let mut m = Vec::with_capacity(s * s);
    for i in 0..s {
        for j in 0..s {
            m.push(kernel.eval_exact(sites[i], sites[j])?);
        }
    }
    let zeta: Vec<BigRational> = sites.iter().map(|&(n, x)| w(n, x) - BigRational::one()).collect();
    let mut total = BigRational::one();
    let mut visit = |set: &[usize]| {
        let k = set.len();
        let mut sub = Vec::with_capacity(k * k);
        for &a in set {
            for &b in set {
                sub.push(m[a * s + b].clone());
            }
        }
        let p = det_rational(sub, k);
        if p.is_zero() {
            return false;
        }
        let z = set.iter().fold(BigRational::one(), |acc, &i| acc * &zeta[i]);
        total += p * z;
        true
    };
    walk_subsets(&layers, spec.d, 0, 0, 0, &mut Vec::new(), &mut visit);
    Ok(total)
}

/// E[∏_j ∏_{n=1}^{n*−1} w(n, X_j(n))] by listing every bridge.
pub fn product_weight_average(spec: &BridgeSpec, w: &dyn Fn(i64, i64) -> f64, budget: &Budget) -> Result<f64> {
    spec.ensure_nonempty()?;
    let mut sum = 0.0;
    let total = visit_bridges(spec, budget, |s| {
        let mut p = 1.0;
        for n in 1..s.steps() as usize {
            for &x in s.row(n) {
                p *= w(n as i64, x);
            }
        }
        sum += p;
    })?;
    Ok(sum / total as f64)
}

pub fn product_weight_average_rational(
    spec: &BridgeSpec,
    w: &dyn Fn(i64, i64) -> BigRational,
    budget: &Budget,
) -> Result<BigRational> {
    spec.ensure_nonempty()?;
    let mut sum = BigRational::zero();
    let total = visit_bridges(spec, budget, |s| {
        let mut p = BigRational::one();
        for n in 1..s.steps() as usize {
            for &x in s.row(n) {
                p *= w(n as i64, x);
            }
        }
        sum += p;
    })?;
    Ok(sum / BigRational::from_integer(total.into()))
}
