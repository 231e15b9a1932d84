use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::{BridgeSpec, PathEnsembleSample, WeylConfig};
use crate::{Error, Result};

/// Caps on exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Largest admissible d·n*.
    pub walker_steps: usize,
    /// Largest number of listed trajectories or stored lattice states.
    pub max_states: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Self { walker_steps: 24, max_states: 1_000_000 }
    }
}

struct Layer {
    configs: Vec<WeylConfig>,
    fwd: Vec<u128>,
    bwd: Vec<u128>,
    next: Vec<Vec<usize>>,
}

/// Transfer-matrix counter over the bridge state space: for every time it
/// stores the configurations lying on at least one bridge trajectory with
/// the number of admissible prefixes and suffixes through each. Counting
/// occupation events this way is exhaustive enumeration without listing.
pub struct BridgeCounter {
    spec: BridgeSpec,
    layers: Vec<Layer>,
    total: u128,
}

fn successors(x: &[i64]) -> impl Iterator<Item = Vec<i64>> + '_ {
    let d = x.len();
    (0..(1u32 << d)).filter_map(move |mask| {
        let y: Vec<i64> = (0..d).map(|i| x[i] + if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
        if y.windows(2).all(|w| w[0] < w[1]) {
            Some(y)
        } else {
            None
        }
    })
}

impl BridgeCounter {
    pub fn new(spec: &BridgeSpec, max_states: u128) -> Result<Self> {
        if spec.d * spec.n_star as usize > 126 {
            return Err(Error::BudgetExceeded(format!(
                "d·n* = {} exceeds the 126 bits available to path counts",
                spec.d * spec.n_star as usize
            )));
        }
        let end = spec.end();
        let endp = end.positions().to_vec();
        let ns = spec.n_star;
        // Forward sweep, pruning states that cannot reach the end walker-wise.
        let mut raw: Vec<(Vec<Vec<i64>>, Vec<u128>, Vec<Vec<usize>>)> = Vec::new();
        let mut cur: Vec<Vec<i64>> = vec![spec.start().positions().to_vec()];
        let mut cur_fwd: Vec<u128> = vec![1];
        let mut stored: u128 = 1;
        for n in 0..ns {
            let rem = ns - n - 1;
            let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
            let mut nxt: Vec<Vec<i64>> = Vec::new();
            let mut nxt_fwd: Vec<u128> = Vec::new();
            let mut links: Vec<Vec<usize>> = Vec::with_capacity(cur.len());
            for (i, x) in cur.iter().enumerate() {
                let mut l = Vec::new();
                for y in successors(x) {
                    if y.iter().zip(&endp).any(|(a, b)| (a - b).abs() > rem) {
                        continue;
                    }
                    let idx = *index.entry(y.clone()).or_insert_with(|| {
                        nxt.push(y.clone());
                        nxt_fwd.push(0);
                        nxt.len() - 1
                    });
                    nxt_fwd[idx] += cur_fwd[i];
                    l.push(idx);
                }
                links.push(l);
            }
            stored += nxt.len() as u128;
            if stored > max_states {
                return Err(Error::BudgetExceeded(format!("more than {max_states} lattice states")));
            }
            raw.push((std::mem::take(&mut cur), std::mem::take(&mut cur_fwd), links));
            cur = nxt;
            cur_fwd = nxt_fwd;
        }
        raw.push((cur, cur_fwd, vec![]));
        // Backward sweep.
        let last = raw.len() - 1;
        let mut bwd: Vec<Vec<u128>> = vec![Vec::new(); raw.len()];
        bwd[last] = raw[last].0.iter().map(|c| u128::from(*c == endp)).collect();
        for n in (0..last).rev() {
            let b: Vec<u128> = raw[n].2.iter().map(|l| l.iter().map(|&j| bwd[n + 1][j]).sum()).collect();
            bwd[n] = b;
        }
        // Keep only live states and reindex the links.
        let mut keep_maps: Vec<Vec<Option<usize>>> = Vec::with_capacity(raw.len());
        for (n, (configs, fwd, _)) in raw.iter().enumerate() {
            let mut m = Vec::with_capacity(configs.len());
            let mut k = 0;
            for i in 0..configs.len() {
                if fwd[i] > 0 && bwd[n][i] > 0 {
                    m.push(Some(k));
                    k += 1;
                } else {
                    m.push(None);
                }
            }
            keep_maps.push(m);
        }
        let mut layers = Vec::with_capacity(raw.len());
        for (n, (configs, fwd, links)) in raw.into_iter().enumerate() {
            let mut layer = Layer { configs: vec![], fwd: vec![], bwd: vec![], next: vec![] };
            for (i, c) in configs.into_iter().enumerate() {
                if keep_maps[n][i].is_none() {
                    continue;
                }
                layer.configs.push(WeylConfig::from_vec_unchecked(c));
                layer.fwd.push(fwd[i]);
                layer.bwd.push(bwd[n][i]);
                if n < last {
                    layer.next.push(links[i].iter().filter_map(|&j| keep_maps[n + 1][j]).collect());
                }
            }
            layers.push(layer);
        }
        let total = layers[0].bwd.first().copied().unwrap_or(0);
        Ok(Self { spec: *spec, layers, total })
    }

    pub fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    /// Number of bridge trajectories.
    pub fn total(&self) -> u128 {
        self.total
    }

    /// Configurations at time n that lie on some bridge.
    pub fn layer_configs(&self, n: i64) -> &[WeylConfig] {
        &self.layers[n as usize].configs
    }

    /// Sites (x) occupied with positive probability at time n.
    pub fn occupied_sites(&self, n: i64) -> Vec<i64> {
        let mut s: Vec<i64> = self.layers[n as usize]
            .configs
            .iter()
            .flat_map(|c| c.positions().iter().copied())
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Number of bridges whose configuration at each time among `points`
    /// contains the listed sites.
    pub fn count_through(&self, points: &[(i64, i64)]) -> u128 {
        if self.total == 0 {
            return 0;
        }
        let mut by_time: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for &(n, x) in points {
            if n < 0 || n > self.spec.n_star {
                return 0;
            }
            by_time.entry(n).or_default().push(x);
        }
        if by_time.is_empty() {
            return self.total;
        }
        let first = *by_time.keys().next().unwrap();
        let last = *by_time.keys().last().unwrap();
        let fits = |n: i64, c: &WeylConfig| by_time.get(&n).map_or(true, |xs| xs.iter().all(|&x| c.contains(x)));
        let l0 = &self.layers[first as usize];
        let mut mu: Vec<u128> = l0
            .configs
            .iter()
            .zip(&l0.fwd)
            .map(|(c, &f)| if fits(first, c) { f } else { 0 })
            .collect();
        for n in first..last {
            let layer = &self.layers[n as usize];
            let nl = &self.layers[n as usize + 1];
            let mut nu = vec![0u128; nl.configs.len()];
            for (i, links) in layer.next.iter().enumerate() {
                if mu[i] == 0 {
                    continue;
                }
                for &j in links {
                    nu[j] += mu[i];
                }
            }
            for (j, c) in nl.configs.iter().enumerate() {
                if nu[j] != 0 && !fits(n + 1, c) {
                    nu[j] = 0;
                }
            }
            mu = nu;
        }
        let ll = &self.layers[last as usize];
        mu.iter().zip(&ll.bwd).map(|(a, b)| a * b).sum()
    }

    /// Exact probability that all listed sites are occupied.
    pub fn probability(&self, points: &[(i64, i64)]) -> BigRational {
        BigRational::new(BigInt::from(self.count_through(points)), BigInt::from(self.total))
    }

    fn walk(&self, n: usize, idx: usize, path: &mut Vec<i64>, f: &mut dyn FnMut(&PathEnsembleSample)) {
        let layer = &self.layers[n];
        path.extend_from_slice(layer.configs[idx].positions());
        if n + 1 == self.layers.len() {
            f(&PathEnsembleSample::from_flat(self.spec, path.clone(), None));
        } else {
            for &j in &layer.next[idx] {
                self.walk(n + 1, j, path, f);
            }
        }
        path.truncate(path.len() - self.spec.d);
    }
}

/// Calls `f` on every bridge trajectory.
pub fn visit_bridges(spec: &BridgeSpec, budget: &Budget, mut f: impl FnMut(&PathEnsembleSample)) -> Result<u128> {
    let ds = spec.d * spec.n_star as usize;
    if ds > budget.walker_steps {
        return Err(Error::BudgetExceeded(format!("d·n* = {ds} > {}", budget.walker_steps)));
    }
    let counter = BridgeCounter::new(spec, budget.max_states)?;
    if counter.total() > budget.max_states {
        return Err(Error::BudgetExceeded(format!("{} trajectories > {}", counter.total(), budget.max_states)));
    }
    if counter.total() > 0 {
        let mut path = Vec::with_capacity((spec.n_star as usize + 1) * spec.d);
        counter.walk(0, 0, &mut path, &mut f);
    }
    Ok(counter.total())
}

/// Exhaustive, duplicate-free list of bridge trajectories.
pub fn enumerate_bridges(spec: &BridgeSpec, budget: &Budget) -> Result<Vec<PathEnsembleSample>> {
    let mut out = Vec::new();
    visit_bridges(spec, budget, |s| out.push(s.clone()))?;
    Ok(out)
}
