//! The acceptance suite: sixteen pass/fail checks, each an exact oracle
//! comparison, an identity, or a trend with a pinned tolerance.
//!
//! Shared by the `acceptance` test target and the CLI's `verify` command.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng as _;
use serde::Serialize;

use crate::chaos_polymer::{
    chaos_expansion_exact, intermediate_disorder_run, partition_exact, sigma_ratio, DisorderDistribution,
    DisorderField, DisorderRunConfig, InnerAverage,
};
use crate::grsk::{
    forced_points, free_region_sum_exact, inverse_gamma_moments, inverse_gamma_sample, tau_enumerate,
    tau_enumerate_exact, tau_lgv, RationalWeights, WeightMatrix,
};
use crate::kernels::{
    brownian_bridge_density, d1_grid, kernel_convergence_study, rescaled_psi_k, ContinuumEndpoint, ContinuumKernel,
    CorrelationQuery, DiscreteKernel, LatticePoint, SpaceTimePoint,
};
use crate::numeric::{loglog_slope, mean_se, rat, rat_to_f64};
use crate::overlap::{drift_bound_sweep, overlap_l2_bound_check, tanaka_check};
use crate::rng::stream_rng;
use crate::special_polys::{hermite, rescaled_hahn_g};
use crate::walk_ensembles::{delta, km_weight_exact, macmahon_count, visit_bridges, BridgeCounter, BridgeSpec, Budget};
use crate::Result;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub tags: &'static [&'static str],
    /// Wall-clock limit in seconds, where one is set.
    pub time_limit: Option<f64>,
}

pub const CRITERIA: [Criterion; 16] = [
    Criterion { id: 1, title: "Karlin-McGregor weight equals enumeration", tags: &["walks", "exact"], time_limit: Some(60.0) },
    Criterion { id: 2, title: "MacMahon count equals enumeration", tags: &["walks", "exact"], time_limit: Some(120.0) },
    Criterion { id: 3, title: "Kernel determinant equals enumeration probability", tags: &["kernels", "exact"], time_limit: Some(300.0) },
    Criterion { id: 4, title: "d=1 continuum kernel is the Brownian bridge density", tags: &["kernels"], time_limit: None },
    Criterion { id: 5, title: "Hahn to Hermite error slope", tags: &["kernels", "special_polys"], time_limit: Some(30.0) },
    Criterion { id: 6, title: "Discrete kernel converges to the continuum kernel", tags: &["kernels"], time_limit: Some(120.0) },
    Criterion { id: 7, title: "Discrete Tanaka identity", tags: &["overlap", "exact"], time_limit: Some(5.0) },
    Criterion { id: 8, title: "Chaos expansion equals the partition function", tags: &["polymer", "exact"], time_limit: Some(120.0) },
    Criterion { id: 9, title: "Rademacher variance ratio tends to 2", tags: &["polymer"], time_limit: None },
    Criterion { id: 10, title: "Centered partition function has mean 1", tags: &["polymer", "slow"], time_limit: Some(900.0) },
    Criterion { id: 11, title: "LGV determinant, forced points and free-region count", tags: &["grsk", "exact"], time_limit: Some(180.0) },
    Criterion { id: 12, title: "Inverse-gamma moments", tags: &["grsk"], time_limit: Some(30.0) },
    Criterion { id: 13, title: "Overlap L2 bound", tags: &["overlap"], time_limit: Some(300.0) },
    Criterion { id: 14, title: "Particle-counting identity", tags: &["kernels", "exact"], time_limit: None },
    Criterion { id: 15, title: "Conditional drift bound", tags: &["overlap", "walks", "exact"], time_limit: None },
    Criterion { id: 16, title: "Perturbed kernel weights are caught", tags: &["kernels", "mutation"], time_limit: None },
];

/// Knobs for the suite. `kernel_weight_scale` multiplies every kernel
/// weight in criteria 3 and 14; anything but 1 is an injected fault.
#[derive(Debug, Clone)]
pub struct Options {
    pub kernel_weight_scale: BigRational,
    pub seed: u64,
}

impl Default for Options {
    fn default() -> Self {
        Self { kernel_weight_scale: rat(1), seed: 20_240_601 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub time_limit: Option<f64>,
}

impl Outcome {
    pub fn line(&self) -> String {
        let limit = self.time_limit.map_or(String::new(), |l| format!(" / {l:.0}s"));
        format!(
            "{} [{:>2}] {} ({:.1}s{limit}): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.detail
        )
    }
}

/// Criteria whose id is listed or that carry one of the tags; everything
/// when both filters are empty.
pub fn select(ids: &[u8], tags: &[String]) -> Vec<Criterion> {
    CRITERIA
        .iter()
        .filter(|c| {
            (ids.is_empty() && tags.is_empty())
                || ids.contains(&c.id)
                || c.tags.iter().any(|t| tags.iter().any(|s| s == t))
        })
        .copied()
        .collect()
}

pub fn run(criterion: &Criterion, opts: &Options) -> Outcome {
    let start = Instant::now();
    let res = match criterion.id {
        1 => km_oracle(),
        2 => macmahon_oracle(),
        3 => kernel_oracle(&opts.kernel_weight_scale),
        4 => bridge_density_oracle(),
        5 => hahn_hermite_slope(),
        6 => kernel_convergence(),
        7 => tanaka(opts.seed),
        8 => chaos_equality(opts.seed),
        9 => sigma_ratio_trend(),
        10 => centered_mean(opts.seed),
        11 => grsk_checks(opts.seed),
        12 => inverse_gamma(opts.seed),
        13 => l2_bound(opts.seed),
        14 => particle_counting(&opts.kernel_weight_scale),
        15 => drift_bound(opts.seed),
        16 => mutation(),
        _ => Ok((false, "unknown criterion".into())),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(limit) = criterion.time_limit {
        if seconds > limit {
            passed = false;
            detail.push_str(&format!("; over the {limit:.0}s limit"));
        }
    }
    Outcome { id: criterion.id, title: criterion.title, passed, detail, seconds, time_limit: criterion.time_limit }
}

type Check = Result<(bool, String)>;

fn wide_budget() -> Budget {
    Budget { walker_steps: 24, max_states: 1 << 26 }
}

fn km_oracle() -> Check {
    let mut cases = 0;
    for d in 1..=3usize {
        for n in 1..=8i64 {
            for x in (-n..=n).step_by(2) {
                let spec = BridgeSpec::new(d, n, x)?;
                let count = visit_bridges(&spec, &wide_budget(), |_| {})?;
                let prob = BigRational::new(BigInt::from(count), BigInt::from(2).pow((d as i64 * n) as u32));
                if km_weight_exact(n, &delta(d, 0), &delta(d, x)) != prob {
                    return Ok((false, format!("mismatch at d={d} n={n} x*={x}")));
                }
                cases += 1;
            }
        }
    }
    Ok((true, format!("{cases} endpoints exact")))
}

fn macmahon_oracle() -> Check {
    let mut cases = 0;
    for d in 1..=3usize {
        for n in 1..=4u64 {
            let count = visit_bridges(&BridgeSpec::new(d, 2 * n as i64, 0)?, &wide_budget(), |_| {})?;
            if macmahon_count(n, d) != BigInt::from(count) {
                return Ok((false, format!("mismatch at d={d} N={n}")));
            }
            cases += 1;
        }
    }
    let three = macmahon_count(1, 2) == BigInt::from(3);
    Ok((three, format!("{cases} cases exact; (N=1, d=2) gives 3: {three}")))
}

// Sites of the cone reachable from δ(0) and δ(x*), at every time 0..=n*.
fn lattice_sites(spec: &BridgeSpec) -> Vec<LatticePoint> {
    let gap = 2 * (spec.d as i64 - 1);
    let mut out = Vec::new();
    for n in 0..=spec.n_star {
        let rem = spec.n_star - n;
        let lo = (-n).max(spec.x_star - rem);
        let hi = n.min(spec.x_star + rem) + gap;
        out.extend((lo..=hi).filter(|x| (x + n).rem_euclid(2) == 0).map(|x| (n, x)));
    }
    out
}

const KERNEL_SPECS: [(usize, i64, i64); 9] =
    [(1, 10, 0), (1, 9, 3), (2, 10, 0), (2, 9, 1), (2, 10, 4), (3, 10, 0), (3, 9, -1), (3, 8, 2), (3, 4, 0)];

fn kernel_oracle(scale: &BigRational) -> Check {
    let mut queries = 0usize;
    let mut worst = 0.0f64;
    for (d, ns, xs) in KERNEL_SPECS {
        let spec = BridgeSpec::new(d, ns, xs)?;
        let counter = BridgeCounter::new(&spec, 1 << 24)?;
        let kernel = DiscreteKernel::with_weight_scale(spec, scale.clone())?;
        let sites = lattice_sites(&spec);
        // Continuum coordinates that round back to each site at N = n*.
        let n_scale = ns as u64;
        let rn = (ns as f64).sqrt();
        let end = ContinuumEndpoint::new(1.0, xs as f64 / rn)?;
        let to_point = |p: LatticePoint| SpaceTimePoint::new(p.0 as f64 / ns as f64, p.1 as f64 / rn);
        let m = sites.len();
        let mut kmat = Vec::with_capacity(m * m);
        for a in &sites {
            for b in &sites {
                kmat.push(kernel.eval_exact(*a, *b)?);
            }
        }
        for i in 0..m {
            for j in 0..=m {
                // j = m stands for the one-point query {i}.
                let (pts, exact) = if j == m {
                    (vec![sites[i]], kmat[i * m + i].clone())
                } else if i == j {
                    (vec![sites[i], sites[i]], BigRational::zero())
                } else {
                    let det = &kmat[i * m + i] * &kmat[j * m + j] - &kmat[i * m + j] * &kmat[j * m + i];
                    (vec![sites[i], sites[j]], det)
                };
                let prob = if i == j { BigRational::zero() } else { counter.probability(&pts) };
                if exact != prob {
                    return Ok((false, format!("exact mismatch at d={d} n*={ns} x*={xs} {pts:?}")));
                }
                let q = CorrelationQuery::new(pts.iter().map(|p| to_point(*p)).collect())?;
                let v = rescaled_psi_k(n_scale, end, d, &q)?;
                let want = (rn / 2.0).powi(pts.len() as i32) * rat_to_f64(&prob);
                let err = if want == 0.0 { v.abs() } else { (v - want).abs() / want.abs() };
                worst = worst.max(err);
                queries += 1;
            }
        }
    }
    Ok((worst <= 1e-10, format!("{queries} queries exact; worst floating rel error {worst:.2e}")))
}

fn bridge_density_oracle() -> Check {
    let mut worst = 0.0f64;
    for (ts, zs) in [(1.0, 0.6), (2.0, -0.5)] {
        let end = ContinuumEndpoint::new(ts, zs)?;
        let kernel = ContinuumKernel::new(end, 1);
        for i in 0..10 {
            for j in 0..10 {
                let t = ts * (0.05 + 0.1 * i as f64);
                let z = -2.0 + 4.0 * j as f64 / 9.0;
                let p = SpaceTimePoint::new(t, z);
                let v = kernel.psi_k(&CorrelationQuery::new(vec![p])?)?;
                let want = brownian_bridge_density(&end, p);
                worst = worst.max((v - want).abs() / want);
            }
        }
    }
    Ok((worst <= 1e-10, format!("200 grid points, worst rel error {worst:.2e}")))
}

fn hahn_hermite_slope() -> Check {
    let ms = [1e2, 1e3, 1e4, 1e5];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 1..=4u32 {
        for y in [0.4, 0.9, 1.3] {
            let errs: Vec<f64> = ms
                .iter()
                .map(|&m| rescaled_hahn_g(j, y, m, 0.5, 0.5, -2.0).map(|g| (g - hermite(j, y)).abs()))
                .collect::<Result<_>>()?;
            let s = loglog_slope(&ms, &errs);
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    Ok((lo >= -0.7 && hi <= -0.3, format!("slopes in [{lo:.3}, {hi:.3}] for j=1..4, y in {{0.4, 0.9, 1.3}}")))
}

fn kernel_convergence() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for zs in [0.0, 0.7] {
        let end = ContinuumEndpoint::new(1.0, zs)?;
        let grid = d1_grid(&end, 0.1, 0.1, 2.0, 9, 81);
        let rep = kernel_convergence_study(end, 2, &grid, &[50, 100, 200, 400])?;
        let sups: Vec<f64> = rep.sup_errors.iter().map(|s| s.sup_err).collect();
        ok &= sups.windows(2).all(|w| w[1] < w[0]);
        parts.push(format!("z*={zs}: {}", sups.iter().map(|s| format!("{s:.3e}")).collect::<Vec<_>>().join(" > ")));
    }
    Ok((ok, parts.join("; ")))
}

fn tanaka(seed: u64) -> Check {
    let mut rng = stream_rng(seed, 7);
    for _ in 0..10_000 {
        let n = rng.random_range(0..=100usize);
        let alpha: Vec<i64> = (0..=n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let beta: Vec<i64> = (0..=n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let a0 = rng.random_range(-20..=20i64);
        let b0 = a0 + 2 * rng.random_range(-10..=10i64);
        let r = tanaka_check(&alpha, &beta, a0, b0, n)?;
        if r != 0 {
            return Ok((false, format!("residual {r} at n={n}")));
        }
    }
    Ok((true, "10000 instances, residual 0".into()))
}

fn chaos_equality(seed: u64) -> Check {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for d in 1..=2usize {
        for ns in 2..=6i64 {
            for r in 0..3u64 {
                let spec = BridgeSpec::new(d, ns, ns % 2)?;
                let field = DisorderField::random(DisorderDistribution::Rademacher, seed ^ (r + 16 * ns as u64))?;
                let beta = 0.7;
                let w = |n: i64, x: i64| (beta * field.value(n, x)).exp();
                let chaos = chaos_expansion_exact(&spec, &w, 32)?;
                let direct = partition_exact(&spec, &field, beta, &Budget::default())?;
                worst = worst.max((chaos.value - direct).abs() / direct.abs());
                cases += 1;
            }
        }
    }
    Ok((worst <= 1e-10, format!("{cases} lattices, worst rel error {worst:.2e}")))
}

fn sigma_ratio_trend() -> Check {
    let ns = [100u64, 1_000, 10_000, 100_000, 1_000_000];
    let vals: Vec<f64> =
        ns.iter().map(|&n| sigma_ratio(&DisorderDistribution::Rademacher, 1.0, n)).collect::<Result<_>>()?;
    let gaps: Vec<f64> = vals.iter().map(|v| (v - 2.0).abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let last = vals[vals.len() - 1];
    let ok = monotone && (last - 2.0).abs() <= 0.02;
    let shown: Vec<String> = vals.iter().map(|v| format!("{v:.5}")).collect();
    Ok((ok, format!("ratio at N=1e2..1e6: {}", shown.join(", "))))
}

fn centered_mean(seed: u64) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in 1..=2usize {
        let cfg = DisorderRunConfig {
            end: ContinuumEndpoint::new(1.0, 0.0)?,
            d,
            beta: 0.5,
            n_list: vec![64, 256, 1024],
            replicas: 3000,
            inner: InnerAverage::Transfer { window_sd: 8.0 },
            distribution: DisorderDistribution::Rademacher,
            seed,
            chaos_samples: 0,
        };
        let rep = intermediate_disorder_run(&cfg)?;
        for s in &rep.scales {
            ok &= (s.mean - 1.0).abs() <= 3.0 * s.std_error;
            parts.push(format!("d={d} N={}: {:.4}±{:.4}", s.n_scale, s.mean, s.std_error));
        }
    }
    Ok((ok, parts.join(", ")))
}

fn grsk_checks(seed: u64) -> Check {
    let mut rng = stream_rng(seed, 11);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let d = rng.random_range(1..=3usize);
        let n = rng.random_range(d..=7usize);
        let m = rng.random_range(d..=7usize);
        let w = WeightMatrix::random_uniform(n, m, 0.5, 2.0, seed ^ i)?;
        let a = tau_lgv(&w, d, n, m)?;
        let b = tau_enumerate(&w, d, n, m)?;
        worst = worst.max((a - b).abs() / b);
    }
    let mut factor_ok = true;
    for (d, n) in [(1, 4), (2, 2), (2, 3), (3, 2)] {
        let w = RationalWeights::from_fn(n + d, n + d, |i, j| {
            BigRational::new(BigInt::from(2 + (i * 7 + j * 3) % 5), BigInt::from(1 + (i + 2 * j) % 4))
        });
        let tau = tau_enumerate_exact(&w, d, n + d, n + d)?;
        let forced = forced_points(d, n).iter().fold(rat(1), |acc, &(i, j)| acc * w.get(i, j));
        factor_ok &= tau == forced * free_region_sum_exact(&w, d, n, &Budget::default())?;
    }
    let mut count_ok = true;
    for d in 1..=3usize {
        for n in 1..=4usize {
            let ones = RationalWeights::from_fn(n + d, n + d, |_, _| rat(1));
            let free = free_region_sum_exact(&ones, d, n, &Budget::default())?;
            count_ok &= free == BigRational::from_integer(macmahon_count(n as u64, d));
        }
    }
    Ok((
        worst <= 1e-9 && factor_ok && count_ok,
        format!("20 instances worst rel {worst:.2e}; factorization exact: {factor_ok}; free count = MacMahon: {count_ok}"),
    ))
}

fn inverse_gamma(seed: u64) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for theta in [3.0, 10.0] {
        let mut rng = stream_rng(seed, theta as u64);
        let xs: Vec<f64> = (0..1_000_000).map(|_| inverse_gamma_sample(theta, &mut rng)).collect::<Result<_>>()?;
        let (em, ev) = inverse_gamma_moments(theta)?;
        let (m, mse) = mean_se(&xs);
        let sq: Vec<f64> = xs.iter().map(|x| (x - em).powi(2)).collect();
        let (v, vse) = mean_se(&sq);
        let zm = (m - em) / mse;
        let zv = (v - ev) / vse;
        ok &= zm.abs() <= 4.0 && zv.abs() <= 4.0;
        parts.push(format!("theta={theta}: mean z={zm:.2}, variance z={zv:.2}"));
    }
    Ok((ok, parts.join("; ")))
}

fn l2_bound(seed: u64) -> Check {
    let end = ContinuumEndpoint::new(1.0, 0.0)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (s, s2) in [(0.0, 1.0), (0.25, 0.75)] {
        for k in 1..=2 {
            let rep = overlap_l2_bound_check(end, 2, 12, s, s2, k, 20_000, seed)?;
            ok &= rep.passed;
            parts.push(format!("[{s},{s2}] k={k}: {:.4e} <= {:.4e}±{:.1e}", rep.lhs, rep.rhs, rep.rhs_se));
        }
    }
    Ok((ok, parts.join("; ")))
}

fn particle_counting(scale: &BigRational) -> Check {
    let mut cases = 0;
    for (d, ns, xs) in [(1, 6, 0), (2, 6, 0), (2, 7, 1), (3, 6, 0), (3, 6, 2)] {
        let spec = BridgeSpec::new(d, ns, xs)?;
        let kernel = DiscreteKernel::with_weight_scale(spec, scale.clone())?;
        let sites = lattice_sites(&spec);
        let at = |n: i64| sites.iter().filter(move |p| p.0 == n).copied();
        let dd = d as i64;
        for n in 1..ns {
            let one: BigRational = at(n).map(|p| kernel.det_exact(&[p])).sum::<Result<_>>()?;
            if one != rat(dd) {
                return Ok((false, format!("k=1 sum {one} at d={d} n={n}")));
            }
            for m in 1..ns {
                let mut two = BigRational::zero();
                for p in at(n) {
                    for q in at(m) {
                        two += kernel.det_exact(&[p, q])?;
                    }
                }
                let want = if n == m { dd * (dd - 1) } else { dd * dd };
                if two != rat(want) {
                    return Ok((false, format!("k=2 sum {two} at d={d} times ({n},{m})")));
                }
                cases += 1;
            }
        }
    }
    Ok((true, format!("{cases} time pairs: Σψ₁ = d, Σψ₂ = d² (d(d−1) at equal times)")))
}

fn drift_bound(seed: u64) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in 1..=4 {
        let rep = drift_bound_sweep(d, 10_000, 8, seed)?;
        ok &= rep.violations == 0;
        parts.push(format!("d={d}: {} violations, max ratio {:.3}", rep.violations, rep.max_ratio));
    }
    Ok((ok, parts.join("; ")))
}

fn mutation() -> Check {
    let (caught, detail) = kernel_oracle(&BigRational::new(101.into(), 100.into()))?;
    Ok((!caught, format!("criterion 3 with F_j scaled by 1.01: {detail}")))
}
