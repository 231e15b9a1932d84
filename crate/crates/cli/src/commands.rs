use std::io::Write;

use anyhow::{bail, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;
use watermelon::acceptance::{self, Options, Outcome};
use watermelon::chaos_polymer::{
    chaos_expansion_exact, intermediate_disorder_run, partition_exact, DisorderDistribution, DisorderField,
    DisorderRunConfig, InnerAverage,
};
use watermelon::grsk::{
    free_region_sum_exact, grsk_array, rescaled_tau_run, tau_enumerate, tau_lgv, RationalWeights, TauRunConfig,
    WeightMatrix,
};
use watermelon::kernels::{
    brownian_bridge_density, d1_grid, kernel_convergence_study, rescaled_psi_k, ContinuumEndpoint, ContinuumKernel,
    CorrelationQuery, DiscreteKernel, LatticeRounding, SpaceTimePoint,
};
use watermelon::numeric::rat;
use watermelon::overlap::{
    drift_bound_sweep, overlap_l2_bound_check, overlap_moment_diagnostics, rn_ceiling_report, tanaka_check,
    time_reversal_check,
};
use watermelon::rng::{stream_rng, SeedRecord};
use watermelon::walk_ensembles::{
    delta, enumerate_bridges, km_weight_exact, macmahon_count, sample_bridge, write_sample_csv, write_sample_json,
    BridgeCounter, BridgeSpec, PathEnsembleSample,
};

use crate::config::{ExperimentConfig, GridConfig};
use crate::manifest::RunDir;

fn endpoint(cfg: &mut ExperimentConfig) -> Result<ContinuumEndpoint> {
    let t = *cfg.t_star.get_or_insert(1.0);
    let z = *cfg.z_star.get_or_insert(0.0);
    Ok(ContinuumEndpoint::new(t, z)?)
}

fn scales(cfg: &mut ExperimentConfig, default: &[u64]) -> Result<Vec<u64>> {
    let n = cfg.n_list.get_or_insert_with(|| default.to_vec()).clone();
    if n.is_empty() || n.contains(&0) || n.windows(2).any(|w| w[1] <= w[0]) {
        bail!("N list must be nonempty, positive and strictly ascending");
    }
    Ok(n)
}

fn write_json<T: Serialize>(run: &mut RunDir, rel: &str, value: &T) -> Result<()> {
    let mut f = run.create(rel)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.flush()?;
    Ok(())
}

pub fn sample(cfg: &mut ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let d = *cfg.d.get_or_insert(1);
    let n_star = *cfg.n_star.get_or_insert(2);
    let x_star = *cfg.x_star.get_or_insert(0);
    let listing = *cfg.enumerate.get_or_insert(false);
    let budget = cfg.budget();
    let spec = BridgeSpec::new(d, n_star, x_star)?;
    spec.ensure_nonempty()?;
    let paths: Vec<PathEnsembleSample> = if listing {
        enumerate_bridges(&spec, &budget)?
    } else {
        let seed = cfg.require_seed()?;
        let count = *cfg.count.get_or_insert(1);
        run.seeds.push(seed);
        (0..count as u64).map(|i| sample_bridge(&spec, SeedRecord::new(seed, i))).collect::<Result<_, _>>()?
    };
    for (i, p) in paths.iter().enumerate() {
        let csv_name = format!("paths/path_{i:06}.csv");
        let mut f = run.create(&csv_name)?;
        write_sample_csv(p, &mut f)?;
        f.flush()?;
        let mut j = run.create(&format!("paths/path_{i:06}.json"))?;
        write_sample_json(p, Some(csv_name.trim_start_matches("paths/").to_string()), &mut j)?;
        j.flush()?;
    }
    let valid = paths.iter().all(|p| p.validate().is_ok());
    run.check("trajectories are valid bridges", valid, format!("{} trajectories", paths.len()));
    if listing {
        let steps = d as u32 * n_star as u32;
        let want = km_weight_exact(n_star, &delta(d, 0), &delta(d, x_star)) * BigRational::from_integer(BigInt::from(2).pow(steps));
        let got = BigRational::from_integer(BigInt::from(paths.len()));
        run.check("listed count equals the Karlin-McGregor count", got == want, format!("{} listed, {} expected", got, want));
    }
    println!("{} trajectories written to {}", paths.len(), run.path().join("paths").display());
    Ok(())
}

// Interior sites of the bridge cone at each time 1..n*−1.
fn cone_sites(spec: &BridgeSpec) -> Vec<(i64, i64)> {
    let gap = 2 * (spec.d as i64 - 1);
    let mut out = Vec::new();
    for n in 1..spec.n_star {
        let rem = spec.n_star - n;
        let lo = (-n).max(spec.x_star - rem);
        let hi = n.min(spec.x_star + rem) + gap;
        out.extend((lo..=hi).filter(|x| (x + n).rem_euclid(2) == 0).map(|x| (n, x)));
    }
    out
}

#[derive(Serialize)]
struct PsiRow {
    n_scale: u64,
    k: usize,
    points: String,
    duplicate: bool,
    psi: f64,
}

pub fn kernels(cfg: &mut ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let end = endpoint(cfg)?;
    let d = *cfg.d.get_or_insert(1);
    let n_list = scales(cfg, &[50, 100, 200, 400])?;
    let g = *cfg.grid.get_or_insert_with(GridConfig::default);
    let queries = cfg.queries.get_or_insert_with(Vec::new).clone();
    let budget = cfg.budget();
    if d == 0 {
        bail!("d must be positive");
    }
    if g.times == 0 || g.spaces == 0 || !(g.delta > 0.0) || 2.0 * g.delta >= end.t_star {
        bail!("grid needs positive counts and 0 < delta < t*/2");
    }
    let parsed: Vec<CorrelationQuery> = queries
        .iter()
        .map(|q| CorrelationQuery::new(q.iter().map(|&(t, z)| SpaceTimePoint::new(t, z)).collect()))
        .collect::<Result<_, _>>()?;
    for q in &parsed {
        for p in &q.points {
            end.check_interior(*p)?;
        }
    }

    let grid = d1_grid(&end, g.delta, g.eta, g.m, g.times, g.spaces);
    let report = kernel_convergence_study(end, d, &grid, &n_list)?;
    let mut f = run.create("convergence.csv")?;
    report.write_csv(&mut f)?;
    f.flush()?;
    let mut f = run.create("convergence.json")?;
    report.write_json(&mut f)?;
    f.flush()?;
    if n_list.len() >= 2 {
        let errs: Vec<String> = report.sup_errors.iter().map(|s| format!("{:.3e}", s.sup_err)).collect();
        run.check("sup error falls from smallest to largest N", report.decreased_overall, errs.join(", "));
    }

    // Exact oracle: one- and two-point determinants against counted bridges.
    let spec = BridgeSpec::new(d, 6, 0)?;
    if d * 6 <= budget.walker_steps {
        let counter = BridgeCounter::new(&spec, budget.max_states)?;
        let kernel = DiscreteKernel::new(spec)?;
        let sites = cone_sites(&spec);
        let mut ok = true;
        let mut cases = 0;
        for (i, a) in sites.iter().enumerate() {
            for b in &sites[i..] {
                let pts = if a == b { vec![*a] } else { vec![*a, *b] };
                ok &= kernel.det_exact(&pts)? == counter.probability(&pts);
                cases += 1;
            }
        }
        run.check("kernel determinants equal enumeration (n*=6)", ok, format!("{cases} site sets, exact"));
    }
    if d == 1 {
        let k = ContinuumKernel::new(end, 1);
        let mut worst = 0.0f64;
        for (a, _) in &grid {
            let want = brownian_bridge_density(&end, *a);
            worst = worst.max((k.eval(*a, *a)? - want).abs() / want.max(1e-300));
        }
        run.check("d=1 kernel diagonal equals the Brownian bridge density", worst <= 1e-10, format!("worst rel {worst:.2e}"));
    }

    if !parsed.is_empty() {
        let mut rows = Vec::new();
        for &n in &n_list {
            for q in &parsed {
                let points: Vec<String> = q.points.iter().map(|p| format!("{}:{}", p.t, p.z)).collect();
                rows.push(PsiRow {
                    n_scale: n,
                    k: q.k(),
                    points: points.join(";"),
                    duplicate: q.has_duplicates(),
                    psi: rescaled_psi_k(n, end, d, q)?,
                });
            }
        }
        let mut w = csv::Writer::from_writer(run.create("psi_queries.csv")?);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let dup: Vec<&PsiRow> = rows.iter().filter(|r| r.duplicate).collect();
        if !dup.is_empty() {
            run.check("duplicate-point queries give 0", dup.iter().all(|r| r.psi == 0.0), format!("{} rows", dup.len()));
        }
    }
    println!("kernel study: {} rows, slope {:.3}", report.rows.len(), report.slope);
    Ok(())
}

pub fn polymer(cfg: &mut ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let end = endpoint(cfg)?;
    let d = *cfg.d.get_or_insert(1);
    let beta = *cfg.beta.get_or_insert(0.5);
    let n_list = scales(cfg, &[64, 256])?;
    let replicas = *cfg.replicas.get_or_insert(200);
    let inner = *cfg.inner.get_or_insert_with(InnerAverage::default);
    let distribution = cfg.distribution.get_or_insert(DisorderDistribution::Rademacher).clone();
    let chaos_samples = *cfg.chaos_samples.get_or_insert(0);
    let budget = cfg.budget();
    let seed = cfg.require_seed()?;
    if !(beta >= 0.0 && beta.is_finite()) {
        bail!("beta must be finite and nonnegative");
    }
    run.seeds.push(seed);
    let run_cfg =
        DisorderRunConfig { end, d, beta, n_list, replicas, inner, distribution: distribution.clone(), seed, chaos_samples };
    let report = intermediate_disorder_run(&run_cfg)?;
    let mut f = run.create("polymer_report.json")?;
    report.write_json(&mut f)?;
    f.flush()?;
    let mut f = run.create("draws.csv")?;
    report.write_draws_csv(&mut f)?;
    f.flush()?;
    let mut w = csv::Writer::from_writer(run.create("scales.csv")?);
    w.write_record([
        "N", "n_star", "x_star", "beta_N", "lambda", "sigma_ratio", "mean", "SE", "z_score", "mean_line", "SE_line",
        "variance", "disorder_variance", "disorder_variance_SE",
    ])?;
    for s in &report.scales {
        w.write_record(&[
            s.n_scale.to_string(),
            s.n_star.to_string(),
            s.x_star.to_string(),
            s.beta_n.to_string(),
            s.lambda.to_string(),
            s.sigma_ratio.to_string(),
            s.mean.to_string(),
            s.std_error.to_string(),
            s.z_score.to_string(),
            s.mean_line.to_string(),
            s.std_error_line.to_string(),
            s.variance.to_string(),
            s.disorder_variance.to_string(),
            s.disorder_variance_se.to_string(),
        ])?;
    }
    w.flush()?;

    if beta == 0.0 {
        let worst = report.scales.iter().map(|s| (s.mean - 1.0).abs().max((s.mean_line - 1.0).abs())).fold(0.0, f64::max);
        run.check("beta = 0 gives mean 1", worst <= 1e-12, format!("max |mean - 1| = {worst:.1e}"));
    }

    // Chaos series against direct summation on a small lattice.
    let small = BridgeSpec::new(d.min(2), 4, 0)?;
    let field = DisorderField::random(distribution, seed)?;
    let w = |n: i64, x: i64| (beta * field.value(n, x)).exp();
    let chaos = chaos_expansion_exact(&small, &w, 32)?;
    let direct = partition_exact(&small, &field, beta, &budget)?;
    let rel = (chaos.value - direct).abs() / direct.abs();
    run.check(
        "chaos expansion equals the partition function (n*=4)",
        rel <= 1e-10,
        format!("{} vs {}, rel {rel:.1e}", chaos.value, direct),
    );
    for s in &report.scales {
        println!("N={:>6}  sigma_ratio={:.4}  mean={:.4} ± {:.4}", s.n_scale, s.sigma_ratio, s.mean, s.std_error);
    }
    Ok(())
}

#[derive(Serialize)]
struct GrskRow {
    m: usize,
    j: usize,
    n: usize,
    value: f64,
}

pub fn grsk(cfg: &mut ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let beta = *cfg.beta.get_or_insert(1.0);
    let d = *cfg.d.get_or_insert(1);
    let n_list = scales(cfg, &[9, 16, 25])?;
    let replicas = *cfg.replicas.get_or_insert(200);
    let budget = cfg.budget();
    let weights = match cfg.weights.clone() {
        Some(p) => Some(WeightMatrix::read_csv(std::fs::File::open(&p)?)?),
        None => None,
    };
    let seed = cfg.require_seed()?;
    if !(beta > 0.0) || d == 0 {
        bail!("grsk needs beta > 0 and d >= 1");
    }
    if (n_list[0] as f64).sqrt() / beta <= 2.0 {
        bail!("the weight variance needs sqrt(N)/beta > 2 for every N; smallest N = {} fails", n_list[0]);
    }
    if let Some(w) = &weights {
        if d > w.rows().min(w.cols()) {
            bail!("d = {d} exceeds the weight matrix size {}x{}", w.rows(), w.cols());
        }
    }
    run.seeds.push(seed);
    let report = rescaled_tau_run(&TauRunConfig { beta, d, n_list, replicas, seed })?;
    let mut f = run.create("tau_report.json")?;
    report.write_json(&mut f)?;
    f.flush()?;
    let mut f = run.create("tau_values.csv")?;
    report.write_values_csv(&mut f)?;
    f.flush()?;

    if let Some(w) = &weights {
        let mut out = csv::Writer::from_writer(run.create("grsk_array.csv")?);
        for e in grsk_array(w, d, w.rows(), w.cols())? {
            out.serialize(GrskRow { m: e.m, j: e.j, n: e.n, value: e.value })?;
        }
        out.flush()?;
    }

    let small_d = d.min(3);
    let size = small_d + 3;
    let w = WeightMatrix::random_uniform(size, size, 0.5, 2.0, seed)?;
    let (a, b) = (tau_lgv(&w, small_d, size, size)?, tau_enumerate(&w, small_d, size, size)?);
    let rel = (a - b).abs() / b;
    run.check("LGV determinant equals path enumeration", rel <= 1e-9, format!("d={small_d}, {size}x{size}, rel {rel:.1e}"));
    let mut ok = true;
    for n in 1..=3usize {
        let ones = RationalWeights::from_fn(n + small_d, n + small_d, |_, _| rat(1));
        ok &= free_region_sum_exact(&ones, small_d, n, &budget)? == BigRational::from_integer(macmahon_count(n as u64, small_d));
    }
    run.check("free-region count equals MacMahon's product", ok, format!("d={small_d}, N=1..3"));
    for s in &report.scales {
        println!("N={:>5}  mean={:.4} ± {:.4}  exact={:.4}", s.n_scale, s.mean, s.std_error, s.exact_mean);
    }
    Ok(())
}

#[derive(Serialize)]
struct OverlapSummary<T, L, D, R, C> {
    diagnostics: T,
    tanaka_instances: usize,
    l2_bound: Vec<L>,
    drift: D,
    time_reversal: R,
    rn_ceiling: Vec<C>,
}

pub fn overlap(cfg: &mut ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let end = endpoint(cfg)?;
    let d = *cfg.d.get_or_insert(2);
    let n_list = scales(cfg, &[16, 36])?;
    let t_grid = cfg.t_grid.get_or_insert_with(|| vec![0.25, 0.5, 0.75, 1.0]).clone();
    let k_max = *cfg.k_max.get_or_insert(3);
    let replicas = *cfg.replicas.get_or_insert(2000);
    let (s, s2) = *cfg.window.get_or_insert((0.25, 0.75));
    let l2_n = *cfg.l2_n.get_or_insert(12);
    let budget = cfg.budget();
    let seed = cfg.require_seed()?;
    if d == 0 || replicas < 2 {
        bail!("overlap needs d >= 1 and at least two replicas");
    }
    if !(0.0 <= s && s < s2 && s2 <= end.t_star) {
        bail!("window must satisfy 0 <= s < s' <= t*");
    }
    run.seeds.push(seed);

    let diag = overlap_moment_diagnostics(end, d, &n_list, &t_grid, k_max, replicas, seed)?;
    let mut f = run.create("moments.csv")?;
    diag.write_csv(&mut f)?;
    f.flush()?;
    run.check("moments nondecreasing in t", diag.monotone_in_t, "");
    // Uniformity in N is a finite-sample heuristic; it is reported in the JSON only.
    println!("moments uniform in N: {}", diag.uniform_in_n);

    let instances = 1000;
    let mut rng = stream_rng(seed, 7);
    let mut worst = 0i64;
    for _ in 0..instances {
        use rand::Rng as _;
        let n = rng.random_range(0..=100usize);
        let alpha: Vec<i64> = (0..=n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let beta: Vec<i64> = (0..=n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let a0 = rng.random_range(-20..=20i64);
        let b0 = a0 + 2 * rng.random_range(-10..=10i64);
        worst = worst.max(tanaka_check(&alpha, &beta, a0, b0, n)?.abs());
    }
    run.check("Tanaka residual is 0", worst == 0, format!("{instances} instances, max |residual| {worst}"));

    let mut l2 = Vec::new();
    for k in 1..=2 {
        let r = overlap_l2_bound_check(end, d, l2_n, s, s2, k, replicas, seed)?;
        run.check(&format!("L2 bound k={k} (N={l2_n})"), r.passed, format!("{:.4e} <= {:.4e} ± {:.1e}", r.lhs, r.rhs, r.rhs_se));
        l2.push(r);
    }
    let drift = drift_bound_sweep(d.min(5), 1000, 8, seed)?;
    run.check("conditional drift bound", drift.violations == 0, format!("{} checks, max ratio {:.3}", drift.checks, drift.max_ratio));
    let reversal = time_reversal_check(end, d, n_list[0], s, s2, replicas, seed)?;
    run.check("time reversal (KS)", reversal.passed, format!("p = {:.3}", reversal.p_value));
    // Path counts are held in u128, which bounds the scales the density scan can reach.
    let mut rn_scales = Vec::new();
    for &n in &n_list {
        if d as i64 * LatticeRounding::new(n, end)?.n_star <= 126 {
            rn_scales.push(n);
        }
    }
    let rn = rn_ceiling_report(end, d, &rn_scales, budget.max_states)?;
    run.check(
        "bridge/free density finite before 2t*/3",
        rn.iter().all(|r| r.finite),
        format!("N in {rn_scales:?}; larger N skipped"),
    );

    write_json(
        run,
        "overlap_report.json",
        &OverlapSummary { diagnostics: &diag, tanaka_instances: instances, l2_bound: l2, drift, time_reversal: reversal, rn_ceiling: rn },
    )?;
    println!("overlap moments: {} rows", diag.rows.len());
    Ok(())
}

pub fn verify(cfg: &mut ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let only = cfg.only.get_or_insert_with(Vec::new).clone();
    let tags = cfg.tags.get_or_insert_with(Vec::new).clone();
    let fault = *cfg.inject_fault.get_or_insert(false);
    let mut opts = Options::default();
    opts.seed = *cfg.seed.get_or_insert(opts.seed);
    if let Some(bad) = only.iter().find(|i| !(1..=16).contains(*i)) {
        bail!("no criterion {bad}; ids run from 1 to 16");
    }
    let known: Vec<&str> = acceptance::CRITERIA.iter().flat_map(|c| c.tags.iter().copied()).collect();
    if let Some(bad) = tags.iter().find(|t| !known.contains(&t.as_str())) {
        bail!("unknown tag '{bad}'");
    }
    if fault {
        opts.kernel_weight_scale = BigRational::new(101.into(), 100.into());
    }
    run.seeds.push(opts.seed);
    let chosen = acceptance::select(&only, &tags);
    let mut outcomes: Vec<Outcome> = Vec::with_capacity(chosen.len());
    for c in &chosen {
        let o = acceptance::run(c, &opts);
        println!("{}", o.line());
        run.check(&format!("criterion {}: {}", o.id, o.title), o.passed, o.detail.clone());
        outcomes.push(o);
    }
    write_json(run, "acceptance.json", &outcomes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use watermelon::walk_ensembles::Budget;

    #[test]
    fn cone_sites_cover_reachable_interior() {
        let spec = BridgeSpec::new(1, 4, 0).unwrap();
        assert_eq!(cone_sites(&spec), vec![(1, -1), (1, 1), (2, -2), (2, 0), (2, 2), (3, -1), (3, 1)]);
    }

    #[test]
    fn budget_defaults_are_recorded() {
        let mut c = ExperimentConfig::default();
        let b = c.budget();
        assert_eq!(b, Budget::default());
        assert_eq!(c.max_states, Some(1_000_000));
    }
}
