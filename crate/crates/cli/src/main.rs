//! `watermelon`: runs the experiments of the core crate from a JSON config
//! and flags, writing CSV tables, JSON summaries and a run manifest.

mod commands;
mod config;
mod manifest;

use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};
use manifest::{RunDir, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "watermelon", version, about = "Non-intersecting walk bridges, kernels, polymers and overlaps")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw or list bridge trajectories.
    Sample(SampleArgs),
    /// Discrete-to-continuum kernel study and ψ_k queries.
    Kernels(KernelArgs),
    /// Centered polymer partition functions under intermediate disorder.
    Polymer,
    /// Rescaled τ under inverse-gamma weights.
    Grsk(GrskArgs),
    /// Overlap-time moments and the checks around them.
    Overlap(OverlapArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// List every trajectory instead of drawing.
    #[arg(long)]
    enumerate: bool,
    /// Number of draws.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Debug, Args)]
struct KernelArgs {
    /// ψ_k query as t1:z1;t2:z2;… (repeatable).
    #[arg(long = "query")]
    queries: Vec<String>,
}

#[derive(Debug, Args)]
struct GrskArgs {
    /// Headerless weight CSV for the z_{m,j}(n) array.
    #[arg(long)]
    weights: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
struct OverlapArgs {
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Criterion ids, comma-separated.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u8>>,
    /// Criterion tag (repeatable).
    #[arg(long = "tag")]
    tags: Vec<String>,
    /// Scale every kernel weight by 101/100; the suite must then fail.
    #[arg(long)]
    inject_fault: bool,
}

fn parse_query(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(';')
        .map(|p| {
            let (t, z) = p.split_once(':').with_context(|| format!("query point '{p}' is not t:z"))?;
            Ok((t.trim().parse()?, z.trim().parse()?))
        })
        .collect()
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Kernels(_) => "kernels",
            Command::Polymer => "polymer",
            Command::Grsk(_) => "grsk",
            Command::Overlap(_) => "overlap",
            Command::Verify(_) => "verify",
        }
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        match self {
            Command::Sample(a) => {
                if a.enumerate {
                    cfg.enumerate = Some(true);
                }
                if a.count.is_some() {
                    cfg.count = a.count;
                }
            }
            Command::Kernels(a) => {
                if !a.queries.is_empty() {
                    cfg.queries = Some(a.queries.iter().map(|q| parse_query(q)).collect::<Result<_>>()?);
                }
            }
            Command::Polymer => {}
            Command::Grsk(a) => {
                if a.weights.is_some() {
                    cfg.weights = a.weights.clone();
                }
            }
            Command::Overlap(a) => {
                if a.t_grid.is_some() {
                    cfg.t_grid = a.t_grid.clone();
                }
                if a.k_max.is_some() {
                    cfg.k_max = a.k_max;
                }
            }
            Command::Verify(a) => {
                if a.only.is_some() {
                    cfg.only = a.only.clone();
                }
                if !a.tags.is_empty() {
                    cfg.tags = Some(a.tags.clone());
                }
                if a.inject_fault {
                    cfg.inject_fault = Some(true);
                }
            }
        }
        Ok(())
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let name = cli.command.name();
    let mut cfg = ExperimentConfig::from_flags(&cli.overrides)?;
    cfg.check_command(name)?;
    cli.command.apply(&mut cfg)?;

    let default_workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let workers = *cfg.workers.get_or_insert(default_workers);
    if workers == 0 {
        anyhow::bail!("workers must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers).build_global().context("starting the worker pool")?;

    let root = cfg.output_root(cli.overrides.out.as_deref());
    let mut run = RunDir::new(root.join(name));
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let res = match &cli.command {
        Command::Sample(_) => commands::sample(&mut cfg, &mut run),
        Command::Kernels(_) => commands::kernels(&mut cfg, &mut run),
        Command::Polymer => commands::polymer(&mut cfg, &mut run),
        Command::Grsk(_) => commands::grsk(&mut cfg, &mut run),
        Command::Overlap(_) => commands::overlap(&mut cfg, &mut run),
        Command::Verify(_) => commands::verify(&mut cfg, &mut run),
    };
    let error = res.as_ref().err().map(|e| format!("{e:#}"));
    let passed = error.is_none() && run.assertions.iter().all(|a| a.passed);
    let manifest = RunManifest {
        command: name.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg,
        seeds: run.seeds.clone(),
        workers,
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        outputs: run.outputs.clone(),
        assertions: run.assertions.clone(),
        error,
        passed,
    };
    std::fs::create_dir_all(run.path()).with_context(|| format!("creating {}", run.path().display()))?;
    let path = run.path().join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    res?;
    // verify prints its own per-criterion lines.
    for a in manifest.assertions.iter().filter(|_| name != "verify") {
        println!("{} {}{}", if a.passed { "PASS" } else { "FAIL" }, a.name, if a.detail.is_empty() { String::new() } else { format!(": {}", a.detail) });
    }
    println!("manifest: {}", path.display());
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more assertions failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_parsing() {
        assert_eq!(parse_query("0.5:0.1;0.25:-1").unwrap(), vec![(0.5, 0.1), (0.25, -1.0)]);
        assert!(parse_query("0.5").is_err());
        assert!(parse_query("a:1").is_err());
    }

    #[test]
    fn cli_shape_is_valid() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
