use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use watermelon::chaos_polymer::{DisorderDistribution, InnerAverage};
use watermelon::walk_ensembles::Budget;

/// Env var that overrides the output root (below `--out`, above the config).
pub const OUT_ENV: &str = "WATERMELON_OUT";
pub const DEFAULT_OUT: &str = "watermelon-out";

/// One JSON document; every field optional. Flags override fields, and
/// each command fills in its defaults before running so the snapshot in
/// the manifest is complete.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<String>,
    pub t_star: Option<f64>,
    pub z_star: Option<f64>,
    pub d: Option<usize>,
    pub n_star: Option<i64>,
    pub x_star: Option<i64>,
    pub n_list: Option<Vec<u64>>,
    pub beta: Option<f64>,
    pub distribution: Option<DisorderDistribution>,
    pub inner: Option<InnerAverage>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub walker_steps: Option<usize>,
    pub max_states: Option<u64>,
    /// sample: list every trajectory instead of drawing.
    pub enumerate: Option<bool>,
    /// sample: number of draws.
    pub count: Option<usize>,
    /// kernels: grid (delta, eta, m, times, spaces).
    pub grid: Option<GridConfig>,
    /// kernels: ψ_k queries, each a list of (t, z) points.
    pub queries: Option<Vec<Vec<(f64, f64)>>>,
    /// polymer: samples for the chaos variance prediction; 0 skips it.
    pub chaos_samples: Option<usize>,
    /// grsk: headerless weight CSV for the z_{m,j}(n) array.
    pub weights: Option<PathBuf>,
    /// overlap: times t of the windows (0, t).
    pub t_grid: Option<Vec<f64>>,
    pub k_max: Option<usize>,
    /// overlap: window (s, s′) of the L² and reversal checks.
    pub window: Option<(f64, f64)>,
    /// overlap: scale of the exact L² check.
    pub l2_n: Option<u64>,
    /// verify: criterion ids.
    pub only: Option<Vec<u8>>,
    /// verify: criterion tags.
    pub tags: Option<Vec<String>>,
    pub inject_fault: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub delta: f64,
    pub eta: f64,
    pub m: f64,
    pub times: usize,
    pub spaces: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { delta: 0.1, eta: 0.1, m: 2.0, times: 5, spaces: 21 }
    }
}

/// Flags shared by every command; each overrides the config field of the
/// same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Master seed; required by Monte Carlo commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub t_star: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub z_star: Option<f64>,
    #[arg(long, global = true)]
    pub d: Option<usize>,
    #[arg(long, global = true)]
    pub n_star: Option<i64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x_star: Option<i64>,
    /// Comma-separated scales N.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n_list: Option<Vec<u64>>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// rademacher | gaussian | shifted_exponential, or a JSON object.
    #[arg(long, global = true)]
    pub distribution: Option<String>,
    #[arg(long, global = true)]
    pub walker_steps: Option<usize>,
    #[arg(long, global = true)]
    pub max_states: Option<u64>,
}

impl ExperimentConfig {
    /// Reads a config, or the `config` snapshot of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if v.get("assertions").is_some() {
            v = v["config"].take();
        }
        serde_json::from_value(v).with_context(|| format!("parsing {}", path.display()))
    }

    /// Config file (if any) with the flags laid over it.
    pub fn from_flags(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! lay {
            ($($f:ident),*) => { $( if o.$f.is_some() { c.$f = o.$f.clone(); } )* };
        }
        lay!(workers, seed, t_star, z_star, d, n_star, x_star, n_list, beta, replicas, walker_steps, max_states);
        if let Some(s) = &o.distribution {
            c.distribution = Some(parse_distribution(s)?);
        }
        Ok(c)
    }

    /// `--out`, then the env var, then the config, then the default.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .or_else(|| self.output.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn require_seed(&self) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => bail!("this command draws random numbers: pass --seed or set \"seed\" in the config"),
        }
    }

    pub fn budget(&mut self) -> Budget {
        let def = Budget::default();
        let walker_steps = *self.walker_steps.get_or_insert(def.walker_steps);
        let max_states = *self.max_states.get_or_insert(def.max_states as u64);
        Budget { walker_steps, max_states: max_states as u128 }
    }

    pub fn check_command(&mut self, name: &str) -> Result<()> {
        match &self.command {
            Some(c) if c != name => bail!("config is for command '{c}', not '{name}'"),
            _ => {
                self.command = Some(name.to_string());
                Ok(())
            }
        }
    }
}

pub fn parse_distribution(s: &str) -> Result<DisorderDistribution> {
    let t = s.trim();
    if t.starts_with('{') {
        return serde_json::from_str(t).context("parsing --distribution JSON");
    }
    serde_json::from_value(serde_json::json!({ "kind": t.to_ascii_lowercase().replace('-', "_") }))
        .with_context(|| format!("unknown distribution '{s}'"))
}
