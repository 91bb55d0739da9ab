//! Declarative experiment runner: JSON configs in, JSON/CSV result files
//! out. Every numeric in the outputs is produced by a core-module
//! operation; this crate only parses, dispatches, and serializes. Outputs
//! carry no timestamps so identical configs yield byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use fbchan_core::capacity::{
    blahut_arimoto, cfb_ascent, cfb_exhaustive, seeded_kernel_2, seeded_state_channel,
    verify_state1, verify_state2,
};
use fbchan_core::channel::{additive_channel, ShannonStrategy, SlidingBlockChannel};
use fbchan_core::codelab::{
    run_fb_experiment, run_nf_experiment, CodebookMode, ExperimentParams, TrialReport,
};
use fbchan_core::processes::{block_marginal, super_decompose, NoiseModel};
use fbchan_core::{Alphabet, Pmf};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FBCHAN_OUT_DIR";

/// Machine-readable error object; printed as JSON on failure.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl CliError {
    fn new(kind: &str, message: String) -> Self {
        // serde error messages quote the offending field in backticks
        let field = message.split('`').nth(1).map(str::to_string);
        CliError { kind: kind.into(), message, field }
    }
}

impl From<fbchan_core::Error> for CliError {
    fn from(e: fbchan_core::Error) -> Self {
        let kind = match &e {
            fbchan_core::Error::InvalidPmf(_) => "invalid_pmf",
            fbchan_core::Error::InvalidArgument(_) => "invalid_argument",
            fbchan_core::Error::Mismatch(_) => "mismatch",
            fbchan_core::Error::SizeLimit { .. } => "size_limit",
            fbchan_core::Error::NotImplemented(_) => "not_implemented",
            fbchan_core::Error::NonConvergence(_) => "non_convergence",
            fbchan_core::Error::CapExceeded(_) => "cap_exceeded",
            fbchan_core::Error::Io(_) => "io",
            fbchan_core::Error::Json(_) => "schema",
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("schema", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::new("csv", e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    /// y = x + z mod `alphabet`, window m = 0.
    Additive { alphabet: usize },
    /// Explicit window map g over (x-window, z-window), row-major.
    Table { m: usize, x: usize, z: usize, y: usize, g: Vec<usize> },
}

impl ChannelSpec {
    pub fn build(&self) -> CliResult<SlidingBlockChannel> {
        Ok(match self {
            ChannelSpec::Additive { alphabet } => additive_channel(*alphabet)?,
            ChannelSpec::Table { m, x, z, y, g } => SlidingBlockChannel::new(
                *m,
                Alphabet::new(*x)?,
                Alphabet::new(*z)?,
                Alphabet::new(*y)?,
                g.clone(),
            )?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    /// History-blind strategy x_i = u_i; omitted pmfs default to uniform.
    PassThrough {
        #[serde(default)]
        pmfs: Option<Vec<Vec<f64>>>,
    },
    /// Fully explicit strategy tables.
    Explicit { u_sizes: Vec<usize>, pmfs: Vec<Vec<f64>>, maps: Vec<Vec<usize>> },
}

impl StrategySpec {
    pub fn build(&self, ch: &SlidingBlockChannel, n: usize) -> CliResult<ShannonStrategy> {
        match self {
            StrategySpec::PassThrough { pmfs } => {
                let laws: Vec<Pmf> = match pmfs {
                    Some(rows) => rows
                        .iter()
                        .map(|p| Pmf::new(ch.x, p.clone()))
                        .collect::<Result<_, _>>()?,
                    None => (0..n).map(|_| Pmf::uniform(ch.x)).collect(),
                };
                Ok(ShannonStrategy::pass_through(ch, n, laws)?)
            }
            StrategySpec::Explicit { u_sizes, pmfs, maps } => {
                let laws: Vec<Pmf> = u_sizes
                    .iter()
                    .zip(pmfs)
                    .map(|(&u, p)| Pmf::new(Alphabet::new(u)?, p.clone()))
                    .collect::<Result<_, _>>()?;
                let s = ShannonStrategy {
                    n,
                    x: ch.x,
                    y_ext: ch.output_alphabet(),
                    u_sizes: u_sizes.clone(),
                    pmfs: laws,
                    maps: maps.clone(),
                };
                s.validate()?;
                Ok(s)
            }
        }
    }
}

fn default_tol() -> f64 {
    1e-8
}
fn default_steps() -> usize {
    fbchan_core::tuning::ORACLE_GRID_STEPS
}
fn default_multistarts() -> usize {
    8
}
fn default_instances() -> usize {
    10
}
fn default_epsilon() -> f64 {
    fbchan_core::tuning::DEFAULT_EPSILON
}
fn default_mode() -> CodebookMode {
    CodebookMode::FreshPerTrial
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbMethod {
    Exhaustive,
    Ascent,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    State1,
    State2,
}

/// Grid for `sweep`: the cartesian product is visited lexicographically,
/// `l` outermost, then `rate`. An omitted axis pins the base value; an
/// explicitly empty axis empties the product (header-only CSV).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default)]
    pub l: Option<Vec<usize>>,
    #[serde(default)]
    pub rate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Capacity {
        channel: ChannelSpec,
        noise: NoiseModel,
        n: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Fbcapacity {
        channel: ChannelSpec,
        noise: NoiseModel,
        n: usize,
        method: FbMethod,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_multistarts")]
        multistarts: usize,
        #[serde(default)]
        seed: u64,
    },
    LemmaCheck {
        lemma: Lemma,
        #[serde(default = "default_instances")]
        instances: usize,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default)]
        seed: u64,
    },
    SimulateNf {
        channel: ChannelSpec,
        noise: NoiseModel,
        n: usize,
        l: usize,
        rate: f64,
        trials: usize,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_mode")]
        mode: CodebookMode,
        /// Generating block law over X^n; uniform when omitted.
        #[serde(default)]
        pstar: Option<Vec<f64>>,
        #[serde(default)]
        sweep: Option<SweepGrid>,
    },
    SimulateFb {
        channel: ChannelSpec,
        noise: NoiseModel,
        n: usize,
        l: usize,
        rate: f64,
        trials: usize,
        strategy: StrategySpec,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_mode")]
        mode: CodebookMode,
        #[serde(default)]
        sweep: Option<SweepGrid>,
    },
    Decompose {
        noise: NoiseModel,
        n: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub schema_version: u32,
    /// Output file path; relative paths resolve against FBCHAN_OUT_DIR
    /// (or the working directory). Default name depends on the command.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(flatten)]
    pub command: Command,
}

pub fn load_config(path: &Path) -> CliResult<Config> {
    let text = fs::read_to_string(path)?;
    let cfg: Config = serde_json::from_str(&text)?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::new(
            "schema",
            format!(
                "unsupported `schema_version` {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            ),
        ));
    }
    Ok(cfg)
}

fn resolve_output(explicit: &Option<String>, default_name: &str) -> PathBuf {
    let name = explicit.clone().unwrap_or_else(|| default_name.to_string());
    let p = PathBuf::from(&name);
    if p.is_absolute() {
        return p;
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(p),
        None => p,
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

const CSV_HEADER: [&str; 11] = [
    "n", "L", "R", "actual_rate", "epsilon", "trials", "errors", "pe", "ci_lo", "ci_hi", "seed",
];

fn write_csv(path: &Path, rows: &[TrialReport]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.l.to_string(),
            r.rate.to_string(),
            r.actual_rate.to_string(),
            r.epsilon.to_string(),
            r.trials.to_string(),
            r.errors.to_string(),
            r.pe.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::new("io", e.to_string()))?;
    Ok(())
}

fn grid_points(base_l: usize, base_rate: f64, grid: &SweepGrid) -> Vec<(usize, f64)> {
    let ls = grid.l.clone().unwrap_or_else(|| vec![base_l]);
    let rates = grid.rate.clone().unwrap_or_else(|| vec![base_rate]);
    let mut out = Vec::new();
    for &l in &ls {
        for &r in &rates {
            out.push((l, r));
        }
    }
    out
}

fn pstar_from(spec: &Option<Vec<f64>>, ch: &SlidingBlockChannel, n: usize) -> CliResult<Pmf> {
    let cells = ch.x.size.pow(n as u32);
    Ok(match spec {
        Some(p) => Pmf::new(Alphabet::new(cells)?, p.clone())?,
        None => Pmf::uniform(Alphabet::new(cells)?),
    })
}

/// Execute a config. `allow_sweep` distinguishes the `sweep` entry point
/// (grid required) from `run` (grid forbidden). Returns the files written.
pub fn execute(cfg: &Config, allow_sweep: bool) -> CliResult<Vec<PathBuf>> {
    match &cfg.command {
        Command::Capacity { channel, noise, n, tol } => {
            let ch = channel.build()?;
            let zb = block_marginal(noise, *n)?;
            let cond = ch.full_conditional(*n, &zb)?;
            let x_cells = ch.x.size.pow(*n as u32);
            let y_cells = (ch.y.size + 1).pow(*n as u32);
            let r = blahut_arimoto(&cond, x_cells, y_cells, *tol)?;
            let out = resolve_output(&cfg.output, "capacity.json");
            write_json(
                &out,
                &json!({
                    "command": "capacity",
                    "n": n,
                    "value_per_use": r.value / *n as f64,
                    "value_block": r.value,
                    "iterations": r.iterations,
                    "gap": r.gap,
                    "converged": r.converged,
                    "maximizer": r.maximizer,
                }),
            )?;
            Ok(vec![out])
        }
        Command::Fbcapacity { channel, noise, n, method, steps, tol, multistarts, seed } => {
            let ch = channel.build()?;
            let zb = block_marginal(noise, *n)?;
            let kernel = ch.n_block_law(*n, &zb)?;
            let r = match method {
                FbMethod::Exhaustive => cfb_exhaustive(&kernel, *steps)?,
                FbMethod::Ascent => cfb_ascent(&kernel, *tol, *multistarts, *seed)?,
            };
            let out = resolve_output(&cfg.output, "fbcapacity.json");
            write_json(
                &out,
                &json!({
                    "command": "fbcapacity",
                    "n": n,
                    "method": method,
                    "seed": seed,
                    "value_per_use": r.value,
                    "iterations": r.iterations,
                    "gap": r.gap,
                    "converged": r.converged,
                    "maximizer": r.maximizer,
                }),
            )?;
            Ok(vec![out])
        }
        Command::LemmaCheck { lemma, instances, tol, seed } => {
            let mut rows = Vec::new();
            let mut max_gap: f64 = 0.0;
            let threshold = match lemma {
                Lemma::State1 => 1e-4,
                Lemma::State2 => 5e-3,
            };
            for i in 0..*instances {
                let inst_seed = seed + i as u64;
                let (lhs, rhs, gap) = match lemma {
                    Lemma::State1 => {
                        let sc = seeded_state_channel(inst_seed);
                        verify_state1(&sc, 3, *tol)?
                    }
                    Lemma::State2 => {
                        let kernel = seeded_kernel_2(inst_seed);
                        verify_state2(&kernel, default_steps(), *tol, inst_seed)?
                    }
                };
                max_gap = max_gap.max(gap);
                rows.push(json!({ "seed": inst_seed, "lhs": lhs, "rhs": rhs, "gap": gap }));
            }
            let out = resolve_output(&cfg.output, "lemma_check.json");
            write_json(
                &out,
                &json!({
                    "command": "lemma-check",
                    "lemma": lemma,
                    "threshold": threshold,
                    "max_gap": max_gap,
                    "pass": max_gap < threshold,
                    "instances": rows,
                }),
            )?;
            Ok(vec![out])
        }
        Command::SimulateNf {
            channel,
            noise,
            n,
            l,
            rate,
            trials,
            epsilon,
            seed,
            mode,
            pstar,
            sweep,
        } => {
            let ch = channel.build()?;
            let law = pstar_from(pstar, &ch, *n)?;
            let points = sweep_points(sweep, allow_sweep, *l, *rate)?;
            let mut reports = Vec::new();
            for (pl, pr) in points {
                let mut params = ExperimentParams::new(*n, pl, pr, *trials, *epsilon, *seed);
                params.mode = *mode;
                reports.push(run_nf_experiment(&ch, noise, &law, &params)?);
            }
            let out = resolve_output(&cfg.output, "simulate_nf.csv");
            write_csv(&out, &reports)?;
            Ok(vec![out])
        }
        Command::SimulateFb {
            channel,
            noise,
            n,
            l,
            rate,
            trials,
            strategy,
            epsilon,
            seed,
            mode,
            sweep,
        } => {
            let ch = channel.build()?;
            let strat = strategy.build(&ch, *n)?;
            let points = sweep_points(sweep, allow_sweep, *l, *rate)?;
            let mut reports = Vec::new();
            for (pl, pr) in points {
                let mut params = ExperimentParams::new(*n, pl, pr, *trials, *epsilon, *seed);
                params.mode = *mode;
                reports.push(run_fb_experiment(&ch, noise, &strat, &params)?);
            }
            let out = resolve_output(&cfg.output, "simulate_fb.csv");
            write_csv(&out, &reports)?;
            Ok(vec![out])
        }
        Command::Decompose { noise, n } => {
            let d = super_decompose(noise, *n)?;
            let out = resolve_output(&cfg.output, "decompose.json");
            write_json(&out, &json!({ "command": "decompose", "decomposition": d }))?;
            Ok(vec![out])
        }
    }
}

fn sweep_points(
    sweep: &Option<SweepGrid>,
    allow_sweep: bool,
    l: usize,
    rate: f64,
) -> CliResult<Vec<(usize, f64)>> {
    match (sweep, allow_sweep) {
        (Some(grid), true) => Ok(grid_points(l, rate, grid)),
        (Some(_), false) => Err(CliError::new(
            "schema",
            "config declares a `sweep` grid; use the sweep subcommand".into(),
        )),
        (None, true) => Err(CliError::new(
            "schema",
            "sweep requires a `sweep` grid in the config".into(),
        )),
        (None, false) => Ok(vec![(l, rate)]),
    }
}

/// `run <config>`: execute a single experiment.
pub fn run(config_path: &Path) -> CliResult<Vec<PathBuf>> {
    let cfg = load_config(config_path)?;
    execute(&cfg, false)
}

/// `sweep <config>`: execute a grid of experiments into one CSV.
pub fn sweep(config_path: &Path) -> CliResult<Vec<PathBuf>> {
    let cfg = load_config(config_path)?;
    execute(&cfg, true)
}

/// `plotdata <csv>`: reshape a sweep CSV into a gnuplot-ready
/// whitespace-delimited file with a comment header, written next to the
/// input (or into FBCHAN_OUT_DIR) with extension `.dat`.
pub fn plotdata(csv_path: &Path) -> CliResult<PathBuf> {
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let headers = rdr.headers()?.clone();
    let idx = |name: &str| -> CliResult<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::new("csv", format!("missing column `{name}`")))
    };
    let (il, ir, ipe) = (idx("L")?, idx("R")?, idx("pe")?);
    let (ilo, ihi) = (idx("ci_lo")?, idx("ci_hi")?);
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?);
    }
    let distinct = |i: usize| {
        let mut vals: Vec<&str> = rows.iter().map(|r| &r[i]).collect();
        vals.sort_unstable();
        vals.dedup();
        vals.len()
    };
    let mut out = String::new();
    if !rows.is_empty() && distinct(il) > 1 {
        out.push_str("# L pe ci_lo ci_hi\n");
        for r in &rows {
            out.push_str(&format!("{} {} {} {}\n", &r[il], &r[ipe], &r[ilo], &r[ihi]));
        }
    } else {
        out.push_str("# rate pe\n");
        for r in &rows {
            out.push_str(&format!("{} {}\n", &r[ir], &r[ipe]));
        }
    }
    let name = csv_path
        .file_stem()
        .map(|s| format!("{}.dat", s.to_string_lossy()))
        .unwrap_or_else(|| "plot.dat".into());
    let target = match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(name),
        None => csv_path.with_extension("dat"),
    };
    fs::write(&target, out)?;
    Ok(target)
}
