//! Command-line front end: `kernel-eval`, `run` and `report`.
//!
//! Exit codes are a stable contract: 0 when every declared tolerance
//! passes, 1 when a tolerance fails, 2 on usage, configuration or I/O
//! errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{format_float, run_experiment, run_experiment_with_threads, ExperimentConfig, ExperimentResult};
use crate::kernels::{gaussian_density, q_density, KernelContext};
use crate::periodic::PeriodicFunction;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable overriding `--threads`.
pub const THREADS_ENV: &str = "COALESCE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "coalesce", version, about = "Arratia flow simulation and kernel evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a kernel quantity and print it as CSV.
    KernelEval(KernelEvalArgs),
    /// Run an experiment described by a JSON config.
    Run(RunArgs),
    /// Turn stored results into plot data and optional SVG figures.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    #[value(name = "rho1")]
    Rho1,
    #[value(name = "rho2")]
    Rho2,
    #[value(name = "g")]
    PairCorrelation,
    #[value(name = "G")]
    Kernel,
    #[value(name = "sigma2")]
    Sigma2,
    #[value(name = "mixing")]
    Mixing,
    #[value(name = "q")]
    Q,
}

#[derive(Debug, Args)]
pub struct KernelEvalArgs {
    /// Quantity to evaluate.
    #[arg(long, value_enum)]
    pub what: Quantity,
    /// Time `t`; for `q` the elapsed time `s`.
    #[arg(long)]
    pub t: f64,
    /// Single separation (rho2, g), distance (mixing) or point (q).
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<f64>,
    /// Number of grid points; for `G` the side of the square grid.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Start of the grid range.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    /// End of the grid range.
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    /// Emit the unsymmetrized `G(u, v)` instead of `(G(u, v) + G(v, u)) / 2`.
    #[arg(long)]
    pub raw: bool,
    /// Test function for `sigma2`, e.g. `cos(1)` or `hatwave(0.1)`.
    #[arg(long, default_value = "cos(1)")]
    pub f: String,
    /// Left starting point for `q`.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub a: f64,
    /// Right starting point for `q`.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub b: f64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; `COALESCE_THREADS` takes precedence.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Parent directory; each run gets a fresh subdirectory.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A run directory, or a directory containing run directories.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to `<run dir>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Histogram bins per column.
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Also render SVG figures.
    #[arg(long)]
    pub svg: bool,
}

/// Parses `args` (including the program name) and executes the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let outcome = match cli.command {
        Command::KernelEval(a) => cmd_kernel_eval(&a).map(|_| EXIT_PASS),
        Command::Run(a) => cmd_run(&a),
        Command::Report(a) => cmd_report(&a).map(|_| EXIT_PASS),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn grid_points(from: f64, to: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![from];
    }
    (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect()
}

/// Kernel table as CSV text.
pub fn kernel_table(a: &KernelEvalArgs) -> Result<String> {
    let ctx = KernelContext::new(a.t)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let line = |default_from: f64, default_to: f64| -> Result<Vec<f64>> {
        if let Some(z) = a.z {
            return Ok(vec![z]);
        }
        let n = a.grid.unwrap_or(201);
        if n == 0 {
            return Err(Error::Config("--grid must be positive".into()));
        }
        Ok(grid_points(a.from.unwrap_or(default_from), a.to.unwrap_or(default_to), n))
    };
    let header: &str = match a.what {
        Quantity::Rho1 => {
            rows.push(vec![ctx.rho1()]);
            "value"
        }
        Quantity::Rho2 | Quantity::PairCorrelation => {
            let w = 4.0 * a.t.sqrt();
            for z in line(-w, w)? {
                let v = if a.what == Quantity::Rho2 { ctx.rho2(0.0, z) } else { ctx.g(z) };
                rows.push(vec![z, v]);
            }
            "x,value"
        }
        Quantity::Kernel => {
            let n = a.grid.unwrap_or(64);
            if n == 0 {
                return Err(Error::Config("--grid must be positive".into()));
            }
            let pts: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
            for &u in &pts {
                for &v in &pts {
                    let val = if a.raw { ctx.g_kernel(u, v) } else { ctx.g_sym(u, v) };
                    rows.push(vec![u, v, val]);
                }
            }
            "x,y,value"
        }
        Quantity::Sigma2 => {
            let f: PeriodicFunction = a.f.parse()?;
            rows.push(vec![ctx.sigma2(&f)?]);
            "value"
        }
        Quantity::Mixing => {
            for h in line(1.0, 6.0)? {
                rows.push(vec![h, ctx.mixing_bound(h)?.closed_form]);
            }
            "x,value"
        }
        Quantity::Q => {
            let w = 6.0 * a.t.sqrt();
            for u in line(a.a - w, a.b + w)? {
                rows.push(vec![u, q_density(a.t, a.a, a.b, u)?]);
            }
            "x,value"
        }
    };
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format_float(*v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    Ok(text)
}

pub fn cmd_kernel_eval(a: &KernelEvalArgs) -> Result<()> {
    emit(a.out.as_deref(), &kernel_table(a)?)
}

/// Provenance record written before any result file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub version: String,
    pub threads: Option<usize>,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub outputs: BTreeMap<String, PathBuf>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn fresh_dir(parent: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(parent)?;
    for i in 0.. {
        let p = parent.join(format!("{stem}-{i:03}"));
        match fs::create_dir(&p) {
            Ok(()) => return Ok(p),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("unbounded search for a free directory")
}

fn thread_override(cli: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => match cli {
            Some(0) => Err(Error::Config("--threads must be positive".into())),
            other => Ok(other),
        },
    }
}

pub fn cmd_run(a: &RunArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", a.config.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate()?;
    let threads = thread_override(a.threads)?;
    let dir = fresh_dir(&a.out, &format!("{}-seed{}", config.experiment.name(), config.seed))?;
    let mut manifest = RunManifest {
        config: config.clone(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        started_unix: unix_now(),
        finished_unix: None,
        outputs: BTreeMap::from([
            ("replicas".to_string(), dir.join("replicas.csv")),
            ("summary".to_string(), dir.join("summary.json")),
        ]),
    };
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    log::info!("running {} with {} replicas into {}", config.experiment.name(), config.replicas, dir.display());

    let result = match threads {
        Some(n) => run_experiment_with_threads(&config, n)?,
        None => run_experiment(&config)?,
    };
    fs::write(dir.join("replicas.csv"), result.replicas_csv()?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&result)?)?;
    manifest.finished_unix = Some(unix_now());
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;

    for c in &result.checks {
        println!(
            "{} {}: observed {} predicted {} tolerance {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.observed,
            c.predicted,
            c.tolerance
        );
    }
    println!("results in {}", dir.display());
    Ok(if result.passed() { EXIT_PASS } else { EXIT_TOLERANCE })
}

/// Loads a run directory written by `run`, including the per-replica rows.
pub fn load_run(dir: &Path) -> Result<ExperimentResult> {
    let summary = fs::read_to_string(dir.join("summary.json"))?;
    let mut result: ExperimentResult = serde_json::from_str(&summary)?;
    let mut reader = csv::Reader::from_path(dir.join("replicas.csv"))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != result.columns {
        return Err(Error::Parse("replicas.csv header does not match summary.json".into()));
    }
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("bad value {s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        result.rows.push(row);
    }
    Ok(result)
}

/// Histogram of one column with a normal overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub overlay_mean: f64,
    pub overlay_variance: f64,
}

impl Histogram {
    pub fn new(xs: &[f64], bins: usize, overlay_mean: f64, overlay_variance: f64) -> Self {
        let bins = bins.max(1);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if !lo.is_finite() {
            (-0.5, 0.5)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; bins];
        for &x in xs {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self {
            edges,
            counts,
            overlay_mean,
            overlay_variance,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn overlay(&self) -> Vec<f64> {
        self.centers()
            .iter()
            .map(|&x| {
                if self.overlay_variance > 0.0 {
                    gaussian_density(self.overlay_mean, self.overlay_variance, x)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,center,count,mass,density,overlay_density\n");
        let (c, m, o) = (self.centers(), self.masses(), self.overlay());
        for i in 0..self.counts.len() {
            let width = self.edges[i + 1] - self.edges[i];
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                format_float(self.edges[i]),
                format_float(self.edges[i + 1]),
                format_float(c[i]),
                self.counts[i],
                format_float(m[i]),
                format_float(m[i] / width),
                format_float(o[i])
            );
        }
        s
    }

    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, pad) = (640.0, 400.0, 40.0);
        let widths: Vec<f64> = self.edges.windows(2).map(|e| e[1] - e[0]).collect();
        let dens: Vec<f64> = self.masses().iter().zip(&widths).map(|(m, w)| m / w).collect();
        let over = self.overlay();
        let ymax = dens.iter().chain(&over).copied().fold(1e-300, f64::max);
        let (x0, x1) = (self.edges[0], *self.edges.last().expect("nonempty edges"));
        let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - y / ymax * (h - 2.0 * pad);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{pad}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n"
        );
        for (i, d) in dens.iter().enumerate() {
            let (a, b) = (sx(self.edges[i]), sx(self.edges[i + 1]));
            let _ = writeln!(
                s,
                "<rect x=\"{a:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>",
                sy(*d),
                (b - a).max(0.0),
                (sy(0.0) - sy(*d)).max(0.0)
            );
        }
        let pts: Vec<String> = self
            .centers()
            .iter()
            .zip(&over)
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#de2d26\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Predicted `(mean, variance)` of a per-replica column when the result
/// carries one; `None` means the overlay falls back to a fitted normal.
fn predicted_normal(result: &ExperimentResult, column: &str) -> Option<(f64, f64)> {
    let p = &result.predicted;
    match result.kind.as_str() {
        "clt_single" if column == "x" => p.get("sigma2").map(|v| (0.0, *v)),
        "clt_multi_time" => {
            let i = column.strip_prefix("x_t")?;
            p.get(&format!("sigma2_t{i}")).map(|v| (0.0, *v))
        }
        "clt_multi_function" => {
            let i = column.strip_prefix("x_f")?;
            p.get(&format!("cov_f{i}_f{i}")).map(|v| (0.0, *v))
        }
        _ => None,
    }
}

fn report_one(run_dir: &Path, out: &Path, bins: usize, svg: bool) -> Result<Vec<PathBuf>> {
    let result = load_run(run_dir)?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = out.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    for name in result.columns.iter().skip(1) {
        let col = result.column(name).expect("column listed in header");
        let (m, v) = predicted_normal(&result, name)
            .unwrap_or_else(|| (crate::stats::mean(&col), crate::stats::variance(&col)));
        let hist = Histogram::new(&col, bins, m, v);
        put(format!("hist_{name}.csv"), hist.to_csv())?;
        if svg {
            put(format!("hist_{name}.svg"), hist.to_svg(&format!("{} {name}", result.kind)))?;
        }
    }
    for table in &result.tables {
        let mut s = table.columns.join(",");
        s.push('\n');
        for r in &table.rows {
            let cells: Vec<String> = r.iter().map(|v| format_float(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        put(format!("table_{}.csv", table.name), s)?;
    }
    if let (Some(slope), Some(intercept)) = (result.values.get("slope"), result.values.get("intercept")) {
        if let Some(t) = result.tables.iter().find(|t| t.name == "continuity") {
            let mut s = String::from("gap,fourth_moment,fitted\n");
            for r in &t.rows {
                let fitted = (intercept + slope * r[0].ln()).exp();
                let _ = writeln!(s, "{},{},{}", format_float(r[0]), format_float(r[1]), format_float(fitted));
            }
            put("slope_fit.csv".into(), s)?;
        }
    }
    if let Some(t) = kernel_time(&result.config) {
        let ctx = KernelContext::new(t)?;
        let mut s = String::from("z,rho2,g,periodized\n");
        for z in grid_points(-3.0, 3.0, 241) {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                format_float(z),
                format_float(ctx.rho2(0.0, z)),
                format_float(ctx.g(z)),
                format_float(ctx.periodized(z))
            );
        }
        put("kernel_curves.csv".into(), s)?;
    }
    Ok(written)
}

fn kernel_time(config: &ExperimentConfig) -> Option<f64> {
    use crate::experiments::Experiment::*;
    match &config.experiment {
        Intensity { t, .. }
        | PairDensity { t, .. }
        | CltSingle { t, .. }
        | CltMultiFunction { t, .. }
        | Mixing { t, .. }
        | DoubleIntegral { t, .. } => Some(*t),
        CltMultiTime { times, .. } => times.first().copied(),
        Continuity { s, .. } => Some(*s),
        XiStationarity { t1, .. } | WebCoalescence { t1, .. } => Some(*t1),
    }
}

pub fn cmd_report(a: &ReportArgs) -> Result<Vec<PathBuf>> {
    let input = &a.input;
    let is_run = |p: &Path| p.join("summary.json").is_file() && p.join("replicas.csv").is_file();
    let runs: Vec<PathBuf> = if is_run(input) {
        vec![input.clone()]
    } else {
        let entries = fs::read_dir(input)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", input.display())))?;
        let mut v: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_run(p))
            .collect();
        v.sort();
        v
    };
    if runs.is_empty() {
        return Err(Error::Io(format!("no results found in {}", input.display())));
    }
    let mut written = Vec::new();
    for run in &runs {
        let out = match &a.out {
            Some(o) if runs.len() == 1 => o.clone(),
            Some(o) => o.join(run.file_name().unwrap_or_default()),
            None => run.join("report"),
        };
        written.extend(report_one(run, &out, a.bins, a.svg)?);
    }
    for p in &written {
        println!("{}", p.display());
    }
    Ok(written)
}
