//! Command-line front end: `run`, `oracle`, `parse` and `fit`.
//!
//! Exit codes are 0 on success, 1 on a runtime failure and 2 on a usage or
//! parse error.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use odnmr::analysis::{fit, fit_auto, FitModel};
use odnmr::config::RunConfig;
use odnmr::sequence::{format_sequence, parse_sequence};
use serde_json::json;

pub mod oracle;

/// Marks a manifest so `run` can replay it.
pub const MANIFEST_KIND: &str = "odnmr-manifest";

#[derive(Debug, Parser)]
#[command(name = "odnmr", version, about = "Optically detected NMR simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Format of the raw sweep table.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment of a configuration (or replay a manifest.json).
    Run { config: PathBuf },
    /// Compare Monte Carlo CPMG visibilities with the closed form.
    Oracle { config: Option<PathBuf> },
    /// Parse a pulse-sequence file and print it normalized.
    Parse { sequence: PathBuf },
    /// Fit a model to two columns of a CSV file.
    Fit {
        data: PathBuf,
        /// Model name, e.g. lorentzian, stretched_exponential, ou_cpmg_2.
        #[arg(long)]
        model: String,
        /// x column (name or 0-based index).
        #[arg(long, default_value = "0")]
        x: String,
        /// y column (name or 0-based index).
        #[arg(long, default_value = "1")]
        y: String,
        /// Optional weight column.
        #[arg(long)]
        weights: Option<String>,
        /// Comma-separated starting parameters.
        #[arg(long, value_delimiter = ',')]
        init: Option<Vec<f64>>,
        /// Keep only rows whose `repetition` column is `mean`.
        #[arg(long)]
        mean_only: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<odnmr::Error> for Failure {
    fn from(e: odnmr::Error) -> Self {
        Self {
            code: if e.is_usage() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Failure::usage("--jobs must be >= 1"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Run { config } => cmd_run(cli, config),
        Command::Oracle { config } => cmd_oracle(cli, config.as_deref()),
        Command::Parse { sequence } => cmd_parse(sequence),
        Command::Fit { data, model, x, y, weights, init, mean_only } => {
            cmd_fit(cli, data, model, x, y, weights.as_deref(), init.as_deref(), *mean_only)
        }
    })
}

/// Loads a TOML/JSON configuration, or the configuration echoed in a manifest.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: JSON: {e}", path.display())))?;
        if value.get("kind").and_then(|k| k.as_str()) == Some(MANIFEST_KIND) {
            let cfg = value
                .get("config")
                .ok_or_else(|| Failure::usage(format!("{}: manifest has no config", path.display())))?;
            return RunConfig::from_json_str(&cfg.to_string())
                .map_err(|e| Failure::from(e).context(&path.display().to_string()));
        }
    }
    Ok(RunConfig::load(path)?)
}

impl Failure {
    fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::runtime(format!("writing {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("creating {}: {e}", dir.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn versions() -> serde_json::Value {
    json!({ "odnmr": odnmr::VERSION, "odnmr-cli": env!("CARGO_PKG_VERSION") })
}

pub fn cmd_run(cli: &Cli, config: &Path) -> CliResult<()> {
    let mut cfg = load_config(config)?;
    let spec = cfg.experiment.as_mut().ok_or_else(|| {
        Failure::usage(format!("{}: configuration has no [experiment] section", config.display()))
    })?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let seed = spec.seed;
    let dir = output_dir(cli, &cfg);
    let out = cfg.run()?;

    // echo the resolved parameters so the manifest alone reproduces the run
    if let (Some(spec), serde_json::Value::Object(p)) = (cfg.experiment.as_mut(), &out.parameters) {
        spec.parameters = p.clone();
    }
    cfg.output_dir = None;

    create_dir(&dir)?;
    let raw = match cli.format {
        Format::Csv => {
            write(&dir, "raw.csv", &out.table.to_csv())?;
            "raw.csv"
        }
        Format::Json => {
            write(&dir, "raw.json", &to_json(&out.table.to_json()))?;
            "raw.json"
        }
    };
    write(&dir, "fits.json", &to_json(&out.fits))?;
    let manifest = json!({
        "kind": MANIFEST_KIND,
        "command": "run",
        "seed": seed,
        "format": raw,
        "versions": versions(),
        "config": cfg,
    });
    write(&dir, "manifest.json", &to_json(&manifest))?;

    println!("wrote {} rows to {}", out.table.rows.len(), dir.join(raw).display());
    for f in &out.fits {
        let derived: Vec<String> = f.derived.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        let label = if f.label.is_empty() { String::new() } else { format!(" [{}]", f.label) };
        println!("{}{label}: {}", f.model.name(), derived.join(" "));
    }
    Ok(())
}

pub fn cmd_oracle(cli: &Cli, config: Option<&Path>) -> CliResult<()> {
    let mut cfg = match config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.oracle.seed = seed;
    }
    let report = oracle::run(&cfg)?;
    let dir = output_dir(cli, &cfg);
    create_dir(&dir)?;
    write(&dir, "oracle_report.json", &to_json(&report))?;
    for c in &report.cases {
        if c.status != oracle::Status::Pass {
            println!(
                "{:?}: N={} tau={:.4e} s analytic={:.5} mc={:.5}±{:.5} z={:.2}",
                c.status, c.n, c.tau_s, c.analytic, c.mc_mean, c.mc_std_error, c.z
            );
        }
    }
    println!(
        "{} cases, {} failed, {} inconclusive, max |z| = {:.3}",
        report.cases.len(),
        report.n_failed,
        report.n_inconclusive,
        report.max_abs_z
    );
    if report.passed {
        Ok(())
    } else if report.n_failed > 0 {
        Err(Failure::runtime(format!("{} oracle cases with |z| >= {}", report.n_failed, report.z_threshold)))
    } else {
        Err(Failure::runtime(format!("oracle inconclusive: {} cases without a standard error", report.n_inconclusive)))
    }
}

pub fn cmd_parse(path: &Path) -> CliResult<()> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let seq = parse_sequence(&text).map_err(|e| Failure::from(e).context(&path.display().to_string()))?;
    print!("{}", format_sequence(&seq));
    let us = seq.total_duration();
    println!("# {} events, total duration {} ({us} us)", seq.events.len(), human_duration(us));
    Ok(())
}

fn human_duration(us: f64) -> String {
    if us >= 1e6 {
        format!("{} s", us / 1e6)
    } else if us >= 1e3 {
        format!("{} ms", us / 1e3)
    } else {
        format!("{us} us")
    }
}

fn column(headers: &csv::StringRecord, key: &str) -> CliResult<usize> {
    if let Some(i) = headers.iter().position(|h| h == key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(i) if i < headers.len() => Ok(i),
        _ => Err(Failure::usage(format!("no column `{key}`"))),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_fit(
    cli: &Cli,
    data: &Path,
    model: &str,
    x: &str,
    y: &str,
    weights: Option<&str>,
    init: Option<&[f64]>,
    mean_only: bool,
) -> CliResult<()> {
    let model = FitModel::from_name(model).map_err(|e| Failure::usage(e.to_string()))?;
    let mut reader = csv::Reader::from_path(data).map_err(|e| Failure::usage(format!("{}: {e}", data.display())))?;
    let headers = reader.headers().map_err(|e| Failure::usage(format!("{}: {e}", data.display())))?.clone();
    let (xi, yi) = (column(&headers, x)?, column(&headers, y)?);
    let wi = weights.map(|w| column(&headers, w)).transpose()?;
    let rep = headers.iter().position(|h| h == "repetition");
    if mean_only && rep.is_none() {
        return Err(Failure::usage("--mean-only needs a `repetition` column"));
    }

    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    let mut skipped = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Failure::usage(format!("{}: {e}", data.display())))?;
        if mean_only && rep.and_then(|r| record.get(r)) != Some("mean") {
            continue;
        }
        let num = |i: usize| -> CliResult<f64> {
            let cell = record.get(i).unwrap_or("").trim();
            cell.parse::<f64>().map_err(|_| {
                Failure::usage(format!("{}:{}: `{cell}` is not a number", data.display(), line + 2))
            })
        };
        let (xv, yv) = (num(xi)?, num(yi)?);
        let wv = wi.map(num).transpose()?.unwrap_or(1.0);
        if !(xv.is_finite() && yv.is_finite() && wv.is_finite()) {
            skipped += 1;
            continue;
        }
        xs.push(xv);
        ys.push(yv);
        ws.push(wv);
    }
    if xs.is_empty() {
        return Err(Failure::usage(format!("{}: no data rows", data.display())));
    }
    let w = wi.map(|_| ws.as_slice());
    let result = match init {
        Some(p) => fit(model, &xs, &ys, w, p)?,
        None => fit_auto(model, &xs, &ys, w)?,
    };
    let result = result.with_label(format!("{} vs {}", &headers[yi], &headers[xi]));
    if skipped > 0 {
        eprintln!("skipped {skipped} rows with non-finite values");
    }
    let text = to_json(&[&result]);
    if let Some(dir) = &cli.output {
        create_dir(dir)?;
        write(dir, "fits.json", &text)?;
    }
    print!("{text}");
    Ok(())
}
