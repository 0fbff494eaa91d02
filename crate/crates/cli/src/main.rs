//! Command-line front end for the constrained mixture estimator.
//!
//! Five subcommands cover the workflow end to end: `simulate` draws seeded
//! datasets, `fit` runs the constrained estimator, `consistency` runs a
//! recovery ladder from a config file, `verify` exercises one of the bound
//! checks, and `pathology` reproduces the degeneracy demonstrations.
//!
//! Every output is written atomically (temp file, then rename) and gets a
//! `<out>.manifest.json` beside it recording the subcommand, an FNV-1a hash
//! of the effective configuration (flag values plus input file bytes),
//! the seed, crate versions, and a timestamp. Reruns with the same flags
//! and files produce byte-identical outputs; only the manifest timestamp
//! moves.
//!
//! Exit codes: 0 on success, 1 for configuration or validation problems
//! (the diagnostic names the offending flag or field), 2 for runtime
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ratio_mle::{
    check_envelope, check_extremes, check_interval_count, check_loglik_bound, check_step_bound,
    derive_rng, divergence_demo, fit_constrained, run_consistency, to_csv,
    unbounded_likelihood_demo, CeilingSweepConfig, ExperimentConfig, ExtremesConfig, FitConfig,
    FitResult, IntervalCountConfig, MixtureParams,
};

/// Environment fallback for `--threads`.
const THREADS_ENV: &str = "RATIO_MLE_THREADS";

#[derive(Parser)]
#[command(name = "ratio-mle", version, about = "Constrained mixture estimation and its verification lab")]
struct Cli {
    /// Worker threads for replicate-parallel runs; falls back to the
    /// RATIO_MLE_THREADS variable, then to one thread per core. Results
    /// are identical at any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded sample from a mixture model file and write it as CSV.
    Simulate {
        /// Mixture model JSON (components with family, weight, mu, sigma).
        #[arg(long)]
        model: PathBuf,
        /// Number of observations to draw.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset CSV (single `x` column).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an all-Normal mixture under the scale-ratio floor b0 exp(-n^d).
    Fit {
        /// Input dataset CSV (single `x` column).
        #[arg(long)]
        input: PathBuf,
        /// Number of mixture components.
        #[arg(long)]
        components: usize,
        /// Floor prefactor b0.
        #[arg(long, default_value_t = 1.0)]
        b0: f64,
        /// Floor exponent d in (0, 1); the floor itself is derived from
        /// the dataset's size, never passed directly.
        #[arg(long, default_value_t = 0.5)]
        d: f64,
        /// Independent starts; defaults to the library's standard budget.
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output fit JSON (derived floor plus the full fit result).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a consistency ladder described by an experiment config file.
    Consistency {
        /// Experiment config JSON (model, schedule, sizes, replicates).
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config file's master seed when given.
        #[arg(long)]
        seed: Option<u64>,
        /// Output replicate CSV; size summaries land beside it in
        /// `<out>.summary.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one bound check and write its report CSV.
    Verify {
        #[arg(long, value_enum)]
        check: CheckKind,
        /// Check config JSON; schema depends on the check (see README).
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config file's seed when given.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reproduce a degeneracy pathology and write its rows as CSV.
    Pathology {
        #[arg(long, value_enum)]
        mode: PathologyMode,
        /// Dataset CSV for the unbounded walk.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Largest spike exponent for the unbounded walk.
        #[arg(long, default_value_t = 12)]
        k_max: u32,
        /// Model JSON for the divergence run.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Scale-decay exponent for the divergence run's pathological path.
        #[arg(long)]
        r: Option<f64>,
        /// Floor-schedule exponent the divergence run compares against.
        #[arg(long)]
        d: Option<f64>,
        /// Comma-separated sample sizes for the divergence run.
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckKind {
    Envelope,
    StepBound,
    LoglikBound,
    Extremes,
    IntervalCount,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathologyMode {
    Unbounded,
    Divergence,
}

/// Failures split by exit code: configuration problems exit 1, runtime
/// problems exit 2.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type CliResult<T> = Result<T, Failure>;

fn config_failure(err: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(err.into())
}

fn runtime_failure(err: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(err.into())
}

impl From<ratio_mle::Error> for Failure {
    fn from(err: ratio_mle::Error) -> Self {
        use ratio_mle::Error::*;
        match err {
            AllStartsAborted(_) | VanishingDensity { .. } | EmptyDrawBand { .. }
            | GridInfeasible => Failure::Runtime(err.into()),
            _ => Failure::Config(err.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Simulate { model, n, seed, out } => simulate(&model, n, seed, &out),
        Command::Fit { input, components, b0, d, restarts, seed, out } => {
            fit(&input, components, b0, d, restarts, seed, &out)
        }
        Command::Consistency { config, seed, out } => consistency(&config, seed, &out),
        Command::Verify { check, config, seed, out } => verify(check, &config, seed, &out),
        Command::Pathology { mode, input, k_max, model, r, d, n_list, seed, out } => {
            match mode {
                PathologyMode::Unbounded => {
                    let input = input.ok_or_else(|| {
                        config_failure(anyhow!("--input: the unbounded walk needs a dataset"))
                    })?;
                    pathology_unbounded(&input, k_max, &out)
                }
                PathologyMode::Divergence => {
                    let model = model.ok_or_else(|| {
                        config_failure(anyhow!("--model: the divergence run needs a model file"))
                    })?;
                    let r = r.ok_or_else(|| {
                        config_failure(anyhow!("--r: the divergence run needs a decay exponent"))
                    })?;
                    let d = d.ok_or_else(|| {
                        config_failure(anyhow!(
                            "--d: the divergence run needs a reference schedule exponent"
                        ))
                    })?;
                    if n_list.is_empty() {
                        return Err(config_failure(anyhow!(
                            "--n-list: the divergence run needs at least one sample size"
                        )));
                    }
                    pathology_divergence(&model, r, d, &n_list, seed, &out)
                }
            }
        }
    }
}

/// Install the global rayon pool from `--threads` or the environment.
fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let from_env = match std::env::var(THREADS_ENV) {
        Ok(raw) => Some(raw.parse::<usize>().map_err(|_| {
            config_failure(anyhow!("{THREADS_ENV}: expected a thread count, got {raw:?}"))
        })?),
        Err(_) => None,
    };
    let Some(threads) = flag.or(from_env) else {
        return Ok(());
    };
    if threads == 0 {
        return Err(config_failure(anyhow!("--threads: must be at least 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|err| runtime_failure(anyhow!("building the thread pool: {err}")))
}

fn simulate(model_path: &Path, n: usize, seed: u64, out: &Path) -> CliResult<()> {
    let (model, model_bytes) = read_model(model_path)?;
    let mut rng = derive_rng(seed, &[]);
    let data = model.sample(n, &mut rng)?;
    let mut csv = String::from("x\n");
    for x in &data {
        csv.push_str(&format!("{x}\n"));
    }
    let mut manifest = Manifest::new("simulate", Some(seed));
    manifest.field("n", &n.to_string());
    manifest.file("model", &model_bytes);
    write_output(out, &csv, manifest)?;
    println!("wrote {} ({n} rows)", out.display());
    Ok(())
}

/// What `fit` writes: the floor derived from (b0, d, n) next to the result
/// it produced.
#[derive(Serialize)]
struct FitOutput {
    n: usize,
    b0: f64,
    d: f64,
    ratio_floor: f64,
    fit: FitResult,
}

fn fit(
    input: &Path,
    components: usize,
    b0: f64,
    d: f64,
    restarts: Option<usize>,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    if !(b0.is_finite() && b0 > 0.0) {
        return Err(config_failure(anyhow!("--b0: must be finite and positive, got {b0}")));
    }
    if !(d > 0.0 && d < 1.0) {
        return Err(config_failure(anyhow!("--d: must lie strictly between 0 and 1, got {d}")));
    }
    let (data, input_bytes) = read_dataset(input)?;
    let n = data.len();
    let ratio_floor = b0 * (-(n as f64).powf(d)).exp();
    let mut config = FitConfig::normal(components, ratio_floor, seed);
    if let Some(restarts) = restarts {
        config.restarts = restarts;
    }
    let result = fit_constrained(&data, &config)?;
    let output = FitOutput { n, b0, d, ratio_floor, fit: result };
    let json = to_pretty_json(&output)?;
    let mut manifest = Manifest::new("fit", Some(seed));
    manifest.field("components", &components.to_string());
    manifest.field("b0", &b0.to_string());
    manifest.field("d", &d.to_string());
    manifest.field("restarts", &format!("{restarts:?}"));
    manifest.file("input", &input_bytes);
    write_output(out, &json, manifest)?;
    println!(
        "wrote {} (loglik {}, floor {ratio_floor:e})",
        out.display(),
        output.fit.loglik
    );
    Ok(())
}

fn consistency(config_path: &Path, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let bytes = read_file(config_path)?;
    let mut config: ExperimentConfig = parse_json(config_path, &bytes)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = run_consistency(&config)?;
    let summary_path = sibling_path(out, "summary.json");
    let summary_json = to_pretty_json(&report.summaries)?;
    let mut manifest = Manifest::new("consistency", Some(config.seed));
    manifest.file("config", &bytes);
    write_atomic(&summary_path, &summary_json).map_err(runtime_failure)?;
    write_output(out, &report.records_csv(), manifest)?;
    println!(
        "wrote {} ({} replicates) and {}",
        out.display(),
        report.records.len(),
        summary_path.display()
    );
    Ok(())
}

/// Config schema for the pointwise checks, which need only a draw count
/// and a seed.
#[derive(Deserialize)]
struct PointwiseCheckConfig {
    draws: usize,
    seed: u64,
}

fn verify(check: CheckKind, config_path: &Path, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let bytes = read_file(config_path)?;
    let reports = match check {
        CheckKind::Envelope => {
            let mut config: PointwiseCheckConfig = parse_json(config_path, &bytes)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            check_envelope(config.draws, config.seed)
        }
        CheckKind::StepBound => {
            let mut config: PointwiseCheckConfig = parse_json(config_path, &bytes)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            vec![check_step_bound(config.draws, config.seed)]
        }
        CheckKind::LoglikBound => {
            let mut config: CeilingSweepConfig = parse_json(config_path, &bytes)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            vec![check_loglik_bound(&config)?]
        }
        CheckKind::Extremes => {
            let mut config: ExtremesConfig = parse_json(config_path, &bytes)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            check_extremes(&config)?
        }
        CheckKind::IntervalCount => {
            let mut config: IntervalCountConfig = parse_json(config_path, &bytes)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            vec![check_interval_count(&config)?]
        }
    };
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    let check_name = check
        .to_possible_value()
        .expect("every check kind has a CLI name")
        .get_name()
        .to_owned();
    let mut manifest = Manifest::new("verify", seed);
    manifest.field("check", &check_name);
    manifest.file("config", &bytes);
    write_output(out, &to_csv(&reports), manifest)?;
    println!("wrote {} ({violations} violations)", out.display());
    Ok(())
}

fn pathology_unbounded(input: &Path, k_max: u32, out: &Path) -> CliResult<()> {
    let (data, input_bytes) = read_dataset(input)?;
    let rows = unbounded_likelihood_demo(&data, k_max)?;
    let mut manifest = Manifest::new("pathology", None);
    manifest.field("mode", "unbounded");
    manifest.field("k_max", &k_max.to_string());
    manifest.file("input", &input_bytes);
    write_output(out, &to_csv(&rows), manifest)?;
    println!("wrote {} ({} walk rows)", out.display(), rows.len());
    Ok(())
}

fn pathology_divergence(
    model_path: &Path,
    r: f64,
    d: f64,
    n_list: &[usize],
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    let (model, model_bytes) = read_model(model_path)?;
    let rows = divergence_demo(&model, r, d, n_list, seed)?;
    let mut manifest = Manifest::new("pathology", Some(seed));
    manifest.field("mode", "divergence");
    manifest.field("r", &r.to_string());
    manifest.field("d", &d.to_string());
    manifest.field(
        "n_list",
        &n_list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
    );
    manifest.file("model", &model_bytes);
    write_output(out, &to_csv(&rows), manifest)?;
    println!("wrote {} ({} ladder rows)", out.display(), rows.len());
    Ok(())
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_failure)
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> CliResult<T> {
    serde_json::from_slice(bytes)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_failure)
}

fn read_model(path: &Path) -> CliResult<(MixtureParams, Vec<u8>)> {
    let bytes = read_file(path)?;
    let model = parse_json(path, &bytes)?;
    Ok((model, bytes))
}

/// Read a dataset CSV: a literal `x` header, then one finite float per
/// line.
fn read_dataset(path: &Path) -> CliResult<(Vec<f64>, Vec<u8>)> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes)
        .with_context(|| format!("{} is not UTF-8", path.display()))
        .map_err(config_failure)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("x") => {}
        other => {
            return Err(config_failure(anyhow!(
                "{}: expected an `x` header line, got {other:?}",
                path.display()
            )));
        }
    }
    let mut data = Vec::new();
    for (index, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| {
            config_failure(anyhow!(
                "{} row {}: expected a float, got {line:?}",
                path.display(),
                index + 1
            ))
        })?;
        data.push(value);
    }
    if data.is_empty() {
        return Err(config_failure(anyhow!("{}: dataset has no rows", path.display())));
    }
    Ok((data, bytes))
}

fn to_pretty_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut json = serde_json::to_string_pretty(value)
        .context("serializing output")
        .map_err(runtime_failure)?;
    json.push('\n');
    Ok(json)
}

/// 64-bit FNV-1a over labeled fields and file bytes; stable across runs
/// and platforms.
struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

/// Manifest written beside every output: enough to reproduce the run and
/// to detect configuration drift between reruns.
#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    config_hash: String,
    seed: Option<u64>,
    versions: Versions,
    timestamp: u64,
    #[serde(skip)]
    hasher: Fnv1a,
}

#[derive(Serialize)]
struct Versions {
    core: &'static str,
    cli: &'static str,
}

impl Manifest {
    fn new(command: &'static str, seed: Option<u64>) -> Self {
        let mut hasher = Fnv1a::new();
        hasher.update(command.as_bytes());
        hasher.update(&[0]);
        if let Some(seed) = seed {
            hasher.update(&seed.to_le_bytes());
        }
        hasher.update(&[0xff]);
        Manifest {
            command,
            config_hash: String::new(),
            seed,
            versions: Versions { core: ratio_mle::VERSION, cli: env!("CARGO_PKG_VERSION") },
            timestamp: 0,
            hasher,
        }
    }

    fn field(&mut self, label: &str, value: &str) {
        self.hasher.update(label.as_bytes());
        self.hasher.update(&[0]);
        self.hasher.update(value.as_bytes());
        self.hasher.update(&[0xff]);
    }

    fn file(&mut self, label: &str, bytes: &[u8]) {
        self.hasher.update(label.as_bytes());
        self.hasher.update(&[0]);
        self.hasher.update(bytes);
        self.hasher.update(&[0xff]);
    }

    fn into_json(mut self) -> CliResult<String> {
        self.config_hash = format!("{:016x}", self.hasher.0);
        self.timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|elapsed| elapsed.as_secs())
            .unwrap_or(0);
        to_pretty_json(&self)
    }
}

/// Write the output atomically, then its manifest beside it.
fn write_output(out: &Path, contents: &str, manifest: Manifest) -> CliResult<()> {
    write_atomic(out, contents).map_err(runtime_failure)?;
    let manifest_path = sibling_path(out, "manifest.json");
    write_atomic(&manifest_path, &manifest.into_json()?).map_err(runtime_failure)?;
    Ok(())
}

/// `report.csv` with suffix `manifest.json` becomes
/// `report.csv.manifest.json` in the same directory.
fn sibling_path(out: &Path, suffix: &str) -> PathBuf {
    let name = out
        .file_name()
        .map(|name| name.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{name}.{suffix}"))
}

fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let tmp = sibling_path(path, "tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
