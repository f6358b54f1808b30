//! Experiment configuration: a flat TOML schema, strict parsing, and the
//! defaulting rules everything downstream relies on.
//!
//! `load_config` takes the file from raw text to a normalized
//! [`ExperimentConfig`] in one pass, so the runner can assume a coherent
//! experiment: the sections match the mode, referenced files exist, and
//! every optional knob holds its resolved value. Validation failures name
//! the offending field, `sampler[1].steps` style, and nothing is computed
//! until the whole file has been checked.
//!
//! The schema is deliberately flat. Top level keys pick the mode, seed,
//! replication count and output directory; `[generator]`, `[mcar]` and
//! `[real_data]` describe the data source; each `[[sampler]]` table is one
//! chain recipe; `[benchmark]` and `[diagnostics]` tune the comparison.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use pigeonhole::{
    PreconditionMode, PriorSpec, SamplerConfig, SamplerKind, StepSchedule, StepSizes,
};
use serde::Deserialize;

/// What the experiment treats as its data source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    SimulateBalanced,
    SimulateMcar,
    RealData,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::SimulateBalanced => "simulate-balanced",
            Mode::SimulateMcar => "simulate-mcar",
            Mode::RealData => "real-data",
        }
    }

    pub fn is_simulation(&self) -> bool {
        matches!(self, Mode::SimulateBalanced | Mode::SimulateMcar)
    }

    /// True when the observed table can have holes, which rules out the
    /// complete-table sampler.
    pub fn has_missing_data(&self) -> bool {
        !matches!(self, Mode::SimulateBalanced)
    }

    fn parse(text: &str) -> Result<Mode> {
        match text {
            "simulate-balanced" => Ok(Mode::SimulateBalanced),
            "simulate-mcar" => Ok(Mode::SimulateMcar),
            "real-data" => Ok(Mode::RealData),
            other => bail!(
                "mode: expected simulate-balanced, simulate-mcar, or real-data, got {other:?}"
            ),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Movielens,
    Insteval,
    TableCsv,
}

impl DataFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataFormat::Movielens => "movielens",
            DataFormat::Insteval => "insteval",
            DataFormat::TableCsv => "table-csv",
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneratorSettings {
    pub rows: usize,
    pub cols: usize,
    pub b: Vec<f64>,
    pub variances: [f64; 3],
    pub covariate_mean: f64,
    pub covariate_variance: f64,
}

#[derive(Clone, Debug)]
pub struct RealDataSettings {
    pub ratings: PathBuf,
    pub format: DataFormat,
    pub metadata: Option<PathBuf>,
}

/// One chain recipe. `config` carries everything the library needs except
/// the per-replication seed, the sieve size N, and the initial point, which
/// depend on the realized table and are filled in by the runner.
#[derive(Clone, Debug)]
pub struct SamplerSettings {
    pub name: String,
    pub config: SamplerConfig,
    pub sieve_constants: Option<[f64; 4]>,
    pub init: Option<(Vec<f64>, [f64; 3])>,
}

#[derive(Clone, Debug)]
pub struct BenchmarkSettings {
    /// Cached benchmark chain. When absent the runner draws its own Gibbs
    /// benchmark per replication.
    pub file: Option<PathBuf>,
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub prior: PriorSpec,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub master_seed: u64,
    pub replications: usize,
    pub out_dir: PathBuf,
    pub generator: Option<GeneratorSettings>,
    pub mcar_p: Option<f64>,
    pub real_data: Option<RealDataSettings>,
    pub samplers: Vec<SamplerSettings>,
    pub benchmark: BenchmarkSettings,
    pub trace_window: usize,
    pub barycenter_grid: usize,
    pub canonical: bool,
    pub config_hash: u64,
    pub config_path: PathBuf,
}

/// Command line overrides folded into the file during loading.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub canonical: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: String,
    seed: Option<u64>,
    replications: Option<usize>,
    out: Option<String>,
    generator: Option<RawGenerator>,
    mcar: Option<RawMcar>,
    real_data: Option<RawRealData>,
    #[serde(default)]
    sampler: Vec<RawSampler>,
    benchmark: Option<RawBenchmark>,
    diagnostics: Option<RawDiagnostics>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    rows: usize,
    cols: usize,
    b: Vec<f64>,
    variances: [f64; 3],
    covariate_mean: Option<f64>,
    covariate_variance: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMcar {
    p_missing: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRealData {
    ratings: String,
    format: String,
    metadata: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    kind: String,
    label: Option<String>,
    total_iterations: Option<usize>,
    burn_in: Option<usize>,
    thin: Option<usize>,
    subset_rows: Option<usize>,
    subset_cols: Option<usize>,
    latent_draws: Option<usize>,
    max_redraws: Option<usize>,
    steps: Option<[f64; 4]>,
    warmup_steps: Option<[f64; 4]>,
    warmup_iterations: Option<usize>,
    precondition: Option<String>,
    precondition_window: Option<usize>,
    sieve: Option<[f64; 4]>,
    prior: Option<[f64; 6]>,
    init_b: Option<Vec<f64>>,
    init_variances: Option<[f64; 3]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBenchmark {
    file: Option<String>,
    total_iterations: Option<usize>,
    burn_in: Option<usize>,
    thin: Option<usize>,
    prior: Option<[f64; 6]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    trace_window: Option<usize>,
    barycenter_grid: Option<usize>,
}

/// 64-bit FNV-1a, used to stamp the manifest with the config file's hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Reads, parses, and fully validates a config file, folding in command
/// line overrides. Everything the runner touches afterwards has already
/// been checked here, including the existence of referenced files.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let raw: RawConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    let config_hash = fnv1a64(text.as_bytes());

    let mode = Mode::parse(&raw.mode)?;
    let master_seed = overrides.seed.or(raw.seed).unwrap_or(0);
    let replications = raw.replications.unwrap_or(1);
    ensure!(replications >= 1, "replications: must be at least 1");

    let out_dir = overrides
        .out
        .clone()
        .or_else(|| raw.out.as_ref().map(PathBuf::from))
        .context("out: no output directory; set out in the config or pass --out")?;

    let generator = match (mode.is_simulation(), raw.generator) {
        (true, Some(g)) => Some(normalize_generator(g)?),
        (true, None) => bail!("generator: section required in mode {mode}"),
        (false, Some(_)) => bail!("generator: section not allowed in mode real-data"),
        (false, None) => None,
    };

    let mcar_p = match (mode, raw.mcar) {
        (Mode::SimulateMcar, Some(m)) => {
            ensure!(
                m.p_missing.is_finite() && (0.0..1.0).contains(&m.p_missing),
                "mcar.p_missing: must lie in [0, 1), got {}",
                m.p_missing
            );
            Some(m.p_missing)
        }
        (Mode::SimulateMcar, None) => bail!("mcar: section required in mode simulate-mcar"),
        (_, Some(_)) => bail!("mcar: section only allowed in mode simulate-mcar"),
        (_, None) => None,
    };

    let real_data = match (mode, raw.real_data) {
        (Mode::RealData, Some(r)) => Some(normalize_real_data(r)?),
        (Mode::RealData, None) => bail!("real_data: section required in mode real-data"),
        (_, Some(_)) => bail!("real_data: section only allowed in mode real-data"),
        (_, None) => None,
    };

    ensure!(
        !raw.sampler.is_empty(),
        "sampler: at least one [[sampler]] table is required"
    );
    let mut samplers = Vec::with_capacity(raw.sampler.len());
    for (index, section) in raw.sampler.into_iter().enumerate() {
        let settings = normalize_sampler(index, section, mode, generator.as_ref())?;
        if samplers.iter().any(|s: &SamplerSettings| s.name == settings.name) {
            bail!(
                "sampler[{index}].label: duplicate sampler name {:?}; set distinct labels",
                settings.name
            );
        }
        samplers.push(settings);
    }

    let benchmark = normalize_benchmark(raw.benchmark, overrides)?;

    let diag = raw.diagnostics.unwrap_or(RawDiagnostics {
        trace_window: None,
        barycenter_grid: None,
    });
    let trace_window = diag.trace_window.unwrap_or(500);
    ensure!(trace_window >= 1, "diagnostics.trace_window: must be at least 1");
    let barycenter_grid = diag.barycenter_grid.unwrap_or(1000);
    ensure!(
        barycenter_grid >= 1,
        "diagnostics.barycenter_grid: must be at least 1"
    );

    Ok(ExperimentConfig {
        mode,
        master_seed,
        replications,
        out_dir,
        generator,
        mcar_p,
        real_data,
        samplers,
        benchmark,
        trace_window,
        barycenter_grid,
        canonical: overrides.canonical,
        config_hash,
        config_path: path.to_path_buf(),
    })
}

fn normalize_generator(g: RawGenerator) -> Result<GeneratorSettings> {
    ensure!(g.rows >= 2, "generator.rows: need at least 2 rows, got {}", g.rows);
    ensure!(g.cols >= 2, "generator.cols: need at least 2 columns, got {}", g.cols);
    ensure!(!g.b.is_empty(), "generator.b: need at least one coefficient");
    ensure!(
        g.b.iter().all(|v| v.is_finite()),
        "generator.b: coefficients must be finite"
    );
    ensure!(
        g.variances.iter().all(|v| v.is_finite() && *v > 0.0),
        "generator.variances: all three variances must be positive and finite"
    );
    let covariate_mean = g.covariate_mean.unwrap_or(0.0);
    ensure!(covariate_mean.is_finite(), "generator.covariate_mean: must be finite");
    let covariate_variance = g.covariate_variance.unwrap_or(0.5);
    ensure!(
        covariate_variance.is_finite() && covariate_variance > 0.0,
        "generator.covariate_variance: must be positive and finite"
    );
    Ok(GeneratorSettings {
        rows: g.rows,
        cols: g.cols,
        b: g.b,
        variances: g.variances,
        covariate_mean,
        covariate_variance,
    })
}

fn normalize_real_data(r: RawRealData) -> Result<RealDataSettings> {
    let format = match r.format.as_str() {
        "movielens" => DataFormat::Movielens,
        "insteval" => DataFormat::Insteval,
        "table-csv" => DataFormat::TableCsv,
        other => bail!(
            "real_data.format: expected movielens, insteval, or table-csv, got {other:?}"
        ),
    };
    let ratings = PathBuf::from(&r.ratings);
    ensure!(
        ratings.is_file(),
        "real_data.ratings: file {} does not exist",
        ratings.display()
    );
    let metadata = match (format, r.metadata) {
        (DataFormat::Movielens, Some(m)) => {
            let path = PathBuf::from(&m);
            ensure!(
                path.is_file(),
                "real_data.metadata: file {} does not exist",
                path.display()
            );
            Some(path)
        }
        (DataFormat::Movielens, None) => {
            bail!("real_data.metadata: the movielens format needs the item metadata file")
        }
        (_, Some(_)) => {
            bail!("real_data.metadata: only the movielens format takes a metadata file")
        }
        (_, None) => None,
    };
    Ok(RealDataSettings { ratings, format, metadata })
}

fn normalize_sampler(
    index: usize,
    s: RawSampler,
    mode: Mode,
    generator: Option<&GeneratorSettings>,
) -> Result<SamplerSettings> {
    let at = |field: &str| format!("sampler[{index}].{field}");

    let kind = match s.kind.as_str() {
        "sgld" => SamplerKind::Sgld,
        "psgld" => SamplerKind::Psgld,
        "gibbs" => SamplerKind::Gibbs,
        other => bail!("{}: expected sgld, psgld, or gibbs, got {other:?}", at("kind")),
    };
    if kind == SamplerKind::Sgld && mode.has_missing_data() {
        bail!(
            "{}: sgld needs a fully observed table and mode {mode} can leave cells \
             missing; use psgld",
            at("kind")
        );
    }

    let name = s.label.clone().unwrap_or_else(|| kind.as_str().to_string());
    ensure!(!name.is_empty(), "{}: must not be empty", at("label"));
    ensure!(
        name != "benchmark",
        "{}: the name \"benchmark\" is reserved for the comparison chain",
        at("label")
    );
    ensure!(
        name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'),
        "{}: names are limited to ASCII letters, digits, - and _, got {name:?}",
        at("label")
    );

    let total_iterations =
        s.total_iterations.with_context(|| format!("{}: required", at("total_iterations")))?;
    ensure!(
        total_iterations >= 1,
        "{}: must be at least 1",
        at("total_iterations")
    );
    let burn_in = s.burn_in.unwrap_or(0);
    ensure!(
        burn_in <= total_iterations,
        "{}: exceeds total_iterations",
        at("burn_in")
    );
    let thin = s.thin.unwrap_or(1);
    ensure!(thin >= 1, "{}: must be at least 1", at("thin"));

    let prior = match s.prior {
        Some(q) => {
            ensure!(
                q.iter().all(|v| v.is_finite() && *v > 0.0),
                "{}: inverse-gamma shapes and rates must be positive and finite",
                at("prior")
            );
            PriorSpec::new(q[0], q[1], q[2], q[3], q[4], q[5])
        }
        None => PriorSpec::default(),
    };

    let init = match (s.init_b, s.init_variances) {
        (Some(b), Some(v)) => {
            ensure!(
                !b.is_empty() && b.iter().all(|x| x.is_finite()),
                "{}: coefficients must be finite and non-empty",
                at("init_b")
            );
            ensure!(
                v.iter().all(|x| x.is_finite() && *x > 0.0),
                "{}: variances must be positive and finite",
                at("init_variances")
            );
            Some((b, v))
        }
        (None, None) => None,
        (Some(_), None) => bail!("{}: required when init_b is set", at("init_variances")),
        (None, Some(_)) => bail!("{}: required when init_variances is set", at("init_b")),
    };

    if kind == SamplerKind::Gibbs {
        for (given, field) in [
            (s.steps.is_some(), "steps"),
            (s.warmup_steps.is_some(), "warmup_steps"),
            (s.warmup_iterations.is_some(), "warmup_iterations"),
            (s.subset_rows.is_some(), "subset_rows"),
            (s.subset_cols.is_some(), "subset_cols"),
            (s.latent_draws.is_some(), "latent_draws"),
            (s.max_redraws.is_some(), "max_redraws"),
            (s.precondition.is_some(), "precondition"),
            (s.precondition_window.is_some(), "precondition_window"),
            (s.sieve.is_some(), "sieve"),
        ] {
            ensure!(
                !given,
                "{}: gibbs draws exact conditionals and ignores this key; remove it",
                at(field)
            );
        }
        let mut config = SamplerConfig::gibbs();
        config.total_iterations = total_iterations;
        config.burn_in = burn_in;
        config.thin = thin;
        config.prior = prior;
        return Ok(SamplerSettings { name, config, sieve_constants: None, init });
    }

    let check_steps = |steps: &[f64; 4], field: &str| -> Result<StepSizes> {
        ensure!(
            steps.iter().all(|v| v.is_finite() && *v >= 0.0),
            "sampler[{index}].{field}: step sizes must be finite and nonnegative, got \
             [{}, {}, {}, {}]",
            steps[0],
            steps[1],
            steps[2],
            steps[3]
        );
        Ok(StepSizes::new(steps[0], steps[1], steps[2], steps[3]))
    };
    let steps = match &s.steps {
        Some(steps) => check_steps(steps, "steps")?,
        None => bail!("{}: required for {kind}", at("steps")),
    };
    let schedule = match (&s.warmup_steps, s.warmup_iterations) {
        (Some(warmup), Some(boundary)) => {
            StepSchedule::two_phase(check_steps(warmup, "warmup_steps")?, steps, boundary)
        }
        (None, None) => StepSchedule::constant(steps),
        (Some(_), None) => bail!("{}: required when warmup_steps is set", at("warmup_iterations")),
        (None, Some(_)) => bail!("{}: required when warmup_iterations is set", at("warmup_steps")),
    };

    let default_subset = if mode.is_simulation() { 20 } else { 200 };
    let subset_rows = s.subset_rows.unwrap_or(default_subset);
    let subset_cols = s.subset_cols.unwrap_or(default_subset);
    ensure!(subset_rows >= 2, "{}: subsets need at least 2 rows", at("subset_rows"));
    ensure!(subset_cols >= 2, "{}: subsets need at least 2 columns", at("subset_cols"));
    if let Some(g) = generator {
        ensure!(
            subset_rows <= g.rows,
            "{}: {subset_rows} exceeds generator.rows = {}",
            at("subset_rows"),
            g.rows
        );
        ensure!(
            subset_cols <= g.cols,
            "{}: {subset_cols} exceeds generator.cols = {}",
            at("subset_cols"),
            g.cols
        );
    }

    let latent_draws = match kind {
        SamplerKind::Psgld => {
            let m = s.latent_draws.unwrap_or(50);
            ensure!(m >= 1, "{}: must be at least 1", at("latent_draws"));
            m
        }
        _ => {
            ensure!(
                s.latent_draws.is_none(),
                "{}: sgld conditions on no latent chain; remove it",
                at("latent_draws")
            );
            0
        }
    };
    let max_redraws = s.max_redraws.unwrap_or(100);

    let precondition = match s.precondition.as_deref() {
        None | Some("none") => PreconditionMode::None,
        Some("empirical") => PreconditionMode::EmpiricalCovariance,
        Some(other) => bail!("{}: expected none or empirical, got {other:?}", at("precondition")),
    };
    let precondition_window = s.precondition_window.unwrap_or(500);
    if precondition == PreconditionMode::EmpiricalCovariance {
        ensure!(
            precondition_window >= 10,
            "{}: empirical preconditioning needs a window of at least 10",
            at("precondition_window")
        );
        ensure!(
            schedule.boundary >= 10,
            "{}: empirical preconditioning estimates covariances at the phase boundary, \
             so warmup_iterations must be at least 10",
            at("warmup_iterations")
        );
    } else {
        ensure!(
            s.precondition_window.is_none(),
            "{}: only meaningful with precondition = \"empirical\"",
            at("precondition_window")
        );
    }

    let sieve_constants = match s.sieve {
        Some(c) => {
            ensure!(
                c.iter().all(|v| v.is_finite() && *v > 0.0),
                "{}: sieve constants must be positive and finite",
                at("sieve")
            );
            Some(c)
        }
        None => None,
    };

    let mut config = SamplerConfig::langevin(kind, steps);
    config.total_iterations = total_iterations;
    config.burn_in = burn_in;
    config.thin = thin;
    config.subset_rows = subset_rows;
    config.subset_cols = subset_cols;
    config.latent_draws = latent_draws;
    config.max_redraws = max_redraws;
    config.schedule = schedule;
    config.precondition = precondition;
    config.precondition_window = precondition_window;
    config.prior = prior;
    Ok(SamplerSettings { name, config, sieve_constants, init })
}

fn normalize_benchmark(raw: Option<RawBenchmark>, overrides: &Overrides) -> Result<BenchmarkSettings> {
    let raw = raw.unwrap_or(RawBenchmark {
        file: None,
        total_iterations: None,
        burn_in: None,
        thin: None,
        prior: None,
    });
    let file = overrides
        .benchmark
        .clone()
        .or_else(|| raw.file.as_ref().map(PathBuf::from));
    if let Some(path) = &file {
        ensure!(
            path.is_file(),
            "benchmark.file: chain file {} does not exist",
            path.display()
        );
    }
    let total_iterations = raw.total_iterations.unwrap_or(4000);
    ensure!(total_iterations >= 1, "benchmark.total_iterations: must be at least 1");
    let burn_in = raw.burn_in.unwrap_or(1000);
    ensure!(
        burn_in < total_iterations,
        "benchmark.burn_in: must leave at least one retained sweep"
    );
    let thin = raw.thin.unwrap_or(1);
    ensure!(thin >= 1, "benchmark.thin: must be at least 1");
    let prior = match raw.prior {
        Some(q) => {
            ensure!(
                q.iter().all(|v| v.is_finite() && *v > 0.0),
                "benchmark.prior: inverse-gamma shapes and rates must be positive and finite"
            );
            PriorSpec::new(q[0], q[1], q[2], q[3], q[4], q[5])
        }
        None => PriorSpec::default(),
    };
    Ok(BenchmarkSettings { file, total_iterations, burn_in, thin, prior })
}

fn write_steps(out: &mut String, label: &str, steps: &StepSizes) {
    let _ = writeln!(
        out,
        "  {label}: b={:.3e} eta_alpha={:.3e} eta_beta={:.3e} eta_e={:.3e}",
        steps.b, steps.eta_alpha, steps.eta_beta, steps.eta_e
    );
}

/// Renders the normalized experiment, defaults filled in and step sizes
/// spelled out, for the validate verb.
pub fn echo(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode = {}", cfg.mode);
    let _ = writeln!(out, "config_hash = {:016x}", cfg.config_hash);
    let _ = writeln!(out, "master_seed = {}", cfg.master_seed);
    let _ = writeln!(out, "replications = {}", cfg.replications);
    let _ = writeln!(out, "out = {}", cfg.out_dir.display());
    let _ = writeln!(out, "canonical = {}", cfg.canonical);
    if let Some(g) = &cfg.generator {
        let _ = writeln!(
            out,
            "generator: rows={} cols={} b={:?} variances=({}, {}, {}) covariates iid \
             normal(mean={}, variance={})",
            g.rows,
            g.cols,
            g.b,
            g.variances[0],
            g.variances[1],
            g.variances[2],
            g.covariate_mean,
            g.covariate_variance
        );
    }
    if let Some(p) = cfg.mcar_p {
        let _ = writeln!(out, "mcar: p_missing={p}");
    }
    if let Some(r) = &cfg.real_data {
        let _ = write!(out, "real_data: {} format={}", r.ratings.display(), r.format.as_str());
        if let Some(m) = &r.metadata {
            let _ = write!(out, " metadata={}", m.display());
        }
        out.push('\n');
    }
    for (index, s) in cfg.samplers.iter().enumerate() {
        let c = &s.config;
        let _ = write!(
            out,
            "sampler[{index}] {}: kind={} total_iterations={} burn_in={} thin={}",
            s.name, c.kind, c.total_iterations, c.burn_in, c.thin
        );
        if c.kind != SamplerKind::Gibbs {
            let _ = write!(
                out,
                " subset={}x{} max_redraws={}",
                c.subset_rows, c.subset_cols, c.max_redraws
            );
        }
        if c.kind == SamplerKind::Psgld {
            let _ = write!(out, " latent_draws={}", c.latent_draws);
        }
        out.push('\n');
        if c.kind != SamplerKind::Gibbs {
            write_steps(&mut out, "steps", &c.schedule.phase2);
            if c.schedule.boundary > 0 {
                write_steps(&mut out, "warmup_steps", &c.schedule.phase1);
                let _ = writeln!(out, "  warmup_iterations: {}", c.schedule.boundary);
            }
            if c.precondition == PreconditionMode::EmpiricalCovariance {
                let _ = writeln!(
                    out,
                    "  precondition: empirical window={}",
                    c.precondition_window
                );
            }
            if let Some(s) = &s.sieve_constants {
                let _ = writeln!(
                    out,
                    "  sieve: b0={} a1={} b1={} e1={}",
                    s[0], s[1], s[2], s[3]
                );
            }
        }
        let q = &c.prior;
        let _ = writeln!(
            out,
            "  prior: IG({}, {}) IG({}, {}) IG({}, {})",
            q.a1, q.b1, q.a2, q.b2, q.a3, q.b3
        );
        if let Some((b, v)) = &s.init {
            let _ = writeln!(out, "  init: b={b:?} variances=({}, {}, {})", v[0], v[1], v[2]);
        }
    }
    match &cfg.benchmark.file {
        Some(path) => {
            let _ = writeln!(out, "benchmark: file {}", path.display());
        }
        None => {
            let _ = writeln!(
                out,
                "benchmark: in-run gibbs total_iterations={} burn_in={} thin={}",
                cfg.benchmark.total_iterations, cfg.benchmark.burn_in, cfg.benchmark.thin
            );
        }
    }
    let _ = writeln!(
        out,
        "diagnostics: trace_window={} barycenter_grid={}",
        cfg.trace_window, cfg.barycenter_grid
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(name: &str, text: &str) -> PathBuf {
        let path = std::env::temp_dir().join(format!(
            "pigeonhole-config-{}-{name}.toml",
            std::process::id()
        ));
        let mut file = fs::File::create(&path).unwrap();
        file.write_all(text.as_bytes()).unwrap();
        path
    }

    fn load(name: &str, text: &str) -> Result<ExperimentConfig> {
        let path = write_temp(name, text);
        let loaded = load_config(&path, &Overrides::default());
        let _ = fs::remove_file(&path);
        loaded
    }

    const BASE: &str = r#"
mode = "simulate-balanced"
seed = 7
out = "runs/demo"

[generator]
rows = 40
cols = 30
b = [1.0, -2.0]
variances = [9.0, 4.0, 1.0]

[[sampler]]
kind = "psgld"
total_iterations = 500
steps = [1e-6, 1e-4, 1e-4, 1e-6]
"#;

    #[test]
    fn fnv1a64_matches_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = load("defaults", BASE).unwrap();
        assert_eq!(cfg.replications, 1);
        assert_eq!(cfg.master_seed, 7);
        let s = &cfg.samplers[0].config;
        assert_eq!((s.subset_rows, s.subset_cols), (20, 20));
        assert_eq!(s.latent_draws, 50);
        assert_eq!(s.burn_in, 0);
        assert_eq!(s.thin, 1);
        assert_eq!(s.max_redraws, 100);
        assert_eq!(cfg.trace_window, 500);
        assert_eq!(cfg.barycenter_grid, 1000);
        assert_eq!(cfg.benchmark.total_iterations, 4000);
        assert_eq!(cfg.benchmark.burn_in, 1000);
        assert!(cfg.benchmark.file.is_none());
    }

    #[test]
    fn real_data_defaults_to_larger_subsets() {
        let ratings = write_temp("ratings", "row,col,y,x_1\n0,0,1.0,0.5\n");
        let text = format!(
            r#"
mode = "real-data"
out = "runs/real"

[real_data]
ratings = "{}"
format = "table-csv"

[[sampler]]
kind = "psgld"
total_iterations = 100
steps = [1e-6, 1e-4, 1e-4, 1e-6]
"#,
            ratings.display()
        );
        let cfg = load("real-defaults", &text).unwrap();
        let _ = fs::remove_file(&ratings);
        let s = &cfg.samplers[0].config;
        assert_eq!((s.subset_rows, s.subset_cols), (200, 200));
    }

    #[test]
    fn sgld_is_rejected_when_cells_can_be_missing() {
        let text = BASE
            .replace("simulate-balanced", "simulate-mcar")
            .replace("kind = \"psgld\"", "kind = \"sgld\"")
            + "\n[mcar]\np_missing = 0.5\n";
        let err = load("sgld-mcar", &text).unwrap_err().to_string();
        assert!(err.contains("sampler[0].kind"), "{err}");
        assert!(err.contains("sgld"), "{err}");
    }

    #[test]
    fn negative_steps_are_rejected_with_field_path() {
        let text = BASE.replace("[1e-6, 1e-4, 1e-4, 1e-6]", "[-1e-6, 1e-4, 1e-4, 1e-6]");
        let err = load("neg-steps", &text).unwrap_err().to_string();
        assert!(err.contains("sampler[0].steps"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.to_string() + "\nstep_sizes = 3\n";
        let err = format!("{:#}", load("unknown-key", &text).unwrap_err());
        assert!(err.contains("step_sizes"), "{err}");
    }

    #[test]
    fn missing_generator_section_names_the_mode() {
        let text = BASE.replace("[generator]", "[generator_typo]");
        assert!(load("no-generator", &text).is_err());
    }

    #[test]
    fn gibbs_rejects_langevin_keys() {
        let text = BASE.replace("kind = \"psgld\"", "kind = \"gibbs\"");
        let err = load("gibbs-steps", &text).unwrap_err().to_string();
        assert!(err.contains("sampler[0].steps"), "{err}");
    }

    #[test]
    fn duplicate_names_need_labels() {
        let text = BASE.to_string()
            + r#"
[[sampler]]
kind = "psgld"
total_iterations = 500
steps = [1e-6, 1e-4, 1e-4, 1e-6]
"#;
        let err = load("dup-names", &text).unwrap_err().to_string();
        assert!(err.contains("duplicate sampler name"), "{err}");
        let labeled = text + "label = \"psgld-fine\"\n";
        let cfg = load("dup-labeled", &labeled).unwrap();
        assert_eq!(cfg.samplers[1].name, "psgld-fine");
    }

    #[test]
    fn burn_in_may_equal_total_but_not_exceed_it() {
        let equal = BASE.to_string() + "burn_in = 500\n";
        assert!(load("burn-equal", &equal).is_ok());
        let beyond = BASE.to_string() + "burn_in = 501\n";
        let err = load("burn-beyond", &beyond).unwrap_err().to_string();
        assert!(err.contains("sampler[0].burn_in"), "{err}");
    }

    #[test]
    fn subsets_cannot_outgrow_the_generated_table() {
        let text = BASE.to_string() + "subset_rows = 41\n";
        let err = load("subset-too-big", &text).unwrap_err().to_string();
        assert!(err.contains("sampler[0].subset_rows"), "{err}");
    }

    #[test]
    fn overrides_replace_seed_and_out() {
        let path = write_temp("overrides", BASE);
        let overrides = Overrides {
            seed: Some(99),
            out: Some(PathBuf::from("elsewhere")),
            benchmark: None,
            canonical: true,
        };
        let cfg = load_config(&path, &overrides).unwrap();
        let _ = fs::remove_file(&path);
        assert_eq!(cfg.master_seed, 99);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        assert!(cfg.canonical);
    }

    #[test]
    fn echo_reports_defaults_and_step_magnitudes() {
        let cfg = load("echo", BASE).unwrap();
        let text = echo(&cfg);
        assert!(text.contains("subset=20x20"), "{text}");
        assert!(text.contains("latent_draws=50"), "{text}");
        assert!(text.contains("b=1.000e-6"), "{text}");
        assert!(text.contains("eta_alpha=1.000e-4"), "{text}");
        assert!(text.contains("trace_window=500"), "{text}");
        assert!(text.contains("in-run gibbs"), "{text}");
    }

    #[test]
    fn missing_ratings_file_is_caught_at_validation() {
        let text = r#"
mode = "real-data"
out = "runs/real"

[real_data]
ratings = "does-not-exist.dat"
format = "insteval"

[[sampler]]
kind = "gibbs"
total_iterations = 100
"#;
        let err = load("missing-ratings", text).unwrap_err().to_string();
        assert!(err.contains("real_data.ratings"), "{err}");
    }
}
