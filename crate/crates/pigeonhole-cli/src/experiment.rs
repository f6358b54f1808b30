//! Experiment orchestration and output writing.
//!
//! Replications fan out over a worker pool and come back as in-memory
//! results; the main thread is the only writer, so every artifact lands
//! exactly once and in a deterministic order. A replication that fails is
//! logged and dropped while the rest of the run continues, and the caller
//! turns any failure into a non-zero exit.
//!
//! Every stochastic stage draws its seed from the master seed and a stream
//! label such as `psgld/rep002`, so a run is reproducible end to end and
//! the manifest can list each stream next to its seed. Wall-clock readings
//! only ever appear in chain and trace files, and the canonical flag zeroes
//! them there; nothing else in the output directory depends on timing, the
//! machine, or the calendar.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use pigeonhole::data::read_table_csv;
use pigeonhole::diagnostics::{parameter_labels, write_trace_csv};
use pigeonhole::{
    apply_mcar, chain_marginals, convergence_trace, generate_balanced, load_ratings, prune_empty,
    run_chain, summarize, w2_barycenter, w2_empirical, Chain, CovariateDist, GeneratorSpec,
    MarginalSamples, ObservedTable, RatingsSchema, SamplerConfig, SieveBounds, Theta, TracePoint,
    VarianceScale,
};
use rayon::prelude::*;

use crate::config::{DataFormat, ExperimentConfig, Mode, SamplerSettings};

/// SplitMix64 finalizer, the usual one-shot 64-bit mixer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Seed for one named stream of one run. Streams are labels like
/// `data/rep000` or `psgld/rep002`, so distinct stages never share a seed
/// unless the master seed collides with itself.
pub fn derive_seed(master_seed: u64, stream: &str) -> u64 {
    splitmix64(master_seed ^ crate::config::fnv1a64(stream.as_bytes()))
}

pub struct RunOutcome {
    pub completed: usize,
    pub failed: usize,
}

struct SamplerRun {
    name: String,
    chain: Chain,
    summary: Vec<(String, f64, f64)>,
    marginals: Vec<MarginalSamples>,
    w2: Vec<f64>,
    trace: Option<Vec<TracePoint>>,
}

struct RepResult {
    rep: usize,
    benchmark_chain: Option<Chain>,
    runs: Vec<SamplerRun>,
}

/// Runs the configured experiment and writes all artifacts under the
/// output directory. Returns how many replications completed and how many
/// failed; per-replication failures have already been logged on stderr.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let chains_dir = cfg.out_dir.join("chains");
    fs::create_dir_all(&chains_dir)
        .with_context(|| format!("creating output directory {}", chains_dir.display()))?;

    let shared_table: Option<Arc<ObservedTable>> = match cfg.mode {
        Mode::RealData => {
            let (table, description) = load_real_table(cfg)?;
            eprintln!("loaded {description}");
            Some(Arc::new(table))
        }
        _ => None,
    };
    let data_line = match (&shared_table, cfg.generator.as_ref()) {
        (Some(table), _) => format!(
            "data = {} rows={} cols={} n={} p={}",
            cfg.real_data.as_ref().map(|r| r.ratings.display().to_string()).unwrap_or_default(),
            table.rows(),
            table.cols(),
            table.n(),
            table.p()
        ),
        (None, Some(g)) => format!(
            "data = generated rows={} cols={} p={}",
            g.rows,
            g.cols,
            g.b.len()
        ),
        (None, None) => "data = unknown".to_string(),
    };

    let external_benchmark: Option<Arc<Vec<MarginalSamples>>> = match &cfg.benchmark.file {
        Some(path) => {
            let file = File::open(path)
                .with_context(|| format!("opening benchmark chain {}", path.display()))?;
            let chain = Chain::read_csv(BufReader::new(file), &path.display().to_string())?;
            if chain.is_empty() {
                bail!("benchmark chain {} holds no samples", path.display());
            }
            Some(Arc::new(chain_marginals(&chain)?))
        }
        None => None,
    };

    let results: Vec<std::result::Result<RepResult, String>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            run_replication(cfg, rep, shared_table.clone(), external_benchmark.clone())
                .map_err(|e| format!("replication {rep:03}: {e}"))
        })
        .collect();

    let mut completed = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(rep) => completed.push(rep),
            Err(message) => {
                eprintln!("error: {message}");
                failures.push(message);
            }
        }
    }

    let written = write_outputs(cfg, &completed)?;
    write_manifest(cfg, &data_line, &completed, &failures, &written)?;

    Ok(RunOutcome { completed: completed.len(), failed: failures.len() })
}

fn load_real_table(cfg: &ExperimentConfig) -> Result<(ObservedTable, String)> {
    let settings = cfg.real_data.as_ref().expect("real-data mode carries settings");
    let path = &settings.ratings;
    match settings.format {
        DataFormat::Movielens | DataFormat::Insteval => {
            let schema = match settings.format {
                DataFormat::Movielens => RatingsSchema::movielens(
                    settings.metadata.clone().expect("validated during config load"),
                ),
                _ => RatingsSchema::insteval(),
            };
            let (table, report) = load_ratings(path, &schema)?;
            let description = format!(
                "{}: raw={} filtered={} retained={} rows={} cols={} p={}",
                path.display(),
                report.raw,
                report.filtered,
                report.retained,
                table.rows(),
                table.cols(),
                table.p()
            );
            Ok((table, description))
        }
        DataFormat::TableCsv => {
            let file =
                File::open(path).with_context(|| format!("opening table {}", path.display()))?;
            let table = read_table_csv(BufReader::new(file), &path.display().to_string())?;
            let table = prune_empty(&table)?;
            let description = format!(
                "{}: rows={} cols={} n={} p={}",
                path.display(),
                table.rows(),
                table.cols(),
                table.n(),
                table.p()
            );
            Ok((table, description))
        }
    }
}

fn build_table(cfg: &ExperimentConfig, rep: usize) -> std::result::Result<ObservedTable, String> {
    let g = cfg.generator.as_ref().ok_or("simulation mode needs a generator")?;
    let spec = GeneratorSpec {
        rows: g.rows,
        cols: g.cols,
        b: g.b.clone(),
        variances: VarianceScale {
            alpha: g.variances[0],
            beta: g.variances[1],
            e: g.variances[2],
        },
        covariates: CovariateDist::iid(g.b.len(), g.covariate_mean, g.covariate_variance),
        seed: derive_seed(cfg.master_seed, &format!("data/rep{rep:03}")),
    };
    let table = generate_balanced(&spec).map_err(|e| format!("generating data: {e}"))?.table;
    match cfg.mcar_p {
        Some(p) => {
            let seed = derive_seed(cfg.master_seed, &format!("mcar/rep{rep:03}"));
            let holed = apply_mcar(&table, p, seed).map_err(|e| format!("applying mcar: {e}"))?;
            prune_empty(&holed).map_err(|e| format!("pruning mcar table: {e}"))
        }
        None => Ok(table),
    }
}

fn run_replication(
    cfg: &ExperimentConfig,
    rep: usize,
    shared_table: Option<Arc<ObservedTable>>,
    external_benchmark: Option<Arc<Vec<MarginalSamples>>>,
) -> std::result::Result<RepResult, String> {
    let table: Arc<ObservedTable> = match shared_table {
        Some(table) => table,
        None => Arc::new(build_table(cfg, rep)?),
    };
    let labels = parameter_labels(table.p());

    let (benchmark_chain, benchmark_marginals) = match external_benchmark {
        Some(marginals) => {
            if marginals.len() != labels.len() {
                return Err(format!(
                    "benchmark chain reports {} parameters but the table needs {}",
                    marginals.len(),
                    labels.len()
                ));
            }
            (None, marginals)
        }
        None => {
            let mut config = SamplerConfig::gibbs();
            config.total_iterations = cfg.benchmark.total_iterations;
            config.burn_in = cfg.benchmark.burn_in;
            config.thin = cfg.benchmark.thin;
            config.prior = cfg.benchmark.prior;
            config.seed = derive_seed(cfg.master_seed, &format!("benchmark/rep{rep:03}"));
            let chain = run_chain(&table, &config).map_err(|e| format!("benchmark gibbs: {e}"))?;
            let marginals =
                chain_marginals(&chain).map_err(|e| format!("benchmark gibbs: {e}"))?;
            eprintln!("rep {rep:03} benchmark: kept {} sweeps", chain.len());
            (Some(chain), Arc::new(marginals))
        }
    };

    if labels.len() != benchmark_marginals.len() {
        return Err(format!(
            "benchmark reports {} parameters but the table needs {}",
            benchmark_marginals.len(),
            labels.len()
        ));
    }
    let mut runs = Vec::with_capacity(cfg.samplers.len());
    for settings in &cfg.samplers {
        let run = run_sampler(cfg, rep, settings, &table, &benchmark_marginals)
            .map_err(|e| format!("sampler {}: {e}", settings.name))?;
        eprintln!("rep {rep:03} {}: kept {} samples", settings.name, run.chain.len());
        runs.push(run);
    }

    Ok(RepResult { rep, benchmark_chain, runs })
}

fn run_sampler(
    cfg: &ExperimentConfig,
    rep: usize,
    settings: &SamplerSettings,
    table: &ObservedTable,
    benchmark: &[MarginalSamples],
) -> std::result::Result<SamplerRun, String> {
    let mut config = settings.config.clone();
    config.seed = derive_seed(cfg.master_seed, &format!("{}/rep{rep:03}", settings.name));
    if let Some(c) = settings.sieve_constants {
        config.sieve = Some(SieveBounds { b0: c[0], a1: c[1], b1: c[2], e1: c[3], n: table.n() });
    }
    if let Some((b, v)) = &settings.init {
        if b.len() != table.p() {
            return Err(format!(
                "init_b has {} coefficients but the table carries {} covariates",
                b.len(),
                table.p()
            ));
        }
        config.init = Some(Theta::new(b.clone(), v[0].ln(), v[1].ln(), v[2].ln()));
    }

    let chain = run_chain(table, &config).map_err(|e| e.to_string())?;
    let summary = summarize(&chain)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|s| (s.param, s.mean, s.sd))
        .collect();
    let marginals = chain_marginals(&chain).map_err(|e| e.to_string())?;
    let w2 = marginals
        .iter()
        .zip(benchmark)
        .map(|(sample, reference)| w2_empirical(sample, reference))
        .collect();
    let trace = if rep == 0 {
        Some(
            convergence_trace(&chain, benchmark, cfg.trace_window)
                .map_err(|e| format!("convergence trace: {e}"))?,
        )
    } else {
        None
    };
    Ok(SamplerRun { name: settings.name.clone(), chain, summary, marginals, w2, trace })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Flushes explicitly so a full disk fails the run instead of being
/// swallowed by the buffered writer's drop.
fn finish(mut out: BufWriter<File>, path: &Path) -> Result<()> {
    out.flush().with_context(|| format!("writing {}", path.display()))
}

fn write_wide_csv(
    path: &Path,
    labels: &[String],
    rows: &[(String, Vec<f64>)],
) -> Result<()> {
    let mut out = create(path)?;
    write!(out, "sampler")?;
    for label in labels {
        write!(out, ",{label}")?;
    }
    writeln!(out)?;
    for (name, values) in rows {
        write!(out, "{name}")?;
        for v in values {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    finish(out, path)
}

/// Element-wise mean across per-replication vectors.
fn mean_over(rows: &[&Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let width = rows.first().map_or(0, |r| r.len());
    (0..width).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect()
}

/// Element-wise standard deviation across per-replication vectors, with
/// the n - 1 denominator; zero when only one replication survived.
fn sd_over(rows: &[&Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let width = rows.first().map_or(0, |r| r.len());
    if rows.len() < 2 {
        return vec![0.0; width];
    }
    let means = mean_over(rows);
    (0..width)
        .map(|k| {
            let ss = rows.iter().map(|r| (r[k] - means[k]).powi(2)).sum::<f64>();
            (ss / (n - 1.0)).sqrt()
        })
        .collect()
}

fn zeroed_trace(points: &[TracePoint]) -> Vec<TracePoint> {
    points
        .iter()
        .map(|point| TracePoint { elapsed_s: 0.0, w2: point.w2.clone() })
        .collect()
}

fn write_outputs(cfg: &ExperimentConfig, completed: &[RepResult]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut record = |path: PathBuf| -> PathBuf {
        written.push(path.clone());
        path
    };

    for rep_result in completed {
        if let Some(chain) = &rep_result.benchmark_chain {
            let path = record(
                cfg.out_dir.join("chains").join(format!("benchmark_rep{:03}.csv", rep_result.rep)),
            );
            let mut out = create(&path)?;
            chain.write_csv(&mut out, cfg.canonical)?;
            finish(out, &path)?;
        }
        for run in &rep_result.runs {
            let path = record(
                cfg.out_dir
                    .join("chains")
                    .join(format!("{}_rep{:03}.csv", run.name, rep_result.rep)),
            );
            let mut out = create(&path)?;
            run.chain.write_csv(&mut out, cfg.canonical)?;
            finish(out, &path)?;
        }
    }

    if completed.is_empty() {
        return Ok(written);
    }

    let labels: Vec<String> = completed[0].runs[0].summary.iter().map(|s| s.0.clone()).collect();

    let by_rep_path = record(cfg.out_dir.join("summary_by_rep.csv"));
    let mut by_rep = create(&by_rep_path)?;
    writeln!(by_rep, "sampler,rep,param,mean,sd")?;
    for rep_result in completed {
        for run in &rep_result.runs {
            for (param, mean, sd) in &run.summary {
                writeln!(
                    by_rep,
                    "{},{},{param},{mean:.16e},{sd:.16e}",
                    run.name, rep_result.rep
                )?;
            }
        }
    }
    finish(by_rep, &by_rep_path)?;

    let w2_by_rep_path = record(cfg.out_dir.join("w2_by_rep.csv"));
    let mut w2_by_rep = create(&w2_by_rep_path)?;
    writeln!(w2_by_rep, "sampler,rep,param,w2")?;
    for rep_result in completed {
        for run in &rep_result.runs {
            for (label, w2) in labels.iter().zip(&run.w2) {
                writeln!(w2_by_rep, "{},{},{label},{w2:.16e}", run.name, rep_result.rep)?;
            }
        }
    }
    finish(w2_by_rep, &w2_by_rep_path)?;

    let mut mean_rows = Vec::new();
    let mut sd_rows = Vec::new();
    let mut w2_rows = Vec::new();
    for settings in &cfg.samplers {
        let mut rep_means: Vec<Vec<f64>> = Vec::new();
        let mut rep_w2: Vec<&Vec<f64>> = Vec::new();
        for rep_result in completed {
            let run = rep_result
                .runs
                .iter()
                .find(|r| r.name == settings.name)
                .expect("completed replications carry every sampler");
            rep_means.push(run.summary.iter().map(|s| s.1).collect());
            rep_w2.push(&run.w2);
        }
        let mean_refs: Vec<&Vec<f64>> = rep_means.iter().collect();
        mean_rows.push((settings.name.clone(), mean_over(&mean_refs)));
        sd_rows.push((settings.name.clone(), sd_over(&mean_refs)));
        w2_rows.push((settings.name.clone(), mean_over(&rep_w2)));
    }
    write_wide_csv(&record(cfg.out_dir.join("summary.csv")), &labels, &mean_rows)?;
    write_wide_csv(&record(cfg.out_dir.join("summary_sd.csv")), &labels, &sd_rows)?;
    write_wide_csv(&record(cfg.out_dir.join("w2.csv")), &labels, &w2_rows)?;

    for settings in &cfg.samplers {
        let path = record(cfg.out_dir.join(format!("barycenter_{}.csv", settings.name)));
        let mut out = create(&path)?;
        writeln!(out, "param,u,value")?;
        for (k, label) in labels.iter().enumerate() {
            let replicates: Vec<MarginalSamples> = completed
                .iter()
                .map(|rep_result| {
                    let run = rep_result
                        .runs
                        .iter()
                        .find(|r| r.name == settings.name)
                        .expect("completed replications carry every sampler");
                    run.marginals[k].clone()
                })
                .collect();
            let barycenter = w2_barycenter(&replicates, cfg.barycenter_grid)?;
            for (g, value) in barycenter.values().iter().enumerate() {
                let u = (g as f64 + 0.5) / cfg.barycenter_grid as f64;
                writeln!(out, "{label},{u:.6},{value:.16e}")?;
            }
        }
        finish(out, &path)?;
    }

    for rep_result in completed {
        for run in &rep_result.runs {
            let Some(trace) = &run.trace else { continue };
            let path = record(
                cfg.out_dir.join(format!("trace_{}_rep{:03}.csv", run.name, rep_result.rep)),
            );
            let points;
            let view = if cfg.canonical {
                points = zeroed_trace(trace);
                &points
            } else {
                trace
            };
            let mut out = create(&path)?;
            write_trace_csv(&labels, view, &mut out)?;
            finish(out, &path)?;
        }
    }

    Ok(written)
}

fn write_manifest(
    cfg: &ExperimentConfig,
    data_line: &str,
    completed: &[RepResult],
    failures: &[String],
    written: &[PathBuf],
) -> Result<()> {
    let path = cfg.out_dir.join("manifest.txt");
    let mut out = create(&path)?;
    writeln!(out, "pigeonhole experiment manifest")?;
    writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "config = {}", cfg.config_path.display())?;
    writeln!(out, "config_hash = {:016x}", cfg.config_hash)?;
    writeln!(out, "mode = {}", cfg.mode)?;
    writeln!(out, "canonical = {}", cfg.canonical)?;
    writeln!(out, "master_seed = {}", cfg.master_seed)?;
    writeln!(out, "replications = {}", cfg.replications)?;
    writeln!(out, "trace_window = {}", cfg.trace_window)?;
    writeln!(out, "barycenter_grid = {}", cfg.barycenter_grid)?;
    writeln!(out, "{data_line}")?;
    match &cfg.benchmark.file {
        Some(file) => writeln!(out, "benchmark = file {}", file.display())?,
        None => writeln!(
            out,
            "benchmark = gibbs total_iterations={} burn_in={} thin={}",
            cfg.benchmark.total_iterations, cfg.benchmark.burn_in, cfg.benchmark.thin
        )?,
    }

    writeln!(out, "seeds:")?;
    let mut streams: BTreeMap<String, u64> = BTreeMap::new();
    for rep in 0..cfg.replications {
        if cfg.mode.is_simulation() {
            let label = format!("data/rep{rep:03}");
            streams.insert(label.clone(), derive_seed(cfg.master_seed, &label));
            if cfg.mcar_p.is_some() {
                let label = format!("mcar/rep{rep:03}");
                streams.insert(label.clone(), derive_seed(cfg.master_seed, &label));
            }
        }
        if cfg.benchmark.file.is_none() {
            let label = format!("benchmark/rep{rep:03}");
            streams.insert(label.clone(), derive_seed(cfg.master_seed, &label));
        }
        for settings in &cfg.samplers {
            let label = format!("{}/rep{rep:03}", settings.name);
            streams.insert(label.clone(), derive_seed(cfg.master_seed, &label));
        }
    }
    for (label, seed) in &streams {
        writeln!(out, "  {label} = {seed}")?;
    }

    let completed_reps: Vec<usize> = completed.iter().map(|r| r.rep).collect();
    for rep in 0..cfg.replications {
        if completed_reps.contains(&rep) {
            writeln!(out, "replication {rep:03}: ok")?;
        } else {
            let note = failures
                .iter()
                .find(|message| message.starts_with(&format!("replication {rep:03}")))
                .map(|message| message.as_str())
                .unwrap_or("failed");
            writeln!(out, "replication {rep:03}: failed ({note})")?;
        }
    }
    writeln!(out, "failed = {} of {}", failures.len(), cfg.replications)?;

    writeln!(out, "outputs:")?;
    for file in written {
        let shown = file.strip_prefix(&cfg.out_dir).unwrap_or(file);
        writeln!(out, "  {}", shown.display())?;
    }
    finish(out, &path)
}

/// Post-processing for existing chain files: summaries, distances to a
/// benchmark chain, convergence traces, and the barycenter across the
/// inputs, written into `out_dir`.
pub struct DiagnoseRequest {
    pub benchmark: PathBuf,
    pub chains: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub window: usize,
    pub grid: usize,
    pub canonical: bool,
}

pub fn diagnose(request: &DiagnoseRequest) -> Result<()> {
    if request.window < 1 {
        bail!("--window must be at least 1");
    }
    if request.grid < 1 {
        bail!("--grid must be at least 1");
    }
    fs::create_dir_all(&request.out_dir)
        .with_context(|| format!("creating output directory {}", request.out_dir.display()))?;

    let read = |path: &Path| -> Result<Chain> {
        let file =
            File::open(path).with_context(|| format!("opening chain {}", path.display()))?;
        Ok(Chain::read_csv(BufReader::new(file), &path.display().to_string())?)
    };
    let benchmark_chain = read(&request.benchmark)?;
    let benchmark = chain_marginals(&benchmark_chain)?;
    let labels = parameter_labels(benchmark_chain.p());

    let mut names = Vec::new();
    let mut mean_rows = Vec::new();
    let mut sd_rows = Vec::new();
    let mut w2_rows = Vec::new();
    let mut all_marginals: Vec<Vec<MarginalSamples>> = Vec::new();
    for path in &request.chains {
        let name = path
            .file_stem()
            .map(|stem| stem.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        if names.contains(&name) {
            bail!("duplicate chain name {name:?}; rename one of the input files");
        }
        let chain = read(path)?;
        if chain.p() != benchmark_chain.p() {
            bail!(
                "chain {} reports {} coefficients but the benchmark has {}",
                path.display(),
                chain.p(),
                benchmark_chain.p()
            );
        }
        let summary = summarize(&chain)?;
        mean_rows.push((name.clone(), summary.iter().map(|s| s.mean).collect::<Vec<f64>>()));
        sd_rows.push((name.clone(), summary.iter().map(|s| s.sd).collect::<Vec<f64>>()));
        let marginals = chain_marginals(&chain)?;
        let w2: Vec<f64> = marginals
            .iter()
            .zip(&benchmark)
            .map(|(sample, reference)| w2_empirical(sample, reference))
            .collect();
        w2_rows.push((name.clone(), w2));

        let trace = convergence_trace(&chain, &benchmark, request.window)
            .with_context(|| format!("tracing {}", path.display()))?;
        let points;
        let view = if request.canonical {
            points = zeroed_trace(&trace);
            &points
        } else {
            &trace
        };
        let trace_path = request.out_dir.join(format!("trace_{name}.csv"));
        let mut trace_out = create(&trace_path)?;
        write_trace_csv(&labels, view, &mut trace_out)?;
        finish(trace_out, &trace_path)?;

        all_marginals.push(marginals);
        names.push(name);
    }

    write_wide_csv(&request.out_dir.join("summary.csv"), &labels, &mean_rows)?;
    write_wide_csv(&request.out_dir.join("summary_sd.csv"), &labels, &sd_rows)?;
    write_wide_csv(&request.out_dir.join("w2.csv"), &labels, &w2_rows)?;

    let barycenter_path = request.out_dir.join("barycenter.csv");
    let mut out = create(&barycenter_path)?;
    writeln!(out, "param,u,value")?;
    for (k, label) in labels.iter().enumerate() {
        let replicates: Vec<MarginalSamples> =
            all_marginals.iter().map(|m| m[k].clone()).collect();
        let barycenter = w2_barycenter(&replicates, request.grid)?;
        for (g, value) in barycenter.values().iter().enumerate() {
            let u = (g as f64 + 0.5) / request.grid as f64;
            writeln!(out, "{label},{u:.6},{value:.16e}")?;
        }
    }
    finish(out, &barycenter_path)?;
    println!(
        "diagnosed {} chains against {} into {}",
        names.len(),
        request.benchmark.display(),
        request.out_dir.display()
    );
    Ok(())
}
