//! End-to-end tests of the `pigeonhole` binary: full runs into temporary
//! directories, exit codes, and the shape of every artifact the runner
//! writes.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pigeonhole::data::write_table_csv;
use pigeonhole::{generate_balanced, Chain, CovariateDist, GeneratorSpec, VarianceScale};

struct Workspace {
    root: PathBuf,
}

impl Workspace {
    fn new(tag: &str) -> Self {
        let root = std::env::temp_dir().join(format!(
            "pigeonhole-cli-test-{}-{tag}",
            std::process::id()
        ));
        let _ = fs::remove_dir_all(&root);
        fs::create_dir_all(&root).unwrap();
        Workspace { root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&self, rel: &str, text: &str) -> PathBuf {
        let path = self.path(rel);
        fs::write(&path, text).unwrap();
        path
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.root);
    }
}

fn pigeonhole(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pigeonhole"))
        .args(args)
        .output()
        .expect("running the pigeonhole binary")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process exited normally")
}

const SMALL_STUDY: &str = r#"
mode = "simulate-balanced"
seed = 11
replications = 2

[generator]
rows = 12
cols = 12
b = [1.0, -2.0]
variances = [4.0, 1.0, 1.0]

[[sampler]]
kind = "psgld"
total_iterations = 400
burn_in = 100
thin = 3
subset_rows = 4
subset_cols = 4
latent_draws = 3
steps = [2e-4, 2e-3, 2e-3, 2e-4]

[[sampler]]
kind = "sgld"
total_iterations = 400
burn_in = 100
thin = 3
subset_rows = 4
subset_cols = 4
steps = [2e-4, 2e-3, 2e-3, 2e-4]

[[sampler]]
kind = "gibbs"
total_iterations = 300
burn_in = 100

[benchmark]
total_iterations = 300
burn_in = 100

[diagnostics]
trace_window = 25
barycenter_grid = 40
"#;

fn relative_files(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, found: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, found);
            } else {
                found.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut found = Vec::new();
    walk(root, root, &mut found);
    found.sort();
    found
}

#[test]
fn canonical_runs_are_byte_identical() {
    let ws = Workspace::new("canonical");
    let config = ws.write("study.toml", SMALL_STUDY);
    let out1 = ws.path("out1");
    let out2 = ws.path("out2");

    for out in [&out1, &out2] {
        let output = pigeonhole(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--canonical",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    }

    let files1 = relative_files(&out1);
    let files2 = relative_files(&out2);
    assert_eq!(files1, files2);
    assert!(
        files1.contains(&PathBuf::from("chains/psgld_rep000.csv")),
        "{files1:?}"
    );
    assert!(files1.contains(&PathBuf::from("chains/benchmark_rep001.csv")), "{files1:?}");
    assert!(files1.contains(&PathBuf::from("summary.csv")), "{files1:?}");
    assert!(files1.contains(&PathBuf::from("w2.csv")), "{files1:?}");
    assert!(files1.contains(&PathBuf::from("barycenter_gibbs.csv")), "{files1:?}");
    assert!(files1.contains(&PathBuf::from("trace_sgld_rep000.csv")), "{files1:?}");
    assert!(files1.contains(&PathBuf::from("manifest.txt")), "{files1:?}");

    for rel in &files1 {
        let a = fs::read(out1.join(rel)).unwrap();
        let b = fs::read(out2.join(rel)).unwrap();
        assert_eq!(a, b, "{} differs between canonical runs", rel.display());
    }
}

#[test]
fn summary_rows_follow_sampler_order() {
    let ws = Workspace::new("summary");
    let config = ws.write("study.toml", SMALL_STUDY);
    let out = ws.path("out");
    let output = pigeonhole(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--canonical",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "sampler,b_1,b_2,sigma2_alpha,sigma2_beta,sigma2_e");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("psgld,"), "{summary}");
    assert!(lines[2].starts_with("sgld,"), "{summary}");
    assert!(lines[3].starts_with("gibbs,"), "{summary}");
    for line in &lines[1..] {
        for cell in line.split(',').skip(1) {
            let value: f64 = cell.parse().expect("summary cells parse as floats");
            assert!(value.is_finite());
        }
    }

    let w2 = fs::read_to_string(out.join("w2.csv")).unwrap();
    assert!(w2.starts_with("sampler,b_1,b_2,"), "{w2}");
    for line in w2.lines().skip(1) {
        for cell in line.split(',').skip(1) {
            let value: f64 = cell.parse().expect("w2 cells parse as floats");
            assert!(value >= 0.0);
        }
    }

    let by_rep = fs::read_to_string(out.join("summary_by_rep.csv")).unwrap();
    assert!(by_rep.starts_with("sampler,rep,param,mean,sd\n"), "{by_rep}");
    assert_eq!(by_rep.lines().count(), 1 + 3 * 2 * 5);
}

#[test]
fn chains_round_trip_and_canonical_zeroes_elapsed() {
    let ws = Workspace::new("roundtrip");
    let config = ws.write("study.toml", SMALL_STUDY);
    let out = ws.path("out");
    let output = pigeonhole(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--canonical",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));

    let path = out.join("chains/psgld_rep000.csv");
    let file = fs::File::open(&path).unwrap();
    let chain = Chain::read_csv(BufReader::new(file), "psgld_rep000").unwrap();
    assert_eq!(chain.p(), 2);
    assert_eq!(chain.len(), 100);
    assert!(chain.elapsed_s.iter().all(|t| *t == 0.0));

    let trace = fs::read_to_string(out.join("trace_psgld_rep000.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("elapsed_s,param,w2"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("0e0,b_1,") || first.starts_with("0.0"), "{first}");

    let barycenter = fs::read_to_string(out.join("barycenter_psgld.csv")).unwrap();
    assert!(barycenter.starts_with("param,u,value\n"));
    assert_eq!(barycenter.lines().count(), 1 + 5 * 40);
}

#[test]
fn empty_summary_failure_is_surfaced_cleanly() {
    let ws = Workspace::new("empty-summary");
    let config = ws.write(
        "study.toml",
        r#"
mode = "simulate-balanced"
seed = 3
replications = 1

[generator]
rows = 10
cols = 10
b = [1.0]
variances = [1.0, 1.0, 1.0]

[[sampler]]
kind = "psgld"
total_iterations = 200
burn_in = 200
subset_rows = 4
subset_cols = 4
latent_draws = 2
steps = [1e-4, 1e-3, 1e-3, 1e-4]

[benchmark]
total_iterations = 50
burn_in = 10
"#,
    );
    let out = ws.path("out");
    let output = pigeonhole(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1, "stderr: {}", stderr_of(&output));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("replication 000"), "{stderr}");
    assert!(stderr.contains("psgld"), "{stderr}");
    assert!(stderr.contains("at least two samples"), "{stderr}");

    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("replication 000: failed"), "{manifest}");
    assert!(manifest.contains("failed = 1 of 1"), "{manifest}");
    assert!(!out.join("summary.csv").exists());
}

#[test]
fn validate_echoes_defaults_and_rejects_bad_configs() {
    let ws = Workspace::new("validate");
    let minimal = ws.write(
        "minimal.toml",
        r#"
mode = "simulate-balanced"
out = "somewhere"

[generator]
rows = 40
cols = 40
b = [1.0, 2.0]
variances = [9.0, 4.0, 1.0]

[[sampler]]
kind = "psgld"
total_iterations = 1000
steps = [3.3e-7, 6.7e-5, 6.7e-5, 3.3e-7]
"#,
    );
    let output = pigeonhole(&["validate", "--config", minimal.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    let stdout = stdout_of(&output);
    assert!(stdout.contains("config ok"), "{stdout}");
    assert!(stdout.contains("subset=20x20"), "{stdout}");
    assert!(stdout.contains("latent_draws=50"), "{stdout}");
    assert!(stdout.contains("b=3.300e-7"), "{stdout}");
    assert!(stdout.contains("eta_alpha=6.700e-5"), "{stdout}");
    assert!(stdout.contains("trace_window=500"), "{stdout}");
    assert!(stdout.contains("barycenter_grid=1000"), "{stdout}");
    assert!(stdout.contains("in-run gibbs"), "{stdout}");

    let sgld_mcar = ws.write(
        "sgld-mcar.toml",
        r#"
mode = "simulate-mcar"
out = "somewhere"

[generator]
rows = 40
cols = 40
b = [1.0]
variances = [9.0, 4.0, 1.0]

[mcar]
p_missing = 0.5

[[sampler]]
kind = "sgld"
total_iterations = 1000
steps = [1e-6, 1e-4, 1e-4, 1e-6]
"#,
    );
    let output = pigeonhole(&["validate", "--config", sgld_mcar.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
    let stderr = stderr_of(&output);
    assert!(stderr.contains("sampler[0].kind"), "{stderr}");
    assert!(stderr.contains("sgld"), "{stderr}");

    let negative = ws.write(
        "negative.toml",
        r#"
mode = "simulate-balanced"
out = "somewhere"

[generator]
rows = 40
cols = 40
b = [1.0]
variances = [9.0, 4.0, 1.0]

[[sampler]]
kind = "psgld"
total_iterations = 1000
steps = [-1e-6, 1e-4, 1e-4, 1e-6]
"#,
    );
    let output = pigeonhole(&["validate", "--config", negative.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
    assert!(stderr_of(&output).contains("sampler[0].steps"), "{}", stderr_of(&output));

    let typo = ws.write(
        "typo.toml",
        r#"
mode = "simulate-balanced"
out = "somewhere"
step_sizes = 3

[generator]
rows = 40
cols = 40
b = [1.0]
variances = [9.0, 4.0, 1.0]

[[sampler]]
kind = "gibbs"
total_iterations = 1000
"#,
    );
    let output = pigeonhole(&["validate", "--config", typo.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
    assert!(stderr_of(&output).contains("step_sizes"), "{}", stderr_of(&output));
}

#[test]
fn fit_diagnose_and_cached_benchmark_round_trip() {
    let ws = Workspace::new("fit");

    let spec = GeneratorSpec {
        rows: 10,
        cols: 10,
        b: vec![0.5],
        variances: VarianceScale { alpha: 2.0, beta: 1.0, e: 1.0 },
        covariates: CovariateDist::iid(1, 0.0, 0.5),
        seed: 77,
    };
    let table = generate_balanced(&spec).unwrap().table;
    let mut text = Vec::new();
    write_table_csv(&table, &mut text).unwrap();
    let ratings = ws.path("table.csv");
    fs::write(&ratings, text).unwrap();

    let config = ws.write(
        "fit.toml",
        &format!(
            r#"
mode = "real-data"
seed = 5

[real_data]
ratings = "{}"
format = "table-csv"

[[sampler]]
kind = "psgld"
total_iterations = 300
burn_in = 100
thin = 2
subset_rows = 4
subset_cols = 4
latent_draws = 2
steps = [2e-4, 2e-3, 2e-3, 2e-4]

[benchmark]
total_iterations = 200
burn_in = 50

[diagnostics]
trace_window = 20
barycenter_grid = 25
"#,
            ratings.display()
        ),
    );

    let wrong_verb = pigeonhole(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        ws.path("nowhere").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&wrong_verb), 2);
    assert!(stderr_of(&wrong_verb).contains("fit"), "{}", stderr_of(&wrong_verb));

    let out = ws.path("fitout");
    let output = pigeonhole(&[
        "fit",
        "--config",
        config.to_str().unwrap(),
        "--canonical",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    assert!(out.join("chains/benchmark_rep000.csv").exists());
    assert!(out.join("summary.csv").exists());

    let diag = ws.path("diag");
    let output = pigeonhole(&[
        "diagnose",
        "--benchmark",
        out.join("chains/benchmark_rep000.csv").to_str().unwrap(),
        "--out",
        diag.to_str().unwrap(),
        "--window",
        "20",
        "--grid",
        "25",
        out.join("chains/psgld_rep000.csv").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    for file in ["summary.csv", "summary_sd.csv", "w2.csv", "barycenter.csv"] {
        assert!(diag.join(file).exists(), "missing {file}");
    }
    let trace = fs::read_to_string(diag.join("trace_psgld_rep000.csv")).unwrap();
    assert!(trace.starts_with("elapsed_s,param,w2\n"), "{trace}");
    let w2 = fs::read_to_string(diag.join("w2.csv")).unwrap();
    assert!(w2.lines().nth(1).unwrap().starts_with("psgld_rep000,"), "{w2}");

    let cached = ws.path("cached");
    let output = pigeonhole(&[
        "fit",
        "--config",
        config.to_str().unwrap(),
        "--canonical",
        "--out",
        cached.to_str().unwrap(),
        "--benchmark",
        out.join("chains/benchmark_rep000.csv").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    assert!(!cached.join("chains/benchmark_rep000.csv").exists());
    let manifest = fs::read_to_string(cached.join("manifest.txt")).unwrap();
    assert!(manifest.contains("benchmark = file"), "{manifest}");

    let fresh = fs::read_to_string(out.join("chains/psgld_rep000.csv")).unwrap();
    let reused = fs::read_to_string(cached.join("chains/psgld_rep000.csv")).unwrap();
    assert_eq!(fresh, reused, "sampler chains depend only on seeds, not the benchmark");
}
