//! Browser bindings for the demo page in `www/`.
//!
//! Three operations, each a fully seeded experiment that returns JSON:
//! `demo_fit` draws a table and compares subset Langevin draws against
//! Gibbs, `demo_trace` tracks distance to a Gibbs benchmark as the chains
//! progress, and `demo_precision` expands the four covariance and inverse
//! covariance scalars of a balanced subtable into dense matrices for the
//! heatmap view.
//!
//! The inner `*_json` functions compile and run natively, so the tests
//! below cover exactly the code the browser calls. Problem sizes are
//! clamped hard because everything runs on the page's main thread.

use pigeonhole::balanced::precision_scalars_from;
use pigeonhole::diagnostics::parameter_labels;
use pigeonhole::{
    apply_mcar, chain_marginals, convergence_trace, generate_balanced, prune_empty, run_chain,
    summarize, w2_empirical, Chain, CovariateDist, GeneratorSpec, MarginalSamples, ObservedTable,
    SamplerConfig, SamplerKind, StepSchedule, StepSizes, VarianceScale,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const DEMO_B: f64 = 2.0;
const DEMO_VARIANCES: VarianceScale = VarianceScale { alpha: 4.0, beta: 2.0, e: 1.0 };

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn check_common(rows: usize, cols: usize, p_missing: f64, iterations: usize) -> Result<(), String> {
    if !(4..=60).contains(&rows) || !(4..=60).contains(&cols) {
        return Err(format!("rows and cols must lie in 4..=60, got {rows} x {cols}"));
    }
    if !p_missing.is_finite() || !(0.0..=0.9).contains(&p_missing) {
        return Err(format!("p_missing must lie in [0, 0.9], got {p_missing}"));
    }
    if !(200..=20_000).contains(&iterations) {
        return Err(format!("iterations must lie in 200..=20000, got {iterations}"));
    }
    Ok(())
}

fn build_table(rows: usize, cols: usize, p_missing: f64, seed: u64) -> Result<ObservedTable, String> {
    let spec = GeneratorSpec {
        rows,
        cols,
        b: vec![DEMO_B],
        variances: DEMO_VARIANCES,
        covariates: CovariateDist::iid(1, 0.0, 0.5),
        seed,
    };
    let table = generate_balanced(&spec).map_err(err)?.table;
    if p_missing > 0.0 {
        let holed = apply_mcar(&table, p_missing, seed ^ 0x9e3779b9).map_err(err)?;
        prune_empty(&holed).map_err(err)
    } else {
        Ok(table)
    }
}

/// Step sizes from the usual curvature heuristic: the coefficient and
/// noise blocks see roughly N/2 curvature at unit noise variance, the
/// factor blocks R/2 and C/2.
fn psgld_config(table: &ObservedTable, iterations: usize, burn_in: usize, seed: u64) -> SamplerConfig {
    let tau = 50.0;
    let n = table.n() as f64;
    let r = table.rows() as f64;
    let c = table.cols() as f64;
    let steps = StepSizes::new(
        2.0 / (0.5 * n * tau),
        2.0 / (0.5 * r * tau),
        2.0 / (0.5 * c * tau),
        2.0 / (0.5 * n * tau),
    );
    let warmup = StepSizes::new(
        steps.b * 10.0,
        steps.eta_alpha * 10.0,
        steps.eta_beta * 10.0,
        steps.eta_e * 10.0,
    );
    let mut config = SamplerConfig::langevin(SamplerKind::Psgld, steps);
    config.schedule = StepSchedule::two_phase(warmup, steps, (iterations / 10).max(1));
    config.total_iterations = iterations;
    config.burn_in = burn_in;
    config.thin = ((iterations - burn_in) / 1000).max(1);
    let subset = table.rows().min(table.cols()).min(8).max(2);
    config.subset_rows = subset;
    config.subset_cols = subset;
    config.latent_draws = 10;
    config.max_redraws = 500;
    config.seed = seed;
    config
}

fn gibbs_config(total: usize, burn_in: usize, seed: u64) -> SamplerConfig {
    let mut config = SamplerConfig::gibbs();
    config.total_iterations = total;
    config.burn_in = burn_in;
    config.thin = 1;
    config.seed = seed;
    config
}

fn thin_to(values: &[f64], cap: usize) -> Vec<f64> {
    if values.len() <= cap {
        return values.to_vec();
    }
    let stride = values.len() as f64 / cap as f64;
    (0..cap).map(|k| values[(k as f64 * stride) as usize]).collect()
}

pub fn fit_json(
    rows: usize,
    cols: usize,
    p_missing: f64,
    iterations: usize,
    seed: u64,
) -> Result<String, String> {
    check_common(rows, cols, p_missing, iterations)?;
    let table = build_table(rows, cols, p_missing, seed)?;
    let labels = parameter_labels(table.p());

    let psgld = run_chain(&table, &psgld_config(&table, iterations, iterations / 4, seed ^ 1))
        .map_err(err)?;
    let gibbs_total = (iterations / 4).clamp(400, 4000);
    let gibbs =
        run_chain(&table, &gibbs_config(gibbs_total, gibbs_total / 4, seed ^ 2)).map_err(err)?;

    let side = |chain: &Chain| -> Result<(Value, Vec<MarginalSamples>), String> {
        let summary = summarize(chain).map_err(err)?;
        let marginals = chain_marginals(chain).map_err(err)?;
        let draws: Vec<Vec<f64>> = marginals.iter().map(|m| thin_to(m.values(), 800)).collect();
        let value = json!({
            "mean": summary.iter().map(|s| s.mean).collect::<Vec<f64>>(),
            "sd": summary.iter().map(|s| s.sd).collect::<Vec<f64>>(),
            "kept": chain.len(),
            "draws": draws,
        });
        Ok((value, marginals))
    };
    let (psgld_value, psgld_marginals) = side(&psgld)?;
    let (gibbs_value, gibbs_marginals) = side(&gibbs)?;
    let w2: Vec<f64> = psgld_marginals
        .iter()
        .zip(&gibbs_marginals)
        .map(|(a, b)| w2_empirical(a, b))
        .collect();

    Ok(json!({
        "labels": labels,
        "truth": [DEMO_B, DEMO_VARIANCES.alpha, DEMO_VARIANCES.beta, DEMO_VARIANCES.e],
        "rows": table.rows(),
        "cols": table.cols(),
        "n": table.n(),
        "psgld": psgld_value,
        "gibbs": gibbs_value,
        "w2": w2,
    })
    .to_string())
}

pub fn trace_json(
    rows: usize,
    cols: usize,
    p_missing: f64,
    iterations: usize,
    seed: u64,
) -> Result<String, String> {
    check_common(rows, cols, p_missing, iterations)?;
    let table = build_table(rows, cols, p_missing, seed)?;
    let labels = parameter_labels(table.p());

    let bench_chain = run_chain(&table, &gibbs_config(1500, 500, seed ^ 3)).map_err(err)?;
    let benchmark = chain_marginals(&bench_chain).map_err(err)?;

    let mut psgld_cfg = psgld_config(&table, iterations, 0, seed ^ 4);
    psgld_cfg.thin = (iterations / 1200).max(1);
    let psgld = run_chain(&table, &psgld_cfg).map_err(err)?;
    let gibbs_total = (iterations / 4).clamp(300, 3000);
    let gibbs = run_chain(&table, &gibbs_config(gibbs_total, 0, seed ^ 5)).map_err(err)?;

    let series = |chain: &Chain| -> Result<Value, String> {
        let points = convergence_trace(chain, &benchmark, 200).map_err(err)?;
        let stride = (points.len() / 300).max(1);
        let sampled: Vec<Value> = points
            .iter()
            .enumerate()
            .filter(|(k, _)| k % stride == 0 || k + 1 == points.len())
            .map(|(k, point)| json!({ "iter": chain.iters[k + 2], "w2": &point.w2 }))
            .collect();
        Ok(Value::Array(sampled))
    };

    Ok(json!({
        "labels": labels,
        "rows": table.rows(),
        "cols": table.cols(),
        "n": table.n(),
        "benchmark_sweeps": bench_chain.len(),
        "psgld": series(&psgld)?,
        "gibbs": series(&gibbs)?,
    })
    .to_string())
}

pub fn precision_json(
    r: usize,
    c: usize,
    sigma2_alpha: f64,
    sigma2_beta: f64,
    sigma2_e: f64,
) -> Result<String, String> {
    if !(2..=8).contains(&r) || !(2..=8).contains(&c) {
        return Err(format!("r and c must lie in 2..=8, got {r} x {c}"));
    }
    for (name, value) in [
        ("sigma2_alpha", sigma2_alpha),
        ("sigma2_beta", sigma2_beta),
        ("sigma2_e", sigma2_e),
    ] {
        if !value.is_finite() || value <= 0.0 || value > 1000.0 {
            return Err(format!("{name} must lie in (0, 1000], got {value}"));
        }
    }
    let v = VarianceScale { alpha: sigma2_alpha, beta: sigma2_beta, e: sigma2_e };
    let scalars = precision_scalars_from(&v, r, c).map_err(err)?;

    // Both matrices share the same four entry classes: diagonal, same row,
    // same column, neither. Cells are laid out row major, i * c + j.
    let build = |diagonal: f64, same_row: f64, same_col: f64, other: f64| -> Vec<Vec<f64>> {
        (0..r * c)
            .map(|a| {
                (0..r * c)
                    .map(|b| {
                        let same_i = a / c == b / c;
                        let same_j = a % c == b % c;
                        match (same_i, same_j) {
                            (true, true) => diagonal,
                            (true, false) => same_row,
                            (false, true) => same_col,
                            (false, false) => other,
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let covariance = build(v.alpha + v.beta + v.e, v.alpha, v.beta, 0.0);
    let precision = build(scalars.x, scalars.y, scalars.w, scalars.z);

    Ok(json!({
        "r": r,
        "c": c,
        "scalars": { "x": scalars.x, "y": scalars.y, "z": scalars.z, "w": scalars.w },
        "covariance": covariance,
        "precision": precision,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn demo_fit(
    rows: u32,
    cols: u32,
    p_missing: f64,
    iterations: u32,
    seed: u32,
) -> Result<String, JsError> {
    fit_json(rows as usize, cols as usize, p_missing, iterations as usize, seed as u64)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn demo_trace(
    rows: u32,
    cols: u32,
    p_missing: f64,
    iterations: u32,
    seed: u32,
) -> Result<String, JsError> {
    trace_json(rows as usize, cols as usize, p_missing, iterations as usize, seed as u64)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn demo_precision(
    r: u32,
    c: u32,
    sigma2_alpha: f64,
    sigma2_beta: f64,
    sigma2_e: f64,
) -> Result<String, JsError> {
    precision_json(r as usize, c as usize, sigma2_alpha, sigma2_beta, sigma2_e)
        .map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Value {
        serde_json::from_str(text).expect("demo output parses as JSON")
    }

    #[test]
    fn fit_is_deterministic_and_well_formed() {
        let a = fit_json(12, 12, 0.0, 600, 42).unwrap();
        let b = fit_json(12, 12, 0.0, 600, 42).unwrap();
        assert_eq!(a, b);

        let doc = parse(&a);
        let labels: Vec<&str> =
            doc["labels"].as_array().unwrap().iter().map(|l| l.as_str().unwrap()).collect();
        assert_eq!(labels, ["b_1", "sigma2_alpha", "sigma2_beta", "sigma2_e"]);
        assert_eq!(doc["n"], 144);
        for sampler in ["psgld", "gibbs"] {
            let draws = doc[sampler]["draws"].as_array().unwrap();
            assert_eq!(draws.len(), 4);
            assert!(draws.iter().all(|d| !d.as_array().unwrap().is_empty()));
            assert!(doc[sampler]["kept"].as_u64().unwrap() >= 2);
        }
        let w2 = doc["w2"].as_array().unwrap();
        assert_eq!(w2.len(), 4);
        assert!(w2.iter().all(|v| v.as_f64().unwrap() >= 0.0));
        let truth: Vec<f64> =
            doc["truth"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(truth, [2.0, 4.0, 2.0, 1.0]);
    }

    #[test]
    fn fit_handles_missing_cells() {
        let doc = parse(&fit_json(14, 14, 0.5, 400, 9).unwrap());
        let n = doc["n"].as_u64().unwrap();
        assert!(n < 196, "mcar should remove cells, kept {n}");
        assert!(n > 50);
    }

    #[test]
    fn trace_reports_progress_for_both_samplers() {
        let doc = parse(&trace_json(12, 12, 0.0, 600, 7).unwrap());
        for sampler in ["psgld", "gibbs"] {
            let points = doc[sampler].as_array().unwrap();
            assert!(points.len() >= 3, "{sampler} trace too short");
            let iters: Vec<u64> =
                points.iter().map(|p| p["iter"].as_u64().unwrap()).collect();
            assert!(iters.windows(2).all(|w| w[0] < w[1]));
            for point in points {
                let w2 = point["w2"].as_array().unwrap();
                assert_eq!(w2.len(), 4);
                assert!(w2.iter().all(|v| v.as_f64().unwrap().is_finite()));
            }
        }
        assert_eq!(doc["benchmark_sweeps"], 1000);
    }

    #[test]
    fn precision_matches_the_standard_case() {
        let doc = parse(&precision_json(2, 2, 9.0, 4.0, 1.0).unwrap());
        let s = &doc["scalars"];
        assert!((s["x"].as_f64().unwrap() - 154.0 / 513.0).abs() < 1e-12);
        assert!((s["y"].as_f64().unwrap() + 131.0 / 513.0).abs() < 1e-12);
        assert!((s["z"].as_f64().unwrap() - 112.0 / 513.0).abs() < 1e-12);
        assert!((s["w"].as_f64().unwrap() + 116.0 / 513.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_and_precision_multiply_to_identity() {
        for (r, c, va, vb, ve) in [(2, 3, 9.0, 4.0, 1.0), (4, 4, 0.3, 2.5, 0.7), (3, 5, 1.0, 1.0, 1.0)]
        {
            let doc = parse(&precision_json(r, c, va, vb, ve).unwrap());
            let read = |key: &str| -> Vec<Vec<f64>> {
                doc[key]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|row| {
                        row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
                    })
                    .collect()
            };
            let sigma = read("covariance");
            let q = read("precision");
            let n = r * c;
            for i in 0..n {
                for j in 0..n {
                    let prod: f64 = (0..n).map(|k| sigma[i][k] * q[k][j]).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (prod - expected).abs() < 1e-10,
                        "({r}, {c}) product off at ({i}, {j}): {prod}"
                    );
                }
            }
        }
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        assert!(fit_json(3, 12, 0.0, 600, 1).is_err());
        assert!(fit_json(12, 12, 0.95, 600, 1).is_err());
        assert!(fit_json(12, 12, 0.0, 100, 1).is_err());
        assert!(trace_json(12, 61, 0.0, 600, 1).is_err());
        assert!(precision_json(9, 2, 1.0, 1.0, 1.0).is_err());
        assert!(precision_json(2, 2, 0.0, 1.0, 1.0).is_err());
    }
}
