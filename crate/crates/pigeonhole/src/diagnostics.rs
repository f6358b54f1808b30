//! Wasserstein-2 diagnostics on posterior marginals: distances between
//! empirical distributions, barycenters across replicated runs, chain
//! summaries, and distance-versus-time convergence traces.
//!
//! All distances are between one-dimensional empirical distributions, where
//! `W2(F1, F2)^2 = \int_0^1 (F1^{-1}(u) - F2^{-1}(u))^2 du` can be evaluated
//! exactly from sorted samples. Quantile functions use the left-continuous
//! generalized inverse `F^{-1}(u) = inf{x : F(x) >= u}`, so equal sample
//! sizes reduce to order-statistic matching, and unequal sizes integrate the
//! squared quantile difference piecewise over the merged jump grid. The only
//! approximation in this module is the finite quantile grid used by
//! [`w2_barycenter`].

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::Theta;
use crate::samplers::Chain;

/// Sorted draws of a single scalar parameter, labelled for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalSamples {
    label: String,
    values: Vec<f64>,
}

impl MarginalSamples {
    /// Sorts and stores the draws. Errs on an empty or non-finite sample.
    pub fn new(label: impl Into<String>, mut values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "marginal {label:?} has no samples"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "marginal {label:?} holds a non-finite sample"
            )));
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(MarginalSamples { label, values })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The samples in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Left-continuous empirical quantile: the `ceil(u * n)`-th order
    /// statistic, clamped to the sample range for `u <= 0` and `u >= 1`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.values.len();
        let rank = (u * n as f64).ceil() as usize;
        self.values[rank.clamp(1, n) - 1]
    }
}

/// Exact Wasserstein-2 distance between two empirical distributions.
pub fn w2_empirical(a: &MarginalSamples, b: &MarginalSamples) -> f64 {
    w2_sorted(a.values(), b.values())
}

fn w2_sorted(a: &[f64], b: &[f64]) -> f64 {
    debug_assert!(!a.is_empty() && !b.is_empty());
    if a.len() == b.len() {
        let n = a.len() as f64;
        let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        return (ss / n).sqrt();
    }
    let n = a.len() as f64;
    let m = b.len() as f64;
    let mut ia = 0usize;
    let mut ib = 0usize;
    let mut u = 0.0;
    let mut acc = 0.0;
    while ia < a.len() && ib < b.len() {
        let ua = (ia as f64 + 1.0) / n;
        let ub = (ib as f64 + 1.0) / m;
        let next = ua.min(ub);
        let d = a[ia] - b[ib];
        acc += d * d * (next - u);
        u = next;
        if ua == next {
            ia += 1;
        }
        if ub == next {
            ib += 1;
        }
    }
    acc.sqrt()
}

/// Wasserstein-2 barycenter of several empirical distributions: the
/// distribution whose quantile function is the pointwise average of the
/// replicates' quantile functions, evaluated on the uniform grid
/// `u_g = (g - 0.5) / grid_size`. The result carries the first replicate's
/// label and `grid_size` equally weighted atoms.
pub fn w2_barycenter(replicates: &[MarginalSamples], grid_size: usize) -> Result<MarginalSamples> {
    if replicates.is_empty() {
        return Err(Error::InvalidArgument(
            "barycenter needs at least one replicate".into(),
        ));
    }
    if grid_size == 0 {
        return Err(Error::InvalidArgument(
            "barycenter grid needs at least one point".into(),
        ));
    }
    let scale = 1.0 / replicates.len() as f64;
    let values = (1..=grid_size)
        .map(|g| {
            let u = (g as f64 - 0.5) / grid_size as f64;
            replicates.iter().map(|rep| rep.quantile(u)).sum::<f64>() * scale
        })
        .collect();
    MarginalSamples::new(replicates[0].label(), values)
}

/// Reporting order of the scalar parameters of a chain with `p` coefficients:
/// the coefficients, then the three variance components on the variance
/// scale.
pub fn parameter_labels(p: usize) -> Vec<String> {
    let mut labels: Vec<String> = (1..=p).map(|k| format!("b_{k}")).collect();
    labels.push("sigma2_alpha".into());
    labels.push("sigma2_beta".into());
    labels.push("sigma2_e".into());
    labels
}

/// A sampled state flattened to the reporting order of [`parameter_labels`].
pub fn parameter_values(theta: &Theta) -> Vec<f64> {
    let mut values = theta.b.clone();
    let vs = theta.variances();
    values.push(vs.alpha);
    values.push(vs.beta);
    values.push(vs.e);
    values
}

/// Mean and standard deviation of one reported parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSummary {
    pub param: String,
    pub mean: f64,
    pub sd: f64,
}

/// Per-parameter sample mean and standard deviation (denominator `n - 1`),
/// variance components on the variance scale. Needs at least two samples.
pub fn summarize(chain: &Chain) -> Result<Vec<ParamSummary>> {
    if chain.len() < 2 {
        return Err(Error::InvalidArgument(
            "summaries need at least two samples".into(),
        ));
    }
    let labels = parameter_labels(chain.p());
    let n = chain.len() as f64;
    let mut means = vec![0.0; labels.len()];
    for theta in &chain.samples {
        for (acc, v) in means.iter_mut().zip(parameter_values(theta)) {
            *acc += v / n;
        }
    }
    let mut vars = vec![0.0; labels.len()];
    for theta in &chain.samples {
        for (k, v) in parameter_values(theta).into_iter().enumerate() {
            vars[k] += (v - means[k]) * (v - means[k]) / (n - 1.0);
        }
    }
    Ok(labels
        .into_iter()
        .zip(means.iter().zip(&vars))
        .map(|(param, (&mean, &var))| ParamSummary {
            param,
            mean,
            sd: var.sqrt(),
        })
        .collect())
}

/// Splits a chain into one sorted marginal per reported parameter.
pub fn chain_marginals(chain: &Chain) -> Result<Vec<MarginalSamples>> {
    if chain.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot take marginals of an empty chain".into(),
        ));
    }
    let labels = parameter_labels(chain.p());
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(chain.len()); labels.len()];
    for theta in &chain.samples {
        for (column, v) in series.iter_mut().zip(parameter_values(theta)) {
            column.push(v);
        }
    }
    labels
        .into_iter()
        .zip(series)
        .map(|(label, values)| MarginalSamples::new(label, values))
        .collect()
}

/// One point of a convergence trace: the chain clock and the per-parameter
/// W2 distances of the trailing sample window to the benchmark, ordered as
/// in [`parameter_labels`].
#[derive(Clone, Debug, PartialEq)]
pub struct TracePoint {
    pub elapsed_s: f64,
    pub w2: Vec<f64>,
}

/// For each retained sample index `t >= 3`, the W2 distance between the
/// trailing `min(window, t)` samples and the benchmark marginal, per
/// parameter, stamped with the chain's wall-clock offset at that sample.
/// The trace therefore has `chain.len() - 2` points. The benchmark must
/// list one marginal per reported parameter, in reporting order.
pub fn convergence_trace(
    chain: &Chain,
    benchmark: &[MarginalSamples],
    window: usize,
) -> Result<Vec<TracePoint>> {
    if chain.len() < 3 {
        return Err(Error::InvalidArgument(
            "convergence traces need at least three samples".into(),
        ));
    }
    if window == 0 {
        return Err(Error::InvalidArgument(
            "trace window must hold at least one sample".into(),
        ));
    }
    let labels = parameter_labels(chain.p());
    if benchmark.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "benchmark lists {} marginals for {} parameters",
            benchmark.len(),
            labels.len()
        )));
    }
    for (bench, label) in benchmark.iter().zip(&labels) {
        if bench.label() != label {
            return Err(Error::InvalidArgument(format!(
                "benchmark marginal {:?} does not match chain parameter {:?}",
                bench.label(),
                label
            )));
        }
    }
    if chain.elapsed_s.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "chain timestamps must be non-decreasing".into(),
        ));
    }

    let d = labels.len();
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(chain.len()); d];
    for theta in &chain.samples {
        for (column, v) in series.iter_mut().zip(parameter_values(theta)) {
            column.push(v);
        }
    }
    let mut sorted: Vec<Vec<f64>> = vec![Vec::with_capacity(window.min(chain.len())); d];
    let mut trace = Vec::with_capacity(chain.len() - 2);
    for t in 0..chain.len() {
        for (k, column) in series.iter().enumerate() {
            let incoming = column[t];
            let at = sorted[k].partition_point(|&x| x < incoming);
            sorted[k].insert(at, incoming);
            if sorted[k].len() > window {
                let outgoing = column[t - window];
                let at = sorted[k].partition_point(|&x| x < outgoing);
                sorted[k].remove(at);
            }
        }
        if t >= 2 {
            let w2 = sorted
                .iter()
                .zip(benchmark)
                .map(|(win, bench)| w2_sorted(win, bench.values()))
                .collect();
            trace.push(TracePoint {
                elapsed_s: chain.elapsed_s[t],
                w2,
            });
        }
    }
    Ok(trace)
}

/// Writes summaries as `param,stat,value` rows.
pub fn write_summary_csv<W: Write>(summaries: &[ParamSummary], out: &mut W) -> Result<()> {
    writeln!(out, "param,stat,value")?;
    for s in summaries {
        writeln!(out, "{},mean,{:.16e}", s.param, s.mean)?;
        writeln!(out, "{},sd,{:.16e}", s.param, s.sd)?;
    }
    Ok(())
}

/// Writes a convergence trace as `elapsed_s,param,w2` rows, one per
/// parameter per trace point.
pub fn write_trace_csv<W: Write>(
    labels: &[String],
    trace: &[TracePoint],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "elapsed_s,param,w2")?;
    for point in trace {
        for (label, w2) in labels.iter().zip(&point.w2) {
            writeln!(out, "{:.16e},{label},{:.16e}", point.elapsed_s, w2)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::Normal;

    fn marginal(values: &[f64]) -> MarginalSamples {
        MarginalSamples::new("x", values.to_vec()).unwrap()
    }

    #[test]
    fn quantiles_are_left_continuous() {
        let m = marginal(&[1.0, 2.0, 3.0]);
        assert_eq!(m.quantile(0.0), 1.0);
        assert_eq!(m.quantile(1.0 / 3.0), 1.0);
        assert_eq!(m.quantile(0.34), 2.0);
        assert_eq!(m.quantile(2.0 / 3.0), 2.0);
        assert_eq!(m.quantile(0.67), 3.0);
        assert_eq!(m.quantile(1.0), 3.0);
        assert!(MarginalSamples::new("x", vec![]).is_err());
        assert!(MarginalSamples::new("x", vec![f64::NAN]).is_err());
    }

    #[test]
    fn w2_matches_hand_computed_cases() {
        let a = marginal(&[0.0, 1.0, 2.0]);
        assert_eq!(w2_empirical(&a, &a), 0.0);
        assert_eq!(
            w2_empirical(&marginal(&[0.0]), &marginal(&[1.0])),
            1.0
        );
        let b = marginal(&[0.0, 0.0, 3.0]);
        assert_relative_eq!(
            w2_empirical(&a, &b),
            (2.0f64 / 3.0).sqrt(),
            max_relative = 1e-15
        );
        assert_eq!(w2_empirical(&a, &b), w2_empirical(&b, &a));
    }

    #[test]
    fn w2_merged_grid_is_exact_on_dyadic_breakpoints() {
        let a = marginal(&[0.0, 1.0]);
        let b = marginal(&[0.0, 0.0, 1.0, 3.0]);
        assert_eq!(w2_empirical(&a, &b), 1.0);
    }

    #[test]
    fn w2_is_invariant_to_sample_duplication() {
        let mut rng = StdRng::seed_from_u64(3);
        let normal = Normal::new(0.0, 2.0).unwrap();
        for _ in 0..50 {
            let n = rng.gen_range(1..30);
            let m = rng.gen_range(1..30);
            let a: Vec<f64> = (0..n).map(|_| rng.sample(normal)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.sample(normal)).collect();
            let doubled: Vec<f64> = b.iter().flat_map(|&v| [v, v]).collect();
            let direct = w2_empirical(&marginal(&a), &marginal(&b));
            let via_doubled = w2_empirical(&marginal(&a), &marginal(&doubled));
            assert_abs_diff_eq!(direct, via_doubled, epsilon = 1e-12);
        }
    }

    #[test]
    fn w2_satisfies_the_triangle_inequality() {
        let mut rng = StdRng::seed_from_u64(17);
        let normal = Normal::new(0.0, 3.0).unwrap();
        for _ in 0..100 {
            let (na, nb, nc): (usize, usize, usize) = (
                rng.gen_range(1..40),
                rng.gen_range(1..40),
                rng.gen_range(1..40),
            );
            let mut draw = |size: usize| -> MarginalSamples {
                marginal(&(0..size).map(|_| rng.sample(normal)).collect::<Vec<_>>())
            };
            let (a, b, c) = (draw(na), draw(nb), draw(nc));
            let ab = w2_empirical(&a, &b);
            let bc = w2_empirical(&b, &c);
            let ac = w2_empirical(&a, &c);
            assert!(
                ac <= ab + bc + 1e-12,
                "triangle violated: {ac} > {ab} + {bc}"
            );
        }
    }

    #[test]
    fn w2_translation_and_scaling_are_exact_on_dyadic_inputs() {
        let a: Vec<f64> = vec![0.25, 1.5, -2.0, 3.75];
        let b: Vec<f64> = vec![0.5, -1.25, 2.0];
        let base = w2_empirical(&marginal(&a), &marginal(&b));

        let shift = |v: &[f64], d: f64| -> Vec<f64> { v.iter().map(|x| x + d).collect() };
        let scale = |v: &[f64], k: f64| -> Vec<f64> { v.iter().map(|x| x * k).collect() };
        assert_eq!(
            w2_empirical(&marginal(&shift(&a, 2.5)), &marginal(&shift(&b, 2.5))),
            base
        );
        assert_eq!(
            w2_empirical(&marginal(&scale(&a, 4.0)), &marginal(&scale(&b, 4.0))),
            4.0 * base
        );

        let mut rng = StdRng::seed_from_u64(23);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..20 {
            let a: Vec<f64> = (0..7).map(|_| rng.sample(normal)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.sample(normal)).collect();
            let d: f64 = rng.sample(normal);
            let k: f64 = rng.gen_range(0.1..3.0);
            let base = w2_empirical(&marginal(&a), &marginal(&b));
            assert_relative_eq!(
                w2_empirical(&marginal(&shift(&a, d)), &marginal(&shift(&b, d))),
                base,
                max_relative = 1e-12,
                epsilon = 1e-12
            );
            assert_relative_eq!(
                w2_empirical(&marginal(&scale(&a, k)), &marginal(&scale(&b, k))),
                k * base,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn barycenter_of_point_masses_averages_them() {
        let bary = w2_barycenter(
            &[marginal(&[0.0]), marginal(&[2.0])],
            100,
        )
        .unwrap();
        assert_eq!(bary.len(), 100);
        assert!(bary.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn barycenter_of_one_replicate_resamples_it() {
        let mut rng = StdRng::seed_from_u64(7);
        let normal = Normal::new(1.0, 2.0).unwrap();
        let sample: Vec<f64> = (0..100).map(|_| rng.sample(normal)).collect();
        let original = marginal(&sample);

        let divisible = w2_barycenter(std::slice::from_ref(&original), 1000).unwrap();
        assert_abs_diff_eq!(w2_empirical(&divisible, &original), 0.0, epsilon = 1e-15);

        let small: Vec<f64> = sample[..7].to_vec();
        let original = marginal(&small);
        let range = original.values()[6] - original.values()[0];
        let coarse = w2_barycenter(std::slice::from_ref(&original), 1000).unwrap();
        let fine = w2_barycenter(std::slice::from_ref(&original), 10_000).unwrap();
        let coarse_err = w2_empirical(&coarse, &original);
        let fine_err = w2_empirical(&fine, &original);
        assert!(coarse_err <= range * (7.0f64 / 1000.0).sqrt());
        assert!(fine_err < coarse_err);
    }

    #[test]
    fn barycenter_of_shifted_replicates_is_the_half_shift() {
        let values = vec![0.5, 1.25, -2.0, 3.0, 0.25];
        let shifted: Vec<f64> = values.iter().map(|v| v + 4.0).collect();
        let bary = w2_barycenter(
            &[marginal(&values), marginal(&shifted)],
            64,
        )
        .unwrap();
        let expected = w2_barycenter(
            std::slice::from_ref(&marginal(&values)),
            64,
        )
        .unwrap();
        for (got, want) in bary.values().iter().zip(expected.values()) {
            assert_eq!(*got, want + 2.0);
        }
        assert!(w2_barycenter(&[], 10).is_err());
        assert!(w2_barycenter(&[marginal(&values)], 0).is_err());
    }

    fn chain_of(b_values: &[f64]) -> Chain {
        let mut chain = Chain::new(1);
        for (t, &v) in b_values.iter().enumerate() {
            chain.push(
                t as u64 + 1,
                t as f64 * 0.5,
                Theta::new(vec![v], (4.0f64).ln(), 0.0, (0.25f64).ln()),
            );
        }
        chain
    }

    #[test]
    fn summaries_report_means_and_sds_on_the_variance_scale() {
        let chain = chain_of(&[0.0, 2.0]);
        let summary = summarize(&chain).unwrap();
        assert_eq!(summary.len(), 4);
        assert_eq!(summary[0].param, "b_1");
        assert_eq!(summary[0].mean, 1.0);
        assert_relative_eq!(summary[0].sd, 2.0f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(summary[1].mean, 4.0, max_relative = 1e-15);
        assert_eq!(summary[1].sd, 0.0);
        assert_eq!(summary[2].param, "sigma2_beta");
        assert_relative_eq!(summary[2].mean, 1.0, max_relative = 1e-15);
        assert_relative_eq!(summary[3].mean, 0.25, max_relative = 1e-15);

        assert!(summarize(&chain_of(&[1.0])).is_err());
    }

    #[test]
    fn summaries_match_the_generator_moments() {
        let mut rng = StdRng::seed_from_u64(11);
        let normal = Normal::new(2.0, 0.5).unwrap();
        let draws: Vec<f64> = (0..20_000).map(|_| rng.sample(normal)).collect();
        let summary = summarize(&chain_of(&draws)).unwrap();
        let n = draws.len() as f64;
        assert_abs_diff_eq!(summary[0].mean, 2.0, epsilon = 4.0 * 0.5 / n.sqrt());
        assert_abs_diff_eq!(
            summary[0].sd,
            0.5,
            epsilon = 4.0 * 0.5 / (2.0 * n).sqrt()
        );
    }

    #[test]
    fn marginals_split_chains_by_parameter() {
        let chain = chain_of(&[3.0, 1.0, 2.0]);
        let marginals = chain_marginals(&chain).unwrap();
        assert_eq!(marginals.len(), 4);
        assert_eq!(marginals[0].label(), "b_1");
        assert_eq!(marginals[0].values(), &[1.0, 2.0, 3.0]);
        assert_eq!(marginals[1].label(), "sigma2_alpha");
        assert_eq!(marginals[1].values(), &[4.0, 4.0, 4.0]);
        assert!(chain_marginals(&Chain::new(1)).is_err());
    }

    #[test]
    fn trace_of_a_constant_chain_at_its_benchmark_is_zero() {
        let chain = chain_of(&[2.0; 10]);
        let benchmark = chain_marginals(&chain).unwrap();
        let trace = convergence_trace(&chain, &benchmark, 500).unwrap();
        assert_eq!(trace.len(), 8);
        for point in &trace {
            assert_eq!(point.w2.len(), 4);
            for w2 in &point.w2 {
                assert_eq!(*w2, 0.0);
            }
        }
        assert_eq!(trace[0].elapsed_s, 1.0);
        assert_eq!(trace.last().unwrap().elapsed_s, 4.5);
    }

    #[test]
    fn trace_decreases_for_a_chain_drifting_onto_the_benchmark() {
        let values: Vec<f64> = (0..20).map(|t| 2.0 - 0.1 * t as f64).collect();
        let chain = chain_of(&values);
        let target = chain_of(&[0.0; 4]);
        let benchmark = chain_marginals(&target).unwrap();
        let trace = convergence_trace(&chain, &benchmark, 3).unwrap();
        assert_eq!(trace.len(), values.len() - 2);
        for pair in trace.windows(2) {
            assert!(pair[1].w2[0] < pair[0].w2[0]);
        }
    }

    #[test]
    fn trace_windows_cap_at_the_requested_length() {
        let values: Vec<f64> = (0..8).map(|t| t as f64).collect();
        let chain = chain_of(&values);
        let benchmark = chain_marginals(&chain_of(&[0.0, 1.0])).unwrap();
        let trace = convergence_trace(&chain, &benchmark, 2).unwrap();
        let last = trace.last().unwrap();
        let window = marginal(&[6.0, 7.0]);
        let bench = marginal(&[0.0, 1.0]);
        assert_relative_eq!(
            last.w2[0],
            w2_empirical(&window, &bench),
            max_relative = 1e-15
        );
    }

    #[test]
    fn trace_rejects_bad_inputs() {
        let chain = chain_of(&[1.0, 2.0, 3.0]);
        let benchmark = chain_marginals(&chain).unwrap();
        assert!(convergence_trace(&chain_of(&[1.0, 2.0]), &benchmark, 10).is_err());
        assert!(convergence_trace(&chain, &benchmark, 0).is_err());
        assert!(convergence_trace(&chain, &benchmark[..3], 10).is_err());

        let mut renamed = benchmark.clone();
        renamed.swap(0, 1);
        assert!(convergence_trace(&chain, &renamed, 10).is_err());

        let mut clock_skew = chain_of(&[1.0, 2.0, 3.0]);
        clock_skew.elapsed_s[2] = 0.1;
        assert!(convergence_trace(&clock_skew, &benchmark, 10).is_err());
    }

    #[test]
    fn diagnostics_csv_layouts_are_stable() {
        let chain = chain_of(&[0.0, 2.0]);
        let summary = summarize(&chain).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&summary, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("param,stat,value"));
        assert_eq!(lines.next(), Some("b_1,mean,1.0000000000000000e0"));
        assert!(lines.next().unwrap().starts_with("b_1,sd,1.41421356"));
        assert_eq!(text.lines().count(), 9);

        let benchmark = chain_marginals(&chain_of(&[0.0, 2.0, 1.0])).unwrap();
        let trace = convergence_trace(&chain_of(&[0.0, 2.0, 1.0]), &benchmark, 5).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&parameter_labels(1), &trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("elapsed_s,param,w2"));
        assert_eq!(
            lines.next(),
            Some("1.0000000000000000e0,b_1,0.0000000000000000e0")
        );
        assert_eq!(text.lines().count(), 5);
    }
}
