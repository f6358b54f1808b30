//! The two subset Langevin samplers, the full-data Gibbs benchmark, and the
//! chain driver.
//!
//! Each sampler advances the parameter vector theta = (b, eta_alpha,
//! eta_beta, eta_e):
//!
//! - plain SGLD draws a fully observed r x c subtable and takes a Langevin
//!   step around the scaled marginal gradient from [`crate::balanced`];
//! - pigeonhole SGLD draws any r x c subtable, refreshes the subtable's own
//!   latent effects with a short blocked Gibbs chain, and uses the averaged
//!   complete-data gradient from [`crate::model::stochastic_gradient`];
//! - the Gibbs benchmark sweeps the full table, drawing every latent effect,
//!   the coefficients, and the three variances from their exact conditionals.
//!
//! [`run_chain`] wires a sampler to a table: a ChaCha12 stream seeded from
//! the config makes every chain reproducible, two-phase step schedules and
//! an optional empirical preconditioner handle the transient, burn-in and
//! thinning decide what is retained, and wall-clock timestamps ride along
//! for time-to-accuracy comparisons (they are the one non-deterministic
//! column).

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write as IoWrite};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::balanced::balanced_grads;
use crate::error::{Error, Result};
use crate::model::{
    conditional_params_prepared, dot, log_prior_grad, sieve_contains, stochastic_gradient, Axis,
    LatentState, ObservedTable, PriorSpec, SieveBounds, SubsetBatch, Theta,
};

/// How many fresh noise draws a sieve-constrained update tries before
/// giving up.
const SIEVE_ATTEMPTS: usize = 1000;

#[cfg(not(target_arch = "wasm32"))]
mod clock {
    pub struct Clock(std::time::Instant);

    impl Clock {
        pub fn start() -> Self {
            Clock(std::time::Instant::now())
        }

        pub fn seconds(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }
}

/// Bare wasm targets have no monotonic clock, so chains record zero
/// elapsed time there.
#[cfg(target_arch = "wasm32")]
mod clock {
    pub struct Clock;

    impl Clock {
        pub fn start() -> Self {
            Clock
        }

        pub fn seconds(&self) -> f64 {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Sgld,
    Psgld,
    Gibbs,
}

impl SamplerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::Sgld => "sgld",
            SamplerKind::Psgld => "psgld",
            SamplerKind::Gibbs => "gibbs",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-block Langevin step sizes. The `b` entry applies to every coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizes {
    pub b: f64,
    pub eta_alpha: f64,
    pub eta_beta: f64,
    pub eta_e: f64,
}

impl StepSizes {
    pub fn new(b: f64, eta_alpha: f64, eta_beta: f64, eta_e: f64) -> Self {
        StepSizes {
            b,
            eta_alpha,
            eta_beta,
            eta_e,
        }
    }

    pub fn uniform(eps: f64) -> Self {
        StepSizes::new(eps, eps, eps, eps)
    }

    fn diag(&self, p: usize) -> Vec<f64> {
        let mut d = vec![self.b; p];
        d.push(self.eta_alpha);
        d.push(self.eta_beta);
        d.push(self.eta_e);
        d
    }

    fn is_valid(&self) -> bool {
        [self.b, self.eta_alpha, self.eta_beta, self.eta_e]
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0)
    }
}

/// Two-phase step schedule: iterations before `boundary` use `phase1`,
/// the rest use `phase2`. A constant schedule has `boundary = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    pub phase1: StepSizes,
    pub phase2: StepSizes,
    pub boundary: usize,
}

impl StepSchedule {
    pub fn constant(steps: StepSizes) -> Self {
        StepSchedule {
            phase1: steps,
            phase2: steps,
            boundary: 0,
        }
    }

    pub fn two_phase(phase1: StepSizes, phase2: StepSizes, boundary: usize) -> Self {
        StepSchedule {
            phase1,
            phase2,
            boundary,
        }
    }

    /// Step sizes for 0-based iteration `t`.
    pub fn at(&self, t: usize) -> &StepSizes {
        if t < self.boundary {
            &self.phase1
        } else {
            &self.phase2
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PreconditionMode {
    #[default]
    None,
    /// At the phase boundary, estimate block covariances from the trailing
    /// phase-1 parameter history and freeze them as the preconditioner.
    EmpiricalCovariance,
}

/// Block covariance transforms for the Langevin update: a p x p matrix for
/// the coefficients and a 3 x 3 matrix for the etas. Both are symmetric
/// positive definite.
#[derive(Clone, Debug, PartialEq)]
pub struct Preconditioner {
    pub b: DMatrix<f64>,
    pub eta: DMatrix<f64>,
}

/// Everything [`run_chain`] needs besides the table.
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub seed: u64,
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Subset rows r drawn per Langevin step.
    pub subset_rows: usize,
    /// Subset columns c drawn per Langevin step.
    pub subset_cols: usize,
    /// Latent Gibbs states m averaged per pigeonhole step.
    pub latent_draws: usize,
    /// Redraw rounds allowed when a subset has empty rows or columns.
    pub max_redraws: usize,
    pub schedule: StepSchedule,
    pub precondition: PreconditionMode,
    /// Trailing history length feeding the empirical preconditioner.
    pub precondition_window: usize,
    pub sieve: Option<SieveBounds>,
    pub prior: PriorSpec,
    /// Starting point; `None` means coefficients 1 and unit variances.
    pub init: Option<Theta>,
}

impl SamplerConfig {
    pub fn langevin(kind: SamplerKind, steps: StepSizes) -> Self {
        SamplerConfig {
            kind,
            seed: 0,
            total_iterations: 1000,
            burn_in: 0,
            thin: 1,
            subset_rows: 20,
            subset_cols: 20,
            latent_draws: 50,
            max_redraws: 100,
            schedule: StepSchedule::constant(steps),
            precondition: PreconditionMode::None,
            precondition_window: 500,
            sieve: None,
            prior: PriorSpec::default(),
            init: None,
        }
    }

    pub fn gibbs() -> Self {
        SamplerConfig {
            kind: SamplerKind::Gibbs,
            ..SamplerConfig::langevin(SamplerKind::Gibbs, StepSizes::uniform(0.0))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        self.prior.validate()?;
        if let Some(init) = &self.init {
            if !init.is_finite() {
                return Err(Error::InvalidArgument(
                    "initial theta holds a non-finite value".into(),
                ));
            }
        }
        if let Some(bounds) = &self.sieve {
            if bounds.n < 3 {
                return Err(Error::InvalidArgument(
                    "sieve needs N >= 3 so that log log N > 0".into(),
                ));
            }
            if !(bounds.b0 > 0.0 && bounds.a1 > 0.0 && bounds.b1 > 0.0 && bounds.e1 > 0.0) {
                return Err(Error::InvalidArgument("sieve bounds must be positive".into()));
            }
        }
        match self.kind {
            SamplerKind::Gibbs => Ok(()),
            SamplerKind::Sgld | SamplerKind::Psgld => {
                if self.subset_rows < 2 || self.subset_cols < 2 {
                    return Err(Error::InvalidArgument(
                        "subsets need r >= 2 and c >= 2".into(),
                    ));
                }
                if !self.schedule.phase1.is_valid() || !self.schedule.phase2.is_valid() {
                    return Err(Error::InvalidArgument(
                        "step sizes must be finite and non-negative".into(),
                    ));
                }
                if self.kind == SamplerKind::Psgld && self.latent_draws == 0 {
                    return Err(Error::InvalidArgument(
                        "pigeonhole SGLD needs at least one latent draw".into(),
                    ));
                }
                if self.precondition == PreconditionMode::EmpiricalCovariance
                    && (self.precondition_window < 10 || self.schedule.boundary < 10)
                {
                    return Err(Error::InvalidArgument(
                        "empirical preconditioning needs a window and phase boundary of at least 10".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Retained posterior samples with their absolute iteration numbers and
/// wall-clock offsets.
#[derive(Clone, Debug)]
pub struct Chain {
    p: usize,
    pub iters: Vec<u64>,
    pub elapsed_s: Vec<f64>,
    pub samples: Vec<Theta>,
}

impl Chain {
    pub fn new(p: usize) -> Self {
        Chain {
            p,
            iters: Vec::new(),
            elapsed_s: Vec::new(),
            samples: Vec::new(),
        }
    }

    fn with_capacity(p: usize, cap: usize) -> Self {
        Chain {
            p,
            iters: Vec::with_capacity(cap),
            elapsed_s: Vec::with_capacity(cap),
            samples: Vec::with_capacity(cap),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, iter: u64, elapsed_s: f64, theta: Theta) {
        assert_eq!(theta.p(), self.p, "sample dimension differs from chain");
        self.iters.push(iter);
        self.elapsed_s.push(elapsed_s);
        self.samples.push(theta);
    }

    /// Writes `iter,elapsed_s,b_1..b_p,sigma2_alpha,sigma2_beta,sigma2_e`
    /// with variances on the sigma^2 scale and floats at full precision.
    /// Canonical mode zeroes the elapsed column so output is byte-stable.
    pub fn write_csv<W: IoWrite>(&self, out: &mut W, canonical: bool) -> Result<()> {
        write!(out, "iter,elapsed_s")?;
        for l in 1..=self.p {
            write!(out, ",b_{}", l)?;
        }
        writeln!(out, ",sigma2_alpha,sigma2_beta,sigma2_e")?;
        for idx in 0..self.len() {
            let elapsed = if canonical { 0.0 } else { self.elapsed_s[idx] };
            write!(out, "{},{:.16e}", self.iters[idx], elapsed)?;
            let theta = &self.samples[idx];
            for v in &theta.b {
                write!(out, ",{:.16e}", v)?;
            }
            writeln!(
                out,
                ",{:.16e},{:.16e},{:.16e}",
                theta.sigma2_alpha(),
                theta.sigma2_beta(),
                theta.sigma2_e()
            )?;
        }
        Ok(())
    }

    /// Parses the format written by [`Chain::write_csv`]. `source` labels
    /// parse errors, typically with the file name.
    pub fn read_csv<R: BufRead>(input: R, source: &str) -> Result<Chain> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = input.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(parse_err(1, "missing header".into())),
        };
        let fields: Vec<&str> = header.trim_end().split(',').collect();
        if fields.len() < 6
            || fields[0] != "iter"
            || fields[1] != "elapsed_s"
            || fields[fields.len() - 3..] != ["sigma2_alpha", "sigma2_beta", "sigma2_e"]
        {
            return Err(parse_err(1, format!("unexpected header {:?}", header)));
        }
        let p = fields.len() - 5;
        for (l, name) in fields[2..2 + p].iter().enumerate() {
            if *name != format!("b_{}", l + 1) {
                return Err(parse_err(1, format!("unexpected coefficient column {:?}", name)));
            }
        }
        let mut chain = Chain::new(p);
        for (idx, line) in lines {
            let line = line?;
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.trim_end().split(',').collect();
            if cells.len() != p + 5 {
                return Err(parse_err(
                    line_no,
                    format!("expected {} fields, found {}", p + 5, cells.len()),
                ));
            }
            let iter: u64 = cells[0]
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad iteration index: {}", e)))?;
            let mut nums = Vec::with_capacity(p + 4);
            for cell in &cells[1..] {
                let v: f64 = cell
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("bad float {:?}: {}", cell, e)))?;
                nums.push(v);
            }
            let sigmas = &nums[p + 1..];
            if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(parse_err(
                    line_no,
                    "variance columns must be positive and finite".into(),
                ));
            }
            let theta = Theta::new(
                nums[1..1 + p].to_vec(),
                sigmas[0].ln(),
                sigmas[1].ln(),
                sigmas[2].ln(),
            );
            if !theta.is_finite() {
                return Err(parse_err(line_no, "non-finite parameter value".into()));
            }
            chain.push(iter, nums[0], theta);
        }
        Ok(chain)
    }
}

/// Draws r distinct rows and c distinct columns and keeps redrawing the
/// selections that intersect no observations. Rows or columns that already
/// see data are kept, so the redraw converges on pruned tables. Gives up
/// after `max_redraws` rounds.
pub fn sample_subset<R: Rng>(
    table: &ObservedTable,
    r: usize,
    c: usize,
    max_redraws: usize,
    rng: &mut R,
) -> Result<SubsetBatch> {
    if r < 2 || c < 2 {
        return Err(Error::InvalidArgument("subsets need r >= 2 and c >= 2".into()));
    }
    if r > table.rows() || c > table.cols() {
        return Err(Error::Dimension(format!(
            "subset {} x {} exceeds table {} x {}",
            r,
            c,
            table.rows(),
            table.cols()
        )));
    }
    let rows = rand::seq::index::sample(rng, table.rows(), r).into_vec();
    let cols = rand::seq::index::sample(rng, table.cols(), c).into_vec();
    complete_selection(table, rows, cols, max_redraws, rng)
}

fn complete_selection<R: Rng>(
    table: &ObservedTable,
    mut rows: Vec<usize>,
    mut cols: Vec<usize>,
    max_redraws: usize,
    rng: &mut R,
) -> Result<SubsetBatch> {
    for round in 0..=max_redraws {
        let batch = table.subset(&rows, &cols)?;
        let empty_rows = batch.empty_rows();
        let empty_cols = batch.empty_cols();
        if empty_rows.is_empty() && empty_cols.is_empty() {
            return Ok(batch);
        }
        if round == max_redraws {
            break;
        }
        let replaced = replace_selection(&mut rows, &empty_rows, table.rows(), rng)
            && replace_selection(&mut cols, &empty_cols, table.cols(), rng);
        if !replaced {
            return Err(Error::SamplingFailure { rounds: round });
        }
    }
    Err(Error::SamplingFailure {
        rounds: max_redraws,
    })
}

/// Swaps the listed positions for fresh ids outside the current selection.
/// Returns false when the pool cannot cover the replacements.
fn replace_selection<R: Rng>(
    selected: &mut [usize],
    positions: &[usize],
    total: usize,
    rng: &mut R,
) -> bool {
    if positions.is_empty() {
        return true;
    }
    let mut taken = vec![false; total];
    for &id in selected.iter() {
        taken[id] = true;
    }
    let candidates: Vec<usize> = (0..total).filter(|i| !taken[*i]).collect();
    if candidates.len() < positions.len() {
        return false;
    }
    let picks = rand::seq::index::sample(rng, candidates.len(), positions.len());
    for (slot, pick) in positions.iter().zip(picks.iter()) {
        selected[*slot] = candidates[pick];
    }
    true
}

/// Runs m sweeps of blocked Gibbs over the batch's latent effects at fixed
/// theta and returns every post-sweep state. The chain warm-starts at the
/// conditional means computed with the partner factor zeroed; there is no
/// internal burn-in. Each sweep draws the whole alpha block given the
/// previous beta, then the whole beta block given the fresh alpha.
pub fn latent_gibbs_sweep<R: Rng>(
    batch: &SubsetBatch,
    theta: &Theta,
    m: usize,
    rng: &mut R,
) -> Result<Vec<LatentState>> {
    if m == 0 {
        return Err(Error::InvalidArgument("latent chain needs m >= 1".into()));
    }
    if theta.p() != batch.p() {
        return Err(Error::Dimension(format!(
            "theta has p = {}, batch has p = {}",
            theta.p(),
            batch.p()
        )));
    }
    if !batch.is_valid() {
        return Err(Error::InvalidArgument(
            "corrupt batch: a selected row or column has no observations".into(),
        ));
    }
    let (r, c) = (batch.r(), batch.c());
    let sa = theta.sigma2_alpha();
    let sb = theta.sigma2_beta();
    let se = theta.sigma2_e();
    let resid0: Vec<f64> = (0..batch.n())
        .map(|k| batch.y(k) - dot(batch.x(k), &theta.b))
        .collect();

    let zero_alpha = vec![0.0; r];
    let zero_beta = vec![0.0; c];
    let mut state = LatentState {
        alpha: (0..r)
            .map(|i| {
                conditional_params_prepared(Axis::Row, i, batch, sa, se, &zero_beta, &resid0).0
            })
            .collect(),
        beta: (0..c)
            .map(|j| {
                conditional_params_prepared(Axis::Col, j, batch, sb, se, &zero_alpha, &resid0).0
            })
            .collect(),
    };

    let mut chain = Vec::with_capacity(m);
    for _ in 0..m {
        for i in 0..r {
            let (mean, var) =
                conditional_params_prepared(Axis::Row, i, batch, sa, se, &state.beta, &resid0);
            state.alpha[i] = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        for j in 0..c {
            let (mean, var) =
                conditional_params_prepared(Axis::Col, j, batch, sb, se, &state.alpha, &resid0);
            state.beta[j] = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        chain.push(state.clone());
    }
    Ok(chain)
}

/// Estimates block covariances from a parameter history and ridges them
/// into positive definite preconditioner transforms. Needs at least 10
/// states. The ridge is 1e-8 of the mean diagonal, with an absolute floor
/// of 1e-8 so a constant history still yields a usable (scaled identity)
/// transform.
pub fn precondition(history: &[Theta]) -> Result<Preconditioner> {
    if history.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "empirical preconditioning needs at least 10 history states, got {}",
            history.len()
        )));
    }
    let p = history[0].p();
    if history.iter().any(|t| t.p() != p) {
        return Err(Error::Dimension("history mixes parameter dimensions".into()));
    }
    let rows: Vec<Vec<f64>> = history.iter().map(|t| t.to_vec()).collect();
    Ok(Preconditioner {
        b: covariance_block(&rows, 0, p),
        eta: covariance_block(&rows, p, 3),
    })
}

fn covariance_block(rows: &[Vec<f64>], offset: usize, dim: usize) -> DMatrix<f64> {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in rows {
        for d in 0..dim {
            mean[d] += row[offset + d];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for row in rows {
        for a in 0..dim {
            let da = row[offset + a] - mean[a];
            for b in a..dim {
                cov[(a, b)] += da * (row[offset + b] - mean[b]);
            }
        }
    }
    let denom = n - 1.0;
    for a in 0..dim {
        for b in a..dim {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let mut ridge = 1e-8 * cov.trace() / dim as f64;
    if ridge <= 0.0 {
        ridge = 1e-8;
    }
    for d in 0..dim {
        cov[(d, d)] += ridge;
    }
    cov
}

/// D^{1/2} T D^{1/2} for a block transform T and step diagonal D.
fn scaled_transform(t: &DMatrix<f64>, step_diag: &[f64]) -> DMatrix<f64> {
    let s: Vec<f64> = step_diag.iter().map(|v| v.sqrt()).collect();
    DMatrix::from_fn(t.nrows(), t.ncols(), |i, j| s[i] * t[(i, j)] * s[j])
}

/// Symmetric square root of a PSD matrix via its eigendecomposition,
/// clamping tiny negative eigenvalues to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// One Langevin move from `theta` along an ascent gradient:
/// `theta' = theta + (1/2) E g + E^{1/2} xi` with `xi` standard normal.
/// Without a preconditioner E is the diagonal matrix of step sizes; with
/// one, E = D^{1/2} T D^{1/2} per block. When sieve bounds are given, the
/// noise (never the drift) is redrawn until the proposal lands inside the
/// box, up to a fixed attempt budget.
pub fn langevin_update<R: Rng>(
    theta: &Theta,
    grad: &[f64],
    steps: &StepSizes,
    precond: Option<&Preconditioner>,
    sieve: Option<&SieveBounds>,
    rng: &mut R,
) -> Result<Theta> {
    let p = theta.p();
    if grad.len() != p + 3 {
        return Err(Error::Dimension(format!(
            "gradient has {} entries, expected {}",
            grad.len(),
            p + 3
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    if !steps.is_valid() {
        return Err(Error::InvalidArgument(
            "step sizes must be finite and non-negative".into(),
        ));
    }
    let current = theta.to_vec();
    let diag = steps.diag(p);

    let mut drift = vec![0.0; p + 3];
    // Noise maps: either coordinatewise scales or dense block roots.
    let mut noise_scale = vec![0.0; p + 3];
    let mut block_roots: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    match precond {
        None => {
            for i in 0..p + 3 {
                drift[i] = 0.5 * diag[i] * grad[i];
                noise_scale[i] = diag[i].sqrt();
            }
        }
        Some(pc) => {
            if pc.b.nrows() != p || pc.b.ncols() != p || pc.eta.nrows() != 3 || pc.eta.ncols() != 3
            {
                return Err(Error::Dimension(
                    "preconditioner blocks do not match the parameter dimension".into(),
                ));
            }
            let e_b = scaled_transform(&pc.b, &diag[..p]);
            let e_eta = scaled_transform(&pc.eta, &diag[p..]);
            for i in 0..p {
                for j in 0..p {
                    drift[i] += 0.5 * e_b[(i, j)] * grad[j];
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    drift[p + i] += 0.5 * e_eta[(i, j)] * grad[p + j];
                }
            }
            block_roots = Some((sqrt_psd(&e_b), sqrt_psd(&e_eta)));
        }
    }
    if drift.iter().any(|d| !d.is_finite()) {
        return Err(Error::Numerical("non-finite Langevin drift".into()));
    }

    let attempts = if sieve.is_some() { SIEVE_ATTEMPTS } else { 1 };
    for _ in 0..attempts {
        let xi: Vec<f64> = (0..p + 3)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut proposal = current.clone();
        match &block_roots {
            None => {
                for i in 0..p + 3 {
                    proposal[i] += drift[i] + noise_scale[i] * xi[i];
                }
            }
            Some((root_b, root_eta)) => {
                for i in 0..p + 3 {
                    proposal[i] += drift[i];
                }
                for i in 0..p {
                    for j in 0..p {
                        proposal[i] += root_b[(i, j)] * xi[j];
                    }
                }
                for i in 0..3 {
                    for j in 0..3 {
                        proposal[p + i] += root_eta[(i, j)] * xi[p + j];
                    }
                }
            }
        }
        let next = Theta::from_vec(&proposal);
        match sieve {
            None => {
                if !next.is_finite() {
                    return Err(Error::Numerical("non-finite Langevin proposal".into()));
                }
                return Ok(next);
            }
            Some(bounds) => {
                if sieve_contains(&next, bounds)? {
                    return Ok(next);
                }
            }
        }
    }
    Err(Error::SieveExhausted {
        attempts: SIEVE_ATTEMPTS,
    })
}

/// One plain SGLD step: draw a subtable, require it fully observed, scale
/// the marginal gradient (N/n on the coefficient and residual blocks, R/r
/// and C/c on the two variance blocks), add the prior gradient, and move.
/// Uses the subset, prior, and sieve fields of the config.
pub fn sgld_step<R: Rng>(
    table: &ObservedTable,
    theta: &Theta,
    config: &SamplerConfig,
    steps: &StepSizes,
    precond: Option<&Preconditioner>,
    rng: &mut R,
) -> Result<Theta> {
    let batch = sample_subset(
        table,
        config.subset_rows,
        config.subset_cols,
        config.max_redraws,
        rng,
    )?;
    if !batch.is_complete() {
        return Err(Error::InvalidArgument(
            "plain SGLD drew a subtable with missing cells; it requires fully observed data"
                .into(),
        ));
    }
    let marginal = balanced_grads(&batch, theta)?;
    let p = theta.p();
    let scale_n = table.n() as f64 / batch.n() as f64;
    let scale_r = table.rows() as f64 / batch.r() as f64;
    let scale_c = table.cols() as f64 / batch.c() as f64;
    let prior_grad = log_prior_grad(theta, &config.prior);
    let mut grad = vec![0.0; p + 3];
    for l in 0..p {
        grad[l] = scale_n * marginal[l] + prior_grad[l];
    }
    grad[p] = scale_r * marginal[p] + prior_grad[p];
    grad[p + 1] = scale_c * marginal[p + 1] + prior_grad[p + 1];
    grad[p + 2] = scale_n * marginal[p + 2] + prior_grad[p + 2];
    langevin_update(theta, &grad, steps, precond, config.sieve.as_ref(), rng)
}

/// One pigeonhole SGLD step: draw a subtable (missing cells welcome),
/// refresh its latent effects with a short Gibbs chain, and move along the
/// averaged complete-data gradient.
pub fn psgld_step<R: Rng>(
    table: &ObservedTable,
    theta: &Theta,
    config: &SamplerConfig,
    steps: &StepSizes,
    precond: Option<&Preconditioner>,
    rng: &mut R,
) -> Result<Theta> {
    let batch = sample_subset(
        table,
        config.subset_rows,
        config.subset_cols,
        config.max_redraws,
        rng,
    )?;
    let chain = latent_gibbs_sweep(&batch, theta, config.latent_draws, rng)?;
    let grad = stochastic_gradient(
        &batch,
        theta,
        &chain,
        table.n(),
        table.rows(),
        table.cols(),
        &config.prior,
    )?;
    langevin_update(theta, &grad, steps, precond, config.sieve.as_ref(), rng)
}

fn draw_inverse_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| {
        Error::Numerical(format!(
            "invalid inverse-gamma parameters ({}, {}): {}",
            shape, rate, e
        ))
    })?;
    let sigma2 = 1.0 / gamma.sample(rng);
    if sigma2.is_finite() && sigma2 > 0.0 {
        Ok(sigma2)
    } else {
        Err(Error::Numerical(format!(
            "inverse-gamma draw degenerated at ({}, {})",
            shape, rate
        )))
    }
}

/// One full-data Gibbs sweep in scan order alpha, beta, b, sigma2_alpha,
/// sigma2_beta, sigma2_e. Latent effects persist across sweeps through
/// `latent`. Every draw is an exact conditional: Gaussians for the effects
/// and coefficients (via the cached Gram factor), inverse gammas for the
/// variances, with the residual variance conditioning on the freshly drawn
/// coefficients.
pub fn gibbs_full_sweep<R: Rng>(
    table: &ObservedTable,
    theta: &Theta,
    latent: &mut LatentState,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<Theta> {
    let (rows, cols, n, p) = (table.rows(), table.cols(), table.n(), table.p());
    if latent.alpha.len() != rows || latent.beta.len() != cols {
        return Err(Error::Dimension(
            "latent state does not match table dimensions".into(),
        ));
    }
    if theta.p() != p {
        return Err(Error::Dimension(format!(
            "theta has p = {}, table has p = {}",
            theta.p(),
            p
        )));
    }
    let sa = theta.sigma2_alpha();
    let sb = theta.sigma2_beta();
    let se = theta.sigma2_e();
    let resid0: Vec<f64> = (0..n)
        .map(|k| table.y(k) - dot(table.x(k), &theta.b))
        .collect();

    for i in 0..rows {
        let cells = table.row_cells(i);
        let mut num = 0.0;
        for &k in cells {
            let k = k as usize;
            num += resid0[k] - latent.beta[table.col_of(k)];
        }
        let denom = cells.len() as f64 * sa + se;
        let mean = num * sa / denom;
        let sd = (sa * se / denom).sqrt();
        latent.alpha[i] = mean + sd * rng.sample::<f64, _>(StandardNormal);
    }
    for j in 0..cols {
        let cells = table.col_cells(j);
        let mut num = 0.0;
        for &k in cells {
            let k = k as usize;
            num += resid0[k] - latent.alpha[table.row_of(k)];
        }
        let denom = cells.len() as f64 * sb + se;
        let mean = num * sb / denom;
        let sd = (sb * se / denom).sqrt();
        latent.beta[j] = mean + sd * rng.sample::<f64, _>(StandardNormal);
    }

    let (chol, _) = table.gram_cholesky()?;
    let mut rhs = DVector::<f64>::zeros(p);
    for k in 0..n {
        let resid = table.y(k) - latent.alpha[table.row_of(k)] - latent.beta[table.col_of(k)];
        let x = table.x(k);
        for l in 0..p {
            rhs[l] += x[l] * resid;
        }
    }
    let mean = chol.solve(&rhs);
    let xi = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let perturb = chol
        .l()
        .transpose()
        .solve_upper_triangular(&xi)
        .ok_or_else(|| Error::Numerical("triangular solve failed in the coefficient draw".into()))?;
    let se_sqrt = se.sqrt();
    let new_b: Vec<f64> = (0..p).map(|l| mean[l] + se_sqrt * perturb[l]).collect();

    let ssq_alpha: f64 = latent.alpha.iter().map(|a| a * a).sum();
    let new_sa = draw_inverse_gamma(
        prior.a1 + rows as f64 / 2.0,
        prior.b1 + ssq_alpha / 2.0,
        rng,
    )?;
    let ssq_beta: f64 = latent.beta.iter().map(|b| b * b).sum();
    let new_sb = draw_inverse_gamma(
        prior.a2 + cols as f64 / 2.0,
        prior.b2 + ssq_beta / 2.0,
        rng,
    )?;
    let mut rss = 0.0;
    for k in 0..n {
        let resid = table.y(k)
            - dot(table.x(k), &new_b)
            - latent.alpha[table.row_of(k)]
            - latent.beta[table.col_of(k)];
        rss += resid * resid;
    }
    let new_se = draw_inverse_gamma(prior.a3 + n as f64 / 2.0, prior.b3 + rss / 2.0, rng)?;

    Ok(Theta::new(new_b, new_sa.ln(), new_sb.ln(), new_se.ln()))
}

/// Runs a sampler on a pruned table and returns the retained chain.
///
/// Iteration `tt` (1-based) is retained when `tt > burn_in` and
/// `(tt - burn_in) % thin == 0`, so the chain holds
/// `floor((total - burn_in) / thin)` samples. Identical configs produce
/// identical samples; only the elapsed column varies between runs. Errors
/// are tagged with the 1-based iteration at which they occurred.
pub fn run_chain(table: &ObservedTable, config: &SamplerConfig) -> Result<Chain> {
    config.validate()?;
    if !table.is_pruned() {
        return Err(Error::InvalidArgument(
            "table has empty rows or columns; prune before sampling".into(),
        ));
    }
    if matches!(config.kind, SamplerKind::Sgld | SamplerKind::Psgld)
        && (config.subset_rows > table.rows() || config.subset_cols > table.cols())
    {
        return Err(Error::Dimension(format!(
            "subset {} x {} exceeds table {} x {}",
            config.subset_rows,
            config.subset_cols,
            table.rows(),
            table.cols()
        )));
    }
    let p = table.p();
    let mut theta = match &config.init {
        Some(init) => {
            if init.p() != p {
                return Err(Error::Dimension(format!(
                    "initial theta has p = {}, table has p = {}",
                    init.p(),
                    p
                )));
            }
            init.clone()
        }
        None => Theta::ones(p),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut latent = LatentState::zeros(table.rows(), table.cols());
    let mut precond: Option<Preconditioner> = None;
    let mut history: VecDeque<Theta> = VecDeque::new();
    let track_history = config.precondition == PreconditionMode::EmpiricalCovariance
        && matches!(config.kind, SamplerKind::Sgld | SamplerKind::Psgld);
    let boundary = config.schedule.boundary;

    let capacity = (config.total_iterations.saturating_sub(config.burn_in)) / config.thin;
    let mut chain = Chain::with_capacity(p, capacity);
    let start = clock::Clock::start();
    for t in 0..config.total_iterations {
        if track_history && precond.is_none() && boundary > 0 && t == boundary {
            let states: Vec<Theta> = history.iter().cloned().collect();
            precond = Some(precondition(&states).map_err(|e| e.at_iteration(t + 1))?);
        }
        let steps = config.schedule.at(t);
        theta = match config.kind {
            SamplerKind::Sgld => sgld_step(table, &theta, config, steps, precond.as_ref(), &mut rng),
            SamplerKind::Psgld => {
                psgld_step(table, &theta, config, steps, precond.as_ref(), &mut rng)
            }
            SamplerKind::Gibbs => gibbs_full_sweep(table, &theta, &mut latent, &config.prior, &mut rng),
        }
        .map_err(|e| e.at_iteration(t + 1))?;
        if track_history && precond.is_none() {
            if history.len() == config.precondition_window {
                history.pop_front();
            }
            history.push_back(theta.clone());
        }
        let tt = t + 1;
        if tt > config.burn_in && (tt - config.burn_in) % config.thin == 0 {
            chain.push(tt as u64, start.seconds(), theta.clone());
        }
    }
    Ok(chain)
}
