//! Domain types and the complete-data stochastic gradient.
//!
//! The model is a two-factor crossed mixed effects regression on a sparse
//! R x C table:
//!
//! ```text
//! Y_ij = x_ij' b + alpha_i + beta_j + e_ij
//! alpha_i ~ N(0, sigma2_alpha),  beta_j ~ N(0, sigma2_beta),  e_ij ~ N(0, sigma2_e)
//! ```
//!
//! Variance components are carried on the log scale, eta = log sigma2, so
//! every [`Theta`] is unconstrained and sigma2 = exp(eta) is positive by
//! construction. The prior is flat on `b` and inverse-gamma (shape, rate) on
//! each sigma2, which on the eta scale has density proportional to
//! `exp(-a * eta - b * exp(-eta))`.
//!
//! [`stochastic_gradient`] is the complete-data ascent direction used by the
//! pigeonhole SGLD update: likelihood blocks for `b` and `eta_e` scaled by
//! N/n, latent-prior blocks for `eta_alpha` and `eta_beta` scaled by R/r and
//! C/c, averaged over a short chain of latent draws, plus the prior gradient.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Model parameters on the sampling scale: fixed effects `b` and log
/// variance components `eta = log sigma2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta {
    pub b: Vec<f64>,
    pub eta_alpha: f64,
    pub eta_beta: f64,
    pub eta_e: f64,
}

impl Theta {
    pub fn new(b: Vec<f64>, eta_alpha: f64, eta_beta: f64, eta_e: f64) -> Self {
        Theta {
            b,
            eta_alpha,
            eta_beta,
            eta_e,
        }
    }

    /// The conventional starting point: every coefficient 1, every variance 1.
    pub fn ones(p: usize) -> Self {
        Theta::new(vec![1.0; p], 0.0, 0.0, 0.0)
    }

    /// Number of fixed-effect coefficients.
    pub fn p(&self) -> usize {
        self.b.len()
    }

    pub fn sigma2_alpha(&self) -> f64 {
        self.eta_alpha.exp()
    }

    pub fn sigma2_beta(&self) -> f64 {
        self.eta_beta.exp()
    }

    pub fn sigma2_e(&self) -> f64 {
        self.eta_e.exp()
    }

    /// Variance components on the sigma^2 scale.
    pub fn variances(&self) -> VarianceScale {
        VarianceScale {
            alpha: self.sigma2_alpha(),
            beta: self.sigma2_beta(),
            e: self.sigma2_e(),
        }
    }

    /// Packs `(b_1..b_p, eta_alpha, eta_beta, eta_e)` into one vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.b.clone();
        v.push(self.eta_alpha);
        v.push(self.eta_beta);
        v.push(self.eta_e);
        v
    }

    /// Inverse of [`Theta::to_vec`]. Panics if `v.len() < 4`.
    pub fn from_vec(v: &[f64]) -> Self {
        assert!(v.len() >= 4, "parameter vector needs p >= 1 plus three etas");
        let p = v.len() - 3;
        Theta::new(v[..p].to_vec(), v[p], v[p + 1], v[p + 2])
    }

    pub fn is_finite(&self) -> bool {
        self.b.iter().all(|x| x.is_finite())
            && self.eta_alpha.is_finite()
            && self.eta_beta.is_finite()
            && self.eta_e.is_finite()
    }
}

/// Variance components on the sigma^2 scale. Used by the direct-variance
/// evaluation paths so limit cases (zero variances) are expressible without
/// an eta round-trip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceScale {
    pub alpha: f64,
    pub beta: f64,
    pub e: f64,
}

/// Flat prior on `b` plus three inverse-gamma (shape, rate) priors on
/// (sigma2_alpha, sigma2_beta, sigma2_e).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorSpec {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub a3: f64,
    pub b3: f64,
}

impl PriorSpec {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64, a3: f64, b3: f64) -> Self {
        PriorSpec {
            a1,
            b1,
            a2,
            b2,
            a3,
            b3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.a1, self.b1, self.a2, self.b2, self.a3, self.b3];
        if vals.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "inverse-gamma shapes and rates must be positive and finite".into(),
            ))
        }
    }
}

impl Default for PriorSpec {
    /// IG(1, 1) on the row and column variances, IG(0.01, 0.01) on the
    /// residual variance.
    fn default() -> Self {
        PriorSpec::new(1.0, 1.0, 1.0, 1.0, 0.01, 0.01)
    }
}

/// One observed cell of the table.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub y: f64,
    pub x: Vec<f64>,
}

/// Sparse R x C response table with per-cell covariates.
///
/// Cells are stored sorted by (row, col); at most one cell may occupy a
/// given (row, col) pair. Construction tolerates empty rows and columns so
/// that pruning can be expressed as a table-to-table operation; the samplers
/// require a pruned table (see [`ObservedTable::is_pruned`]).
#[derive(Clone, Debug)]
pub struct ObservedTable {
    n_rows: usize,
    n_cols: usize,
    p: usize,
    ys: Vec<f64>,
    xs: Vec<f64>,
    rows_of: Vec<u32>,
    cols_of: Vec<u32>,
    row_cells: Vec<Vec<u32>>,
    col_cells: Vec<Vec<u32>>,
    row_ids: Vec<u64>,
    col_ids: Vec<u64>,
    gram: OnceLock<Option<(Cholesky<f64, Dyn>, DMatrix<f64>)>>,
}

impl ObservedTable {
    /// Builds a table from raw cells. `rows`/`cols` fix the index ranges;
    /// `p` is the covariate dimension. Row and column identities default to
    /// their indices.
    pub fn from_cells(
        rows: usize,
        cols: usize,
        p: usize,
        cells: Vec<Cell>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("table needs rows >= 1 and cols >= 1".into()));
        }
        if p == 0 {
            return Err(Error::Dimension("covariate dimension p must be >= 1".into()));
        }
        let mut cells = cells;
        cells.sort_by_key(|cell| (cell.row, cell.col));
        let n = cells.len();
        let mut ys = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n * p);
        let mut rows_of = Vec::with_capacity(n);
        let mut cols_of = Vec::with_capacity(n);
        let mut row_cells = vec![Vec::new(); rows];
        let mut col_cells = vec![Vec::new(); cols];
        for (k, cell) in cells.iter().enumerate() {
            if cell.row >= rows || cell.col >= cols {
                return Err(Error::Dimension(format!(
                    "cell ({}, {}) outside a {} x {} table",
                    cell.row, cell.col, rows, cols
                )));
            }
            if cell.x.len() != p {
                return Err(Error::Dimension(format!(
                    "cell ({}, {}) has {} covariates, expected {}",
                    cell.row,
                    cell.col,
                    cell.x.len(),
                    p
                )));
            }
            if !cell.y.is_finite() || cell.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "cell ({}, {}) holds a non-finite value",
                    cell.row, cell.col
                )));
            }
            if k > 0 {
                let prev = &cells[k - 1];
                if prev.row == cell.row && prev.col == cell.col {
                    return Err(Error::DuplicateCell {
                        row: cell.row,
                        col: cell.col,
                    });
                }
            }
            ys.push(cell.y);
            xs.extend_from_slice(&cell.x);
            rows_of.push(cell.row as u32);
            cols_of.push(cell.col as u32);
            row_cells[cell.row].push(k as u32);
            col_cells[cell.col].push(k as u32);
        }
        Ok(ObservedTable {
            n_rows: rows,
            n_cols: cols,
            p,
            ys,
            xs,
            rows_of,
            cols_of,
            row_cells,
            col_cells,
            row_ids: (0..rows as u64).collect(),
            col_ids: (0..cols as u64).collect(),
            gram: OnceLock::new(),
        })
    }

    /// Attaches external row/column identities (for example original user
    /// and item ids after reindexing).
    pub fn with_ids(mut self, row_ids: Vec<u64>, col_ids: Vec<u64>) -> Result<Self> {
        if row_ids.len() != self.n_rows || col_ids.len() != self.n_cols {
            return Err(Error::Dimension(
                "id vectors must match table dimensions".into(),
            ));
        }
        self.row_ids = row_ids;
        self.col_ids = col_ids;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.n_rows
    }

    pub fn cols(&self) -> usize {
        self.n_cols
    }

    /// Total number of observed cells N.
    pub fn n(&self) -> usize {
        self.ys.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self, cell: usize) -> f64 {
        self.ys[cell]
    }

    pub fn x(&self, cell: usize) -> &[f64] {
        &self.xs[cell * self.p..(cell + 1) * self.p]
    }

    pub fn row_of(&self, cell: usize) -> usize {
        self.rows_of[cell] as usize
    }

    pub fn col_of(&self, cell: usize) -> usize {
        self.cols_of[cell] as usize
    }

    /// Cell indices observed in row `i`.
    pub fn row_cells(&self, i: usize) -> &[u32] {
        &self.row_cells[i]
    }

    /// Cell indices observed in column `j`.
    pub fn col_cells(&self, j: usize) -> &[u32] {
        &self.col_cells[j]
    }

    /// N_i., the number of observations in row `i`.
    pub fn row_count(&self, i: usize) -> usize {
        self.row_cells[i].len()
    }

    /// N_.j, the number of observations in column `j`.
    pub fn col_count(&self, j: usize) -> usize {
        self.col_cells[j].len()
    }

    /// Original identity of row `i` (defaults to the index).
    pub fn row_id(&self, i: usize) -> u64 {
        self.row_ids[i]
    }

    /// Original identity of column `j`.
    pub fn col_id(&self, j: usize) -> u64 {
        self.col_ids[j]
    }

    /// True when every row and every column holds at least one observation.
    pub fn is_pruned(&self) -> bool {
        self.row_cells.iter().all(|c| !c.is_empty())
            && self.col_cells.iter().all(|c| !c.is_empty())
    }

    /// True when every cell of the R x C grid is observed.
    pub fn fully_observed(&self) -> bool {
        self.n() == self.n_rows * self.n_cols
    }

    /// Extracts the sub-table on the given row and column indices. Ids must
    /// be distinct and in range; the batch may contain rows or columns with
    /// no observations (callers decide whether that is acceptable).
    pub fn subset(&self, row_ids: &[usize], col_ids: &[usize]) -> Result<SubsetBatch> {
        if row_ids.is_empty() || col_ids.is_empty() {
            return Err(Error::InvalidArgument("subset needs rows and columns".into()));
        }
        let r = row_ids.len();
        let c = col_ids.len();
        let mut col_local = vec![u32::MAX; self.n_cols];
        for (lj, &j) in col_ids.iter().enumerate() {
            if j >= self.n_cols {
                return Err(Error::Dimension(format!("column {} out of range", j)));
            }
            if col_local[j] != u32::MAX {
                return Err(Error::InvalidArgument(format!("column {} selected twice", j)));
            }
            col_local[j] = lj as u32;
        }
        {
            let mut seen = vec![false; self.n_rows];
            for &i in row_ids {
                if i >= self.n_rows {
                    return Err(Error::Dimension(format!("row {} out of range", i)));
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(format!("row {} selected twice", i)));
                }
                seen[i] = true;
            }
        }
        let mut ys = Vec::new();
        let mut xs = Vec::new();
        let mut cell_rows = Vec::new();
        let mut cell_cols = Vec::new();
        let mut row_offsets = Vec::with_capacity(r + 1);
        row_offsets.push(0u32);
        for (li, &i) in row_ids.iter().enumerate() {
            for &cell in &self.row_cells[i] {
                let j = self.cols_of[cell as usize] as usize;
                let lj = col_local[j];
                if lj != u32::MAX {
                    ys.push(self.ys[cell as usize]);
                    xs.extend_from_slice(self.x(cell as usize));
                    cell_rows.push(li as u32);
                    cell_cols.push(lj);
                }
            }
            row_offsets.push(ys.len() as u32);
        }
        let mut col_cells = vec![Vec::new(); c];
        for (k, &lj) in cell_cols.iter().enumerate() {
            col_cells[lj as usize].push(k as u32);
        }
        Ok(SubsetBatch {
            row_ids: row_ids.to_vec(),
            col_ids: col_ids.to_vec(),
            p: self.p,
            ys,
            xs,
            cell_rows,
            cell_cols,
            row_offsets,
            col_cells,
        })
    }

    /// Cholesky factor of the Gram matrix sum_cells x x', cached after the
    /// first call. Fails if the covariates are collinear.
    pub(crate) fn gram_cholesky(&self) -> Result<&(Cholesky<f64, Dyn>, DMatrix<f64>)> {
        let entry = self.gram.get_or_init(|| {
            let p = self.p;
            let mut g = DMatrix::<f64>::zeros(p, p);
            for k in 0..self.n() {
                let x = self.x(k);
                for a in 0..p {
                    for b in 0..p {
                        g[(a, b)] += x[a] * x[b];
                    }
                }
            }
            Cholesky::new(g.clone()).map(|ch| (ch, g))
        });
        entry.as_ref().ok_or_else(|| {
            Error::Numerical("Gram matrix sum x x' is singular (collinear covariates)".into())
        })
    }
}

/// The r x c intersection of selected rows and columns, with cells restricted
/// to the selection. Cell indexing is local: cell_row/cell_col run over
/// 0..r and 0..c.
#[derive(Clone, Debug)]
pub struct SubsetBatch {
    row_ids: Vec<usize>,
    col_ids: Vec<usize>,
    p: usize,
    ys: Vec<f64>,
    xs: Vec<f64>,
    cell_rows: Vec<u32>,
    cell_cols: Vec<u32>,
    row_offsets: Vec<u32>,
    col_cells: Vec<Vec<u32>>,
}

impl SubsetBatch {
    /// Selected table row indices, in batch order.
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[usize] {
        &self.col_ids
    }

    pub fn r(&self) -> usize {
        self.row_ids.len()
    }

    pub fn c(&self) -> usize {
        self.col_ids.len()
    }

    /// Number of observed cells n in the batch.
    pub fn n(&self) -> usize {
        self.ys.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self, cell: usize) -> f64 {
        self.ys[cell]
    }

    pub fn x(&self, cell: usize) -> &[f64] {
        &self.xs[cell * self.p..(cell + 1) * self.p]
    }

    /// Local row index (0..r) of a cell.
    pub fn cell_row(&self, cell: usize) -> usize {
        self.cell_rows[cell] as usize
    }

    /// Local column index (0..c) of a cell.
    pub fn cell_col(&self, cell: usize) -> usize {
        self.cell_cols[cell] as usize
    }

    /// Cells of local row `i`, as a contiguous index range.
    pub fn row_cell_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_offsets[i] as usize..self.row_offsets[i + 1] as usize
    }

    /// Cell indices of local column `j`.
    pub fn col_cell_ids(&self, j: usize) -> &[u32] {
        &self.col_cells[j]
    }

    /// n_i., observations in local row `i`.
    pub fn row_count(&self, i: usize) -> usize {
        (self.row_offsets[i + 1] - self.row_offsets[i]) as usize
    }

    /// n_.j, observations in local column `j`.
    pub fn col_count(&self, j: usize) -> usize {
        self.col_cells[j].len()
    }

    /// Local indices of rows with no observations in the batch.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.r()).filter(|&i| self.row_count(i) == 0).collect()
    }

    pub fn empty_cols(&self) -> Vec<usize> {
        (0..self.c()).filter(|&j| self.col_count(j) == 0).collect()
    }

    /// True when every selected row and column has at least one observation.
    pub fn is_valid(&self) -> bool {
        self.empty_rows().is_empty() && self.empty_cols().is_empty()
    }

    /// True when all r*c cells are observed.
    pub fn is_complete(&self) -> bool {
        self.n() == self.r() * self.c()
    }

    /// Row-stacked response vector and design matrix (cell (i, j) at index
    /// i*c + j). Requires a complete batch.
    pub fn dense_design(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !self.is_complete() {
            return Err(Error::InvalidArgument(
                "dense design requires a fully observed batch".into(),
            ));
        }
        let (r, c, p) = (self.r(), self.c(), self.p);
        let mut y = DVector::zeros(r * c);
        let mut x = DMatrix::zeros(r * c, p);
        for k in 0..self.n() {
            let idx = self.cell_row(k) * c + self.cell_col(k);
            y[idx] = self.y(k);
            for l in 0..p {
                x[(idx, l)] = self.x(k)[l];
            }
        }
        Ok((y, x))
    }
}

/// Row and column effects for one batch, alpha of length r and beta of
/// length c.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LatentState {
    pub fn zeros(r: usize, c: usize) -> Self {
        LatentState {
            alpha: vec![0.0; r],
            beta: vec![0.0; c],
        }
    }

    pub fn matches(&self, batch: &SubsetBatch) -> bool {
        self.alpha.len() == batch.r() && self.beta.len() == batch.c()
    }
}

/// Bounds of the sieve box Theta_N:
/// `max|b| <= b0 log N`, `|eta_alpha| <= a1 log log N`,
/// `|eta_beta| <= b1 log log N`, `|eta_e| <= e1 log log N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SieveBounds {
    pub b0: f64,
    pub a1: f64,
    pub b1: f64,
    pub e1: f64,
    /// Data size N driving the box growth.
    pub n: usize,
}

/// Which factor a latent effect belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Row,
    Col,
}

/// Gradient of the log prior with respect to (b, eta_alpha, eta_beta,
/// eta_e). The flat prior on `b` contributes exact zeros; each eta entry is
/// `-a + b * exp(-eta)`.
pub fn log_prior_grad(theta: &Theta, prior: &PriorSpec) -> Vec<f64> {
    let p = theta.p();
    let mut g = vec![0.0; p + 3];
    g[p] = -prior.a1 + prior.b1 * (-theta.eta_alpha).exp();
    g[p + 1] = -prior.a2 + prior.b2 * (-theta.eta_beta).exp();
    g[p + 2] = -prior.a3 + prior.b3 * (-theta.eta_e).exp();
    g
}

/// Mean and variance of the Gaussian full conditional of one latent effect
/// given the batch, the parameters, and the other factor's current values.
///
/// For a row effect:
/// `variance = exp(eta_alpha + eta_e) / (n_i. * exp(eta_alpha) + exp(eta_e))`
/// and `mean = sum_j (y - x'b - beta_j) * exp(eta_alpha) / (same denominator)`,
/// the sum running over the row's observed cells. Column effects are
/// symmetric with alpha subtracted and (eta_beta, n_.j).
pub fn conditional_effect_params(
    axis: Axis,
    index: usize,
    batch: &SubsetBatch,
    theta: &Theta,
    latent: &LatentState,
) -> Result<(f64, f64)> {
    if theta.p() != batch.p() {
        return Err(Error::Dimension(format!(
            "theta has p = {}, batch has p = {}",
            theta.p(),
            batch.p()
        )));
    }
    if !latent.matches(batch) {
        return Err(Error::Dimension(
            "latent state does not match batch dimensions".into(),
        ));
    }
    let se = theta.sigma2_e();
    let (limit, label) = match axis {
        Axis::Row => (batch.r(), "row"),
        Axis::Col => (batch.c(), "col"),
    };
    if index >= limit {
        return Err(Error::InvalidArgument(format!(
            "{} index {} out of range (batch has {})",
            label, index, limit
        )));
    }
    let (own_var, count) = match axis {
        Axis::Row => (theta.sigma2_alpha(), batch.row_count(index)),
        Axis::Col => (theta.sigma2_beta(), batch.col_count(index)),
    };
    if count == 0 {
        return Err(Error::InvalidArgument(format!(
            "corrupt batch: {} {} has no observations",
            label, index
        )));
    }
    let resid0: Vec<f64> = (0..batch.n())
        .map(|k| batch.y(k) - dot(batch.x(k), &theta.b))
        .collect();
    let partner = match axis {
        Axis::Row => &latent.beta,
        Axis::Col => &latent.alpha,
    };
    Ok(conditional_params_prepared(
        axis, index, batch, own_var, se, partner, &resid0,
    ))
}

/// Same computation as [`conditional_effect_params`] with the fixed-effect
/// residuals `y - x'b` already formed, so sweeps can reuse them across every
/// effect. Callers guarantee the index is in range with a non-zero count.
pub(crate) fn conditional_params_prepared(
    axis: Axis,
    index: usize,
    batch: &SubsetBatch,
    own_var: f64,
    se: f64,
    partner: &[f64],
    resid0: &[f64],
) -> (f64, f64) {
    let mut num = 0.0;
    let count = match axis {
        Axis::Row => {
            let range = batch.row_cell_range(index);
            let count = range.len();
            for k in range {
                num += resid0[k] - partner[batch.cell_col(k)];
            }
            count
        }
        Axis::Col => {
            let ids = batch.col_cell_ids(index);
            for &k in ids {
                let k = k as usize;
                num += resid0[k] - partner[batch.cell_row(k)];
            }
            ids.len()
        }
    };
    let denom = count as f64 * own_var + se;
    (num * own_var / denom, own_var * se / denom)
}

/// Complete-data stochastic ascent direction averaged over a latent chain.
///
/// Returns a vector of length p + 3:
/// the `b` and `eta_e` blocks are complete-data likelihood gradients scaled
/// by N/n, the `eta_alpha` and `eta_beta` blocks are latent Gaussian prior
/// gradients scaled by R/r and C/c, all averaged over the `m` latent draws,
/// plus [`log_prior_grad`]. The blocks per draw are
///
/// ```text
/// grad_b         = sum_cells (y - x'b - alpha - beta) x exp(-eta_e)
/// grad_eta_alpha = sum_i (-1 + alpha_i^2 exp(-eta_alpha)) / 2
/// grad_eta_beta  = sum_j (-1 + beta_j^2  exp(-eta_beta)) / 2
/// grad_eta_e     = sum_cells (-1 + (y - x'b - alpha - beta)^2 exp(-eta_e)) / 2
/// ```
pub fn stochastic_gradient(
    batch: &SubsetBatch,
    theta: &Theta,
    latent_chain: &[LatentState],
    n_total: usize,
    r_total: usize,
    c_total: usize,
    prior: &PriorSpec,
) -> Result<Vec<f64>> {
    let m = latent_chain.len();
    if m == 0 {
        return Err(Error::InvalidArgument("latent chain must be non-empty".into()));
    }
    if batch.n() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if theta.p() != batch.p() {
        return Err(Error::Dimension(format!(
            "theta has p = {}, batch has p = {}",
            theta.p(),
            batch.p()
        )));
    }
    for state in latent_chain {
        if !state.matches(batch) {
            return Err(Error::Dimension(
                "latent state does not match batch dimensions".into(),
            ));
        }
    }
    let p = theta.p();
    let (r, c, n) = (batch.r() as f64, batch.c() as f64, batch.n() as f64);
    let scale_n = n_total as f64 / n;
    let scale_r = r_total as f64 / r;
    let scale_c = c_total as f64 / c;
    let inv_se = (-theta.eta_e).exp();
    let inv_sa = (-theta.eta_alpha).exp();
    let inv_sb = (-theta.eta_beta).exp();

    // x'b is identical across latent draws; compute it once per cell.
    let xb: Vec<f64> = (0..batch.n())
        .map(|k| dot(batch.x(k), &theta.b))
        .collect();

    let mut acc = vec![0.0; p + 3];
    for state in latent_chain {
        let mut gb = vec![0.0; p];
        let mut rss = 0.0;
        for k in 0..batch.n() {
            let resid =
                batch.y(k) - xb[k] - state.alpha[batch.cell_row(k)] - state.beta[batch.cell_col(k)];
            let x = batch.x(k);
            for l in 0..p {
                gb[l] += resid * x[l];
            }
            rss += resid * resid;
        }
        for l in 0..p {
            acc[l] += scale_n * gb[l] * inv_se;
        }
        let ga: f64 = state
            .alpha
            .iter()
            .map(|a| (-1.0 + a * a * inv_sa) / 2.0)
            .sum();
        let gbe: f64 = state
            .beta
            .iter()
            .map(|b| (-1.0 + b * b * inv_sb) / 2.0)
            .sum();
        acc[p] += scale_r * ga;
        acc[p + 1] += scale_c * gbe;
        acc[p + 2] += scale_n * (-n + rss * inv_se) / 2.0;
    }
    let inv_m = 1.0 / m as f64;
    let prior_grad = log_prior_grad(theta, prior);
    for (i, g) in acc.iter_mut().enumerate() {
        *g = *g * inv_m + prior_grad[i];
    }
    Ok(acc)
}

/// Membership test for the sieve box Theta_N. Boundaries are inclusive.
/// Requires `bounds.n >= 3` so that `log log N` is positive.
pub fn sieve_contains(theta: &Theta, bounds: &SieveBounds) -> Result<bool> {
    if bounds.n < 3 {
        return Err(Error::InvalidArgument(
            "sieve needs N >= 3 so that log log N > 0".into(),
        ));
    }
    if !(bounds.b0 > 0.0 && bounds.a1 > 0.0 && bounds.b1 > 0.0 && bounds.e1 > 0.0) {
        return Err(Error::InvalidArgument("sieve bounds must be positive".into()));
    }
    let log_n = (bounds.n as f64).ln();
    let loglog_n = log_n.ln();
    let b_max = theta.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(b_max <= bounds.b0 * log_n
        && theta.eta_alpha.abs() <= bounds.a1 * loglog_n
        && theta.eta_beta.abs() <= bounds.b1 * loglog_n
        && theta.eta_e.abs() <= bounds.e1 * loglog_n)
}

pub(crate) fn dot(x: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), b.len());
    x.iter().zip(b).map(|(xi, bi)| xi * bi).sum()
}
