//! Exact marginal likelihood for fully observed r x c subtables.
//!
//! With the latent effects integrated out, the rc responses of a complete
//! subtable are jointly Gaussian with a highly structured covariance: cells
//! sharing a row covary by sigma2_alpha, cells sharing a column by
//! sigma2_beta. Its inverse has the same two-level block pattern and is
//! described by four scalars (x, y, z, w), so the log likelihood and its
//! gradient never need an rc x rc factorization. All quadratic forms reduce
//! to four O(n) statistics of the residuals: the total sum of squares D, the
//! squared row sums A, the squared column sums B, and the grand total tau.
//!
//! Cells are indexed row-major: cell (i, j) sits at position i*c + j.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{dot, SubsetBatch, Theta, VarianceScale};

/// Smallest residual variance the covariance algebra accepts.
pub const MIN_RESIDUAL_VARIANCE: f64 = 1e-300;

/// The four scalars describing the inverse covariance of a complete r x c
/// subtable. Entry ((i, j), (i', j')) of the inverse is `x` on the diagonal,
/// `y` for same row, `w` for same column, and `z` otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecisionScalars {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl PrecisionScalars {
    /// Expands the scalars into the dense rc x rc inverse covariance.
    pub fn dense(&self, r: usize, c: usize) -> DMatrix<f64> {
        let n = r * c;
        DMatrix::from_fn(n, n, |a, b| {
            let (i, j) = (a / c, a % c);
            let (i2, j2) = (b / c, b % c);
            match (i == i2, j == j2) {
                (true, true) => self.x,
                (true, false) => self.y,
                (false, true) => self.w,
                (false, false) => self.z,
            }
        })
    }
}

fn check_variances(v: &VarianceScale) -> Result<()> {
    if !(v.alpha.is_finite() && v.alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma2_alpha must be finite and non-negative, got {}",
            v.alpha
        )));
    }
    if !(v.beta.is_finite() && v.beta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma2_beta must be finite and non-negative, got {}",
            v.beta
        )));
    }
    if !v.e.is_finite() || v.e < MIN_RESIDUAL_VARIANCE {
        return Err(Error::DegenerateVariance {
            name: "sigma2_e",
            value: v.e,
        });
    }
    Ok(())
}

fn check_shape(r: usize, c: usize) -> Result<()> {
    if r < 2 || c < 2 {
        return Err(Error::Dimension(format!(
            "balanced subtable needs r >= 2 and c >= 2, got {} x {}",
            r, c
        )));
    }
    Ok(())
}

/// Inverse covariance scalars at the given variance components.
///
/// Closed form, writing se, sa, sb for the three variances:
///
/// ```text
/// z = sa sb (2 se + c sa + r sb) / [se (se + r sb)(se + c sa)(se + c sa + r sb)]
/// y = z - sa / [se (se + c sa)]
/// x = y + (se + (r-1) sb) / [se (se + r sb)]
/// w = z - sb / [se (se + r sb)]
/// ```
pub fn precision_scalars_from(v: &VarianceScale, r: usize, c: usize) -> Result<PrecisionScalars> {
    check_shape(r, c)?;
    check_variances(v)?;
    let (sa, sb, se) = (v.alpha, v.beta, v.e);
    let (rf, cf) = (r as f64, c as f64);
    let d_row = se + cf * sa;
    let d_col = se + rf * sb;
    let d_all = se + cf * sa + rf * sb;
    let z = sa * sb * (2.0 * se + cf * sa + rf * sb) / (se * d_col * d_row * d_all);
    let y = z - sa / (se * d_row);
    let x = y + (se + (rf - 1.0) * sb) / (se * d_col);
    let w = z - sb / (se * d_col);
    let out = PrecisionScalars { x, y, z, w };
    if [x, y, z, w].iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Numerical(format!(
            "precision scalars overflowed at variances ({}, {}, {})",
            sa, sb, se
        )))
    }
}

pub fn precision_scalars(theta: &Theta, r: usize, c: usize) -> Result<PrecisionScalars> {
    precision_scalars_from(&theta.variances(), r, c)
}

/// Dense covariance of a complete r x c subtable: diagonal blocks have
/// sa + sb + se on the diagonal and sa off it, off-diagonal blocks are sb
/// times the identity.
pub fn balanced_covariance_from(v: &VarianceScale, r: usize, c: usize) -> Result<DMatrix<f64>> {
    check_shape(r, c)?;
    check_variances(v)?;
    let n = r * c;
    Ok(DMatrix::from_fn(n, n, |a, b| {
        let (i, j) = (a / c, a % c);
        let (i2, j2) = (b / c, b % c);
        match (i == i2, j == j2) {
            (true, true) => v.alpha + v.beta + v.e,
            (true, false) => v.alpha,
            (false, true) => v.beta,
            (false, false) => 0.0,
        }
    }))
}

pub fn balanced_covariance(theta: &Theta, r: usize, c: usize) -> Result<DMatrix<f64>> {
    balanced_covariance_from(&theta.variances(), r, c)
}

/// Log determinant of the subtable covariance via its exact spectrum.
fn log_det(v: &VarianceScale, r: usize, c: usize) -> f64 {
    let (rf, cf) = (r as f64, c as f64);
    let se = v.e;
    (rf - 1.0) * (cf - 1.0) * se.ln()
        + (rf - 1.0) * (se + cf * v.alpha).ln()
        + (cf - 1.0) * (se + rf * v.beta).ln()
        + (se + cf * v.alpha + rf * v.beta).ln()
}

struct ResidualStats {
    row_sums: Vec<f64>,
    col_sums: Vec<f64>,
    /// Grand total tau.
    total: f64,
    /// Sum of squared residuals D.
    d: f64,
    /// Sum of squared row sums A.
    a: f64,
    /// Sum of squared column sums B.
    b: f64,
}

fn residual_stats(batch: &SubsetBatch, b: &[f64]) -> ResidualStats {
    let (r, c) = (batch.r(), batch.c());
    let mut row_sums = vec![0.0; r];
    let mut col_sums = vec![0.0; c];
    let mut d = 0.0;
    for k in 0..batch.n() {
        let resid = batch.y(k) - dot(batch.x(k), b);
        row_sums[batch.cell_row(k)] += resid;
        col_sums[batch.cell_col(k)] += resid;
        d += resid * resid;
    }
    let total = row_sums.iter().sum();
    let a = row_sums.iter().map(|s| s * s).sum();
    let bb = col_sums.iter().map(|s| s * s).sum();
    ResidualStats {
        row_sums,
        col_sums,
        total,
        d,
        a,
        b: bb,
    }
}

fn check_batch(batch: &SubsetBatch, p: usize) -> Result<()> {
    check_shape(batch.r(), batch.c())?;
    if !batch.is_complete() {
        return Err(Error::InvalidArgument(
            "balanced likelihood requires a fully observed batch".into(),
        ));
    }
    if p != batch.p() {
        return Err(Error::Dimension(format!(
            "coefficient vector has p = {}, batch has p = {}",
            p,
            batch.p()
        )));
    }
    Ok(())
}

/// Marginal log likelihood of a complete batch at coefficients `b` and the
/// given variance components, latent effects integrated out.
pub fn balanced_loglik_from(batch: &SubsetBatch, b: &[f64], v: &VarianceScale) -> Result<f64> {
    check_batch(batch, b.len())?;
    let scalars = precision_scalars_from(v, batch.r(), batch.c())?;
    let stats = residual_stats(batch, b);
    let quad = scalars.x * stats.d
        + scalars.y * (stats.a - stats.d)
        + scalars.w * (stats.b - stats.d)
        + scalars.z * (stats.total * stats.total - stats.a - stats.b + stats.d);
    let n = batch.n() as f64;
    Ok(-0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * log_det(v, batch.r(), batch.c())
        - 0.5 * quad)
}

pub fn balanced_loglik(batch: &SubsetBatch, theta: &Theta) -> Result<f64> {
    balanced_loglik_from(batch, &theta.b, &theta.variances())
}

/// Gradient of [`balanced_loglik`] with respect to (b, eta_alpha, eta_beta,
/// eta_e), length p + 3.
///
/// Writing u = inv(Sigma) res, the blocks are
///
/// ```text
/// grad_b     = X' u
/// grad_eta_s = 0.5 exp(eta_s) [ -tr(inv(Sigma) dSigma/dsigma2_s)
///                               + u' (dSigma/dsigma2_s) u ]
/// ```
///
/// Every trace and quadratic form collapses onto the scalars and the O(n)
/// residual statistics; no dense matrix is formed.
pub fn balanced_grads(batch: &SubsetBatch, theta: &Theta) -> Result<Vec<f64>> {
    check_batch(batch, theta.p())?;
    let (r, c) = (batch.r(), batch.c());
    let v = theta.variances();
    let s = precision_scalars_from(&v, r, c)?;
    let stats = residual_stats(batch, &theta.b);
    let (rf, cf) = (r as f64, c as f64);
    let nf = batch.n() as f64;
    let tau2 = stats.total * stats.total;
    let p = theta.p();
    let mut grad = vec![0.0; p + 3];

    for k in 0..batch.n() {
        let resid = batch.y(k) - dot(batch.x(k), &theta.b);
        let rho = stats.row_sums[batch.cell_row(k)];
        let kappa = stats.col_sums[batch.cell_col(k)];
        let u = s.x * resid
            + s.y * (rho - resid)
            + s.w * (kappa - resid)
            + s.z * (stats.total - rho - kappa + resid);
        let x = batch.x(k);
        for l in 0..p {
            grad[l] += u * x[l];
        }
    }

    // Row-effect block: dSigma/dsigma2_alpha couples cells within a row, so
    // u's row sums carry the whole quadratic form.
    let pa = s.x + (cf - 1.0) * s.y;
    let qa = s.w + (cf - 1.0) * s.z;
    let v1 = pa * pa + (rf - 1.0) * qa * qa;
    let v2 = 2.0 * pa * qa + (rf - 2.0) * qa * qa;
    let quad_alpha = v1 * stats.a + v2 * (tau2 - stats.a);
    grad[p] = 0.5 * v.alpha * (-nf * pa + quad_alpha);

    let pb = s.x + (rf - 1.0) * s.w;
    let qb = s.y + (rf - 1.0) * s.z;
    let v3 = pb * pb + (cf - 1.0) * qb * qb;
    let v4 = 2.0 * pb * qb + (cf - 2.0) * qb * qb;
    let quad_beta = v3 * stats.b + v4 * (tau2 - stats.b);
    grad[p + 1] = 0.5 * v.beta * (-nf * pb + quad_beta);

    // Residual block: the quadratic form is u'u, expanded over the four
    // entry classes of the precision matrix.
    let v5 = s.x * s.x + (cf - 1.0) * s.y * s.y + (rf - 1.0) * (s.w * s.w + (cf - 1.0) * s.z * s.z);
    let v6 = 2.0 * s.x * s.y
        + (cf - 2.0) * s.y * s.y
        + (rf - 1.0) * (2.0 * s.w * s.z + (cf - 2.0) * s.z * s.z);
    let v7 = 2.0 * s.x * s.w
        + 2.0 * (cf - 1.0) * s.y * s.z
        + (rf - 2.0) * (s.w * s.w + (cf - 1.0) * s.z * s.z);
    let v8 = 2.0 * s.x * s.z
        + 2.0 * s.y * s.w
        + 2.0 * (cf - 2.0) * s.y * s.z
        + (rf - 2.0) * (2.0 * s.w * s.z + (cf - 2.0) * s.z * s.z);
    let quad_e = v5 * stats.d
        + v6 * (stats.a - stats.d)
        + v7 * (stats.b - stats.d)
        + v8 * (tau2 - stats.a - stats.b + stats.d);
    grad[p + 2] = 0.5 * v.e * (-nf * s.x + quad_e);

    Ok(grad)
}
