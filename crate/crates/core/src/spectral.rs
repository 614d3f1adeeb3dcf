//! Weighted singular value decompositions and what is read off them.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{weighted_dot, Grid, GridFn};
use crate::ops::{split_blocks, WeightedOperator};
use crate::scalar::Real;

/// Singular triples of an operator between weighted spaces.
///
/// `right` and `left` hold raw vectors as columns; they are orthonormal in
/// the source and target quadrature inner products respectively.
#[derive(Debug, Clone)]
pub struct SpectralData<T: Real> {
    values: DVector<T>,
    right: DMatrix<T>,
    left: DMatrix<T>,
    source_grids: Vec<Arc<Grid<T>>>,
    target_grids: Vec<Arc<Grid<T>>>,
    source_weights: DVector<T>,
    target_weights: DVector<T>,
}

const MAX_SWEEPS: usize = 10_000;

/// SVD of `W_t^{1/2} M W_s^{-1/2}`, mapped back to weighted-orthonormal vectors.
///
/// Values are sorted descending. Each pair `(v_k, u_k)` is oriented so the
/// first entry of `v_k` that is not negligible is positive.
pub fn weighted_svd<T: Real, O: WeightedOperator<T> + ?Sized>(op: &O) -> Result<SpectralData<T>> {
    let ws = op.source_weights();
    let wt = op.target_weights();
    let ws_sqrt = ws.map(|w| w.sqrt());
    let wt_sqrt = wt.map(|w| w.sqrt());
    let mut b = op.dense();
    for (r, s) in wt_sqrt.iter().enumerate() {
        b.row_mut(r).scale_mut(*s);
    }
    for (c, s) in ws_sqrt.iter().enumerate() {
        b.column_mut(c).unscale_mut(*s);
    }

    let (u, values, vt) = if b.nrows() >= b.ncols() {
        thin_svd(b)?
    } else {
        let (u, s, vt) = thin_svd(b.transpose())?;
        (vt.transpose(), s, u.transpose())
    };

    let mut right = vt.transpose();
    let mut left = u;
    for (r, s) in ws_sqrt.iter().enumerate() {
        right.row_mut(r).unscale_mut(*s);
    }
    for (r, s) in wt_sqrt.iter().enumerate() {
        left.row_mut(r).unscale_mut(*s);
    }
    for k in 0..values.len() {
        let col = right.column(k);
        let scale = col.amax();
        let tiny = scale * T::lit(1e-8);
        if let Some(first) = col.iter().find(|x| x.abs() > tiny) {
            if *first < T::zero() {
                right.column_mut(k).neg_mut();
                left.column_mut(k).neg_mut();
            }
        }
    }

    Ok(SpectralData {
        values,
        right,
        left,
        source_grids: op.source_grids(),
        target_grids: op.target_grids(),
        source_weights: ws,
        target_weights: wt,
    })
}

/// Ordered thin SVD of a matrix with at least as many rows as columns.
/// Tall matrices are reduced by a QR factorization first.
#[allow(clippy::type_complexity)]
fn thin_svd<T: Real>(b: DMatrix<T>) -> Result<(DMatrix<T>, DVector<T>, DMatrix<T>)> {
    let (m, n) = b.shape();
    if n == 0 {
        return Ok((DMatrix::zeros(m, 0), DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let (q, core) = if m > n + n / 2 {
        let qr = b.qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, b)
    };
    let svd = nalgebra::SVD::try_new(core, true, true, T::default_epsilon(), MAX_SWEEPS)
        .ok_or_else(|| {
            Error::LinearAlgebra(format!("SVD did not converge within {MAX_SWEEPS} sweeps"))
        })?;
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let u = match q {
        Some(q) => q * u,
        None => u,
    };
    Ok((u, svd.singular_values, vt))
}

impl<T: Real> SpectralData<T> {
    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sigma_max(&self) -> T {
        self.values.iter().copied().next().unwrap_or_else(T::zero)
    }

    pub fn sigma_min(&self) -> T {
        self.values.iter().copied().last().unwrap_or_else(T::zero)
    }

    /// Raw right singular vector `v_k` (zero-based `k`).
    pub fn right_vector(&self, k: usize) -> DVector<T> {
        self.right.column(k).into_owned()
    }

    /// Raw left singular vector `u_k`, blocks concatenated for stacked targets.
    pub fn left_vector(&self, k: usize) -> DVector<T> {
        self.left.column(k).into_owned()
    }

    pub fn right_matrix(&self) -> &DMatrix<T> {
        &self.right
    }

    pub fn left_matrix(&self) -> &DMatrix<T> {
        &self.left
    }

    pub fn source_weights(&self) -> &DVector<T> {
        &self.source_weights
    }

    pub fn target_weights(&self) -> &DVector<T> {
        &self.target_weights
    }

    pub fn source_grids(&self) -> &[Arc<Grid<T>>] {
        &self.source_grids
    }

    pub fn target_grids(&self) -> &[Arc<Grid<T>>] {
        &self.target_grids
    }

    /// `v_k` as grid functions, one per source block.
    pub fn right_fns(&self, k: usize) -> Result<Vec<GridFn<T>>> {
        split_blocks(&self.source_grids, &self.right_vector(k))
    }

    /// `u_k` as grid functions, one per target block.
    pub fn left_fns(&self, k: usize) -> Result<Vec<GridFn<T>>> {
        split_blocks(&self.target_grids, &self.left_vector(k))
    }

    /// Weighted inner products `⟨g, v_k⟩` for every `k`.
    pub fn right_coefficients(&self, g: &DVector<T>) -> DVector<T> {
        let wg = g.component_mul(&self.source_weights);
        self.right.tr_mul(&wg)
    }

    /// Weighted inner products `⟨h, u_k⟩` for every `k`.
    pub fn left_coefficients(&self, h: &DVector<T>) -> DVector<T> {
        let wh = h.component_mul(&self.target_weights);
        self.left.tr_mul(&wh)
    }

    /// Dense matrix `Σ σ_k u_k v_kᵀ W_s`, which reproduces the operator.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut us = self.left.clone();
        for (k, s) in self.values.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        let mut vw = self.right.clone();
        for (r, w) in self.source_weights.iter().enumerate() {
            vw.row_mut(r).scale_mut(*w);
        }
        us * vw.transpose()
    }

    /// Largest deviation of the weighted Gram matrix of the right vectors from the identity.
    pub fn orthonormality_defect(&self) -> T {
        gram_defect(&self.right, &self.source_weights)
    }

    pub fn left_orthonormality_defect(&self) -> T {
        gram_defect(&self.left, &self.target_weights)
    }

    /// CSV with header `k,sigma`, `k` one-based.
    pub fn write_values_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "sigma"])?;
        for (k, s) in self.values.iter().enumerate() {
            w.write_record([format!("{}", k + 1), format!("{}", s.to_f64_lossy())])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn gram_defect<T: Real>(m: &DMatrix<T>, w: &DVector<T>) -> T {
    let mut wm = m.clone();
    for (r, x) in w.iter().enumerate() {
        wm.row_mut(r).scale_mut(*x);
    }
    let g = m.tr_mul(&wm);
    let mut worst = T::zero();
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Least-squares line through `(k, ln σ_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay rate; the fitted slope is `-c`.
    pub c: f64,
    pub intercept: f64,
    /// `None` when the values are constant and the fit is degenerate.
    pub r2: Option<f64>,
    pub used: usize,
}

impl DecayFit {
    pub fn is_degenerate(&self) -> bool {
        self.r2.is_none()
    }
}

pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Fewest values [`decay_fit`] accepts.
pub const MIN_DECAY_POINTS: usize = 8;

/// Fits `ln σ_k ≈ intercept − c·k` over the values above `floor` (one-based `k`).
///
/// Values are taken in order until the first one at or below the floor.
pub fn decay_fit<T: Real>(values: &[T], floor: f64) -> Result<DecayFit> {
    decay_fit_min(values, floor, MIN_DECAY_POINTS)
}

/// [`decay_fit`] with an explicit minimum number of points (at least 3).
///
/// Strongly separated pairs leave fewer than eight values above `1e-12`.
pub fn decay_fit_min<T: Real>(values: &[T], floor: f64, min_points: usize) -> Result<DecayFit> {
    let min_points = min_points.max(3);
    let pts: Vec<(f64, f64)> = values
        .iter()
        .map(|s| s.to_f64_lossy())
        .take_while(|s| *s > floor)
        .enumerate()
        .map(|(k, s)| ((k + 1) as f64, s.ln()))
        .collect();
    if pts.len() < min_points {
        return Err(Error::InsufficientData(format!(
            "{} singular values above {floor:e}, need at least {min_points}",
            pts.len()
        )));
    }
    let (slope, intercept, r2) = linear_fit(&pts);
    Ok(DecayFit {
        c: -slope,
        intercept,
        r2,
        used: pts.len(),
    })
}

/// Ordinary least squares `y ≈ a x + b`; returns `(a, b, R²)`, with `R²`
/// absent when `y` is constant.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, Option<f64>) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let scale = my.abs().max(1.0);
    let r2 = if syy <= (1e-14 * scale).powi(2) * n {
        None
    } else {
        let sse: f64 = pts
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        Some(1.0 - sse / syy)
    };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardRow {
    pub k: usize,
    pub sigma: f64,
    pub coefficient: f64,
}

/// `(k, σ_k, |⟨h, u_k⟩|)` for every left singular vector.
pub fn picard_analysis<T: Real>(h: &[GridFn<T>], s: &SpectralData<T>) -> Result<Vec<PicardRow>> {
    if h.len() != s.target_grids.len()
        || h.iter().zip(&s.target_grids).any(|(f, g)| !f.is_on(g))
    {
        return Err(Error::GridMismatch(
            "Picard coefficients need h on the operator's target grids".into(),
        ));
    }
    let raw = crate::ops::concat_blocks(h);
    let coef = s.left_coefficients(&raw);
    Ok(s
        .values
        .iter()
        .zip(coef.iter())
        .enumerate()
        .map(|(k, (sig, c))| PicardRow {
            k: k + 1,
            sigma: sig.to_f64_lossy(),
            coefficient: c.abs().to_f64_lossy(),
        })
        .collect())
}

/// Weighted inner product of two raw vectors.
pub fn raw_dot<T: Real>(w: &DVector<T>, u: &DVector<T>, v: &DVector<T>) -> T {
    weighted_dot(w.as_slice(), u.as_slice(), v.as_slice())
}
