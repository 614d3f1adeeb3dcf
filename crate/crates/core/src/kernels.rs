//! Quadrature assembly of truncated Hilbert and Riesz transforms.
//!
//! Normalization constants are dropped: the Hilbert kernel is `1/(x - t)`
//! and the Riesz kernel `(x_j - y_j) / |x - y|^{n+1}`, so that `n = 1`
//! reduces exactly to the Hilbert kernel. Only pairs with disjoint closures
//! are accepted; the kernel is then smooth and no principal value is needed.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ops::{OpKind, OpMatrix};
use crate::scalar::Real;

/// `(x_j - y_j) / |x - y|^{n+1}` for points of equal dimension `n`.
#[inline]
pub fn riesz_kernel<T: Real>(axis: usize, x: &[T], y: &[T]) -> T {
    let mut r2 = T::zero();
    for (a, b) in x.iter().zip(y) {
        let d = *a - *b;
        r2 += d * d;
    }
    let n = x.len();
    let denom = match n {
        1 => r2,
        2 => r2 * r2.sqrt(),
        _ => r2.powf(T::count(n + 1) / T::lit(2.0)),
    };
    (x[axis] - y[axis]) / denom
}

fn check_disjoint<T: Real>(source: &Grid<T>, target: &Grid<T>) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(Error::GridMismatch(format!(
            "source is {}-dimensional, target {}-dimensional",
            source.dim(),
            target.dim()
        )));
    }
    if !source.domain().closures_disjoint(target.domain()) {
        return Err(Error::SingularKernel(
            "source and target closures intersect; the principal-value case is not supported"
                .into(),
        ));
    }
    Ok(())
}

fn assemble_kernel<T: Real>(
    axis: usize,
    source: &Arc<Grid<T>>,
    target: &Arc<Grid<T>>,
    kind: OpKind,
) -> Result<OpMatrix<T>> {
    let w = source.weights();
    let m = DMatrix::from_fn(target.len(), source.len(), |row, col| {
        w[col] * riesz_kernel(axis, target.node(row), source.node(col))
    });
    OpMatrix::new(m, Arc::clone(source), Arc::clone(target), kind)
}

/// Midpoint-rule discretization of `f ↦ χ_J H(χ_I f)`: entry `[m][k] = w_k / (x_m - t_k)`.
pub fn assemble_truncated_hilbert<T: Real>(
    source: &Arc<Grid<T>>,
    target: &Arc<Grid<T>>,
) -> Result<OpMatrix<T>> {
    if source.dim() != 1 || target.dim() != 1 {
        return Err(Error::InvalidDomain(
            "the Hilbert transform needs one-dimensional grids".into(),
        ));
    }
    check_disjoint(source, target)?;
    assemble_kernel(0, source, target, OpKind::Hilbert)
}

/// Midpoint-rule discretization of the `axis`-th truncated Riesz transform.
pub fn assemble_truncated_riesz<T: Real>(
    axis: usize,
    source: &Arc<Grid<T>>,
    target: &Arc<Grid<T>>,
) -> Result<OpMatrix<T>> {
    check_disjoint(source, target)?;
    if axis >= source.dim() {
        return Err(Error::InvalidAxis {
            axis,
            dim: source.dim(),
        });
    }
    assemble_kernel(axis, source, target, OpKind::Riesz { axis })
}

/// All `n` Riesz components between two grids, stacked.
pub fn assemble_riesz_stack<T: Real>(
    source: &Arc<Grid<T>>,
    target: &Arc<Grid<T>>,
) -> Result<crate::ops::StackedOp<T>> {
    let comps = (0..source.dim())
        .map(|j| assemble_truncated_riesz(j, source, target))
        .collect::<Result<Vec<_>>>()?;
    crate::ops::stack_components(comps)
}
