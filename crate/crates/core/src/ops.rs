//! Dense operators between grid-function spaces.
//!
//! An [`OpMatrix`] maps samples on a source grid to samples on a target
//! grid. [`StackedOp`] is the column stack `g ↦ (A_1 g, ..., A_n g)` and
//! [`SummedOp`] its weighted adjoint `(v_1, ..., v_n) ↦ Σ_j A_j* v_j`.
//! All three expose their stacked dense form through [`WeightedOperator`],
//! which is what the spectral and variational code consumes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{weighted_norm, Grid, GridFn};
use crate::scalar::Real;

/// What an operator represents. Axes are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum OpKind {
    Hilbert,
    Riesz { axis: usize },
    Generalized { axis: usize },
    Identity,
    Adjoint { of: Box<OpKind> },
    Custom,
}

impl OpKind {
    pub fn adjoint(&self) -> OpKind {
        match self {
            OpKind::Adjoint { of } => (**of).clone(),
            OpKind::Identity => OpKind::Identity,
            other => OpKind::Adjoint {
                of: Box::new(other.clone()),
            },
        }
    }
}

/// Dense `target.len() × source.len()` matrix acting on grid functions.
#[derive(Debug, Clone)]
pub struct OpMatrix<T: Real> {
    entries: DMatrix<T>,
    source: Arc<Grid<T>>,
    target: Arc<Grid<T>>,
    kind: OpKind,
}

impl<T: Real> OpMatrix<T> {
    pub fn new(
        entries: DMatrix<T>,
        source: Arc<Grid<T>>,
        target: Arc<Grid<T>>,
        kind: OpKind,
    ) -> Result<Self> {
        if entries.nrows() != target.len() || entries.ncols() != source.len() {
            return Err(Error::GridMismatch(format!(
                "matrix is {}x{} but grids have {} target and {} source nodes",
                entries.nrows(),
                entries.ncols(),
                target.len(),
                source.len()
            )));
        }
        Ok(Self {
            entries,
            source,
            target,
            kind,
        })
    }

    /// Identity on a grid; its weighted singular values are all one.
    pub fn identity(grid: Arc<Grid<T>>) -> Self {
        let n = grid.len();
        Self {
            entries: DMatrix::identity(n, n),
            source: Arc::clone(&grid),
            target: grid,
            kind: OpKind::Identity,
        }
    }

    pub fn zeros(source: Arc<Grid<T>>, target: Arc<Grid<T>>) -> Self {
        Self {
            entries: DMatrix::zeros(target.len(), source.len()),
            source,
            target,
            kind: OpKind::Custom,
        }
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn source(&self) -> &Arc<Grid<T>> {
        &self.source
    }

    pub fn target(&self) -> &Arc<Grid<T>> {
        &self.target
    }

    pub fn kind(&self) -> &OpKind {
        &self.kind
    }

    pub fn apply(&self, g: &GridFn<T>) -> Result<GridFn<T>> {
        if !g.is_on(&self.source) {
            return Err(Error::GridMismatch(
                "argument does not live on the operator's source grid".into(),
            ));
        }
        GridFn::new(Arc::clone(&self.target), &self.entries * g.values())
    }

    /// Adjoint with respect to the quadrature inner products:
    /// `A*[k][m] = A[m][k] w_m / w_k`.
    pub fn weighted_adjoint(&self) -> OpMatrix<T> {
        let ws = self.source.weights();
        let wt = self.target.weights();
        let mut adj = self.entries.transpose();
        for m in 0..wt.len() {
            for k in 0..ws.len() {
                adj[(k, m)] *= wt[m] / ws[k];
            }
        }
        OpMatrix {
            entries: adj,
            source: Arc::clone(&self.target),
            target: Arc::clone(&self.source),
            kind: self.kind.adjoint(),
        }
    }

    pub fn scaled(&self, s: T) -> OpMatrix<T> {
        OpMatrix {
            entries: &self.entries * s,
            source: Arc::clone(&self.source),
            target: Arc::clone(&self.target),
            kind: self.kind.clone(),
        }
    }

    /// Maximum absolute entry difference; grids must agree.
    pub fn max_abs_diff(&self, other: &OpMatrix<T>) -> Result<T> {
        if !self.source.same_as(&other.source) || !self.target.same_as(&other.target) {
            return Err(Error::GridMismatch("operators act between different grids".into()));
        }
        Ok((&self.entries - &other.entries).amax())
    }
}

/// Block column `g ↦ (A_1 g, ..., A_n g)`; the target norm is the Euclidean
/// combination of the component norms.
#[derive(Debug, Clone)]
pub struct StackedOp<T: Real> {
    components: Vec<OpMatrix<T>>,
}

/// Block row `(v_1, ..., v_n) ↦ Σ_j B_j v_j` with a shared target grid.
#[derive(Debug, Clone)]
pub struct SummedOp<T: Real> {
    components: Vec<OpMatrix<T>>,
}

/// Stacks operators that share one source grid.
pub fn stack_components<T: Real>(ops: Vec<OpMatrix<T>>) -> Result<StackedOp<T>> {
    let Some(first) = ops.first() else {
        return Err(Error::InvalidParameter("cannot stack zero operators".into()));
    };
    if ops.iter().any(|op| !op.source.same_as(&first.source)) {
        return Err(Error::GridMismatch(
            "stacked components must share the source grid".into(),
        ));
    }
    Ok(StackedOp { components: ops })
}

impl<T: Real> StackedOp<T> {
    pub fn components(&self) -> &[OpMatrix<T>] {
        &self.components
    }

    pub fn source(&self) -> &Arc<Grid<T>> {
        &self.components[0].source
    }

    pub fn apply(&self, g: &GridFn<T>) -> Result<Vec<GridFn<T>>> {
        self.components.iter().map(|op| op.apply(g)).collect()
    }

    pub fn weighted_adjoint(&self) -> SummedOp<T> {
        SummedOp {
            components: self.components.iter().map(OpMatrix::weighted_adjoint).collect(),
        }
    }
}

impl<T: Real> SummedOp<T> {
    pub fn components(&self) -> &[OpMatrix<T>] {
        &self.components
    }

    pub fn target(&self) -> &Arc<Grid<T>> {
        &self.components[0].target
    }

    pub fn apply(&self, parts: &[GridFn<T>]) -> Result<GridFn<T>> {
        if parts.len() != self.components.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} components, got {}",
                self.components.len(),
                parts.len()
            )));
        }
        let mut acc = DVector::zeros(self.target().len());
        for (op, v) in self.components.iter().zip(parts) {
            acc += op.apply(v)?.into_values();
        }
        GridFn::new(Arc::clone(self.target()), acc)
    }

    pub fn weighted_adjoint(&self) -> StackedOp<T> {
        StackedOp {
            components: self.components.iter().map(OpMatrix::weighted_adjoint).collect(),
        }
    }
}

/// Common view of an operator as one dense matrix between weighted spaces.
///
/// Raw vectors on a stacked side are the concatenation of the component
/// blocks, each weighted by its own grid.
pub trait WeightedOperator<T: Real> {
    fn source_weights(&self) -> DVector<T>;
    fn target_weights(&self) -> DVector<T>;
    /// Source grids of the blocks (one entry unless this is a [`SummedOp`]).
    fn source_grids(&self) -> Vec<Arc<Grid<T>>>;
    /// Target grids of the blocks (one entry unless this is a [`StackedOp`]).
    fn target_grids(&self) -> Vec<Arc<Grid<T>>>;
    fn dense(&self) -> DMatrix<T>;
    fn apply_raw(&self, g: &DVector<T>) -> DVector<T>;
    /// Weighted adjoint applied to a raw target vector.
    fn adjoint_apply_raw(&self, v: &DVector<T>) -> DVector<T>;
    fn n_components(&self) -> usize;

    fn source_len(&self) -> usize {
        self.source_weights().len()
    }

    fn target_len(&self) -> usize {
        self.target_weights().len()
    }
}

fn adjoint_apply<T: Real>(op: &OpMatrix<T>, v: &[T]) -> DVector<T> {
    let ws = op.source.weights();
    let wt = op.target.weights();
    let scaled = DVector::from_iterator(v.len(), v.iter().zip(wt).map(|(v, w)| *v * *w));
    let mut out = op.entries.tr_mul(&scaled);
    for (o, w) in out.iter_mut().zip(ws) {
        *o /= *w;
    }
    out
}

impl<T: Real> WeightedOperator<T> for OpMatrix<T> {
    fn source_weights(&self) -> DVector<T> {
        self.source.weight_vector()
    }

    fn target_weights(&self) -> DVector<T> {
        self.target.weight_vector()
    }

    fn source_grids(&self) -> Vec<Arc<Grid<T>>> {
        vec![Arc::clone(&self.source)]
    }

    fn target_grids(&self) -> Vec<Arc<Grid<T>>> {
        vec![Arc::clone(&self.target)]
    }

    fn dense(&self) -> DMatrix<T> {
        self.entries.clone()
    }

    fn apply_raw(&self, g: &DVector<T>) -> DVector<T> {
        &self.entries * g
    }

    fn adjoint_apply_raw(&self, v: &DVector<T>) -> DVector<T> {
        adjoint_apply(self, v.as_slice())
    }

    fn n_components(&self) -> usize {
        1
    }
}

impl<T: Real> WeightedOperator<T> for StackedOp<T> {
    fn source_weights(&self) -> DVector<T> {
        self.source().weight_vector()
    }

    fn target_weights(&self) -> DVector<T> {
        let w: Vec<T> = self
            .components
            .iter()
            .flat_map(|op| op.target.weights().iter().copied())
            .collect();
        DVector::from_vec(w)
    }

    fn source_grids(&self) -> Vec<Arc<Grid<T>>> {
        vec![Arc::clone(self.source())]
    }

    fn target_grids(&self) -> Vec<Arc<Grid<T>>> {
        self.components.iter().map(|op| Arc::clone(&op.target)).collect()
    }

    fn dense(&self) -> DMatrix<T> {
        let rows: usize = self.components.iter().map(|op| op.entries.nrows()).sum();
        let cols = self.source().len();
        let mut m = DMatrix::zeros(rows, cols);
        let mut r0 = 0;
        for op in &self.components {
            let r = op.entries.nrows();
            m.view_mut((r0, 0), (r, cols)).copy_from(&op.entries);
            r0 += r;
        }
        m
    }

    fn apply_raw(&self, g: &DVector<T>) -> DVector<T> {
        let parts: Vec<T> = self
            .components
            .iter()
            .flat_map(|op| (&op.entries * g).iter().copied().collect::<Vec<_>>())
            .collect();
        DVector::from_vec(parts)
    }

    fn adjoint_apply_raw(&self, v: &DVector<T>) -> DVector<T> {
        let mut acc = DVector::zeros(self.source().len());
        let mut r0 = 0;
        for op in &self.components {
            let r = op.entries.nrows();
            acc += adjoint_apply(op, &v.as_slice()[r0..r0 + r]);
            r0 += r;
        }
        acc
    }

    fn n_components(&self) -> usize {
        self.components.len()
    }
}

impl<T: Real> WeightedOperator<T> for SummedOp<T> {
    fn source_weights(&self) -> DVector<T> {
        let w: Vec<T> = self
            .components
            .iter()
            .flat_map(|op| op.source.weights().iter().copied())
            .collect();
        DVector::from_vec(w)
    }

    fn target_weights(&self) -> DVector<T> {
        self.target().weight_vector()
    }

    fn source_grids(&self) -> Vec<Arc<Grid<T>>> {
        self.components.iter().map(|op| Arc::clone(&op.source)).collect()
    }

    fn target_grids(&self) -> Vec<Arc<Grid<T>>> {
        vec![Arc::clone(self.target())]
    }

    fn dense(&self) -> DMatrix<T> {
        let rows = self.target().len();
        let cols: usize = self.components.iter().map(|op| op.entries.ncols()).sum();
        let mut m = DMatrix::zeros(rows, cols);
        let mut c0 = 0;
        for op in &self.components {
            let c = op.entries.ncols();
            m.view_mut((0, c0), (rows, c)).copy_from(&op.entries);
            c0 += c;
        }
        m
    }

    fn apply_raw(&self, g: &DVector<T>) -> DVector<T> {
        let mut acc = DVector::zeros(self.target().len());
        let mut c0 = 0;
        for op in &self.components {
            let c = op.entries.ncols();
            acc += &op.entries * g.rows(c0, c);
            c0 += c;
        }
        acc
    }

    fn adjoint_apply_raw(&self, v: &DVector<T>) -> DVector<T> {
        let parts: Vec<T> = self
            .components
            .iter()
            .flat_map(|op| adjoint_apply(op, v.as_slice()).iter().copied().collect::<Vec<_>>())
            .collect();
        DVector::from_vec(parts)
    }

    fn n_components(&self) -> usize {
        self.components.len()
    }
}

/// Weighted norm of a raw vector.
pub fn raw_norm<T: Real>(weights: &DVector<T>, v: &DVector<T>) -> T {
    weighted_norm(weights.as_slice(), v.as_slice())
}

/// Splits a raw stacked vector into per-block grid functions.
pub fn split_blocks<T: Real>(grids: &[Arc<Grid<T>>], v: &DVector<T>) -> Result<Vec<GridFn<T>>> {
    let total: usize = grids.iter().map(|g| g.len()).sum();
    if total != v.len() {
        return Err(Error::GridMismatch(format!(
            "raw vector of length {} does not match blocks totalling {total}",
            v.len()
        )));
    }
    let mut out = Vec::with_capacity(grids.len());
    let mut r0 = 0;
    for g in grids {
        out.push(GridFn::new(Arc::clone(g), v.rows(r0, g.len()).into_owned())?);
        r0 += g.len();
    }
    Ok(out)
}

/// Concatenates grid functions into one raw vector.
pub fn concat_blocks<T: Real>(parts: &[GridFn<T>]) -> DVector<T> {
    let v: Vec<T> = parts
        .iter()
        .flat_map(|p| p.values().iter().copied())
        .collect();
    DVector::from_vec(v)
}
