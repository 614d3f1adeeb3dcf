//! Domains, midpoint quadrature grids, normalization of interval pairs and
//! the discrete L²/H¹ norms every other module builds on.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Open interval `(lo, hi)` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalDomain<T> {
    lo: T,
    hi: T,
}

impl<T: Real> IntervalDomain<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidDomain(format!(
                "interval requires lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn length(&self) -> T {
        self.hi - self.lo
    }

    /// Distance between the closures; zero when they touch or overlap.
    pub fn distance(&self, other: &Self) -> T {
        if self.hi < other.lo {
            other.lo - self.hi
        } else if other.hi < self.lo {
            self.lo - other.hi
        } else {
            T::zero()
        }
    }

    pub fn closures_disjoint(&self, other: &Self) -> bool {
        self.hi < other.lo || other.hi < self.lo
    }
}

impl<T: Real> fmt::Display for IntervalDomain<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// Axis-aligned open box in `R^n`, `n ∈ {1, 2}` for everything the crate assembles.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> BoxDomain<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidDomain(format!(
                "box bounds must be non-empty and of equal length (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        if lo.len() > 3 {
            return Err(Error::InvalidDomain(format!(
                "boxes of dimension {} are not supported",
                lo.len()
            )));
        }
        for (k, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(*a < *b) {
                return Err(Error::InvalidDomain(format!(
                    "axis {k}: lo must be < hi, got ({a}, {b})"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Square/cube `(lo, hi)^dim`.
    pub fn cube(lo: T, hi: T, dim: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn volume(&self) -> T {
        self.lo
            .iter()
            .zip(&self.hi)
            .fold(T::one(), |acc, (a, b)| acc * (*b - *a))
    }

    pub fn diameter(&self) -> T {
        self.lo
            .iter()
            .zip(&self.hi)
            .fold(T::zero(), |acc, (a, b)| acc + (*b - *a) * (*b - *a))
            .sqrt()
    }

    /// Closures are disjoint iff they are separated along at least one axis.
    pub fn closures_disjoint(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).any(|k| self.hi[k] < other.lo[k] || other.hi[k] < self.lo[k])
    }

    /// Euclidean distance from a point to the closed box.
    pub fn distance_to_point(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for k in 0..self.dim() {
            let d = if x[k] < self.lo[k] {
                self.lo[k] - x[k]
            } else if x[k] > self.hi[k] {
                x[k] - self.hi[k]
            } else {
                T::zero()
            };
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Euclidean distance between the two closed boxes.
    pub fn distance(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for k in 0..self.dim() {
            let gap = if self.hi[k] < other.lo[k] {
                other.lo[k] - self.hi[k]
            } else if other.hi[k] < self.lo[k] {
                self.lo[k] - other.hi[k]
            } else {
                T::zero()
            };
            acc += gap * gap;
        }
        acc.sqrt()
    }

    pub fn contains_closed(&self, x: &[T]) -> bool {
        (0..self.dim()).all(|k| x[k] >= self.lo[k] && x[k] <= self.hi[k])
    }

    pub fn as_interval(&self) -> Option<IntervalDomain<T>> {
        (self.dim() == 1).then(|| IntervalDomain {
            lo: self.lo[0],
            hi: self.hi[0],
        })
    }
}

impl<T: Real> From<IntervalDomain<T>> for BoxDomain<T> {
    fn from(i: IntervalDomain<T>) -> Self {
        Self {
            lo: vec![i.lo],
            hi: vec![i.hi],
        }
    }
}

/// Portable description of a grid; enough to rebuild it with [`make_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn build<T: Real>(&self) -> Result<Grid<T>> {
        let domain = BoxDomain::new(
            self.lo.iter().map(|&v| T::lit(v)).collect(),
            self.hi.iter().map(|&v| T::lit(v)).collect(),
        )?;
        make_grid(domain, &self.counts)
    }
}

/// Midpoint-rule tensor grid on a box. Node `k` has multi-index
/// `(i_0, i_1, ...)` with `k = i_0 + n_0 * (i_1 + n_1 * ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    domain: BoxDomain<T>,
    counts: Vec<usize>,
    spacing: Vec<T>,
    nodes: Vec<T>,
    weights: Vec<T>,
}

/// Builds the midpoint grid `x_k = lo + (k + 1/2) h` with weight `h` per
/// cell (products of the per-axis widths in several dimensions).
pub fn make_grid<T: Real>(domain: impl Into<BoxDomain<T>>, counts: &[usize]) -> Result<Grid<T>> {
    let domain = domain.into();
    let dim = domain.dim();
    if counts.len() != dim {
        return Err(Error::InvalidResolution(format!(
            "expected {dim} per-axis counts, got {}",
            counts.len()
        )));
    }
    if let Some(c) = counts.iter().find(|&&c| c < 2) {
        return Err(Error::InvalidResolution(format!(
            "at least 2 cells per axis required, got {c}"
        )));
    }
    let spacing: Vec<T> = (0..dim)
        .map(|k| (domain.hi[k] - domain.lo[k]) / T::count(counts[k]))
        .collect();
    let axis_nodes: Vec<Vec<T>> = (0..dim)
        .map(|k| {
            (0..counts[k])
                .map(|i| domain.lo[k] + (T::count(i) + T::lit(0.5)) * spacing[k])
                .collect()
        })
        .collect();
    let cell = spacing.iter().fold(T::one(), |acc, h| acc * *h);
    let total: usize = counts.iter().product();
    let mut nodes = Vec::with_capacity(total * dim);
    for k in 0..total {
        let mut rem = k;
        for axis in 0..dim {
            let i = rem % counts[axis];
            rem /= counts[axis];
            nodes.push(axis_nodes[axis][i]);
        }
    }
    Ok(Grid {
        domain,
        counts: counts.to_vec(),
        spacing,
        nodes,
        weights: vec![cell; total],
    })
}

impl<T: Real> Grid<T> {
    /// Uniform grid with the same number of cells along every axis.
    pub fn uniform(domain: impl Into<BoxDomain<T>>, per_axis: usize) -> Result<Self> {
        let domain = domain.into();
        let counts = vec![per_axis; domain.dim()];
        make_grid(domain, &counts)
    }

    pub fn domain(&self) -> &BoxDomain<T> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[T] {
        let d = self.dim();
        &self.nodes[k * d..(k + 1) * d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.nodes.chunks_exact(self.dim())
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight_vector(&self) -> DVector<T> {
        DVector::from_column_slice(&self.weights)
    }

    /// Largest cell width.
    pub fn max_spacing(&self) -> T {
        self.spacing
            .iter()
            .fold(T::zero(), |acc, h| if *h > acc { *h } else { acc })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            lo: self.domain.lo.iter().map(|v| v.to_f64_lossy()).collect(),
            hi: self.domain.hi.iter().map(|v| v.to_f64_lossy()).collect(),
            counts: self.counts.clone(),
        }
    }

    /// Samples a function at the grid nodes.
    pub fn sample(self: &Arc<Self>, f: impl FnMut(&[T]) -> T) -> GridFn<T> {
        let values = DVector::from_iterator(self.len(), self.nodes().map(f));
        GridFn {
            grid: Arc::clone(self),
            values,
        }
    }

    pub fn zeros(self: &Arc<Self>) -> GridFn<T> {
        GridFn {
            grid: Arc::clone(self),
            values: DVector::zeros(self.len()),
        }
    }

    /// Same grid (pointer or structural equality).
    pub fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}

/// Samples of a real function on a [`Grid`].
#[derive(Debug, Clone)]
pub struct GridFn<T: Real> {
    grid: Arc<Grid<T>>,
    values: DVector<T>,
}

impl<T: Real> GridFn<T> {
    pub fn new(grid: Arc<Grid<T>>, values: DVector<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_vec(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        Self::new(grid, DVector::from_vec(values))
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DVector<T> {
        &mut self.values
    }

    pub fn into_values(self) -> DVector<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l2_norm(&self) -> T {
        weighted_norm(self.grid.weights(), self.values.as_slice())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: &self.values * s,
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: &self.values * a + &other.values * b,
        })
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("functions live on different grids".into()))
        }
    }

    pub fn is_on(&self, grid: &Arc<Grid<T>>) -> bool {
        self.grid.same_as(grid)
    }
}

pub(crate) fn weighted_dot<T: Real>(w: &[T], u: &[T], v: &[T]) -> T {
    w.iter()
        .zip(u)
        .zip(v)
        .fold(T::zero(), |acc, ((w, u), v)| acc + *w * *u * *v)
}

pub(crate) fn weighted_norm<T: Real>(w: &[T], u: &[T]) -> T {
    weighted_dot(w, u, u).sqrt()
}

/// Quadrature inner product `Σ_k w_k u_k v_k`.
pub fn inner_product<T: Real>(u: &GridFn<T>, v: &GridFn<T>) -> Result<T> {
    u.check_same_grid(v)?;
    Ok(weighted_dot(
        u.grid.weights(),
        u.values.as_slice(),
        v.values.as_slice(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevNorms<T> {
    pub l2: T,
    pub h1: T,
}

/// Discrete L² and full H¹ norms. The derivative is the forward difference
/// along each axis, with the last cell repeating the previous difference.
pub fn sobolev_norms<T: Real>(u: &GridFn<T>) -> Result<SobolevNorms<T>> {
    let grid = &u.grid;
    if let Some(c) = grid.counts().iter().find(|&&c| c < 3) {
        return Err(Error::InvalidResolution(format!(
            "H1 norm needs at least 3 nodes per axis, got {c}"
        )));
    }
    let l2 = u.l2_norm();
    let seminorm_sq = gradient_seminorm_sq(u);
    Ok(SobolevNorms {
        l2,
        h1: (l2 * l2 + seminorm_sq).sqrt(),
    })
}

/// `‖Du‖²` with the forward-difference convention of [`sobolev_norms`].
pub(crate) fn gradient_seminorm_sq<T: Real>(u: &GridFn<T>) -> T {
    let grid = &u.grid;
    let counts = grid.counts();
    let dim = grid.dim();
    let v = u.values.as_slice();
    let w = grid.weights();
    let mut acc = T::zero();
    let mut stride = 1;
    for axis in 0..dim {
        let n = counts[axis];
        let h = grid.spacing()[axis];
        for k in 0..grid.len() {
            let i = (k / stride) % n;
            let d = if i + 1 < n {
                (v[k + stride] - v[k]) / h
            } else {
                (v[k] - v[k - stride]) / h
            };
            acc += w[k] * d * d;
        }
        stride *= n;
    }
    acc
}

/// Affine map `x ↦ scale * x + shift` recorded by [`normalize_pair`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap<T> {
    pub scale: T,
    pub shift: T,
}

impl<T: Real> AffineMap<T> {
    pub fn identity() -> Self {
        Self {
            scale: T::one(),
            shift: T::zero(),
        }
    }

    pub fn apply(&self, x: T) -> T {
        self.scale * x + self.shift
    }

    pub fn inverse(&self, y: T) -> T {
        (y - self.shift) / self.scale
    }

    pub fn is_reflection(&self) -> bool {
        self.scale < T::zero()
    }

    pub fn map_interval(&self, i: &IntervalDomain<T>) -> IntervalDomain<T> {
        let (a, b) = (self.apply(i.lo), self.apply(i.hi));
        if a < b {
            IntervalDomain { lo: a, hi: b }
        } else {
            IntervalDomain { lo: b, hi: a }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPair<T> {
    pub source: IntervalDomain<T>,
    pub target: IntervalDomain<T>,
    pub map: AffineMap<T>,
}

/// Maps `J` onto `(0, 1)` and `I` onto an interval left of zero,
/// reflecting first when `I` lies to the right of `J`.
pub fn normalize_pair<T: Real>(
    source: &IntervalDomain<T>,
    target: &IntervalDomain<T>,
) -> Result<NormalizedPair<T>> {
    if !source.closures_disjoint(target) {
        return Err(Error::Disjointness(format!(
            "closures of {source} and {target} intersect"
        )));
    }
    let len = target.length();
    let map = if source.hi < target.lo {
        AffineMap {
            scale: T::one() / len,
            shift: -target.lo / len,
        }
    } else {
        AffineMap {
            scale: -T::one() / len,
            shift: target.hi / len,
        }
    };
    let mut mapped_target = map.map_interval(target);
    // pin the exact unit interval against rounding in the shift
    mapped_target.lo = T::zero();
    mapped_target.hi = T::one();
    Ok(NormalizedPair {
        source: map.map_interval(source),
        target: mapped_target,
        map,
    })
}

/// Distance, length and fattening parameter of a normalized pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryParams<T> {
    pub d: T,
    pub l: T,
    pub h1: T,
}

pub fn geometry_params<T: Real>(
    source: &IntervalDomain<T>,
    target: &IntervalDomain<T>,
) -> Result<GeometryParams<T>> {
    let tol = T::lit(1e-12);
    if (target.lo).abs() > tol || (target.hi - T::one()).abs() > tol {
        return Err(Error::NormalizationRequired(format!(
            "target must be (0, 1), got {target}"
        )));
    }
    if !(source.hi < T::zero()) {
        return Err(Error::NormalizationRequired(format!(
            "source must lie left of 0, got {source}"
        )));
    }
    let d = source.hi.abs();
    let quarter = T::lit(0.25);
    let d4 = d * quarter;
    Ok(GeometryParams {
        d,
        l: source.hi - source.lo,
        h1: if d4 < quarter { d4 } else { quarter },
    })
}
