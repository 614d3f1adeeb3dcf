//! Neumann harmonic extension of boundary data into the upper half-space.
//!
//! For data `f` on a source grid in `R^n` the extension is the single-layer
//! sum `u(x', z) = Σ_k w_k G(x' - t_k, z) f_k` with `G = ln r` for `n = 1`
//! and `G = -r^{1-n}/(n-1)` otherwise. Its horizontal gradient kernel is the
//! transform kernel `(x_j - t_j)/r^{n+1}`, so the tangential trace at height
//! zero is the truncated transform, and `∂_z u(·, 0+) = κ_n f`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::kernels::riesz_kernel;
use crate::scalar::{neumann_kappa, Real};

/// Which derivative of the extension to take. Axes are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Horizontal(usize),
    Vertical,
}

/// Tensor-product evaluation nodes `(x_0, ..., x_{n-1}, z)` with `z ≥ 0`.
/// Node ordering: axis 0 fastest, height slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice<T> {
    axes: Vec<Vec<T>>,
}

impl<T: Real> Lattice<T> {
    /// Axes must be nonempty and strictly increasing; the last one is the height.
    pub fn new(axes: Vec<Vec<T>>) -> Result<Self> {
        if axes.len() < 2 {
            return Err(Error::InvalidDomain(
                "a lattice needs at least one horizontal axis and the height".into(),
            ));
        }
        for (a, coords) in axes.iter().enumerate() {
            if coords.is_empty() {
                return Err(Error::InvalidResolution(format!("lattice axis {a} is empty")));
            }
            if coords.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidDomain(format!(
                    "lattice axis {a} is not strictly increasing"
                )));
            }
        }
        if axes.last().unwrap()[0] < T::zero() {
            return Err(Error::InvalidDomain(
                "lattice heights must be nonnegative".into(),
            ));
        }
        Ok(Self { axes })
    }

    /// `counts[a]` nodes `lo[a] + i * spacing[a]` per axis.
    pub fn uniform(lo: &[T], spacing: &[T], counts: &[usize]) -> Result<Self> {
        if lo.len() != spacing.len() || lo.len() != counts.len() {
            return Err(Error::InvalidDomain("lattice arguments differ in length".into()));
        }
        let axes = (0..lo.len())
            .map(|a| (0..counts[a]).map(|i| lo[a] + T::count(i) * spacing[a]).collect())
            .collect();
        Self::new(axes)
    }

    pub fn horizontal_dim(&self) -> usize {
        self.axes.len() - 1
    }

    pub fn axes(&self) -> &[Vec<T>] {
        &self.axes
    }

    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, mut k: usize) -> Vec<T> {
        self.axes
            .iter()
            .map(|coords| {
                let i = k % coords.len();
                k /= coords.len();
                coords[i]
            })
            .collect()
    }

    /// Per-axis spacing if every axis is equispaced (relative tolerance 1e-9).
    pub fn uniform_spacing(&self) -> Option<Vec<T>> {
        let tol = T::lit(1e-9);
        self.axes
            .iter()
            .map(|c| {
                if c.len() < 2 {
                    return None;
                }
                let h = (c[c.len() - 1] - c[0]) / T::count(c.len() - 1);
                c.windows(2)
                    .all(|w| (w[1] - w[0] - h).abs() <= tol * h)
                    .then_some(h)
            })
            .collect()
    }
}

/// Extension values on a lattice together with the data that produced them.
#[derive(Debug, Clone)]
pub struct ExtensionField<T: Real> {
    data: GridFn<T>,
    lattice: Lattice<T>,
    values: DVector<T>,
    kappa: T,
}

fn horizontal_r2<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (a, b)| {
        let d = *a - *b;
        acc + d * d
    })
}

fn kernel<T: Real>(n: usize, r2: T) -> T {
    match n {
        1 => r2.ln() / T::lit(2.0),
        2 => -T::one() / r2.sqrt(),
        _ => -r2.powf((T::one() - T::count(n)) / T::lit(2.0)) / T::count(n - 1),
    }
}

fn pow_n_plus_1<T: Real>(n: usize, r2: T) -> T {
    match n {
        1 => r2,
        2 => r2 * r2.sqrt(),
        _ => r2.powf(T::count(n + 1) / T::lit(2.0)),
    }
}

fn check_dims<T: Real>(f: &GridFn<T>, n: usize) -> Result<()> {
    if f.grid().dim() != n {
        return Err(Error::GridMismatch(format!(
            "data lives in {} dimensions, evaluation points in {n}",
            f.grid().dim()
        )));
    }
    Ok(())
}

fn check_clearance<T: Real>(f: &GridFn<T>, x: &[T], z: T) -> Result<()> {
    if z > T::zero() {
        return Ok(());
    }
    let cell = f.grid().max_spacing();
    if f.grid().domain().distance_to_point(x) < cell {
        return Err(Error::TooCloseToSupport(format!(
            "height-0 point {:?} is within one cell of the data support",
            x.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

/// `u(x, z)` at one point.
pub fn extension_at<T: Real>(f: &GridFn<T>, x: &[T], z: T) -> Result<T> {
    check_dims(f, x.len())?;
    check_clearance(f, x, z)?;
    Ok(extension_unchecked(f, x, z))
}

fn extension_unchecked<T: Real>(f: &GridFn<T>, x: &[T], z: T) -> T {
    let n = x.len();
    let grid = f.grid();
    let w = grid.weights();
    let mut acc = T::zero();
    for (k, fk) in f.values().iter().enumerate() {
        let r2 = horizontal_r2(x, grid.node(k)) + z * z;
        acc += w[k] * *fk * kernel(n, r2);
    }
    acc
}

/// A first derivative of `u` at one point, by differentiating the kernel.
pub fn derivative_at<T: Real>(f: &GridFn<T>, direction: Direction, x: &[T], z: T) -> Result<T> {
    check_dims(f, x.len())?;
    let n = x.len();
    if let Direction::Horizontal(axis) = direction {
        if axis >= n {
            return Err(Error::InvalidAxis { axis, dim: n });
        }
    }
    check_clearance(f, x, z)?;
    Ok(derivative_unchecked(f, direction, x, z))
}

fn derivative_unchecked<T: Real>(f: &GridFn<T>, direction: Direction, x: &[T], z: T) -> T {
    let n = x.len();
    let grid = f.grid();
    let w = grid.weights();
    let mut acc = T::zero();
    for (k, fk) in f.values().iter().enumerate() {
        let y = grid.node(k);
        let kv = match direction {
            // at height zero this is exactly the transform kernel
            Direction::Horizontal(axis) if z == T::zero() => riesz_kernel(axis, x, y),
            Direction::Horizontal(axis) => {
                (x[axis] - y[axis]) / pow_n_plus_1(n, horizontal_r2(x, y) + z * z)
            }
            Direction::Vertical => z / pow_n_plus_1(n, horizontal_r2(x, y) + z * z),
        };
        acc += w[k] * kv * *fk;
    }
    acc
}

/// Evaluates the extension of `f` on every lattice node.
pub fn extend_neumann<T: Real>(f: &GridFn<T>, lattice: &Lattice<T>) -> Result<ExtensionField<T>> {
    let n = lattice.horizontal_dim();
    check_dims(f, n)?;
    let mut values = DVector::zeros(lattice.len());
    for k in 0..lattice.len() {
        let p = lattice.node(k);
        check_clearance(f, &p[..n], p[n])?;
        values[k] = extension_unchecked(f, &p[..n], p[n]);
    }
    Ok(ExtensionField {
        data: f.clone(),
        lattice: lattice.clone(),
        values,
        kappa: neumann_kappa(n),
    })
}

/// Derivative of the extension of `f` at height `delta`, sampled on the
/// nodes of `trace`.
///
/// At `delta = 0` the trace domain must be disjoint from the data support;
/// the horizontal trace is then the truncated transform itself.
pub fn derivative_trace<T: Real>(
    f: &GridFn<T>,
    direction: Direction,
    delta: T,
    trace: &Arc<Grid<T>>,
) -> Result<GridFn<T>> {
    if delta < T::zero() {
        return Err(Error::InvalidParameter("trace height must be nonnegative".into()));
    }
    let n = trace.dim();
    check_dims(f, n)?;
    if let Direction::Horizontal(axis) = direction {
        if axis >= n {
            return Err(Error::InvalidAxis { axis, dim: n });
        }
    }
    if delta == T::zero() && !trace.domain().closures_disjoint(f.grid().domain()) {
        return Err(Error::TooCloseToSupport(
            "a height-0 trace needs a domain disjoint from the data support".into(),
        ));
    }
    let values = DVector::from_iterator(
        trace.len(),
        trace
            .nodes()
            .map(|x| derivative_unchecked(f, direction, x, delta)),
    );
    GridFn::new(Arc::clone(trace), values)
}

impl<T: Real> ExtensionField<T> {
    pub fn data(&self) -> &GridFn<T> {
        &self.data
    }

    pub fn lattice(&self) -> &Lattice<T> {
        &self.lattice
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    /// `κ_n`, so that `∂_z u(·, 0+) / κ_n` recovers the data.
    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn derivative_trace(
        &self,
        direction: Direction,
        delta: T,
        trace: &Arc<Grid<T>>,
    ) -> Result<GridFn<T>> {
        derivative_trace(&self.data, direction, delta, trace)
    }

    /// Largest 5-point (7-point in 3-D) discrete Laplacian over interior nodes.
    pub fn harmonicity_residual(&self) -> Result<T> {
        let h = self.lattice.uniform_spacing().ok_or_else(|| {
            Error::InvalidResolution("harmonicity residual needs an equispaced lattice".into())
        })?;
        let counts = self.lattice.counts();
        if counts.iter().any(|&c| c < 3) {
            return Err(Error::InvalidResolution(
                "harmonicity residual needs at least 3 nodes per axis".into(),
            ));
        }
        let mut strides = vec![1usize; counts.len()];
        for a in 1..counts.len() {
            strides[a] = strides[a - 1] * counts[a - 1];
        }
        let u = self.values.as_slice();
        let two = T::lit(2.0);
        let mut worst = T::zero();
        'nodes: for k in 0..u.len() {
            let mut lap = T::zero();
            for a in 0..counts.len() {
                let i = (k / strides[a]) % counts[a];
                if i == 0 || i + 1 == counts[a] {
                    continue 'nodes;
                }
                lap += (u[k + strides[a]] - two * u[k] + u[k - strides[a]]) / (h[a] * h[a]);
            }
            worst = worst.max(lap.abs());
        }
        Ok(worst)
    }

    /// CSV with one column per coordinate (`x1, ..., z`) and the value `u`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.lattice.horizontal_dim();
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=n).map(|a| format!("x{a}")).collect();
        header.push("z".into());
        header.push("u".into());
        w.write_record(&header)?;
        for k in 0..self.lattice.len() {
            let mut rec: Vec<String> = self
                .lattice
                .node(k)
                .iter()
                .map(|v| format!("{}", v.to_f64_lossy()))
                .collect();
            rec.push(format!("{}", self.values[k].to_f64_lossy()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
