//! Generalized Riesz transforms for `L = ∂_i a^{ij}(x') ∂_j`.
//!
//! The extension problem `Lu + ∂_z² u = 0` in `{z > 0}` with Neumann data on
//! the bottom face is truncated to a box and discretized by a conservative
//! finite-difference scheme: cell-centered in the horizontal variables,
//! node-based in `z` (node 0 on the bottom face), homogeneous Dirichlet on the
//! sides and on the top. The vertical operator is diagonalized once, which
//! leaves one sparse SPD horizontal system per vertical mode.
//!
//! The Neumann condition is `∂_z u = κ_n f`, so that with `a = I` the
//! horizontal derivatives of the bottom trace reproduce the kernel-based
//! Riesz operators of [`crate::kernels`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{make_grid, BoxDomain, Grid, GridFn};
use crate::ops::{stack_components, OpKind, OpMatrix, StackedOp};
use crate::scalar::{neumann_kappa, Real};

/// Diagonal coefficient presets with declared ellipticity bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum CoefficientField {
    Identity,
    /// `(1 + amplitude · exp(−|x − center|² / width²)) I`.
    DiagonalBump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `a^{ii} = 1 + amplitude · (1 + sin(2π x_i / wavelength + i π/2)) / 2`.
    SmoothAnisotropic { amplitude: f64, wavelength: f64 },
}

impl CoefficientField {
    /// Declared `(λ, Λ)` with `λ|ξ|² ≤ a ξ·ξ ≤ Λ|ξ|²`.
    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        match self {
            CoefficientField::Identity => (1.0, 1.0),
            CoefficientField::DiagonalBump { amplitude, .. }
            | CoefficientField::SmoothAnisotropic { amplitude, .. } => {
                (1f64.min(1.0 + amplitude), 1f64.max(1.0 + amplitude))
            }
        }
    }

    /// Checks parameters for a horizontal dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Ellipticity(msg));
        match self {
            CoefficientField::Identity => Ok(()),
            CoefficientField::DiagonalBump {
                amplitude,
                center,
                width,
            } => {
                if !(amplitude.is_finite() && *amplitude > -1.0) {
                    return bad(format!("bump amplitude must exceed -1, got {amplitude}"));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return bad(format!("bump width must be positive, got {width}"));
                }
                if center.len() != dim || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "bump center needs {dim} finite coordinates, got {center:?}"
                    )));
                }
                Ok(())
            }
            CoefficientField::SmoothAnisotropic {
                amplitude,
                wavelength,
            } => {
                if !(amplitude.is_finite() && *amplitude > -1.0) {
                    return bad(format!("amplitude must exceed -1, got {amplitude}"));
                }
                if !(wavelength.is_finite() && *wavelength > 0.0) {
                    return bad(format!("wavelength must be positive, got {wavelength}"));
                }
                Ok(())
            }
        }
    }

    /// `a^{ii}(x)`; the off-diagonal entries of every preset vanish.
    pub fn diagonal<T: Real>(&self, x: &[T]) -> Vec<T> {
        match self {
            CoefficientField::Identity => vec![T::one(); x.len()],
            CoefficientField::DiagonalBump {
                amplitude,
                center,
                width,
            } => {
                let r2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a.to_f64_lossy() - c).powi(2))
                    .sum();
                let v = 1.0 + amplitude * (-r2 / (width * width)).exp();
                vec![T::lit(v); x.len()]
            }
            CoefficientField::SmoothAnisotropic {
                amplitude,
                wavelength,
            } => x
                .iter()
                .enumerate()
                .map(|(i, xi)| {
                    let phase = 2.0 * std::f64::consts::PI * xi.to_f64_lossy() / wavelength
                        + i as f64 * std::f64::consts::FRAC_PI_2;
                    T::lit(1.0 + amplitude * (1.0 + phase.sin()) / 2.0)
                })
                .collect(),
        }
    }

    /// The full symmetric matrix `a^{ij}(x)`.
    pub fn matrix<T: Real>(&self, x: &[T]) -> DMatrix<T> {
        DMatrix::from_diagonal(&DVector::from_vec(self.diagonal(x)))
    }
}

/// Truncated box `lo + [0, N h]^d × [0, layers · h]`, one spacing `h` for
/// every direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdBox<T> {
    lo: Vec<T>,
    cells: usize,
    layers: usize,
    spacing: T,
}

fn integral<T: Real>(v: T, what: &str) -> Result<usize> {
    let r = v.round();
    if !(r >= T::one()) || (v - r).abs() > T::lit(1e-9) * r {
        return Err(Error::InvalidResolution(format!(
            "{what} must be a positive whole number of cells, got {}",
            v.to_f64_lossy()
        )));
    }
    Ok(r.to_f64_lossy() as usize)
}

impl<T: Real> FdBox<T> {
    pub fn new(lo: Vec<T>, cells: usize, layers: usize, spacing: T) -> Result<Self> {
        if lo.is_empty() || lo.len() > 2 {
            return Err(Error::InvalidDomain(format!(
                "the FD extension supports 1 or 2 horizontal dimensions, got {}",
                lo.len()
            )));
        }
        if !(spacing > T::zero()) || lo.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidResolution("spacing must be positive".into()));
        }
        if cells < 3 || layers < 3 {
            return Err(Error::InvalidResolution(format!(
                "need at least 3 cells and 3 layers, got {cells} and {layers}"
            )));
        }
        Ok(Self {
            lo,
            cells,
            layers,
            spacing,
        })
    }

    /// Box `center ± half_width` horizontally, height `height`.
    pub fn centered(center: &[T], half_width: T, height: T, spacing: T) -> Result<Self> {
        if !(spacing > T::zero()) {
            return Err(Error::InvalidResolution("spacing must be positive".into()));
        }
        let cells = integral(T::lit(2.0) * half_width / spacing, "box width")?;
        let layers = integral(height / spacing, "box height")?;
        Self::new(
            center.iter().map(|c| *c - half_width).collect(),
            cells,
            layers,
            spacing,
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> Vec<T> {
        let w = T::count(self.cells) * self.spacing;
        self.lo.iter().map(|l| *l + w).collect()
    }

    pub fn height(&self) -> T {
        T::count(self.layers) * self.spacing
    }

    /// Number of horizontal cells.
    pub fn horizontal_len(&self) -> usize {
        self.cells.pow(self.dim() as u32)
    }

    /// Center of horizontal cell `p` (axis 0 fastest).
    pub fn cell_center(&self, p: usize) -> Vec<T> {
        let mut rest = p;
        (0..self.dim())
            .map(|a| {
                let i = rest % self.cells;
                rest /= self.cells;
                self.lo[a] + (T::count(i) + T::lit(0.5)) * self.spacing
            })
            .collect()
    }

    /// Grid whose cells are exactly the box cells inside `domain`.
    pub fn cell_grid(&self, domain: &BoxDomain<T>) -> Result<Grid<T>> {
        if domain.dim() != self.dim() {
            return Err(Error::GridMismatch(format!(
                "domain is {}-dimensional, box {}-dimensional",
                domain.dim(),
                self.dim()
            )));
        }
        let mut counts = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let start = (domain.lo()[a] - self.lo[a]) / self.spacing;
            let end = (domain.hi()[a] - self.lo[a]) / self.spacing;
            let aligned = |v: T| (v - v.round()).abs() <= T::lit(1e-9) * (T::one() + v.abs());
            if !aligned(start) || !aligned(end) {
                return Err(Error::GridMismatch(format!(
                    "domain faces on axis {a} are not box cell faces"
                )));
            }
            counts.push(integral(end - start, "domain width")?);
        }
        make_grid(domain.clone(), &counts)
    }

    /// Box cell index of every node of `grid`, which must be a cell grid.
    fn cell_indices(&self, grid: &Grid<T>) -> Result<Vec<usize>> {
        if grid.dim() != self.dim() {
            return Err(Error::GridMismatch("grid and box dimensions differ".into()));
        }
        let tol = T::lit(1e-6);
        if grid
            .spacing()
            .iter()
            .any(|s| (*s - self.spacing).abs() > tol * self.spacing)
        {
            return Err(Error::GridMismatch(
                "grid spacing differs from the box spacing".into(),
            ));
        }
        grid.nodes()
            .map(|x| {
                let mut p = 0;
                let mut stride = 1;
                for (a, xa) in x.iter().enumerate() {
                    let t = (*xa - self.lo[a]) / self.spacing - T::lit(0.5);
                    let r = t.round();
                    if (t - r).abs() > tol || r < T::zero() || r >= T::count(self.cells) {
                        return Err(Error::GridMismatch(
                            "grid nodes are not box cell centers".into(),
                        ));
                    }
                    p += (r.to_f64_lossy() as usize) * stride;
                    stride *= self.cells;
                }
                Ok(p)
            })
            .collect()
    }

    fn margin(&self, domain: &BoxDomain<T>) -> T {
        let hi = self.hi();
        (0..self.dim())
            .map(|a| (domain.lo()[a] - self.lo[a]).min(hi[a] - domain.hi()[a]))
            .fold(T::lit(f64::INFINITY), |m, v| m.min(v))
    }
}

/// Horizontal flux-form operator and the diagonalized vertical operator.
struct Discretization<T: Real> {
    fd: FdBox<T>,
    horizontal: CscMatrix<T>,
    diag_slots: Vec<usize>,
    /// Eigenvalues of `W^{-1/2} S W^{-1/2}`.
    modes: Vec<T>,
    /// The matching eigenvectors, one per column.
    vectors: DMatrix<T>,
}

impl<T: Real> Discretization<T> {
    fn new(a: &CoefficientField, fd: &FdBox<T>) -> Result<Self> {
        let d = fd.dim();
        a.validate(d)?;
        let (lam, _) = a.ellipticity_bounds();
        let n = fd.cells;
        let h = fd.spacing;
        let h2 = h * h;
        let len = fd.horizontal_len();
        let mut coo = CooMatrix::new(len, len);
        let floor = T::lit(lam * (1.0 - 1e-12));
        for p in 0..len {
            let x = fd.cell_center(p);
            let mut diag = T::zero();
            let mut stride = 1;
            for axis in 0..d {
                let i = (p / stride) % n;
                for side in [-1i32, 1] {
                    let mut face = x.clone();
                    face[axis] += T::lit(0.5 * side as f64) * h;
                    let coef = a.diagonal(&face)[axis];
                    if !(coef >= floor) {
                        return Err(Error::Ellipticity(format!(
                            "coefficient {} below the declared bound {lam}",
                            coef.to_f64_lossy()
                        )));
                    }
                    let c = coef / h2;
                    let inside = if side < 0 { i > 0 } else { i + 1 < n };
                    if inside {
                        diag += c;
                        let q = if side < 0 { p - stride } else { p + stride };
                        coo.push(p, q, -c);
                    } else {
                        // Dirichlet face: ghost value −u_p
                        diag += T::lit(2.0) * c;
                    }
                }
                stride *= n;
            }
            coo.push(p, p, diag);
        }
        let horizontal = CscMatrix::from(&coo);
        let mut diag_slots = vec![0; len];
        let offsets = horizontal.col_offsets();
        let rows = horizontal.row_indices();
        for col in 0..len {
            for slot in offsets[col]..offsets[col + 1] {
                if rows[slot] == col {
                    diag_slots[col] = slot;
                }
            }
        }

        let nz = fd.layers;
        let mut s = DMatrix::zeros(nz, nz);
        for k in 0..nz {
            s[(k, k)] = T::lit(2.0) / h2;
            if k > 0 {
                s[(k, k - 1)] = -T::one() / h2;
            }
            if k + 1 < nz {
                s[(k, k + 1)] = -T::one() / h2;
            }
        }
        // bottom row of the Neumann equation, halved to make S symmetric
        s[(0, 0)] = T::one() / h2;
        let sqrt2 = T::lit(2.0).sqrt();
        for k in 0..nz {
            s[(0, k)] *= sqrt2;
            s[(k, 0)] *= sqrt2;
        }
        let eig = SymmetricEigen::try_new(s, T::default_epsilon(), 10_000).ok_or_else(|| {
            Error::LinearAlgebra("vertical eigendecomposition did not converge".into())
        })?;
        Ok(Self {
            fd: fd.clone(),
            horizontal,
            diag_slots,
            modes: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        })
    }

    /// Calls `visit(k, factor)` with the Cholesky factor of `A_h + λ_k`.
    fn for_each_mode(&self, mut visit: impl FnMut(usize, &CscCholesky<T>)) -> Result<()> {
        let base = self.horizontal.values();
        let mut values = base.to_vec();
        let mut chol: Option<CscCholesky<T>> = None;
        for (k, lam) in self.modes.iter().enumerate() {
            for &slot in &self.diag_slots {
                values[slot] = base[slot] + *lam;
            }
            let failed = |e| Error::LinearAlgebra(format!("Cholesky factorization failed: {e}"));
            match chol.as_mut() {
                Some(c) => c.refactor(&values).map_err(failed)?,
                None => {
                    let mut m = self.horizontal.clone();
                    m.values_mut().copy_from_slice(&values);
                    chol = Some(CscCholesky::factor(&m).map_err(failed)?);
                }
            }
            visit(k, chol.as_ref().expect("factor set above"));
        }
        Ok(())
    }

    /// Bottom-face values for every column of the embedded Neumann data `b`.
    fn bottom_responses(&self, b: &DMatrix<T>) -> Result<DMatrix<T>> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        self.for_each_mode(|k, chol| {
            let q0 = self.vectors[(0, k)];
            out += chol.solve(b) * (q0 * q0);
        })?;
        Ok(out * self.neumann_scale())
    }

    /// `−2κ/h`, from the halved and symmetrized bottom equation.
    fn neumann_scale(&self) -> T {
        -T::lit(2.0) * neumann_kappa::<T>(self.fd.dim()) / self.fd.spacing
    }

    /// `Σ_m ‖w_m A_h u_m + (S u)_m − rhs_m‖` relative to `‖rhs‖`, on the unsymmetrized system.
    fn relative_residual(&self, u: &DMatrix<T>, b: &DVector<T>) -> T {
        let h2 = self.fd.spacing * self.fd.spacing;
        let nz = self.fd.layers;
        let half = T::lit(0.5);
        let rhs0 = b * (half * self.neumann_scale());
        let mut num = T::zero();
        for m in 0..nz {
            let um = u.column(m).into_owned();
            let mut r = &self.horizontal * &um;
            if m == 0 {
                r *= half;
                r += (&um - u.column(1)) / h2;
                r -= &rhs0;
            } else {
                r += (&um * T::lit(2.0) - u.column(m - 1)) / h2;
                if m + 1 < nz {
                    r -= u.column(m + 1) / h2;
                }
            }
            num += r.norm_squared();
        }
        let den = rhs0.norm();
        if den == T::zero() {
            num.sqrt()
        } else {
            num.sqrt() / den
        }
    }
}

/// Discrete solution of the truncated extension problem.
#[derive(Debug, Clone)]
pub struct FdExtensionSolution<T: Real> {
    fd: FdBox<T>,
    /// Column `m` holds layer `z = m h`.
    layers: DMatrix<T>,
    residual: T,
}

impl<T: Real> FdExtensionSolution<T> {
    pub fn fd_box(&self) -> &FdBox<T> {
        &self.fd
    }

    /// Values on layer `m` (height `m h`), axis 0 fastest.
    pub fn layer(&self, m: usize) -> DVector<T> {
        self.layers.column(m).into_owned()
    }

    pub fn layers(&self) -> &DMatrix<T> {
        &self.layers
    }

    /// Relative residual of the discrete system.
    pub fn residual(&self) -> T {
        self.residual
    }

    /// Central difference of the bottom trace along `axis`, sampled on a cell grid.
    pub fn bottom_derivative(&self, axis: usize, target: &Arc<Grid<T>>) -> Result<GridFn<T>> {
        let bottom = self.layers.column(0);
        let cols = derivative_rows(&self.fd, axis, target)?;
        let values: Vec<T> = cols
            .iter()
            .map(|(plus, minus)| (bottom[*plus] - bottom[*minus]) / (T::lit(2.0) * self.fd.spacing))
            .collect();
        GridFn::from_vec(Arc::clone(target), values)
    }
}

/// `(p + e_axis, p − e_axis)` for every target cell `p`.
fn derivative_rows<T: Real>(
    fd: &FdBox<T>,
    axis: usize,
    target: &Grid<T>,
) -> Result<Vec<(usize, usize)>> {
    if axis >= fd.dim() {
        return Err(Error::InvalidAxis {
            axis,
            dim: fd.dim(),
        });
    }
    let stride = fd.cells.pow(axis as u32);
    fd.cell_indices(target)?
        .into_iter()
        .map(|p| {
            let i = (p / stride) % fd.cells;
            if i == 0 || i + 1 == fd.cells {
                return Err(Error::InvalidDomain(
                    "target cells touch the box side".into(),
                ));
            }
            Ok((p + stride, p - stride))
        })
        .collect()
}

fn check_margin<T: Real>(fd: &FdBox<T>, domain: &BoxDomain<T>, need: T, what: &str) -> Result<()> {
    let m = fd.margin(domain);
    if m < need * (T::one() - T::lit(1e-12)) {
        return Err(Error::InvalidDomain(format!(
            "{what} is {} from the box side, needs {}",
            m.to_f64_lossy(),
            need.to_f64_lossy()
        )));
    }
    Ok(())
}

fn relative_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::default_epsilon() * T::lit(1e4))
}

/// Solves the truncated extension problem with Neumann data `f` on a cell grid.
///
/// The box must leave a margin of at least twice the diameter of `f`'s domain.
pub fn solve_extension_fd<T: Real>(
    a: &CoefficientField,
    f: &GridFn<T>,
    fd: &FdBox<T>,
) -> Result<FdExtensionSolution<T>> {
    let domain = f.grid().domain();
    check_margin(fd, domain, T::lit(2.0) * domain.diameter(), "source domain")?;
    let cells = fd.cell_indices(f.grid())?;
    let disc = Discretization::new(a, fd)?;
    let mut b = DVector::zeros(fd.horizontal_len());
    for (p, v) in cells.iter().zip(f.values().iter()) {
        b[*p] = *v;
    }
    // v_m = Σ_k Q[m,k] y_k, u_m = v_m / sqrt(w_m)
    let nz = fd.layers;
    let mut layers = DMatrix::zeros(b.len(), nz);
    let scale = disc.neumann_scale() / T::lit(2.0).sqrt();
    disc.for_each_mode(|k, chol| {
        let y = chol.solve(&b);
        let y = y.column(0);
        for m in 0..nz {
            let c = disc.vectors[(m, k)] * disc.vectors[(0, k)] * scale;
            let mut col = layers.column_mut(m);
            col.axpy(c, &y, T::one());
        }
    })?;
    let sqrt2 = T::lit(2.0).sqrt();
    let mut col0 = layers.column_mut(0);
    col0 *= sqrt2;
    let residual = disc.relative_residual(&layers, &b);
    if !(residual <= relative_tolerance()) {
        return Err(Error::NotConverged {
            iterations: nz,
            residual: residual.to_f64_lossy(),
            last_iterate: layers.column(0).iter().map(|v| v.to_f64_lossy()).collect(),
        });
    }
    Ok(FdExtensionSolution {
        fd: fd.clone(),
        layers,
        residual,
    })
}

/// All generalized Riesz components `f ↦ ∂_j u(·, 0)` from `source` to `target`.
///
/// Column `k` is the response to the unit value on source cell `k`, so that
/// with `a = I` the entries approximate the quadrature entries of
/// [`crate::assemble_truncated_riesz`].
pub fn assemble_generalized_stack<T: Real>(
    a: &CoefficientField,
    source: &Arc<Grid<T>>,
    target: &Arc<Grid<T>>,
    fd: &FdBox<T>,
) -> Result<StackedOp<T>> {
    let ops = assemble_axes(a, &(0..fd.dim()).collect::<Vec<_>>(), source, target, fd)?;
    stack_components(ops)
}

/// The `axis`-th generalized Riesz operator.
pub fn assemble_generalized_riesz<T: Real>(
    a: &CoefficientField,
    axis: usize,
    source: &Arc<Grid<T>>,
    target: &Arc<Grid<T>>,
    fd: &FdBox<T>,
) -> Result<OpMatrix<T>> {
    Ok(assemble_axes(a, &[axis], source, target, fd)?.remove(0))
}

fn assemble_axes<T: Real>(
    a: &CoefficientField,
    axes: &[usize],
    source: &Arc<Grid<T>>,
    target: &Arc<Grid<T>>,
    fd: &FdBox<T>,
) -> Result<Vec<OpMatrix<T>>> {
    if source.dim() != target.dim() {
        return Err(Error::GridMismatch("source and target dimensions differ".into()));
    }
    if !source.domain().closures_disjoint(target.domain()) {
        return Err(Error::Disjointness(
            "source and target closures must be disjoint".into(),
        ));
    }
    let src = source.domain();
    check_margin(fd, src, T::lit(2.0) * src.diameter(), "source domain")?;
    check_margin(fd, target.domain(), fd.spacing, "target domain")?;
    let rows: Vec<Vec<(usize, usize)>> = axes
        .iter()
        .map(|ax| derivative_rows(fd, *ax, target))
        .collect::<Result<_>>()?;
    let cells = fd.cell_indices(source)?;
    let disc = Discretization::new(a, fd)?;
    let mut b = DMatrix::zeros(fd.horizontal_len(), cells.len());
    for (k, p) in cells.iter().enumerate() {
        b[(*p, k)] = T::one();
    }
    let bottom = disc.bottom_responses(&b)?;
    let two_h = T::lit(2.0) * fd.spacing;
    axes.iter()
        .zip(rows)
        .map(|(axis, rows)| {
            let m = DMatrix::from_fn(rows.len(), cells.len(), |r, c| {
                let (plus, minus) = rows[r];
                (bottom[(plus, c)] - bottom[(minus, c)]) / two_h
            });
            OpMatrix::new(
                m,
                Arc::clone(source),
                Arc::clone(target),
                OpKind::Generalized { axis: *axis },
            )
        })
        .collect()
}
