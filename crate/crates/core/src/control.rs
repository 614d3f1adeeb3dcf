//! Approximate preimages from the nonsmooth functional
//! `G_ε(g) = ½‖Ag‖² + ε‖g‖ − ⟨h, g⟩`.
//!
//! `A` maps the `g`-space (where `h` lives) to the observation space. The
//! control is `f = −Ag` and the approximation of `h` it produces is
//! `−A* f = A*A ḡ`; at the minimizer `‖A*A ḡ − h‖ = ε` whenever `ε < ‖h‖`.
//!
//! Two independent solvers are provided: accelerated proximal gradient
//! ([`minimize_prox`]) and a root find on the Tikhonov parameter in the
//! singular basis ([`minimize_spectral_root`]).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{make_grid, sobolev_norms, weighted_dot, Grid, GridFn, IntervalDomain};
use crate::ops::{concat_blocks, split_blocks, WeightedOperator};
use crate::scalar::Real;
use crate::spectral::{linear_fit, SpectralData};
use crate::stability::select_sigma;

/// Operator, target and penalty of one minimization.
pub struct ControlProblem<'a, T: Real, O: WeightedOperator<T> + ?Sized> {
    op: &'a O,
    h: DVector<T>,
    eps: T,
    sw: DVector<T>,
    tw: DVector<T>,
}

impl<'a, T: Real, O: WeightedOperator<T> + ?Sized> ControlProblem<'a, T, O> {
    /// `h` is given block by block on the operator's source grids.
    pub fn new(op: &'a O, h: &[GridFn<T>], eps: T) -> Result<Self> {
        let grids = op.source_grids();
        if h.len() != grids.len() || h.iter().zip(&grids).any(|(f, g)| !f.is_on(g)) {
            return Err(Error::GridMismatch(
                "the target h must live on the operator's source grids".into(),
            ));
        }
        Self::from_raw(op, concat_blocks(h), eps)
    }

    pub fn from_raw(op: &'a O, h: DVector<T>, eps: T) -> Result<Self> {
        if !(eps > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "penalty ε must be positive, got {}",
                eps.to_f64_lossy()
            )));
        }
        let sw = op.source_weights();
        if h.len() != sw.len() {
            return Err(Error::GridMismatch(format!(
                "h has {} samples, the source space {}",
                h.len(),
                sw.len()
            )));
        }
        Ok(Self {
            op,
            h,
            eps,
            sw,
            tw: op.target_weights(),
        })
    }

    pub fn with_eps(&self, eps: T) -> Result<Self> {
        Self::from_raw(self.op, self.h.clone(), eps)
    }

    pub fn op(&self) -> &'a O {
        self.op
    }

    pub fn h(&self) -> &DVector<T> {
        &self.h
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn h_norm(&self) -> T {
        self.source_norm(&self.h)
    }

    fn source_norm(&self, v: &DVector<T>) -> T {
        self.source_dot(v, v).sqrt()
    }

    fn source_dot(&self, u: &DVector<T>, v: &DVector<T>) -> T {
        weighted_dot(self.sw.as_slice(), u.as_slice(), v.as_slice())
    }

    fn target_norm(&self, v: &DVector<T>) -> T {
        weighted_dot(self.tw.as_slice(), v.as_slice(), v.as_slice()).sqrt()
    }

    /// `½‖Ag‖² + ε‖g‖ − ⟨h, g⟩` for a raw source vector.
    pub fn functional_value(&self, g: &DVector<T>) -> Result<T> {
        if g.len() != self.h.len() {
            return Err(Error::GridMismatch(format!(
                "g has {} samples, the source space {}",
                g.len(),
                self.h.len()
            )));
        }
        let ag = self.target_norm(&self.op.apply_raw(g));
        Ok(ag * ag / T::lit(2.0) + self.eps * self.source_norm(g) - self.source_dot(&self.h, g))
    }

    fn gradient(&self, g: &DVector<T>) -> DVector<T> {
        self.op.adjoint_apply_raw(&self.op.apply_raw(g)) - &self.h
    }

    /// Radial shrinkage `max(0, 1 − t/‖z‖) z`.
    fn shrink(&self, z: DVector<T>, t: T) -> DVector<T> {
        let nz = self.source_norm(&z);
        if nz <= t {
            DVector::zeros(z.len())
        } else {
            z * ((nz - t) / nz)
        }
    }
}

/// [`ControlProblem::functional_value`] for grid functions.
pub fn functional_value<T: Real, O: WeightedOperator<T> + ?Sized>(
    p: &ControlProblem<'_, T, O>,
    g: &[GridFn<T>],
) -> Result<T> {
    let grids = p.op.source_grids();
    if g.len() != grids.len() || g.iter().zip(&grids).any(|(f, gr)| !f.is_on(gr)) {
        return Err(Error::GridMismatch("g must live on the operator's source grids".into()));
    }
    p.functional_value(&concat_blocks(g))
}

/// Controls `f = −Ag` and what they produce.
#[derive(Debug, Clone)]
pub struct Controls<T: Real> {
    /// One control per target block.
    pub f: Vec<GridFn<T>>,
    /// `−A* f`, the approximation of `h`.
    pub approximation: DVector<T>,
    /// `‖−A* f − h‖`.
    pub residual: T,
    /// `‖f‖` with Euclidean stacking over blocks.
    pub cost: T,
}

pub fn build_control<T: Real, O: WeightedOperator<T> + ?Sized>(
    p: &ControlProblem<'_, T, O>,
    g: &DVector<T>,
) -> Result<Controls<T>> {
    if g.len() != p.h.len() {
        return Err(Error::GridMismatch("g does not match the source space".into()));
    }
    let f = -p.op.apply_raw(g);
    controls_from_raw(p, f)
}

fn controls_from_raw<T: Real, O: WeightedOperator<T> + ?Sized>(
    p: &ControlProblem<'_, T, O>,
    f: DVector<T>,
) -> Result<Controls<T>> {
    let approximation = -p.op.adjoint_apply_raw(&f);
    let residual = p.source_norm(&(&approximation - &p.h));
    let cost = p.target_norm(&f);
    Ok(Controls {
        f: split_blocks(&p.op.target_grids(), &f)?,
        approximation,
        residual,
        cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Prox,
    SpectralRoot,
}

/// Scalar outcome of a solve, as written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSummary {
    pub solver: Solver,
    pub eps: f64,
    pub h_norm: f64,
    pub g_norm: f64,
    pub cost: f64,
    pub residual: f64,
    pub functional: f64,
    /// `functional + ½ cost²`; zero at the minimizer.
    pub energy_gap: f64,
    /// Tikhonov parameter `ε/‖ḡ‖`; absent when `ḡ = 0`.
    pub lambda: Option<f64>,
    pub iterations: usize,
    /// Prox: final gradient-mapping norm. Spectral root: `|φ(λ) − ε| / ε`.
    pub optimality_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ControlResult<T: Real> {
    g: DVector<T>,
    source_grids: Vec<Arc<Grid<T>>>,
    controls: Controls<T>,
    summary: ControlSummary,
}

impl<T: Real> ControlResult<T> {
    /// The minimizer as a raw source vector.
    pub fn g(&self) -> &DVector<T> {
        &self.g
    }

    pub fn g_fns(&self) -> Result<Vec<GridFn<T>>> {
        split_blocks(&self.source_grids, &self.g)
    }

    pub fn controls(&self) -> &Controls<T> {
        &self.controls
    }

    pub fn summary(&self) -> &ControlSummary {
        &self.summary
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, &self.summary)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Writes `ḡ` and the controls as `block,node,x1[,x2],value` tables.
    pub fn write_samples_csv(&self, g_path: &Path, f_path: &Path) -> Result<()> {
        write_blocks_csv(g_path, &self.g_fns()?)?;
        write_blocks_csv(f_path, &self.controls.f)
    }
}

/// CSV of grid functions: `block,node,x1,...,value`.
pub fn write_blocks_csv<T: Real>(path: &Path, blocks: &[GridFn<T>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = blocks.first().map_or(1, |b| b.grid().dim());
    let mut header = vec!["block".to_string(), "node".to_string()];
    header.extend((1..=dim).map(|a| format!("x{a}")));
    header.push("value".into());
    w.write_record(&header)?;
    for (b, f) in blocks.iter().enumerate() {
        for (k, (x, v)) in f.grid().nodes().zip(f.values().iter()).enumerate() {
            let mut rec = vec![b.to_string(), k.to_string()];
            rec.extend(x.iter().map(|c| format!("{}", c.to_f64_lossy())));
            rec.push(format!("{}", v.to_f64_lossy()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn summarize<T: Real, O: WeightedOperator<T> + ?Sized>(
    p: &ControlProblem<'_, T, O>,
    solver: Solver,
    g: &DVector<T>,
    controls: &Controls<T>,
    functional: T,
    iterations: usize,
    optimality_residual: f64,
) -> ControlSummary {
    let g_norm = p.source_norm(g).to_f64_lossy();
    let cost = controls.cost.to_f64_lossy();
    let functional = functional.to_f64_lossy();
    ControlSummary {
        solver,
        eps: p.eps.to_f64_lossy(),
        h_norm: p.h_norm().to_f64_lossy(),
        g_norm,
        cost,
        residual: controls.residual.to_f64_lossy(),
        functional,
        energy_gap: functional + 0.5 * cost * cost,
        lambda: (g_norm > 0.0).then(|| p.eps.to_f64_lossy() / g_norm),
        iterations,
        optimality_residual,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProxOptions {
    /// Stop when the gradient mapping is at most `tol (1 + ‖h‖)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Upper bound for `‖A‖²`; estimated by power iteration when absent.
    pub lipschitz: Option<f64>,
}

impl Default for ProxOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
            lipschitz: None,
        }
    }
}

/// Power-iteration estimate of `‖A‖²`, inflated by 1%.
pub fn lipschitz_estimate<T: Real, O: WeightedOperator<T> + ?Sized>(op: &O) -> T {
    let sw = op.source_weights();
    let n = sw.len();
    let norm = |v: &DVector<T>| weighted_dot(sw.as_slice(), v.as_slice(), v.as_slice()).sqrt();
    // a slightly uneven start avoids orthogonality to the top vector by symmetry
    let mut v = DVector::from_fn(n, |k, _| T::one() + T::count(k % 7) / T::lit(10.0));
    let nv = norm(&v);
    v /= nv;
    let mut lam = T::zero();
    for _ in 0..500 {
        let w = op.adjoint_apply_raw(&op.apply_raw(&v));
        let next = weighted_dot(sw.as_slice(), v.as_slice(), w.as_slice());
        let nw = norm(&w);
        if nw == T::zero() {
            return T::one();
        }
        v = w / nw;
        let done = (next - lam).abs() <= T::lit(1e-13) * next;
        lam = next;
        if done {
            break;
        }
    }
    lam * T::lit(1.01)
}

/// Accelerated proximal gradient (FISTA with gradient-based restart).
pub fn minimize_prox<T: Real, O: WeightedOperator<T> + ?Sized>(
    p: &ControlProblem<'_, T, O>,
    opts: &ProxOptions,
) -> Result<ControlResult<T>> {
    let lip = match opts.lipschitz {
        Some(l) if l > 0.0 => T::lit(l),
        Some(l) => {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz bound must be positive, got {l}"
            )))
        }
        None => lipschitz_estimate(p.op),
    };
    let step = T::one() / lip;
    let thresh = step * p.eps;
    let stop = T::lit(opts.tol) * (T::one() + p.h_norm());
    let n = p.h.len();
    let mut g = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    let mut t = T::one();
    let mut res = T::zero();
    for it in 1..=opts.max_iter {
        let z = &y - p.gradient(&y) * step;
        let next = p.shrink(z, thresh);
        res = p.source_norm(&(&next - &y)) / step;
        if res <= stop {
            let controls = build_control(p, &next)?;
            let value = p.functional_value(&next)?;
            let summary = summarize(p, Solver::Prox, &next, &controls, value, it, res.to_f64_lossy());
            return Ok(ControlResult {
                g: next,
                source_grids: p.op.source_grids(),
                controls,
                summary,
            });
        }
        if p.source_dot(&(&y - &next), &(&next - &g)) > T::zero() {
            t = T::one();
            y = next.clone();
        } else {
            let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
            y = &next + (&next - &g) * ((t - T::one()) / t_next);
            t = t_next;
        }
        g = next;
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual: res.to_f64_lossy(),
        last_iterate: g.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

/// `(φ(λ)², dφ²/dλ)` with `φ(λ)² = Σ c_k² λ² / (σ_k² + λ)² + ‖h_⊥‖²`.
fn phi_sq<T: Real>(s2: &[T], c: &[T], perp_sq: T, lam: T) -> (T, T) {
    let two = T::lit(2.0);
    let mut v = perp_sq;
    let mut d = T::zero();
    for (sk2, ck) in s2.iter().zip(c) {
        let den = *sk2 + lam;
        let r = lam / den;
        v += *ck * *ck * r * r;
        d += two * *ck * *ck * lam * *sk2 / (den * den * den);
    }
    (v, d)
}

/// Solves `(A*A + λ) g = h` in the singular basis with `λ‖g(λ)‖ = ε`.
///
/// The controls are evaluated in the same basis (`f = −Σ σ_k ĝ_k u_k`), which
/// stays accurate when `‖ḡ‖` is many orders of magnitude larger than `‖f‖`.
/// The reported functional value is evaluated there as well.
pub fn minimize_spectral_root<T: Real, O: WeightedOperator<T> + ?Sized>(
    p: &ControlProblem<'_, T, O>,
    svd: &SpectralData<T>,
) -> Result<ControlResult<T>> {
    if svd.source_weights().len() != p.h.len() || svd.target_weights().len() != p.tw.len() {
        return Err(Error::GridMismatch(
            "singular data does not belong to this operator".into(),
        ));
    }
    let n = p.h.len();
    let h_norm = p.h_norm();
    if h_norm <= p.eps {
        let g = DVector::zeros(n);
        let controls = build_control(p, &g)?;
        let summary = summarize(p, Solver::SpectralRoot, &g, &controls, T::zero(), 0, 0.0);
        return Ok(ControlResult {
            g,
            source_grids: p.op.source_grids(),
            controls,
            summary,
        });
    }

    let c = svd.right_coefficients(&p.h);
    let perp = if svd.len() < n {
        Some(&p.h - svd.right_matrix() * &c)
    } else {
        None
    };
    let perp_sq = perp.as_ref().map_or(T::zero(), |v| p.source_dot(v, v));
    let eps2 = p.eps * p.eps;
    if perp_sq >= eps2 {
        return Err(Error::InvalidParameter(format!(
            "ε = {} is below the norm {} of the part of h the operator cannot reach",
            p.eps.to_f64_lossy(),
            perp_sq.sqrt().to_f64_lossy()
        )));
    }
    let s2: Vec<T> = svd.values().iter().map(|s| *s * *s).collect();
    let cs = c.as_slice();
    let f = |lam: T| phi_sq(&s2, cs, perp_sq, lam);

    // bracket: φ increases from ‖h_⊥‖ to ‖h‖
    let mut hi = s2.first().copied().unwrap_or_else(T::one).max(T::lit(1e-300));
    let mut iterations = 0usize;
    while f(hi).0 < eps2 {
        hi *= T::lit(10.0);
        iterations += 1;
    }
    let mut lo = hi;
    while f(lo).0 >= eps2 {
        lo /= T::lit(1e4);
        iterations += 1;
        if !(lo > T::zero() && (lo / T::lit(1e4)) > T::zero()) {
            return Err(Error::LinearAlgebra(
                "Tikhonov parameter underflows; ε is too small for this precision".into(),
            ));
        }
    }
    let mut lam = (lo * hi).sqrt();
    for _ in 0..400 {
        lam = (lo * hi).sqrt();
        iterations += 1;
        if f(lam).0 < eps2 {
            lo = lam;
        } else {
            hi = lam;
        }
        if hi / lo - T::one() <= T::lit(1e-15) {
            break;
        }
    }
    for _ in 0..8 {
        let (v, d) = f(lam);
        let err = v - eps2;
        if err.abs() <= T::lit(1e-15) * eps2 || d <= T::zero() {
            break;
        }
        let next = lam - err / d;
        if !(next > lo && next < hi) {
            break;
        }
        lam = next;
        iterations += 1;
    }
    let optimality = ((f(lam).0.sqrt() - p.eps) / p.eps).abs().to_f64_lossy();

    let ghat: DVector<T> =
        DVector::from_iterator(c.len(), s2.iter().zip(cs).map(|(sk2, ck)| *ck / (*sk2 + lam)));
    let mut g = svd.right_matrix() * &ghat;
    if let Some(v) = &perp {
        g += v / lam;
    }
    let fhat = DVector::from_iterator(
        ghat.len(),
        svd.values().iter().zip(ghat.iter()).map(|(s, x)| -*s * *x),
    );
    let f_raw = svd.left_matrix() * fhat;
    let controls = controls_from_raw(p, f_raw)?;

    let two = T::lit(2.0);
    let mut ag2 = T::zero();
    let mut g2 = perp_sq / (lam * lam);
    let mut hg = perp_sq / lam;
    for ((sk2, ck), x) in s2.iter().zip(cs).zip(ghat.iter()) {
        ag2 += *sk2 * *x * *x;
        g2 += *x * *x;
        hg += *ck * *x;
    }
    let value = ag2 / two + p.eps * g2.sqrt() - hg;
    let summary = summarize(
        p,
        Solver::SpectralRoot,
        &g,
        &controls,
        value,
        iterations,
        optimality,
    );
    Ok(ControlResult {
        g,
        source_grids: p.op.source_grids(),
        controls,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub eps: f64,
    pub cost: f64,
    pub residual: f64,
    pub lambda: Option<f64>,
    pub iterations: usize,
}

/// Least-squares `ln cost ≈ slope · ln(1/ε) + intercept` over rows with positive cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: Option<f64>,
}

/// Fitted `cost ≤ exp(C (1 + (‖h‖_{H¹}/ε)^σ)) ‖h‖_{L²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBound {
    #[serde(rename = "C")]
    pub c: f64,
    pub sigma: f64,
    pub h_l2: f64,
    pub h_h1: f64,
}

impl CostBound {
    pub fn log_bound(&self, eps: f64) -> f64 {
        self.c * (1.0 + (self.h_h1 / eps).powf(self.sigma))
    }

    pub fn dominates(&self, row: &CostRow) -> bool {
        row.cost <= 0.0 || (row.cost / self.h_l2).ln() <= self.log_bound(row.eps) * (1.0 + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub rows: Vec<CostRow>,
    pub holdout: Vec<CostRow>,
    /// Cost nonincreasing in ε over the training rows.
    pub monotone: bool,
    /// Every row (training and holdout) has residual at most ε up to 1e-6 relative.
    pub residuals_ok: bool,
    pub power_fit: Option<PowerFit>,
    pub bound: CostBound,
    pub bound_dominates_all: bool,
}

fn cost_row<T: Real, O: WeightedOperator<T> + ?Sized>(
    p: &ControlProblem<'_, T, O>,
    svd: &SpectralData<T>,
    index: usize,
    eps: T,
) -> Result<CostRow> {
    let row_err = |e| Error::Row {
        index,
        source: Box::new(e),
    };
    let q = p.with_eps(eps).map_err(row_err)?;
    let r = minimize_spectral_root(&q, svd).map_err(row_err)?;
    let s = r.summary();
    Ok(CostRow {
        eps: s.eps,
        cost: s.cost,
        residual: s.residual,
        lambda: s.lambda,
        iterations: s.iterations,
    })
}

/// One spectral-root solve per ε, plus the power-law and bound fits.
///
/// `eps` must be positive and strictly descending; `holdout` rows are solved
/// but not used for fitting.
pub fn cost_curve<T: Real, O: WeightedOperator<T> + ?Sized>(
    p: &ControlProblem<'_, T, O>,
    svd: &SpectralData<T>,
    h_h1: T,
    eps: &[T],
    holdout: &[T],
) -> Result<CostCurve> {
    if eps.is_empty() {
        return Err(Error::InsufficientData("empty ε list".into()));
    }
    if eps.iter().chain(holdout).any(|e| !(*e > T::zero())) {
        return Err(Error::InvalidParameter("every ε must be positive".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "ε list must be sorted in descending order".into(),
        ));
    }
    let rows = eps
        .iter()
        .enumerate()
        .map(|(i, e)| cost_row(p, svd, i, *e))
        .collect::<Result<Vec<_>>>()?;
    let held = holdout
        .iter()
        .enumerate()
        .map(|(i, e)| cost_row(p, svd, eps.len() + i, *e))
        .collect::<Result<Vec<_>>>()?;

    let monotone = rows.windows(2).all(|w| w[1].cost >= w[0].cost);
    let h_norm = p.h_norm().to_f64_lossy();
    let residuals_ok = rows.iter().chain(&held).all(|r| {
        if r.eps >= h_norm {
            r.cost == 0.0
        } else {
            r.residual <= r.eps * (1.0 + 1e-6)
        }
    });
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.cost > 0.0)
        .map(|r| ((1.0 / r.eps).ln(), r.cost.ln()))
        .collect();
    let power_fit = (pts.len() >= 2).then(|| {
        let (slope, intercept, r2) = linear_fit(&pts);
        PowerFit {
            slope,
            intercept,
            r2,
        }
    });
    let h_h1 = h_h1.to_f64_lossy();
    let (sigma, c) = select_sigma(|s| {
        rows.iter()
            .filter(|r| r.cost > 0.0)
            .map(|r| (r.cost / h_norm).ln() / (1.0 + (h_h1 / r.eps).powf(s)))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let bound = CostBound {
        c,
        sigma,
        h_l2: h_norm,
        h_h1,
    };
    let bound_dominates_all = rows.iter().chain(&held).all(|r| bound.dominates(r));
    Ok(CostCurve {
        rows,
        holdout: held,
        monotone,
        residuals_ok,
        power_fit,
        bound,
        bound_dominates_all,
    })
}

/// `h` extended to the fattened interval with cosine-squared collars.
#[derive(Debug, Clone)]
pub struct Taper<T: Real> {
    pub extended: GridFn<T>,
    /// Cells added on each side.
    pub collar_cells: usize,
    /// `‖h̃‖_{L²} / ‖h‖_{L²}` (1 for `h = 0`).
    pub c_l2: f64,
    /// `‖h̃‖_{H¹} / ‖h‖_{H¹}` (1 for `h = 0`).
    pub c_h1: f64,
}

/// Extends `h` from `J` to `(J.lo − m s, J.hi + m s)`, `m = ⌈h1/s⌉`, with
/// value `h(endpoint node) · cos²(π t / (2 h1))` at distance `t ≤ h1` from
/// `J` and zero beyond. The restriction to `J` is `h` itself.
pub fn taper_compact_support<T: Real>(h: &GridFn<T>, h1: T) -> Result<Taper<T>> {
    if !(h1 > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "fattening must be positive, got {}",
            h1.to_f64_lossy()
        )));
    }
    let grid = h.grid();
    if grid.dim() != 1 {
        return Err(Error::InvalidDomain("tapering is implemented on intervals".into()));
    }
    let s = grid.spacing()[0];
    let n = grid.len();
    let m = (h1 / s).ceil().to_f64_lossy() as usize;
    let lo = grid.domain().lo()[0];
    let hi = grid.domain().hi()[0];
    let ext = Arc::new(make_grid(
        IntervalDomain::new(lo - T::count(m) * s, hi + T::count(m) * s)?,
        &[n + 2 * m],
    )?);
    let half_pi = T::frac_pi_2();
    let ramp = |t: T| {
        if t >= h1 {
            T::zero()
        } else {
            let c = (half_pi * t / h1).cos();
            c * c
        }
    };
    let v = h.values();
    let mut values = vec![T::zero(); n + 2 * m];
    for i in 0..m {
        // node i sits (m - i - ½) s to the left of J
        let t = (T::count(m - i) - T::lit(0.5)) * s;
        values[i] = v[0] * ramp(t);
        values[n + 2 * m - 1 - i] = v[n - 1] * ramp(t);
    }
    values[m..m + n].copy_from_slice(v.as_slice());
    let extended = GridFn::from_vec(ext, values)?;
    let ratio = |a: T, b: T| {
        if b == T::zero() {
            1.0
        } else {
            (a / b).to_f64_lossy()
        }
    };
    let (c_l2, c_h1) = if n >= 3 {
        let before = sobolev_norms(h)?;
        let after = sobolev_norms(&extended)?;
        (ratio(after.l2, before.l2), ratio(after.h1, before.h1))
    } else {
        (ratio(extended.l2_norm(), h.l2_norm()), f64::NAN)
    };
    Ok(Taper {
        extended,
        collar_cells: m,
        c_l2,
        c_h1,
    })
}

/// Linear extrapolation of a 1-D grid function to both endpoints.
pub fn endpoint_values<T: Real>(h: &GridFn<T>) -> Option<(T, T)> {
    let v = h.values();
    let n = v.len();
    if h.grid().dim() != 1 || n < 2 {
        return None;
    }
    let half = T::lit(0.5);
    Some((
        v[0] - (v[1] - v[0]) * half,
        v[n - 1] + (v[n - 1] - v[n - 2]) * half,
    ))
}

/// True when `h` does not vanish at `∂J` (extrapolated endpoint values above
/// `rel · max|h|`).
pub fn needs_taper<T: Real>(h: &GridFn<T>, rel: f64) -> bool {
    let peak = h.values().amax();
    match endpoint_values(h) {
        Some((a, b)) => a.abs().max(b.abs()) > T::lit(rel) * peak,
        None => false,
    }
}
