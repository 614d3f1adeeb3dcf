//! Empirical fits of the stability and propagation-of-smallness inequalities.
//!
//! Every fit has the shape `log-ratio ≤ C · weight(σ)` over a fixed grid of
//! exponents. For each σ the smallest admissible `C` (never below 1) is
//! computed from the training rows; the σ with the smallest `C` wins, ties
//! going to the smaller σ.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{derivative_trace, Direction};
use crate::grid::{sobolev_norms, Grid, GridFn};
use crate::ops::{raw_norm, WeightedOperator};
use crate::scalar::{neumann_kappa, Real};
use crate::spectral::linear_fit;

/// Exponents tried by every fit: `0.25 · 2^{k/2}` for `k = 0..=10`, i.e. 0.25 to 8.
pub fn sigma_grid() -> Vec<f64> {
    (0..=10).map(|k| 0.25 * 2f64.powf(k as f64 / 2.0)).collect()
}

/// Relative slack allowed when re-checking a fitted inequality.
const CHECK_TOL: f64 = 1e-12;

/// Minimizes `c_of(σ)` over [`sigma_grid`]; returns `(σ, C)`.
pub fn select_sigma(c_of: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut best = (f64::NAN, f64::INFINITY);
    for s in sigma_grid() {
        let c = c_of(s).max(1.0);
        if c < best.1 {
            best = (s, c);
        }
    }
    best
}

/// Norms of one member of a stability family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilitySample {
    pub h1: f64,
    pub l2: f64,
    /// `‖Ag‖` in the observation space.
    pub data: f64,
}

impl StabilitySample {
    /// Oscillation ratio `‖g‖_{H¹} / ‖g‖_{L²}`.
    pub fn ratio(&self) -> f64 {
        self.h1 / self.l2
    }

    fn log_gap(&self) -> f64 {
        (self.h1 / self.data).ln()
    }
}

/// Fitted `‖g‖_{H¹} ≤ exp(C (1 + r^σ̃)) ‖Ag‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityFit {
    #[serde(rename = "C")]
    pub c: f64,
    pub sigma_tilde: f64,
    pub training: usize,
    /// Violations on the most recent holdout check.
    pub violations: usize,
}

pub fn stability_samples<T: Real, O: WeightedOperator<T> + ?Sized>(
    op: &O,
    family: &[GridFn<T>],
) -> Result<Vec<StabilitySample>> {
    let grids = op.source_grids();
    if grids.len() != 1 {
        return Err(Error::GridMismatch(
            "stability samples need an operator with a single source grid".into(),
        ));
    }
    let tw = op.target_weights();
    family
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if !g.is_on(&grids[0]) {
                return Err(Error::GridMismatch(format!(
                    "family member {i} is not on the operator's source grid"
                )));
            }
            let norms = sobolev_norms(g)?;
            if norms.l2 == T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "family member {i} has zero L2 norm"
                )));
            }
            let data = raw_norm(&tw, &op.apply_raw(g.values()));
            Ok(StabilitySample {
                h1: norms.h1.to_f64_lossy(),
                l2: norms.l2.to_f64_lossy(),
                data: data.to_f64_lossy(),
            })
        })
        .collect()
}

/// Fits `(C, σ̃)` so that every training sample satisfies the inequality.
pub fn fit_stability(samples: &[StabilitySample]) -> Result<StabilityFit> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty stability family".into()));
    }
    if let Some(i) = samples.iter().position(|s| s.data <= 0.0) {
        return Err(Error::InsufficientData(format!(
            "sample {i} is annihilated by the operator"
        )));
    }
    let (sigma, c) = select_sigma(|s| {
        samples
            .iter()
            .map(|x| x.log_gap() / (1.0 + x.ratio().powf(s)))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(StabilityFit {
        c,
        sigma_tilde: sigma,
        training: samples.len(),
        violations: 0,
    })
}

pub fn stability_fit<T: Real, O: WeightedOperator<T> + ?Sized>(
    op: &O,
    family: &[GridFn<T>],
) -> Result<StabilityFit> {
    fit_stability(&stability_samples(op, family)?)
}

impl StabilityFit {
    /// `C (1 + r^σ̃)`, the admissible value of `ln(‖g‖_{H¹}/‖Ag‖)`.
    pub fn log_bound(&self, s: &StabilitySample) -> f64 {
        self.c * (1.0 + s.ratio().powf(self.sigma_tilde))
    }

    pub fn holds(&self, s: &StabilitySample) -> bool {
        s.data > 0.0 && s.log_gap() <= self.log_bound(s) * (1.0 + CHECK_TOL)
    }

    /// Counts holdout violations and records the count on the fit.
    pub fn validate(&mut self, holdout: &[StabilitySample]) -> usize {
        self.violations = holdout.iter().filter(|s| !self.holds(s)).count();
        self.violations
    }
}

/// One height of the smallness probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessRecord {
    pub delta: f64,
    /// `‖∂_z u(·, δ) / κ‖` over the data domain.
    pub trace: f64,
    /// Norm of the transform of the data on the observation domain.
    pub data: f64,
    pub source: f64,
}

/// Trace, data and source norms of the extension of `g` at each height.
///
/// The vertical trace is divided by `κ_n`, so it tends to `‖g‖` as `δ → 0`.
pub fn smallness_probe<T: Real>(
    g: &GridFn<T>,
    observation: &Arc<Grid<T>>,
    deltas: &[T],
) -> Result<Vec<SmallnessRecord>> {
    if !observation
        .domain()
        .closures_disjoint(g.grid().domain())
    {
        return Err(Error::Disjointness(
            "the observation domain must be disjoint from the data domain".into(),
        ));
    }
    if let Some(d) = deltas.iter().find(|d| **d <= T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "heights must be positive, got {}",
            d.to_f64_lossy()
        )));
    }
    let n = g.grid().dim();
    let kappa: T = neumann_kappa(n);
    let data = if n == 1 {
        derivative_trace(g, Direction::Horizontal(0), T::zero(), observation)?.l2_norm()
    } else {
        let mut acc = T::zero();
        for axis in 0..n {
            let c = derivative_trace(g, Direction::Horizontal(axis), T::zero(), observation)?
                .l2_norm();
            acc += c * c;
        }
        acc.sqrt()
    };
    let source = g.l2_norm();
    deltas
        .iter()
        .map(|&d| {
            let t = derivative_trace(g, Direction::Vertical, d, g.grid())?;
            Ok(SmallnessRecord {
                delta: d.to_f64_lossy(),
                trace: (t.l2_norm() / kappa).to_f64_lossy(),
                data: data.to_f64_lossy(),
                source: source.to_f64_lossy(),
            })
        })
        .collect()
}

/// Fitted `trace ≤ exp(C (|ln ε| + 1) / δ^σ) · data + (ε/2) · source`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessFit {
    #[serde(rename = "C")]
    pub c: f64,
    pub sigma: f64,
    pub training: usize,
    pub violations: usize,
}

/// Log of what the exponential factor has to cover, or `None` if the
/// `ε/2` slack alone already bounds the trace.
fn smallness_need(eps: f64, r: &SmallnessRecord) -> Option<f64> {
    let rest = r.trace - 0.5 * eps * r.source;
    if rest <= 0.0 {
        None
    } else if r.data <= 0.0 {
        Some(f64::INFINITY)
    } else {
        Some((rest / r.data).ln())
    }
}

pub fn fit_smallness(rows: &[(f64, SmallnessRecord)]) -> Result<SmallnessFit> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no smallness records".into()));
    }
    if let Some((eps, _)) = rows.iter().find(|(e, _)| *e <= 0.0 || *e >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ε must lie in (0, 1), got {eps}"
        )));
    }
    if rows
        .iter()
        .any(|(e, r)| smallness_need(*e, r) == Some(f64::INFINITY))
    {
        return Err(Error::InsufficientData(
            "a record has a positive trace but vanishing data".into(),
        ));
    }
    let (sigma, c) = select_sigma(|s| {
        rows.iter()
            .filter_map(|(e, r)| {
                smallness_need(*e, r).map(|need| need * r.delta.powf(s) / (e.ln().abs() + 1.0))
            })
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(SmallnessFit {
        c,
        sigma,
        training: rows.len(),
        violations: 0,
    })
}

impl SmallnessFit {
    pub fn holds(&self, eps: f64, r: &SmallnessRecord) -> bool {
        match smallness_need(eps, r) {
            None => true,
            Some(need) => {
                need <= self.c * (eps.ln().abs() + 1.0) / r.delta.powf(self.sigma) * (1.0 + CHECK_TOL)
            }
        }
    }

    pub fn validate(&mut self, holdout: &[(f64, SmallnessRecord)]) -> usize {
        self.violations = holdout.iter().filter(|(e, r)| !self.holds(*e, r)).count();
        self.violations
    }
}

/// `e(δ) = ‖∂_z u(·, δ)/κ − g‖` on the interior nodes, fitted as `C δ^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceGapFit {
    /// `None` when every error vanishes.
    pub p: Option<f64>,
    pub c: Option<f64>,
    pub deltas: Vec<f64>,
    pub errors: Vec<f64>,
}

pub fn trace_gap_probe<T: Real>(g: &GridFn<T>, deltas: &[T], margin: T) -> Result<TraceGapFit> {
    if margin <= T::zero() {
        return Err(Error::InvalidParameter("margin must be positive".into()));
    }
    if let Some(d) = deltas.iter().find(|d| **d <= T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "heights must be positive, got {}",
            d.to_f64_lossy()
        )));
    }
    let grid = g.grid();
    let dom = grid.domain();
    let interior: Vec<usize> = (0..grid.len())
        .filter(|&k| {
            let x = grid.node(k);
            (0..grid.dim()).all(|a| x[a] - dom.lo()[a] >= margin && dom.hi()[a] - x[a] >= margin)
        })
        .collect();
    if interior.is_empty() {
        return Err(Error::InvalidDomain(
            "no nodes remain after shrinking by the margin".into(),
        ));
    }
    let kappa: T = neumann_kappa(grid.dim());
    let w = grid.weights();
    let mut errors = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let t = derivative_trace(g, Direction::Vertical, d, grid)?;
        let mut acc = T::zero();
        for &k in &interior {
            let e = t.values()[k] / kappa - g.values()[k];
            acc += w[k] * e * e;
        }
        errors.push(acc.sqrt().to_f64_lossy());
    }
    let deltas: Vec<f64> = deltas.iter().map(|d| d.to_f64_lossy()).collect();
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .zip(&errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(d, e)| (d.ln(), e.ln()))
        .collect();
    let (p, c) = if pts.len() >= 2 {
        let (slope, intercept, _) = linear_fit(&pts);
        (Some(slope), Some(intercept.exp()))
    } else {
        (None, None)
    };
    Ok(TraceGapFit {
        p,
        c,
        deltas,
        errors,
    })
}

/// Writes serializable rows as CSV with a header row.
pub fn write_rows_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
