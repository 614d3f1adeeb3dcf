use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map, Value};
use trunctx_core::control::needs_taper;
use trunctx_core::io::write_operator;
use trunctx_core::spectral::{decay_fit_min, DEFAULT_FLOOR};
use trunctx_core::stability::{fit_smallness, stability_samples};
use trunctx_core::{
    assemble_generalized_stack, assemble_riesz_stack, assemble_truncated_hilbert,
    assemble_truncated_riesz, cost_curve, derivative_trace, geometry_params, inner_product,
    linear_fit, make_grid, minimize_prox, minimize_spectral_root, normalize_pair, smallness_probe,
    sobolev_norms, taper_compact_support, trace_gap_probe, weighted_svd, ControlProblem,
    ControlResult, Direction, FdBox, Grid, GridFn, OpMatrix, ProxOptions, Solver,
    WeightedOperator,
};

use crate::config::{DataFn, Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::svg::{Plot, Series};

type Op = Box<dyn WeightedOperator<f64>>;
type Grid64 = Arc<Grid<f64>>;

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub struct Artifacts {
    pub table: Table,
    pub summary: Map<String, Value>,
    pub plot: Option<Plot>,
}

/// Float cells use the shortest round-trip exponent form.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn to_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("summaries are JSON objects"),
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    rng: ChaCha8Rng,
}

impl Ctx<'_> {
    fn grid(&self, which: Side, n: usize) -> Result<Grid64, CliError> {
        let d = match which {
            Side::Source => &self.cfg.geometry.source,
            Side::Target => &self.cfg.geometry.target,
        };
        let dom = d.domain()?;
        let counts = vec![n; dom.dim()];
        Ok(Arc::new(make_grid(dom, &counts)?))
    }

    fn sample(&mut self, grid: &Grid64) -> GridFn<f64> {
        let dom = grid.domain().clone();
        match self.cfg.data {
            DataFn::Constant { value } => grid.sample(|_| value),
            DataFn::Sine { frequency } => grid.sample(|x| {
                x.iter()
                    .enumerate()
                    .map(|(a, xa)| {
                        let t = (xa - dom.lo()[a]) / (dom.hi()[a] - dom.lo()[a]);
                        (frequency * std::f64::consts::PI * t).sin()
                    })
                    .product()
            }),
            DataFn::Random => {
                let rng = &mut self.rng;
                grid.sample(|_| rng.sample(StandardNormal))
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Side {
    Source,
    Target,
}

/// Hilbert operator in one dimension, the Riesz stack in two.
fn transform(from: &Grid64, to: &Grid64) -> Result<Op, CliError> {
    Ok(if from.dim() == 1 {
        Box::new(assemble_truncated_hilbert(from, to)?)
    } else {
        Box::new(assemble_riesz_stack(from, to)?)
    })
}

fn components(from: &Grid64, to: &Grid64) -> Result<Vec<OpMatrix<f64>>, CliError> {
    if from.dim() == 1 {
        Ok(vec![assemble_truncated_hilbert(from, to)?])
    } else {
        Ok(assemble_riesz_stack(from, to)?.components().to_vec())
    }
}

pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<Artifacts, CliError> {
    let mut ctx = Ctx {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    match cfg.experiment {
        Experiment::Assemble => assemble(&mut ctx, dir),
        Experiment::Svd => svd(&mut ctx),
        Experiment::Extend => extend(&mut ctx),
        Experiment::ProbeSmallness => probe_smallness(&mut ctx),
        Experiment::ProbeTrace => probe_trace(&mut ctx),
        Experiment::StabilityFit => stability(&mut ctx),
        Experiment::Control => control(&mut ctx, dir),
        Experiment::CostCurve => cost(&mut ctx),
        Experiment::VarcoefValidate => varcoef(&mut ctx),
    }
}

fn assemble(ctx: &mut Ctx, dir: &Path) -> Result<Artifacts, CliError> {
    let n = ctx.cfg.resolution();
    let (i, j) = (ctx.grid(Side::Source, n)?, ctx.grid(Side::Target, n)?);
    let forward = components(&i, &j)?;
    let reverse = components(&j, &i)?;
    let f = i.sample(|_| ctx.rng.sample(StandardNormal));
    let g = j.sample(|_| ctx.rng.sample(StandardNormal));
    let scale = f.l2_norm() * g.l2_norm();
    let mut table = Table::new(&["component", "rows", "cols", "frobenius", "max_abs", "adjoint_defect"]);
    let mut worst: f64 = 0.0;
    for (k, (a, b)) in forward.iter().zip(&reverse).enumerate() {
        let defect = (inner_product(&a.apply(&f)?, &g)? + inner_product(&b.apply(&g)?, &f)?).abs() / scale;
        worst = worst.max(defect);
        let e = a.entries();
        table.push(vec![
            k.to_string(),
            e.nrows().to_string(),
            e.ncols().to_string(),
            num(e.norm()),
            num(e.amax()),
            num(defect),
        ]);
        write_operator(a, dir, &format!("operator_{k}"))?;
    }
    Ok(Artifacts {
        table,
        summary: to_map(json!({
            "n": n,
            "components": forward.len(),
            "max_adjoint_defect": worst,
        })),
        plot: None,
    })
}

fn svd(ctx: &mut Ctx) -> Result<Artifacts, CliError> {
    let n = ctx.cfg.resolution();
    let (i, j) = (ctx.grid(Side::Source, n)?, ctx.grid(Side::Target, n)?);
    let s = weighted_svd(transform(&i, &j)?.as_ref())?;
    let values = s.values().as_slice();
    let fit = decay_fit_min(values, DEFAULT_FLOOR, 3)?;
    let mut table = Table::new(&["k", "sigma"]);
    for (k, v) in values.iter().enumerate() {
        table.push(vec![(k + 1).to_string(), num(*v)]);
    }
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(k, v)| ((k + 1) as f64, v.log10()))
        .collect();
    Ok(Artifacts {
        table,
        summary: to_map(json!({
            "n": n,
            "c": fit.c,
            "r2": fit.r2,
            "intercept": fit.intercept,
            "used": fit.used,
            "sigma_max": s.sigma_max(),
            "sigma_min": s.sigma_min(),
        })),
        plot: Some(Plot::new("singular values", "k", "log10 sigma").with(Series::new("sigma_k", pts))),
    })
}

fn extend(ctx: &mut Ctx) -> Result<Artifacts, CliError> {
    let n = ctx.cfg.resolution();
    let (i, j) = (ctx.grid(Side::Source, n)?, ctx.grid(Side::Target, n)?);
    let f = ctx.sample(&i);
    let direct: Vec<GridFn<f64>> = components(&i, &j)?
        .iter()
        .map(|a| a.apply(&f))
        .collect::<trunctx_core::Result<_>>()?;
    let gap = |delta: f64| -> Result<f64, CliError> {
        let (mut num, mut den) = (0.0, 0.0);
        for (axis, d) in direct.iter().enumerate() {
            let t = derivative_trace(&f, Direction::Horizontal(axis), delta, &j)?;
            num += t.combine(1.0, d, -1.0)?.l2_norm().powi(2);
            den += d.l2_norm().powi(2);
        }
        Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
    };
    let mut table = Table::new(&["delta", "relative_gap"]);
    let height0 = gap(0.0)?;
    table.push(vec![num(0.0), num(height0)]);
    let mut pts = Vec::new();
    for &d in &ctx.cfg.deltas {
        let e = gap(d)?;
        table.push(vec![num(d), num(e)]);
        if e > 0.0 {
            pts.push((d.ln(), e.ln()));
        }
    }
    let order = (pts.len() >= 2).then(|| linear_fit(&pts).0);
    Ok(Artifacts {
        table,
        summary: to_map(json!({ "n": n, "height0_defect": height0, "order": order })),
        plot: Some(
            Plot::new("trace gap against height", "ln delta", "ln relative gap")
                .with(Series::new("gap", pts)),
        ),
    })
}

/// Leading right singular vectors of the transform from the target to the source.
fn singular_family(ctx: &Ctx) -> Result<(Op, Vec<GridFn<f64>>, Grid64), CliError> {
    let n = ctx.cfg.resolution();
    let (i, j) = (ctx.grid(Side::Source, n)?, ctx.grid(Side::Target, n)?);
    let a = transform(&j, &i)?;
    let s = weighted_svd(a.as_ref())?;
    let fam = (0..ctx.cfg.modes)
        .map(|k| GridFn::new(Arc::clone(&j), s.right_vector(k)))
        .collect::<trunctx_core::Result<Vec<_>>>()?;
    Ok((a, fam, i))
}

fn probe_smallness(ctx: &mut Ctx) -> Result<Artifacts, CliError> {
    let cfg = ctx.cfg;
    let (_, fam, i) = singular_family(ctx)?;
    let mut table = Table::new(&["set", "member", "delta", "trace", "data", "source"]);
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (m, g) in fam.iter().enumerate() {
        for r in smallness_probe(g, &i, &cfg.deltas)? {
            table.push(vec!["train".into(), m.to_string(), num(r.delta), num(r.trace), num(r.data), num(r.source)]);
            train.extend(cfg.eps.iter().map(|e| (*e, r)));
        }
        if !cfg.holdout_deltas.is_empty() {
            for r in smallness_probe(g, &i, &cfg.holdout_deltas)? {
                table.push(vec!["holdout".into(), m.to_string(), num(r.delta), num(r.trace), num(r.data), num(r.source)]);
                holdout.extend(cfg.holdout_eps.iter().map(|e| (*e, r)));
            }
        }
    }
    let mut fit = fit_smallness(&train)?;
    fit.validate(&holdout);
    let mut summary = to_map(serde_json::to_value(fit)?);
    summary.insert("n".into(), json!(cfg.resolution()));
    summary.insert("holdout".into(), json!(holdout.len()));
    Ok(Artifacts {
        table,
        summary,
        plot: None,
    })
}

fn probe_trace(ctx: &mut Ctx) -> Result<Artifacts, CliError> {
    let n = ctx.cfg.resolution();
    let i = ctx.grid(Side::Source, n)?;
    let g = ctx.sample(&i);
    let fit = trace_gap_probe(&g, &ctx.cfg.deltas, ctx.cfg.margin)?;
    let mut table = Table::new(&["delta", "error"]);
    for (d, e) in fit.deltas.iter().zip(&fit.errors) {
        table.push(vec![num(*d), num(*e)]);
    }
    let pts = fit
        .deltas
        .iter()
        .zip(&fit.errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(d, e)| (d.ln(), e.ln()))
        .collect();
    let decreasing = fit.errors.windows(2).all(|w| w[1] < w[0]);
    Ok(Artifacts {
        table,
        summary: to_map(json!({ "n": n, "p": fit.p, "c": fit.c, "decreasing": decreasing })),
        plot: Some(
            Plot::new("Neumann recovery error", "ln delta", "ln error").with(Series::new("error", pts)),
        ),
    })
}

fn stability(ctx: &mut Ctx) -> Result<Artifacts, CliError> {
    let (a, fam, _) = singular_family(ctx)?;
    let j = Arc::clone(fam[0].grid());
    let holdout: Vec<GridFn<f64>> = (0..ctx.cfg.holdout_count)
        .map(|_| {
            let c: Vec<f64> = (0..fam.len()).map(|_| ctx.rng.sample(StandardNormal)).collect();
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            fam.iter().zip(&c).try_fold(j.zeros(), |acc, (v, ck)| acc.combine(1.0, v, ck / norm))
        })
        .collect::<trunctx_core::Result<_>>()?;
    let train = stability_samples(a.as_ref(), &fam)?;
    let held = stability_samples(a.as_ref(), &holdout)?;
    let mut fit = trunctx_core::stability::fit_stability(&train)?;
    fit.validate(&held);
    let mut table = Table::new(&["set", "index", "h1", "l2", "data", "ratio", "holds"]);
    for (set, samples) in [("train", &train), ("holdout", &held)] {
        for (k, s) in samples.iter().enumerate() {
            table.push(vec![
                set.into(),
                k.to_string(),
                num(s.h1),
                num(s.l2),
                num(s.data),
                num(s.ratio()),
                fit.holds(s).to_string(),
            ]);
        }
    }
    let mut summary = to_map(serde_json::to_value(fit)?);
    summary.insert("n".into(), json!(ctx.cfg.resolution()));
    summary.insert("holdout".into(), json!(held.len()));
    Ok(Artifacts {
        table,
        summary,
        plot: None,
    })
}

/// Data on the target, tapered to vanish at the boundary when it does not
/// already. Returns the data and the taper record.
fn control_data(ctx: &mut Ctx) -> Result<(GridFn<f64>, Map<String, Value>), CliError> {
    let n = ctx.cfg.resolution();
    let j = ctx.grid(Side::Target, n)?;
    let h = ctx.sample(&j);
    let mut info = Map::new();
    let tapered = j.dim() == 1 && needs_taper(&h, 1e-3);
    info.insert("tapered".into(), json!(tapered));
    if !tapered {
        return Ok((h, info));
    }
    let src = ctx.cfg.geometry.source.domain()?.as_interval().expect("one-dimensional");
    let tgt = j.domain().as_interval().expect("one-dimensional");
    let pair = normalize_pair(&src, &tgt)?;
    let h1 = geometry_params(&pair.source, &pair.target)?.h1 * tgt.length();
    let t = taper_compact_support(&h, h1)?;
    info.insert("collar_cells".into(), json!(t.collar_cells));
    info.insert("c_l2".into(), json!(t.c_l2));
    info.insert("c_h1".into(), json!(t.c_h1));
    Ok((t.extended, info))
}

fn control(ctx: &mut Ctx, dir: &Path) -> Result<Artifacts, CliError> {
    let (h, info) = control_data(ctx)?;
    let i = ctx.grid(Side::Source, ctx.cfg.resolution())?;
    let a = transform(h.grid(), &i)?;
    let p = ControlProblem::new(a.as_ref(), std::slice::from_ref(&h), ctx.cfg.eps[0])?;
    let r: ControlResult<f64> = match ctx.cfg.solver {
        Solver::SpectralRoot => minimize_spectral_root(&p, &weighted_svd(a.as_ref())?)?,
        Solver::Prox => minimize_prox(&p, &ProxOptions::default())?,
    };
    r.write_samples_csv(&dir.join("g.csv"), &dir.join("f.csv"))?;
    let s = r.summary();
    let mut table = Table::new(&[
        "solver", "eps", "h_norm", "g_norm", "cost", "residual", "functional", "energy_gap", "lambda",
        "iterations",
    ]);
    table.push(vec![
        serde_json::to_value(s.solver)?.as_str().unwrap_or_default().to_string(),
        num(s.eps),
        num(s.h_norm),
        num(s.g_norm),
        num(s.cost),
        num(s.residual),
        num(s.functional),
        num(s.energy_gap),
        opt(s.lambda),
        s.iterations.to_string(),
    ]);
    let mut summary = to_map(serde_json::to_value(s)?);
    summary.insert("n".into(), json!(ctx.cfg.resolution()));
    summary.extend(info);
    Ok(Artifacts {
        table,
        summary,
        plot: None,
    })
}

fn cost(ctx: &mut Ctx) -> Result<Artifacts, CliError> {
    let (h, info) = control_data(ctx)?;
    let cfg = ctx.cfg;
    let i = ctx.grid(Side::Source, cfg.resolution())?;
    let a = transform(h.grid(), &i)?;
    let svd = weighted_svd(a.as_ref())?;
    let h1 = sobolev_norms(&h)?.h1;
    let p = ControlProblem::new(a.as_ref(), std::slice::from_ref(&h), cfg.eps[0])?;
    let curve = cost_curve(&p, &svd, h1, &cfg.eps, &cfg.holdout_eps)?;
    let mut table = Table::new(&["set", "eps", "cost", "residual", "lambda", "iterations", "bound_holds"]);
    for (set, rows) in [("train", &curve.rows), ("holdout", &curve.holdout)] {
        for r in rows.iter() {
            table.push(vec![
                set.into(),
                num(r.eps),
                num(r.cost),
                num(r.residual),
                opt(r.lambda),
                r.iterations.to_string(),
                curve.bound.dominates(r).to_string(),
            ]);
        }
    }
    let pts = curve
        .rows
        .iter()
        .chain(&curve.holdout)
        .filter(|r| r.cost > 0.0)
        .map(|r| ((1.0 / r.eps).ln(), r.cost.ln()))
        .collect();
    let bound: Vec<(f64, f64)> = curve
        .rows
        .iter()
        .chain(&curve.holdout)
        .map(|r| ((1.0 / r.eps).ln(), curve.bound.log_bound(r.eps) + curve.bound.h_l2.ln()))
        .collect();
    let mut summary = to_map(json!({
        "n": cfg.resolution(),
        "monotone": curve.monotone,
        "residuals_ok": curve.residuals_ok,
        "power_fit": curve.power_fit,
        "bound": curve.bound,
        "bound_dominates_all": curve.bound_dominates_all,
    }));
    summary.extend(info);
    let mut plot = Plot::new("cost of approximate control", "ln(1/eps)", "ln cost")
        .with(Series::new("cost", pts));
    if bound.len() >= 2 {
        plot = plot.with(Series::new("fitted bound", bound));
    }
    Ok(Artifacts {
        table,
        summary,
        plot: Some(plot),
    })
}

fn varcoef(ctx: &mut Ctx) -> Result<Artifacts, CliError> {
    let cfg = ctx.cfg;
    let a = cfg.coefficient.clone().expect("validated");
    let fd_spec = cfg.fd.clone().unwrap_or_default();
    let src = cfg.geometry.source.domain()?;
    let tgt = cfg.geometry.target.domain()?;
    let center: Vec<f64> = (0..2)
        .map(|k| 0.25 * (src.lo()[k] + src.hi()[k] + tgt.lo()[k] + tgt.hi()[k]))
        .collect();
    let eps = cfg.eps[0];
    let mut table = Table::new(&[
        "spacing", "cells_per_axis", "kernel_deviation", "sigma_min", "eps", "cost", "residual",
    ]);
    let mut deviations = Vec::new();
    let mut residuals_ok = true;
    let mut sigma_min = f64::INFINITY;
    for &r in &cfg.resolutions {
        let spacing = 1.0 / r as f64;
        let fd = FdBox::centered(&center, fd_spec.half_width, fd_spec.height, spacing)?;
        let omega1 = Arc::new(fd.cell_grid(&src)?);
        let omega2 = Arc::new(fd.cell_grid(&tgt)?);
        let gen = assemble_generalized_stack(&a, &omega1, &omega2, &fd)?;
        let kernel: Vec<OpMatrix<f64>> = (0..2)
            .map(|k| assemble_truncated_riesz(k, &omega1, &omega2))
            .collect::<trunctx_core::Result<_>>()?;
        let (mut num_sq, mut den_sq) = (0.0, 0.0);
        for (g, k) in gen.components().iter().zip(&kernel) {
            num_sq += (g.entries() - k.entries()).norm_squared();
            den_sq += k.entries().norm_squared();
        }
        let deviation = (num_sq / den_sq).sqrt();
        deviations.push(deviation);

        let adj = assemble_generalized_stack(&a, &omega2, &omega1, &fd)?;
        let svd = weighted_svd(&adj)?;
        sigma_min = sigma_min.min(svd.sigma_min());
        let h = ctx.sample(&omega2);
        let p = ControlProblem::new(&adj, std::slice::from_ref(&h), eps)?;
        let s = minimize_spectral_root(&p, &svd)?.summary().clone();
        residuals_ok &= if eps >= s.h_norm { s.cost == 0.0 } else { s.residual <= eps * (1.0 + 1e-6) };
        table.push(vec![
            num(spacing),
            fd.cells_per_axis().to_string(),
            num(deviation),
            num(svd.sigma_min()),
            num(eps),
            num(s.cost),
            num(s.residual),
        ]);
    }
    let decreasing = deviations.windows(2).all(|w| w[1] < w[0]);
    Ok(Artifacts {
        table,
        summary: to_map(json!({
            "coefficient": a,
            "kernel_deviation": deviations.last(),
            "deviation_decreasing": decreasing,
            "sigma_min": sigma_min,
            "residuals_ok": residuals_ok,
        })),
        plot: None,
    })
}
