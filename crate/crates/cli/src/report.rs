use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;
use crate::run::{Manifest, MANIFEST, SUMMARY};

#[derive(Debug, Serialize)]
pub struct Run {
    pub dir: String,
    pub experiment: String,
    pub config_hash: String,
    pub geometry_hash: String,
    pub summary: Map<String, Value>,
}

#[derive(Debug, Serialize)]
pub struct Skipped {
    pub dir: String,
    pub reason: String,
}

/// An `svd` run and a `cost-curve` run on the same discretized geometry.
#[derive(Debug, Serialize)]
pub struct CrossRef {
    pub geometry_hash: String,
    pub svd_run: String,
    pub cost_run: String,
    /// Singular value decay rate `c` in `ln σ_k ≈ b − c k`.
    pub decay_rate: Option<f64>,
    /// Slope of `ln cost` against `ln(1/ε)`.
    pub cost_slope: Option<f64>,
    pub bound_c: Option<f64>,
    pub bound_sigma: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub runs: Vec<Run>,
    pub skipped: Vec<Skipped>,
    pub skipped_count: usize,
    pub cross_references: Vec<CrossRef>,
}

/// Run directories below `root`: `root` itself and its immediate
/// subdirectories, wherever a manifest or summary is present.
fn candidates(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let looks_like_run = |d: &Path| d.join(MANIFEST).exists() || d.join(SUMMARY).exists();
    let mut dirs = Vec::new();
    if looks_like_run(root) {
        dirs.push(root.to_path_buf());
    }
    let mut subs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && looks_like_run(p))
        .collect();
    subs.sort();
    dirs.extend(subs);
    Ok(dirs)
}

fn load(dir: &Path) -> Result<(Manifest, Map<String, Value>), String> {
    let text = fs::read_to_string(dir.join(MANIFEST)).map_err(|e| format!("manifest: {e}"))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| format!("manifest: {e}"))?;
    let text = fs::read_to_string(dir.join(SUMMARY)).map_err(|e| format!("summary: {e}"))?;
    let summary: Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| format!("summary: {e}"))?;
    if summary.get("config_hash").and_then(Value::as_str) != Some(manifest.config_hash.as_str()) {
        return Err("summary config_hash does not match the manifest".into());
    }
    Ok((manifest, summary))
}

fn number(m: &Map<String, Value>, path: &[&str]) -> Option<f64> {
    let mut v = m.get(path[0])?;
    for k in &path[1..] {
        v = v.get(k)?;
    }
    v.as_f64()
}

pub fn build(root: &Path) -> Result<Report, CliError> {
    if !root.is_dir() {
        return Err(CliError::Validation(format!("{} is not a directory", root.display())));
    }
    let dirs = candidates(root)?;
    if dirs.is_empty() {
        return Err(CliError::Validation(format!(
            "no manifest found in {} or its subdirectories",
            root.display()
        )));
    }
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for d in dirs {
        let name = d
            .strip_prefix(root)
            .ok()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .display()
            .to_string();
        match load(&d) {
            Ok((m, summary)) => runs.push(Run {
                dir: name,
                experiment: m.experiment,
                config_hash: m.config_hash,
                geometry_hash: m.geometry_hash,
                summary,
            }),
            Err(reason) => {
                eprintln!("warning: skipping {name}: {reason}");
                skipped.push(Skipped { dir: name, reason });
            }
        }
    }
    let mut cross = Vec::new();
    for s in runs.iter().filter(|r| r.experiment == "svd") {
        for c in runs
            .iter()
            .filter(|r| r.experiment == "cost-curve" && r.geometry_hash == s.geometry_hash)
        {
            cross.push(CrossRef {
                geometry_hash: s.geometry_hash.clone(),
                svd_run: s.dir.clone(),
                cost_run: c.dir.clone(),
                decay_rate: number(&s.summary, &["c"]),
                cost_slope: number(&c.summary, &["power_fit", "slope"]),
                bound_c: number(&c.summary, &["bound", "C"]),
                bound_sigma: number(&c.summary, &["bound", "sigma"]),
            });
        }
    }
    Ok(Report {
        skipped_count: skipped.len(),
        runs,
        skipped,
        cross_references: cross,
    })
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.6e}"),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6e}")).unwrap_or_default()
}

/// Markdown rendering: one table per experiment kind, scalar fields only.
pub fn markdown(r: &Report) -> String {
    let mut out = String::from("# Experiment report\n\n");
    let _ = writeln!(out, "{} runs, {} skipped.\n", r.runs.len(), r.skipped_count);
    let mut kinds: Vec<&str> = r.runs.iter().map(|x| x.experiment.as_str()).collect();
    kinds.sort();
    kinds.dedup();
    for kind in kinds {
        let rows: Vec<&Run> = r.runs.iter().filter(|x| x.experiment == kind).collect();
        let mut cols: Vec<&str> = Vec::new();
        for run in &rows {
            for (k, v) in &run.summary {
                let scalar = !matches!(v, Value::Object(_) | Value::Array(_));
                if scalar && !matches!(k.as_str(), "experiment" | "config_hash" | "geometry_hash") && !cols.contains(&k.as_str()) {
                    cols.push(k);
                }
            }
        }
        let _ = writeln!(out, "## {kind}\n");
        let _ = writeln!(out, "| run | config | {} |", cols.join(" | "));
        let _ = writeln!(out, "|---|---|{}", "---|".repeat(cols.len()));
        for run in rows {
            let vals: Vec<String> = cols
                .iter()
                .map(|c| run.summary.get(*c).map(cell).unwrap_or_default())
                .collect();
            let _ = writeln!(out, "| {} | {} | {} |", run.dir, &run.config_hash[..12.min(run.config_hash.len())], vals.join(" | "));
        }
        out.push('\n');
    }
    if !r.cross_references.is_empty() {
        out.push_str("## Decay rate against cost growth\n\n");
        out.push_str("| svd run | cost-curve run | decay rate c | cost slope | bound C | bound sigma |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for x in &r.cross_references {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                x.svd_run,
                x.cost_run,
                opt(x.decay_rate),
                opt(x.cost_slope),
                opt(x.bound_c),
                opt(x.bound_sigma)
            );
        }
        out.push('\n');
    }
    if !r.skipped.is_empty() {
        out.push_str("## Skipped\n\n");
        for s in &r.skipped {
            let _ = writeln!(out, "- {}: {}", s.dir, s.reason);
        }
        out.push('\n');
    }
    out
}

pub fn emit(root: &Path) -> Result<Report, CliError> {
    let report = build(root)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    fs::write(root.join("report.json"), json)?;
    fs::write(root.join("report.md"), markdown(&report))?;
    Ok(report)
}
