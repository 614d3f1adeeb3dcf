mod common;

use std::fs;

use common::{run_config, trunctx, workspace_root, write_config, MODEL};
use serde_json::Value;

fn summary(dir: &std::path::Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn leftovers(dir: &std::path::Path) -> Vec<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(".trunctx"))
        .collect()
}

#[test]
fn svd_run_writes_table_summary_plot_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{ "experiment": "svd", {MODEL}, "resolutions": [128] }}"#);
    let (out, dir) = run_config(tmp.path(), "svd", &body, &[]);
    assert!(out.status.success(), "{}", stderr(&out));

    let mut rdr = csv::Reader::from_path(dir.join("results.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["k", "sigma"]);
    let rows: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 128);
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1));

    // least squares through (k, ln σ_k) above 1e-12, recomputed from the CSV
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .take_while(|(_, s)| *s > 1e-12)
        .map(|(k, s)| (*k, s.ln()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let c = -sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);

    let s = summary(&dir);
    let (sc, sr2) = (s["c"].as_f64().unwrap(), s["r2"].as_f64().unwrap());
    assert!((sc - c).abs() <= 1e-12 * c, "{sc} vs {c}");
    assert!((sr2 - r2).abs() <= 1e-12, "{sr2} vs {r2}");
    // recorded from the first run of this configuration
    assert!((sc - 3.9661).abs() < 1e-3, "{sc}");
    assert!(sr2 >= 0.9998, "{sr2}");

    let svg = fs::read_to_string(dir.join("plot.svg")).unwrap();
    assert!(svg.contains(r#"version="1.1""#) && svg.contains("<polyline"));

    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_hash"], s["config_hash"]);
    assert_eq!(m["library_version"], env!("CARGO_PKG_VERSION"));
    let csv_hash = trunctx_sha(&fs::read(dir.join("results.csv")).unwrap());
    assert_eq!(m["files"]["results.csv"], csv_hash);
}

fn trunctx_sha(bytes: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(bytes))
}

#[test]
fn control_at_or_above_the_data_norm_returns_zero() {
    let tmp = tempfile::tempdir().unwrap();
    for solver in ["prox", "spectral_root"] {
        let body = format!(
            r#"{{ "experiment": "control", {MODEL}, "resolutions": [64], "eps": [0.75], "solver": "{solver}" }}"#
        );
        let (out, dir) = run_config(tmp.path(), solver, &body, &[]);
        assert!(out.status.success(), "{}", stderr(&out));
        let s = summary(&dir);
        // midpoint rule integrates sin² exactly: ‖h‖ = 1/√2
        assert_eq!(s["cost"].as_f64(), Some(0.0));
        assert!((s["residual"].as_f64().unwrap() - 0.5f64.sqrt()).abs() <= 1e-15);
        assert_eq!(s["tapered"], Value::Bool(false));
        let f = fs::read_to_string(dir.join("f.csv")).unwrap();
        assert!(f
            .lines()
            .skip(1)
            .all(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap() == 0.0));
    }
}

#[test]
fn control_residual_matches_eps_and_tapers_constant_data() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{ "experiment": "control", {MODEL}, "resolutions": [128], "eps": [1e-2] }}"#);
    let (out, dir) = run_config(tmp.path(), "sine", &body, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let s = summary(&dir);
    assert!((s["residual"].as_f64().unwrap() - 1e-2).abs() <= 1e-8);

    let body = format!(
        r#"{{ "experiment": "control", {MODEL}, "resolutions": [64], "eps": [0.1], "data": {{ "kind": "constant", "value": 1.0 }} }}"#
    );
    let (out, dir) = run_config(tmp.path(), "constant", &body, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let s = summary(&dir);
    assert_eq!(s["tapered"], Value::Bool(true));
    // fattening d/4 = 1/4 at spacing 1/64
    assert_eq!(s["collar_cells"].as_u64(), Some(16));
    assert!(s["c_l2"].as_f64().unwrap() > 1.0);
}

#[test]
fn overlapping_geometry_fails_validation_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{ "experiment": "svd", "geometry": { "source": [-2.0, 0.5], "target": [0.0, 1.0] }, "resolutions": [32] }"#;
    let (out, dir) = run_config(tmp.path(), "overlap", body, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("disjointness rule"), "{}", stderr(&out));
    assert!(!dir.exists());
    assert!(leftovers(tmp.path()).is_empty());

    // touching closures are rejected too
    let body = r#"{ "experiment": "svd", "geometry": { "source": [-1.0, 0.0], "target": [0.0, 1.0] }, "resolutions": [32] }"#;
    let (out, _) = run_config(tmp.path(), "touch", body, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (
            format!(r#"{{ "experiment": "svd", {MODEL}, "resolutions": [64], "data": {{ "kind": "sine", "freq": 1 }} }}"#),
            "config.data",
        ),
        (format!(r#"{{ "experiment": "svd", {MODEL}, "resolutions": [64, 128] }}"#), "config.resolutions"),
        (format!(r#"{{ "experiment": "svd", {MODEL}, "resolutions": [2] }}"#), "config.resolutions[0]"),
        (format!(r#"{{ "experiment": "cost-curve", {MODEL}, "resolutions": [64], "eps": [1e-3, 1e-2] }}"#), "config.eps"),
        (format!(r#"{{ "experiment": "control", {MODEL}, "resolutions": [64], "eps": [-1.0] }}"#), "config.eps[0]"),
        (format!(r#"{{ "experiment": "fourier", {MODEL}, "resolutions": [64] }}"#), "config.experiment"),
        (
            r#"{ "experiment": "svd", "geometry": { "source": [-2.0, -1.0], "target": { "lo": [0.0, 0.0], "hi": [1.0, 1.0] } }, "resolutions": [8] }"#.to_string(),
            "config.geometry",
        ),
        (
            format!(r#"{{ "experiment": "svd", {MODEL}, "resolutions": [16], "coefficient": {{ "preset": "diagonal_bump", "amplitude": -2.0, "center": [0.0], "width": 1.0 }} }}"#),
            "config.coefficient",
        ),
    ];
    for (k, (body, field)) in cases.iter().enumerate() {
        let (out, dir) = run_config(tmp.path(), &format!("case{k}"), body, &[]);
        assert_eq!(out.status.code(), Some(2), "case {k}: {}", stderr(&out));
        assert!(stderr(&out).contains(field), "case {k}: {}", stderr(&out));
        assert!(!dir.exists());
    }
    let out = trunctx(&["run", "missing.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_3_and_removes_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{ "experiment": "control", {MODEL}, "resolutions": [128], "eps": [1e-6], "solver": "prox" }}"#
    );
    let (out, dir) = run_config(tmp.path(), "prox", &body, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("not converged"));
    assert!(!dir.exists());
    assert!(leftovers(tmp.path()).is_empty());
}

#[test]
fn overrides_replace_seed_and_resolution() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{ "experiment": "stability-fit", {MODEL}, "resolutions": [128], "modes": 10, "holdout_count": 5, "seed": 1 }}"#
    );
    let (a, da) = run_config(tmp.path(), "a", &body, &[]);
    let (b, db) = run_config(tmp.path(), "b", &body, &["--seed", "2", "--resolution", "64"]);
    assert!(a.status.success() && b.status.success());
    let (sa, sb) = (summary(&da), summary(&db));
    assert_eq!(sa["seed"].as_u64(), Some(1));
    assert_eq!(sb["seed"].as_u64(), Some(2));
    assert_eq!(sb["n"].as_u64(), Some(64));
    assert_ne!(sa["config_hash"], sb["config_hash"]);
    let cfg: Value = serde_json::from_str(&fs::read_to_string(db.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["resolutions"], serde_json::json!([64]));
    assert!(cfg.get("output").is_none());
}

#[test]
fn output_hash_ignores_the_output_directory_and_reruns_replace_earlier_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{ "experiment": "svd", {MODEL}, "resolutions": [32] }}"#);
    let (_, d1) = run_config(tmp.path(), "one", &body, &[]);
    let (_, d2) = run_config(tmp.path(), "two", &body, &[]);
    assert_eq!(fs::read(d1.join("manifest.json")).unwrap(), fs::read(d2.join("manifest.json")).unwrap());

    let (again, _) = run_config(tmp.path(), "one", &body, &[]);
    assert!(again.status.success());

    let foreign = tmp.path().join("foreign");
    fs::create_dir(&foreign).unwrap();
    fs::write(foreign.join("notes.txt"), "keep").unwrap();
    let cfg = write_config(tmp.path(), "f.json", &body);
    let out = trunctx(&["run", cfg.to_str().unwrap(), "--out", foreign.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(foreign.join("notes.txt").exists());
}

#[test]
fn shipped_configs_run_and_summaries_match_the_schema() {
    let root = workspace_root();
    let schema: Value =
        serde_json::from_str(&fs::read_to_string(root.join("schemas/summary.schema.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut configs: Vec<_> = fs::read_dir(root.join("configs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    configs.sort();
    assert!(configs.len() >= 9);
    let mut kinds = std::collections::BTreeSet::new();
    for cfg in &configs {
        let name = cfg.file_stem().unwrap().to_str().unwrap();
        let out = tmp.path().join(name);
        let o = trunctx(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        let s = summary(&out);
        let errors: Vec<String> = validator.iter_errors(&s).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
        kinds.insert(s["experiment"].as_str().unwrap().to_string());
        let header = fs::read_to_string(out.join("results.csv")).unwrap();
        assert!(header.lines().next().is_some_and(|l| l.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == ',')));
    }
    assert_eq!(kinds.len(), 9, "{kinds:?}");

    // a summary missing a required field is rejected
    let mut bad = summary(&tmp.path().join("svd"));
    bad.as_object_mut().unwrap().remove("r2");
    assert!(!validator.is_valid(&bad));
}

#[test]
fn report_requires_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trunctx(&["report", tmp.path().to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no manifest"));
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn report_over_one_svd_run_has_a_single_section() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    fs::create_dir(&runs).unwrap();
    let body = format!(r#"{{ "experiment": "svd", {MODEL}, "resolutions": [64] }}"#);
    let (o, _) = run_config(&runs, "svd", &body, &[]);
    assert!(o.status.success());
    fs::remove_file(runs.join("svd.json")).unwrap();
    let out = trunctx(&["report", runs.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let md = fs::read_to_string(runs.join("report.md")).unwrap();
    assert_eq!(md.matches("\n## ").count(), 1, "{md}");
    assert!(md.contains("## svd"));
    let r: Value = serde_json::from_str(&fs::read_to_string(runs.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["runs"].as_array().unwrap().len(), 1);
    assert_eq!(r["skipped_count"].as_u64(), Some(0));
    assert!(r["cross_references"].as_array().unwrap().is_empty());

    // a run directory can also be reported on directly
    let out = trunctx(&["report", runs.join("svd").to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn report_links_decay_rate_to_cost_growth_and_counts_corrupt_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    fs::create_dir(&runs).unwrap();
    let svd = format!(r#"{{ "experiment": "svd", {MODEL}, "resolutions": [128] }}"#);
    let cost = format!(
        r#"{{ "experiment": "cost-curve", {MODEL}, "resolutions": [128], "eps": [1e-1, 1e-2, 1e-3], "holdout_eps": [3e-4] }}"#
    );
    let other = format!(r#"{{ "experiment": "svd", {MODEL}, "resolutions": [64] }}"#);
    for (name, body) in [("a-svd", &svd), ("b-cost", &cost), ("c-svd64", &other)] {
        let (o, _) = run_config(&runs, name, body, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["a-svd.json", "b-cost.json", "c-svd64.json"] {
        fs::remove_file(runs.join(f)).unwrap();
    }
    fs::create_dir(runs.join("d-broken")).unwrap();
    fs::write(runs.join("d-broken/manifest.json"), "{ not json").unwrap();
    fs::create_dir(runs.join("e-orphan")).unwrap();
    fs::write(runs.join("e-orphan/summary.json"), "{}").unwrap();

    let out = trunctx(&["report", runs.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stderr(&out).matches("warning: skipping").count(), 2);

    let r: Value = serde_json::from_str(&fs::read_to_string(runs.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["runs"].as_array().unwrap().len(), 3);
    assert_eq!(r["skipped_count"].as_u64(), Some(2));
    // joined only where the discretized geometry agrees
    let x = r["cross_references"].as_array().unwrap();
    assert_eq!(x.len(), 1);
    assert_eq!(x[0]["svd_run"], "a-svd");
    assert_eq!(x[0]["cost_run"], "b-cost");

    let summaries: Vec<Value> = ["a-svd", "b-cost"].iter().map(|d| summary(&runs.join(d))).collect();
    assert_eq!(summaries[0]["geometry_hash"], summaries[1]["geometry_hash"]);
    assert_eq!(x[0]["decay_rate"], summaries[0]["c"]);
    assert_eq!(x[0]["cost_slope"], summaries[1]["power_fit"]["slope"]);
    assert_eq!(x[0]["bound_sigma"], summaries[1]["bound"]["sigma"]);

    let md = fs::read_to_string(runs.join("report.md")).unwrap();
    assert!(md.contains("## Decay rate against cost growth"));
    assert!(md.contains("## Skipped"));
    assert!(md.contains("3 runs, 2 skipped"));
}
