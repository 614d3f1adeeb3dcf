use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiments::{self, Artifacts};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
pub const RESULTS: &str = "results.csv";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub library_version: String,
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub geometry_hash: String,
    /// File name to SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json_bytes(v: &impl Serialize) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

/// Hash of the resolved configuration, output directory excluded.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String, CliError> {
    Ok(sha256_hex(&serde_json::to_vec(&cfg.hashed())?))
}

/// Hash of the discretized geometry alone: domains and resolutions.
pub fn geometry_hash(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let key = json!({ "geometry": cfg.geometry, "resolutions": cfg.resolutions });
    Ok(sha256_hex(&serde_json::to_vec(&key)?))
}

fn csv_bytes(t: &experiments::Table) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))
}

/// A directory is safe to replace when it is empty or holds an earlier run.
fn check_output(out: &Path) -> Result<(), CliError> {
    if !out.exists() {
        return Ok(());
    }
    if !out.is_dir() {
        return Err(CliError::Validation(format!(
            "output {} exists and is not a directory",
            out.display()
        )));
    }
    let empty = fs::read_dir(out)?.next().is_none();
    if empty || out.join(MANIFEST).is_file() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "output {} is not empty and holds no earlier run",
            out.display()
        )))
    }
}

/// Runs the experiment into a staging directory next to the output and
/// moves it into place only once every file is written.
pub fn run(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let out = cfg.output_dir();
    check_output(&out)?;
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new()
        .prefix(".trunctx-staging-")
        .tempdir_in(&parent)?;
    let dir = staging.path();

    let Artifacts {
        table,
        mut summary,
        plot,
    } = experiments::run(cfg, dir)?;

    let config_hash = config_hash(cfg)?;
    let geometry_hash = geometry_hash(cfg)?;
    let mut head = serde_json::Map::new();
    head.insert("experiment".into(), json!(cfg.experiment.name()));
    head.insert("config_hash".into(), json!(config_hash));
    head.insert("geometry_hash".into(), json!(geometry_hash));
    head.insert("seed".into(), json!(cfg.seed));
    head.append(&mut summary);

    fs::write(dir.join(RESULTS), csv_bytes(&table)?)?;
    fs::write(dir.join(SUMMARY), json_bytes(&Value::Object(head))?)?;
    fs::write(dir.join("config.json"), json_bytes(&cfg.hashed())?)?;
    if let Some(svg) = plot.as_ref().and_then(|p| p.render()) {
        fs::write(dir.join("plot.svg"), svg)?;
    }

    let mut files = BTreeMap::new();
    let mut names: Vec<_> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    names.sort();
    for name in names {
        files.insert(name.clone(), sha256_hex(&fs::read(dir.join(&name))?));
    }
    let manifest = Manifest {
        tool: "trunctx".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        library_version: trunctx_core::VERSION.into(),
        experiment: cfg.experiment.name().into(),
        seed: cfg.seed,
        config_hash,
        geometry_hash,
        files,
    };
    fs::write(dir.join(MANIFEST), json_bytes(&manifest)?)?;

    if out.exists() {
        fs::remove_dir_all(&out)?;
    }
    let kept = staging.keep();
    fs::rename(&kept, &out).inspect_err(|_| {
        let _ = fs::remove_dir_all(&kept);
    })?;
    Ok(out)
}
