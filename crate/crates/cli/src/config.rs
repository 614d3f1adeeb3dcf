use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trunctx_core::{BoxDomain, CoefficientField, Solver};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Assemble,
    Svd,
    Extend,
    ProbeSmallness,
    ProbeTrace,
    StabilityFit,
    Control,
    CostCurve,
    VarcoefValidate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Assemble => "assemble",
            Experiment::Svd => "svd",
            Experiment::Extend => "extend",
            Experiment::ProbeSmallness => "probe-smallness",
            Experiment::ProbeTrace => "probe-trace",
            Experiment::StabilityFit => "stability-fit",
            Experiment::Control => "control",
            Experiment::CostCurve => "cost-curve",
            Experiment::VarcoefValidate => "varcoef-validate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A domain written either as `[lo, hi]` or as `{"lo": [...], "hi": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainSpec {
    Interval([f64; 2]),
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl DomainSpec {
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainSpec::Interval([lo, hi]) => (vec![*lo], vec![*hi]),
            DomainSpec::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds().0.len()
    }

    pub fn domain(&self) -> trunctx_core::Result<BoxDomain<f64>> {
        let (lo, hi) = self.bounds();
        BoxDomain::new(lo, hi)
    }
}

/// `source` carries the controls / transform input, `target` the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub source: DomainSpec,
    pub target: DomainSpec,
}

/// Data sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataFn {
    Constant { value: f64 },
    /// `Π sin(k π (x_a − lo_a)/len_a)` over the axes of the domain.
    Sine { frequency: f64 },
    /// Independent standard normal values drawn from the run's seed.
    Random,
}

impl Default for DataFn {
    fn default() -> Self {
        DataFn::Sine { frequency: 1.0 }
    }
}

/// Finite-difference box for `varcoef-validate`, centered between the domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSpec {
    pub half_width: f64,
    pub height: f64,
}

impl Default for FdSpec {
    fn default() -> Self {
        FdSpec {
            half_width: 5.0,
            height: 5.0,
        }
    }
}

fn default_seed() -> u64 {
    0
}

fn default_solver() -> Solver {
    Solver::SpectralRoot
}

fn default_modes() -> usize {
    20
}

fn default_holdout_count() -> usize {
    20
}

fn default_margin() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub geometry: Geometry,
    /// Cells per axis; for `varcoef-validate`, cells per unit length.
    pub resolutions: Vec<usize>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub holdout_eps: Vec<f64>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub holdout_deltas: Vec<f64>,
    #[serde(default)]
    pub data: DataFn,
    #[serde(default)]
    pub coefficient: Option<CoefficientField>,
    #[serde(default)]
    pub fd: Option<FdSpec>,
    #[serde(default = "default_solver")]
    pub solver: Solver,
    /// Singular vectors in the probe and stability families.
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_holdout_count")]
    pub holdout_count: usize,
    /// Distance kept from the data boundary by the trace probe.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub resolution: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Validation(format!("config: {inner}"))
            } else {
                CliError::Validation(format!("config.{path}: {inner}"))
            }
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(n) = o.resolution {
            self.resolutions = vec![n];
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(self.experiment.name()))
    }

    pub fn dim(&self) -> usize {
        self.geometry.source.dim()
    }

    pub fn resolution(&self) -> usize {
        self.resolutions[0]
    }

    /// The configuration with the output directory removed, which is what
    /// the run hash covers.
    pub fn hashed(&self) -> ExperimentConfig {
        ExperimentConfig {
            output: None,
            ..self.clone()
        }
    }

    /// Checks everything that can be checked without assembling anything.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Validation(format!("config.{field}: {msg}")));
        use Experiment::*;

        for (name, d) in [("geometry.source", &self.geometry.source), ("geometry.target", &self.geometry.target)] {
            let (lo, hi) = d.bounds();
            if lo.len() != hi.len() {
                return bad(name, format!("lo has {} entries but hi has {}", lo.len(), hi.len()));
            }
            if !(1..=2).contains(&lo.len()) {
                return bad(name, format!("dimension must be 1 or 2, got {}", lo.len()));
            }
            if let Err(e) = d.domain() {
                return bad(name, e.to_string());
            }
        }
        if self.geometry.source.dim() != self.geometry.target.dim() {
            return bad(
                "geometry",
                "source and target must have the same dimension".into(),
            );
        }
        let src = self.geometry.source.domain().expect("checked above");
        let tgt = self.geometry.target.domain().expect("checked above");
        if !src.closures_disjoint(&tgt) {
            return bad(
                "geometry",
                "disjointness rule violated: the closures of source and target must not intersect"
                    .into(),
            );
        }

        if self.resolutions.is_empty() {
            return bad("resolutions", "at least one resolution is required".into());
        }
        // varcoef resolutions count cells per unit length, two of which already give a grid
        let min_cells = if self.experiment == VarcoefValidate { 2 } else { 3 };
        if let Some((i, n)) = self.resolutions.iter().enumerate().find(|(_, n)| **n < min_cells) {
            return bad(
                &format!("resolutions[{i}]"),
                format!("need at least {min_cells} cells, got {n}"),
            );
        }
        if self.experiment != VarcoefValidate && self.resolutions.len() != 1 {
            return bad(
                "resolutions",
                format!("{} takes exactly one resolution", self.experiment),
            );
        }
        let cells = self.resolution().pow(self.dim() as u32);
        if cells > 4096 {
            return bad(
                "resolutions",
                format!("{cells} nodes per domain exceeds the dense limit of 4096"),
            );
        }

        let positive = |field: &str, v: &[f64]| -> Result<(), CliError> {
            match v.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
                Some(i) => bad(&format!("{field}[{i}]"), format!("must be positive, got {}", v[i])),
                None => Ok(()),
            }
        };
        positive("eps", &self.eps)?;
        positive("holdout_eps", &self.holdout_eps)?;
        positive("deltas", &self.deltas)?;
        positive("holdout_deltas", &self.holdout_deltas)?;

        match self.experiment {
            Control if self.eps.len() != 1 => {
                return bad("eps", "control takes exactly one ε; use cost-curve for sweeps".into())
            }
            CostCurve | VarcoefValidate if self.eps.is_empty() => {
                return bad("eps", format!("{} needs at least one ε", self.experiment))
            }
            CostCurve if self.eps.windows(2).any(|w| w[1] >= w[0]) => {
                return bad("eps", "must be strictly descending".into())
            }
            ProbeSmallness => {
                if self.eps.is_empty() || self.deltas.is_empty() {
                    return bad("eps", "probe-smallness needs eps and deltas".into());
                }
                if let Some(i) = self.eps.iter().chain(&self.holdout_eps).position(|e| *e >= 1.0) {
                    return bad("eps", format!("entry {i} must lie in (0, 1)"));
                }
                if self.holdout_deltas.is_empty() != self.holdout_eps.is_empty() {
                    return bad(
                        "holdout_deltas",
                        "holdout_deltas and holdout_eps must be given together".into(),
                    );
                }
            }
            Extend | ProbeTrace if self.deltas.is_empty() => {
                return bad("deltas", format!("{} needs at least one height", self.experiment))
            }
            _ => {}
        }
        if matches!(self.experiment, ProbeSmallness | StabilityFit)
            && (self.modes == 0 || self.modes > cells)
        {
            return bad("modes", format!("must lie in 1..={cells}"));
        }
        if self.experiment == ProbeTrace && !(self.margin > 0.0) {
            return bad("margin", "must be positive".into());
        }

        if let Some(c) = &self.coefficient {
            if let Err(e) = c.validate(self.dim()) {
                return bad("coefficient", e.to_string());
            }
        }
        if self.experiment == VarcoefValidate {
            if self.dim() != 2 {
                return bad("geometry", "varcoef-validate needs two-dimensional boxes".into());
            }
            if self.coefficient.is_none() {
                return bad("coefficient", "varcoef-validate needs a coefficient preset".into());
            }
            let fd = self.fd.clone().unwrap_or_default();
            if !(fd.half_width > 0.0 && fd.height > 0.0) {
                return bad("fd", "half_width and height must be positive".into());
            }
        }
        Ok(())
    }
}
