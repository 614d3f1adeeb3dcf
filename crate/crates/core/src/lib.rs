//! Discretized truncated Hilbert and Riesz transforms.
//!
//! The crate assembles the transforms as dense quadrature matrices, realizes
//! them through the Neumann harmonic extension (kernel based, or a
//! finite-difference solver for variable coefficients), measures their
//! exponential ill-posedness through weighted SVDs, and constructs
//! approximate preimages by minimizing the nonsmooth functional
//! `½‖Ag‖² + ε‖g‖ − ⟨h, g⟩`.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which is what the
//! experiments use.

// `!(x > 0)` is used on purpose so that NaN parameters are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod extension;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod ops;
pub mod scalar;
pub mod spectral;
pub mod stability;
pub mod varcoef;

pub use control::{
    build_control, cost_curve, functional_value, minimize_prox, minimize_spectral_root,
    taper_compact_support, ControlProblem, ControlResult, ControlSummary, Controls, CostCurve,
    CostRow, ProxOptions, Solver, Taper,
};
pub use error::{Error, Result};
pub use extension::{derivative_trace, extend_neumann, Direction, ExtensionField, Lattice};
pub use grid::{
    geometry_params, inner_product, make_grid, normalize_pair, sobolev_norms, AffineMap,
    BoxDomain, GeometryParams, Grid, GridFn, GridSpec, IntervalDomain, NormalizedPair,
    SobolevNorms,
};
pub use kernels::{assemble_riesz_stack, assemble_truncated_hilbert, assemble_truncated_riesz};
pub use ops::{stack_components, OpKind, OpMatrix, StackedOp, SummedOp, WeightedOperator};
pub use scalar::{neumann_kappa, Real};
pub use spectral::{decay_fit, linear_fit, picard_analysis, weighted_svd, DecayFit, SpectralData};
pub use stability::{
    fit_smallness, fit_stability, smallness_probe, stability_fit, stability_samples,
    trace_gap_probe, SmallnessFit, SmallnessRecord, StabilityFit, StabilitySample, TraceGapFit,
};

pub use varcoef::{
    assemble_generalized_riesz, assemble_generalized_stack, solve_extension_fd, CoefficientField,
    FdBox, FdExtensionSolution,
};

pub type Interval64 = IntervalDomain<f64>;
pub type Box64 = BoxDomain<f64>;
pub type Grid64 = Grid<f64>;
pub type GridFn64 = GridFn<f64>;
pub type OpMatrix64 = OpMatrix<f64>;
pub type StackedOp64 = StackedOp<f64>;

/// Library version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
