//! Finite-time blowup of homogeneous quadratic ODEs `dX/dt = Q(X)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`quadratic`]: quadratic maps, their polarization, the rescaled sphere map
//!   and the nontrivial-zero (degeneracy) check.
//! - [`exact`]: closed-form solutions of `dx/dt = -x²` and `dX/dt = -X·X`
//!   together with the spectral blowup criterion for matrix initial data.
//! - [`dynamics`]: adaptive Dormand–Prince integration with blowup detection
//!   and an inverse-norm blowup-time estimator.
//! - [`spherical`]: invariant lines (fixed points of the sphere map), blowup
//!   certificates and the circle-map degree.
//! - [`ensemble`]: seeded, parallel Monte Carlo experiments over random `Q`
//!   and random matrix initial conditions.
//! - [`io`]: JSON/CSV wire formats shared with the command-line tool.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod exact;
pub mod io;
pub mod quadratic;
pub mod rng;
pub mod spherical;

pub use dynamics::{
    classify_trajectory, estimate_blowup_time, integrate, BlowupVerdict, IntegratorConfig,
    Trajectory, TrajectoryStatus,
};
pub use ensemble::{
    run_q1_experiment, run_q2_matrix_experiment, wilson_interval, EnsembleKind, EnsembleResult,
    EnsembleSpec,
};
pub use error::{Error, Result};
pub use exact::{
    matrix_blowup_time, matrix_solution, real_spectrum, scalar_solution, BlowupClass,
    ScalarSolution, SpectralReport, SquareMatrix,
};
pub use quadratic::{
    matrix_square_map, min_norm_on_sphere, random_quadratic_map, DegeneracyReport, QuadraticMap,
    StateVector, EPS_ZERO,
};
pub use spherical::{
    circle_map_degree, find_invariant_lines, generic_blowup_certificate, line_blowup_time,
    BlowupCertificate, DegreeReport, InvariantLine, EPS_LINE,
};

/// Version string embedded in every persisted result.
pub const TOOL_VERSION: &str = concat!("quadblow ", env!("CARGO_PKG_VERSION"));
