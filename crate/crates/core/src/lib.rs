//! Ground states of two-component Bose-Einstein condensates in a 2D harmonic
//! trap, and the tools to check their segregation and symmetry breaking at
//! strong intercomponent coupling.

pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod oracles;
pub mod solver;
pub mod sweep;

pub use diagnostics::{
    fit_half_plane, nodal_interior_probe, segregation_report, truncation_check, DiagnosticsRecord, SegregationReport,
    SymmetryReport,
};
pub use energy::{
    energy_gradient, energy_segregated, energy_total, gp_residual, lagrange_multipliers, EnergyBreakdown,
    MultiplierPair, ResidualMode,
};
pub use error::{Error, Result};
pub use grid::{angular_modes, gradient_squared_integral, integrate, laplacian, CouplingParams, Grid2D, ScalarField};
pub use oracles::{
    gaussian_rayleigh, half_dipole, lambda_halfspace, to_gaussian_frame, DipolePart, EigenKind, GaussianFrameField,
    OscillatorEigenfunction,
};
pub use solver::{
    best_of_seeds, continuation_sweep, flow_step, solve_ground_state, GroundStateSolution, SeedKind, SolverConfig,
    StepScheme,
};
pub use sweep::{run_solve, run_sweep, ExitStatus, ManifestEntry, RunConfig, SweepManifest};
