//! Ground states by normalized gradient flow (discrete imaginary time).
//!
//! Each step solves, for both components from the same snapshot,
//!
//! ```text
//! (I + τ(-Δ + V + W)) u* = u - τ N(u, v),   u' = u* / ‖u*‖
//! ```
//!
//! with conjugate gradients, where the split of the nonlinearity between
//! the frozen potential `W` and the explicit term `N` depends on the
//! [`StepScheme`]. The time step adapts: it is halved whenever the energy
//! goes up and grows back toward `τ0` after a run of accepted steps.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{energy_total, gp_residual, lagrange_multipliers, EnergyBreakdown, MultiplierPair, ResidualMode};
use crate::error::{Error, Result};
use crate::grid::{laplacian_into, CouplingParams, Grid2D, ScalarField};
use crate::io::read_field;
use crate::linalg::pcg;
use crate::oracles::OscillatorEigenfunction;

/// Relative tolerance of the inner conjugate-gradient solves.
pub const INNER_TOL: f64 = 1e-10;
/// Accepted steps before the time step grows again.
pub const GROWTH_DELAY: usize = 50;
pub const GROWTH_FACTOR: f64 = 1.2;
/// Amplitude of the seed asymmetry for [`SeedKind::DipolePerturbed`].
pub const DIPOLE_SEED_AMPLITUDE: f64 = 0.3;
const MIN_TIME_STEP: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeedKind {
    /// `u0 = v0 = φ0`.
    SymmetricGaussian,
    /// `u0 ∝ φ0 (1 + 0.3 x·a/L)`, `v0 ∝ φ0 (1 - 0.3 x·a/L)` for the seed axis `a`.
    DipolePerturbed,
    /// `φ0` times independent uniform noise in `[0.5, 1.5)` per node and component.
    Random,
    FromFile {
        u: PathBuf,
        v: PathBuf,
    },
}

/// How the cubic terms enter a flow step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StepScheme {
    /// `W = g1 u² + g12 v²` frozen at the snapshot and kept in the operator.
    #[default]
    FrozenNonlinear,
    /// Fixed operator `I + τ(-Δ + V)`; cubic terms on the right-hand side.
    ExplicitNonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub time_step: f64,
    pub residual_tol: f64,
    pub energy_tol: f64,
    pub max_iters: usize,
    pub seed_kind: SeedKind,
    pub rng_seed: u64,
    pub continuation_schedule: Vec<CouplingParams>,
    /// Axis of the dipole seed.
    pub dipole_axis: [f64; 2],
    pub scheme: StepScheme,
}

impl SolverConfig {
    pub fn new(schedule: Vec<CouplingParams>) -> Self {
        Self {
            time_step: 1.0,
            residual_tol: 1e-6,
            energy_tol: 1e-10,
            max_iters: 20_000,
            seed_kind: SeedKind::DipolePerturbed,
            rng_seed: 0,
            continuation_schedule: schedule,
            dipole_axis: [1.0, 0.0],
            scheme: StepScheme::default(),
        }
    }

    pub fn single(g: CouplingParams) -> Self {
        Self::new(vec![g])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return Err(Error::param(format!(
                "time step must be positive, got {}",
                self.time_step
            )));
        }
        if !(self.residual_tol > 0.0) || !(self.energy_tol > 0.0) {
            return Err(Error::param("residual and energy tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be at least 1"));
        }
        if self.continuation_schedule.is_empty() {
            return Err(Error::param("continuation schedule is empty"));
        }
        for g in &self.continuation_schedule {
            g.validate()?;
        }
        if self.dipole_axis[0].hypot(self.dipole_axis[1]) == 0.0 {
            return Err(Error::param("dipole seed axis has zero length"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateSolution {
    pub u: ScalarField,
    pub v: ScalarField,
    pub g: CouplingParams,
    pub energy: EnergyBreakdown,
    pub multipliers: MultiplierPair,
    pub residual_u: f64,
    pub residual_v: f64,
    /// Flow steps taken, rejected ones included.
    pub iterations: usize,
    pub converged: bool,
    /// Energy decrement of the last accepted step.
    pub last_decrement: f64,
    pub final_time_step: f64,
}

/// Solves `(I + τ(-Δ + V + W)) x = rhs` on interior nodes, Dirichlet ring.
fn implicit_solve(grid: Grid2D, tau: f64, extra: &[f64], rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
    let n = grid.points();
    let h2 = grid.spacing() * grid.spacing();
    let mut diag = vec![1.0; grid.len()];
    for (i, j, _, _) in grid.nodes() {
        if !grid.is_boundary(i, j) {
            let k = grid.index(i, j);
            diag[k] = 1.0 + tau * (grid.potential(i, j) + extra[k]);
        }
    }
    let inv_diag: Vec<f64> = (0..grid.len())
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if grid.is_boundary(i, j) {
                1.0
            } else {
                1.0 / (diag[k] + 4.0 * tau / h2)
            }
        })
        .collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        laplacian_into(grid, x, out);
        for k in 0..x.len() {
            // laplacian_into leaves the ring at zero, so the ring row is the identity.
            out[k] = diag[k] * x[k] - tau * out[k];
        }
    };
    let mut x = guess.to_vec();
    pcg(apply, &inv_diag, rhs, &mut x, INNER_TOL, 10 * n)?;
    for (i, j, _, _) in grid.nodes() {
        if grid.is_boundary(i, j) {
            x[grid.index(i, j)] = 0.0;
        }
    }
    Ok(x)
}

fn component_step(
    f: &ScalarField,
    other: &ScalarField,
    self_g: f64,
    cross_g: f64,
    tau: f64,
    scheme: StepScheme,
) -> Result<ScalarField> {
    let grid = *f.grid();
    let fv = f.values();
    let ov = other.values();
    let nonlinear: Vec<f64> = fv
        .iter()
        .zip(ov)
        .map(|(a, b)| self_g * a * a + cross_g * b * b)
        .collect();
    let (extra, rhs): (Vec<f64>, Vec<f64>) = match scheme {
        StepScheme::FrozenNonlinear => (nonlinear, fv.to_vec()),
        StepScheme::ExplicitNonlinear => (
            vec![0.0; grid.len()],
            fv.iter().zip(&nonlinear).map(|(a, w)| a - tau * w * a).collect(),
        ),
    };
    let x = implicit_solve(grid, tau, &extra, &rhs, fv)?;
    ScalarField::from_values(grid, x)?
        .normalized()
        .map_err(|e| Error::NumericalFailure(format!("flow step lost all mass: {e}")))
}

/// One normalized semi-implicit step; both components use the same input
/// snapshot.
pub fn flow_step(
    u: &ScalarField,
    v: &ScalarField,
    g: &CouplingParams,
    tau: f64,
    scheme: StepScheme,
) -> Result<(ScalarField, ScalarField)> {
    u.grid().ensure_same(v.grid())?;
    g.validate()?;
    if !(tau > 0.0) {
        return Err(Error::param(format!("time step must be positive, got {tau}")));
    }
    let (nu, nv) = rayon::join(
        || component_step(u, v, g.g1, g.g12, tau, scheme),
        || component_step(v, u, g.g2, g.g12, tau, scheme),
    );
    Ok((nu?, nv?))
}

/// Initial pair for `cfg.seed_kind`, normalized to unit mass.
pub fn seed_pair(cfg: &SolverConfig, grid: &Grid2D) -> Result<(ScalarField, ScalarField)> {
    let ground = OscillatorEigenfunction::ground(grid.omega());
    let phi = |x1: f64, x2: f64| ground.value(x1, x2, Default::default());
    let (u, v) = match &cfg.seed_kind {
        SeedKind::SymmetricGaussian => {
            let p = ScalarField::from_fn(*grid, phi);
            (p.clone(), p)
        }
        SeedKind::DipolePerturbed => {
            let norm = cfg.dipole_axis[0].hypot(cfg.dipole_axis[1]);
            let a = [cfg.dipole_axis[0] / norm, cfg.dipole_axis[1] / norm];
            let l = grid.half_width();
            let tilt = |x1: f64, x2: f64| DIPOLE_SEED_AMPLITUDE * (x1 * a[0] + x2 * a[1]) / l;
            (
                ScalarField::from_fn(*grid, |x1, x2| phi(x1, x2) * (1.0 + tilt(x1, x2))),
                ScalarField::from_fn(*grid, |x1, x2| phi(x1, x2) * (1.0 - tilt(x1, x2))),
            )
        }
        SeedKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            let mut noisy = || {
                let noise: Vec<f64> = (0..grid.len()).map(|_| 0.5 + rng.gen::<f64>()).collect();
                let base = ScalarField::from_fn(*grid, phi);
                ScalarField::from_values(*grid, noise).and_then(|n| n.zip_with(&base, |a, b| a * b))
            };
            let u = noisy()?;
            let v = noisy()?;
            (u, v)
        }
        SeedKind::FromFile { u, v } => {
            let (u, v) = (read_field(u)?, read_field(v)?);
            grid.ensure_same(u.grid())?;
            grid.ensure_same(v.grid())?;
            (u, v)
        }
    };
    Ok((u.normalized()?, v.normalized()?))
}

/// Minimizes `E_g` for a single coupling triple starting from `(u0, v0)`.
pub fn solve_from(
    u0: ScalarField,
    v0: ScalarField,
    g: &CouplingParams,
    cfg: &SolverConfig,
) -> Result<GroundStateSolution> {
    solve_from_observed(u0, v0, g, cfg, |_, _, _| {})
}

/// [`solve_from`] with a callback on every accepted iterate
/// `(step index, u, v)`.
pub fn solve_from_observed(
    u0: ScalarField,
    v0: ScalarField,
    g: &CouplingParams,
    cfg: &SolverConfig,
    mut observer: impl FnMut(usize, &ScalarField, &ScalarField),
) -> Result<GroundStateSolution> {
    g.validate()?;
    g.ensure_matches(u0.grid())?;
    u0.grid().ensure_same(v0.grid())?;
    let mut u = u0.normalized()?;
    let mut v = v0.normalized()?;
    let mut energy = energy_total(&u, &v, g)?;
    let mut tau = cfg.time_step;
    let mut calm_steps = 0;
    let mut last_decrement = f64::INFINITY;
    let mut iterations = 0;

    let finish = |u: ScalarField, v: ScalarField, energy, iterations, converged, last_decrement, tau| {
        let multipliers = lagrange_multipliers(&u, &v, g)?;
        let (residual_u, residual_v) = gp_residual(&u, &v, g, &multipliers, ResidualMode::Full)?;
        Ok(GroundStateSolution {
            u,
            v,
            g: *g,
            energy,
            multipliers,
            residual_u,
            residual_v,
            iterations,
            converged,
            last_decrement,
            final_time_step: tau,
        })
    };

    while iterations < cfg.max_iters {
        iterations += 1;
        let (nu, nv) = flow_step(&u, &v, g, tau, cfg.scheme)?;
        let next = energy_total(&nu, &nv, g)?;
        if next.total > energy.total + 1e-12 * energy.total.abs().max(1.0) {
            tau *= 0.5;
            calm_steps = 0;
            if tau < MIN_TIME_STEP {
                return Err(Error::NumericalFailure(format!(
                    "time step underflow at iteration {iterations}: energy keeps increasing"
                )));
            }
            continue;
        }
        last_decrement = energy.total - next.total;
        u = nu;
        v = nv;
        energy = next;
        observer(iterations, &u, &v);
        calm_steps += 1;
        if calm_steps >= GROWTH_DELAY && tau < cfg.time_step {
            tau = (tau * GROWTH_FACTOR).min(cfg.time_step);
            calm_steps = 0;
        }
        if last_decrement <= cfg.energy_tol {
            let lm = lagrange_multipliers(&u, &v, g)?;
            let (ru, rv) = gp_residual(&u, &v, g, &lm, ResidualMode::Full)?;
            if ru <= cfg.residual_tol && rv <= cfg.residual_tol {
                return finish(u, v, energy, iterations, true, last_decrement, tau);
            }
        }
    }
    finish(u, v, energy, iterations, false, last_decrement, tau)
}

/// Warm-started continuation over `cfg.continuation_schedule`. An entry that
/// fails is reported and the next entry restarts from the last good state.
pub fn continuation_sweep(cfg: &SolverConfig, grid: &Grid2D) -> Vec<Result<GroundStateSolution>> {
    if let Err(e) = cfg.validate() {
        return vec![Err(e)];
    }
    let (mut u, mut v) = match seed_pair(cfg, grid) {
        Ok(pair) => pair,
        Err(e) => return vec![Err(e)],
    };
    let mut out = Vec::with_capacity(cfg.continuation_schedule.len());
    for g in &cfg.continuation_schedule {
        let result = solve_from(u.clone(), v.clone(), g, cfg);
        if let Ok(sol) = &result {
            u = sol.u.clone();
            v = sol.v.clone();
        }
        out.push(result);
    }
    out
}

/// Runs the whole schedule and returns the solution for its last entry.
pub fn solve_ground_state(cfg: &SolverConfig, grid: &Grid2D) -> Result<GroundStateSolution> {
    continuation_sweep(cfg, grid)
        .pop()
        .unwrap_or_else(|| Err(Error::param("continuation schedule is empty")))
}

/// Every schedule entry solved independently from the configured seed,
/// on up to `threads` worker threads.
pub fn cold_start_sweep(cfg: &SolverConfig, grid: &Grid2D, threads: usize) -> Vec<Result<GroundStateSolution>> {
    if let Err(e) = cfg.validate() {
        return vec![Err(e)];
    }
    let run = || {
        cfg.continuation_schedule
            .par_iter()
            .map(|g| {
                let (u, v) = seed_pair(cfg, grid)?;
                solve_from(u, v, g, cfg)
            })
            .collect::<Vec<_>>()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(e) => vec![Err(Error::NumericalFailure(format!("thread pool: {e}")))],
    }
}

/// Solves the schedule from the dipole seed and from `random_seeds` random
/// seeds (`rng_seed`, `rng_seed + 1`, ...) and keeps the run whose final
/// entry has the lowest energy, preferring converged runs.
pub fn best_of_seeds(cfg: &SolverConfig, grid: &Grid2D, random_seeds: usize) -> Result<GroundStateSolution> {
    let mut configs = vec![SolverConfig {
        seed_kind: SeedKind::DipolePerturbed,
        ..cfg.clone()
    }];
    configs.extend((0..random_seeds).map(|k| SolverConfig {
        seed_kind: SeedKind::Random,
        rng_seed: cfg.rng_seed.wrapping_add(k as u64),
        ..cfg.clone()
    }));
    let results: Vec<Result<GroundStateSolution>> = configs.par_iter().map(|c| solve_ground_state(c, grid)).collect();
    let mut best: Option<GroundStateSolution> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(sol) => {
                let better = match &best {
                    None => true,
                    Some(b) => (sol.converged, -sol.energy.total) > (b.converged, -b.energy.total),
                };
                if better {
                    best = Some(sol);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::param("no seeds to run")))
}
