//! Discrete two-component Gross-Pitaevskii energy, its L2 gradient, the
//! Lagrange multipliers and the residuals of the coupled stationary system
//!
//! ```text
//! -Δu + V u + g1 u^3 + g12 v^2 u = λ u
//! -Δv + V v + g2 v^3 + g12 u^2 v = μ v
//! ```
//!
//! All quantities use the operators of [`crate::grid`], so the gradient is
//! the exact derivative of the discrete energy (divided by `h^2`).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{gradient_squared_integral, laplacian, CouplingParams, Grid2D, ScalarField};

/// Term-by-term energy. `total` is the sum of the seven parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic_u: f64,
    pub trap_u: f64,
    pub quartic_u: f64,
    pub kinetic_v: f64,
    pub trap_v: f64,
    pub quartic_v: f64,
    pub interaction: f64,
    pub total: f64,
}

/// Lagrange multipliers `(λ, μ)` attached to the two mass constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPair {
    pub lambda: f64,
    pub mu: f64,
}

fn check_inputs(u: &ScalarField, v: &ScalarField, g: &CouplingParams) -> Result<Grid2D> {
    u.grid().ensure_same(v.grid())?;
    g.validate()?;
    g.ensure_matches(u.grid())?;
    Ok(*u.grid())
}

/// Per-component integrals `(∫|∇f|^2, ∫V f^2, ∫f^4)`.
fn component_integrals(f: &ScalarField) -> (f64, f64, f64) {
    let grid = f.grid();
    let h2 = grid.spacing() * grid.spacing();
    let mut trap = 0.0;
    let mut quartic = 0.0;
    for (i, j, _, _) in grid.nodes() {
        let x = f.at(i, j);
        let x2 = x * x;
        trap += grid.potential(i, j) * x2;
        quartic += x2 * x2;
    }
    (gradient_squared_integral(f), h2 * trap, h2 * quartic)
}

fn overlap_integral(u: &ScalarField, v: &ScalarField) -> f64 {
    let h = u.grid().spacing();
    h * h
        * u.values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| a * a * b * b)
            .sum::<f64>()
}

/// `E_g(u, v)`. Unit masses are a precondition, not checked here.
pub fn energy_total(u: &ScalarField, v: &ScalarField, g: &CouplingParams) -> Result<EnergyBreakdown> {
    check_inputs(u, v, g)?;
    let (ku, tu, qu) = component_integrals(u);
    let (kv, tv, qv) = component_integrals(v);
    let kinetic_u = 0.5 * ku;
    let trap_u = 0.5 * tu;
    let quartic_u = 0.25 * g.g1 * qu;
    let kinetic_v = 0.5 * kv;
    let trap_v = 0.5 * tv;
    let quartic_v = 0.25 * g.g2 * qv;
    let interaction = if g.g12 == 0.0 {
        0.0
    } else {
        0.5 * g.g12 * overlap_integral(u, v)
    };
    Ok(EnergyBreakdown {
        kinetic_u,
        trap_u,
        quartic_u,
        kinetic_v,
        trap_v,
        quartic_v,
        interaction,
        total: kinetic_u + trap_u + quartic_u + kinetic_v + trap_v + quartic_v + interaction,
    })
}

/// Segregated energy: the sum of the single-component GP energies, i.e.
/// [`energy_total`] with `g12 = 0`. Whether `u v = 0` holds is not checked.
pub fn energy_segregated(u: &ScalarField, v: &ScalarField, g1: f64, g2: f64) -> Result<f64> {
    let g = CouplingParams {
        g1,
        g2,
        g12: 0.0,
        omega: u.grid().omega(),
    };
    Ok(energy_total(u, v, &g)?.total)
}

/// `λ = ∫|∇u|^2 + V u^2 + g1 u^4 + g12 u^2 v^2`, `μ` symmetrically.
pub fn lagrange_multipliers(u: &ScalarField, v: &ScalarField, g: &CouplingParams) -> Result<MultiplierPair> {
    check_inputs(u, v, g)?;
    let (ku, tu, qu) = component_integrals(u);
    let (kv, tv, qv) = component_integrals(v);
    let cross = overlap_integral(u, v);
    Ok(MultiplierPair {
        lambda: ku + tu + g.g1 * qu + g.g12 * cross,
        mu: kv + tv + g.g2 * qv + g.g12 * cross,
    })
}

/// Unconstrained L2 gradient `(G_u, G_v)` of the discrete energy.
///
/// `G_u = -Δu + V u + g1 u^3 + g12 v^2 u`; boundary values are zero.
pub fn energy_gradient(u: &ScalarField, v: &ScalarField, g: &CouplingParams) -> Result<(ScalarField, ScalarField)> {
    check_inputs(u, v, g)?;
    Ok((
        component_gradient(u, v, g.g1, g.g12),
        component_gradient(v, u, g.g2, g.g12),
    ))
}

fn component_gradient(f: &ScalarField, other: &ScalarField, self_g: f64, cross_g: f64) -> ScalarField {
    let grid = *f.grid();
    let mut out = laplacian(f);
    for (i, j, _, _) in grid.nodes() {
        let k = grid.index(i, j);
        if grid.is_boundary(i, j) {
            out.values_mut()[k] = 0.0;
            continue;
        }
        let x = f.values()[k];
        let y = other.values()[k];
        let lap = out.values()[k];
        out.values_mut()[k] = -lap + grid.potential(i, j) * x + self_g * x * x * x + cross_g * y * y * x;
    }
    out
}

/// Which interior nodes enter [`gp_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualMode {
    /// Every interior node.
    #[default]
    Full,
    /// Drop nodes within two grid spacings of a sign change of `u - v`,
    /// where segregated limits carry derivative jumps.
    ExcludeNodalBand,
}

/// Band half-width, in grid spacings, removed by [`ResidualMode::ExcludeNodalBand`].
pub const NODAL_BAND_WIDTH: usize = 2;

/// Interior L2 norms of `r_u = G_u - λ u` and `r_v = G_v - μ v`.
pub fn gp_residual(
    u: &ScalarField,
    v: &ScalarField,
    g: &CouplingParams,
    lm: &MultiplierPair,
    mode: ResidualMode,
) -> Result<(f64, f64)> {
    let (gu, gv) = energy_gradient(u, v, g)?;
    let grid = *u.grid();
    let keep = match mode {
        ResidualMode::Full => None,
        ResidualMode::ExcludeNodalBand => Some(nodal_band_mask(u, v)),
    };
    let h = grid.spacing();
    let (mut su, mut sv) = (0.0, 0.0);
    for (i, j, _, _) in grid.nodes() {
        let k = grid.index(i, j);
        if grid.is_boundary(i, j) || keep.as_ref().is_some_and(|m| !m[k]) {
            continue;
        }
        let ru = gu.values()[k] - lm.lambda * u.values()[k];
        let rv = gv.values()[k] - lm.mu * v.values()[k];
        su += ru * ru;
        sv += rv * rv;
    }
    Ok((h * su.sqrt(), h * sv.sqrt()))
}

/// `true` for nodes farther than [`NODAL_BAND_WIDTH`] spacings from any node
/// on the other side of the zero set of `u - v`.
fn nodal_band_mask(u: &ScalarField, v: &ScalarField) -> Vec<bool> {
    let grid = *u.grid();
    let n = grid.points() as isize;
    let side: Vec<bool> = u.values().iter().zip(v.values()).map(|(a, b)| a - b > 0.0).collect();
    let w = NODAL_BAND_WIDTH as isize;
    let mut keep = vec![true; side.len()];
    for i in 0..n {
        for j in 0..n {
            let k = (i * n + j) as usize;
            'scan: for di in -w..=w {
                for dj in -w..=w {
                    if di * di + dj * dj > w * w {
                        continue;
                    }
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a >= n || b >= n {
                        continue;
                    }
                    if side[(a * n + b) as usize] != side[k] {
                        keep[k] = false;
                        break 'scan;
                    }
                }
            }
        }
    }
    keep
}
