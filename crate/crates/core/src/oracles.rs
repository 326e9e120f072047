//! Closed-form references and the Gaussian-frame machinery.
//!
//! * Oscillator eigenfunctions of `-Δ + ω²|x|²`: the ground state
//!   `φ0 = sqrt(ω/π) e^{-ω|x|²/2}` (eigenvalue `2ω`) and the second-level
//!   dipoles `w_ν = (2/√π) ω (x·ν) e^{-ω|x|²/2}` (eigenvalue `4ω`). With this
//!   normalization `∫w_ν² = 2` and each half `w_ν^±` has unit mass.
//! * The change of variables `ũ(y) = sqrt(2π) α u(α y) e^{|y|²/4}` with
//!   `α = (2ω)^{-1/2}`, which turns the segregated energy into
//!   `ω (F(ũ) + F(ṽ) + 2)` where `F` is the Gaussian-Rayleigh quotient
//!   `∫|∇f|² dμ / ∫f² dμ`, `dμ = e^{-|y|²/2} dy / 2π`.
//! * `Λ(H_a)`, the bottom of the Gaussian-Dirichlet spectrum on the half
//!   plane `{y·ν > a}`, reduced to a one-dimensional weighted problem.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::linalg::{pcg, smallest_tridiagonal_eigenvalue};

/// Which oscillator eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EigenKind {
    Ground,
    /// Second level, direction `nu` (unit vector).
    SecondDipole {
        nu: [f64; 2],
    },
}

/// Portion of a dipole eigenfunction to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DipolePart {
    #[default]
    Signed,
    /// `w_ν^+`, supported in `{x·ν > 0}`.
    Positive,
    /// `w_ν^-` (as a nonnegative function), supported in `{x·ν < 0}`.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorEigenfunction {
    pub kind: EigenKind,
    pub omega: f64,
}

impl OscillatorEigenfunction {
    pub fn ground(omega: f64) -> Self {
        Self {
            kind: EigenKind::Ground,
            omega,
        }
    }

    /// Dipole along `nu`, which is normalized here; a zero vector is rejected.
    pub fn dipole(omega: f64, nu: [f64; 2]) -> Result<Self> {
        let norm = nu[0].hypot(nu[1]);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::param(format!("dipole direction {nu:?} has no length")));
        }
        Ok(Self {
            kind: EigenKind::SecondDipole {
                nu: [nu[0] / norm, nu[1] / norm],
            },
            omega,
        })
    }

    /// Oscillator eigenvalue of this function.
    pub fn eigenvalue(&self) -> f64 {
        match self.kind {
            EigenKind::Ground => 2.0 * self.omega,
            EigenKind::SecondDipole { .. } => 4.0 * self.omega,
        }
    }

    /// Pointwise value at `(x1, x2)`.
    pub fn value(&self, x1: f64, x2: f64, part: DipolePart) -> f64 {
        let w = self.omega;
        let gauss = (-0.5 * w * (x1 * x1 + x2 * x2)).exp();
        match self.kind {
            EigenKind::Ground => (w / PI).sqrt() * gauss,
            EigenKind::SecondDipole { nu } => {
                let s = x1 * nu[0] + x2 * nu[1];
                let s = match part {
                    DipolePart::Signed => s,
                    DipolePart::Positive => s.max(0.0),
                    DipolePart::Negative => (-s).max(0.0),
                };
                2.0 / PI.sqrt() * w * s * gauss
            }
        }
    }

    /// Samples on `grid` (boundary ring zero). `part` is ignored for the
    /// ground state.
    pub fn eval(&self, grid: &Grid2D, part: DipolePart) -> Result<ScalarField> {
        eval_eigenfunction(self, grid, part)
    }
}

pub fn eval_eigenfunction(e: &OscillatorEigenfunction, grid: &Grid2D, part: DipolePart) -> Result<ScalarField> {
    if e.omega != grid.omega() {
        return Err(Error::GridMismatch(format!(
            "eigenfunction omega {} differs from grid omega {}",
            e.omega,
            grid.omega()
        )));
    }
    Ok(ScalarField::from_fn(*grid, |x1, x2| e.value(x1, x2, part)))
}

/// Unit-mass half of the dipole along `nu` on `grid` (trap frequency taken
/// from the grid). These are the predicted limiting components.
pub fn half_dipole(grid: &Grid2D, nu: [f64; 2], part: DipolePart) -> Result<ScalarField> {
    OscillatorEigenfunction::dipole(grid.omega(), nu)?.eval(grid, part)
}

/// Trap frequency whose ground state is `e^{-|y|²/4}`, i.e. the Gaussian frame.
pub const FRAME_OMEGA: f64 = 0.5;

/// A field expressed in the Gaussian frame. The frame grid has half-width
/// `L / α` and the same node count as the physical grid, so each frame node
/// is the image of a physical node.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFrameField {
    field: ScalarField,
    source_omega: f64,
}

impl GaussianFrameField {
    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }

    /// Trap frequency of the physical field this came from.
    pub fn source_omega(&self) -> f64 {
        self.source_omega
    }

    /// Frame-grid field assembled by hand; used for test functions.
    pub fn from_fn(grid: Grid2D, source_omega: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            field: ScalarField::from_fn(grid, f),
            source_omega,
        }
    }
}

/// `α = (2ω)^{-1/2}`.
pub fn frame_scale(omega: f64) -> f64 {
    (2.0 * omega).sqrt().recip()
}

/// Maps `u` to `ũ(y) = sqrt(2π) α u(α y) e^{|y|²/4}`.
pub fn to_gaussian_frame(u: &ScalarField) -> Result<GaussianFrameField> {
    let grid = u.grid();
    let alpha = frame_scale(grid.omega());
    let frame = Grid2D::relaxed(grid.half_width() / alpha, grid.points(), FRAME_OMEGA)?;
    let pref = (2.0 * PI).sqrt() * alpha;
    let mut values = Vec::with_capacity(frame.len());
    for (i, j, y1, y2) in frame.nodes() {
        let v = if frame.is_boundary(i, j) {
            0.0
        } else {
            // Frame node (i, j) is the image of physical node (i, j).
            let x = u.at(i, j);
            if x == 0.0 {
                0.0
            } else {
                pref * x * (0.25 * (y1 * y1 + y2 * y2)).exp()
            }
        };
        values.push(v);
    }
    let field = ScalarField::from_values(frame, values)
        .map_err(|_| Error::NumericalFailure("Gaussian-frame weight overflowed".into()))?;
    Ok(GaussianFrameField {
        field,
        source_omega: grid.omega(),
    })
}

/// Inverse of [`to_gaussian_frame`] back onto `physical`.
pub fn from_gaussian_frame(f: &GaussianFrameField, physical: &Grid2D) -> Result<ScalarField> {
    let alpha = frame_scale(physical.omega());
    if f.field.grid().points() != physical.points()
        || (f.field.grid().half_width() * alpha - physical.half_width()).abs() > 1e-12 * physical.half_width()
    {
        return Err(Error::GridMismatch(
            "frame grid is not the image of the physical grid".into(),
        ));
    }
    let pref = (2.0 * PI).sqrt() * alpha;
    let frame = *f.field.grid();
    let values = frame
        .nodes()
        .map(|(i, j, y1, y2)| f.field.at(i, j) * (-0.25 * (y1 * y1 + y2 * y2)).exp() / pref)
        .collect();
    ScalarField::from_values(*physical, values)
}

#[inline]
fn gauss_weight(y1: f64, y2: f64) -> f64 {
    (-0.5 * (y1 * y1 + y2 * y2)).exp() / (2.0 * PI)
}

/// `∫f² dμ` with node weights.
pub fn gaussian_mass(f: &GaussianFrameField) -> f64 {
    let grid = f.field.grid();
    let h = grid.spacing();
    h * h
        * grid
            .nodes()
            .map(|(i, j, y1, y2)| {
                let v = f.field.at(i, j);
                gauss_weight(y1, y2) * v * v
            })
            .sum::<f64>()
}

/// `∫|∇f|² dμ` over grid edges, weight evaluated at edge midpoints.
pub fn gaussian_dirichlet(f: &GaussianFrameField) -> f64 {
    let grid = f.field.grid();
    let n = grid.points();
    let h = grid.spacing();
    let mut acc = 0.0;
    for (i, j, y1, y2) in grid.nodes() {
        let v = f.field.at(i, j);
        if i + 1 < n {
            let d = f.field.at(i + 1, j) - v;
            acc += gauss_weight(y1 + 0.5 * h, y2) * d * d;
        }
        if j + 1 < n {
            let d = f.field.at(i, j + 1) - v;
            acc += gauss_weight(y1, y2 + 0.5 * h) * d * d;
        }
    }
    acc
}

/// Gaussian-Rayleigh quotient `F(f) = ∫|∇f|² dμ / ∫f² dμ`.
pub fn gaussian_rayleigh(f: &GaussianFrameField) -> Result<f64> {
    let den = gaussian_mass(f);
    if !(den > 0.0) {
        return Err(Error::Degenerate(
            "Gaussian-Rayleigh quotient of a zero function".into(),
        ));
    }
    Ok(gaussian_dirichlet(f) / den)
}

/// Node count of the one-dimensional half-line problem.
pub const HALFSPACE_NODES: usize = 4000;
/// Length of the truncated half-line `[a, a + 12]`.
pub const HALFSPACE_LENGTH: f64 = 12.0;

/// `Λ(H_a)`: minimum over `f(a) = 0` of
/// `∫_a^∞ f'² e^{-t²/2} dt / ∫_a^∞ f² e^{-t²/2} dt`, for `a ∈ [-3, 3]`.
///
/// Discretized on [`HALFSPACE_NODES`] nodes over `[a, a + 12]` with a free
/// right end: midpoint weights on the stiffness, trapezoid weights on the
/// mass. The symmetrized generalized problem is tridiagonal and its lowest
/// eigenvalue comes from Sturm bisection. Weight ratios are formed from
/// exponent differences so nothing underflows at the far end.
pub fn lambda_halfspace(a: f64) -> Result<f64> {
    if !(-3.0..=3.0).contains(&a) {
        return Err(Error::param(format!("half-space offset {a} outside [-3, 3]")));
    }
    let n = HALFSPACE_NODES;
    let h = HALFSPACE_LENGTH / (n - 1) as f64;
    let t = |k: usize| a + k as f64 * h;
    let tm = |k: usize| a + (k as f64 + 0.5) * h;
    // Unknowns are nodes 1..n; mass weight m_k = c_k h e^{-t_k²/2}, with
    // c = 1/2 on the last node; stiffness weight s_k = e^{-tm_k²/2} / h on
    // edge (k, k+1).
    let log_m = |k: usize| -0.5 * t(k).powi(2) + if k == n - 1 { 0.5f64.ln() } else { 0.0 } + h.ln();
    let log_s = |k: usize| -0.5 * tm(k).powi(2) - h.ln();
    let mut diag = Vec::with_capacity(n - 1);
    let mut off = Vec::with_capacity(n - 2);
    for k in 1..n {
        let mut d = (log_s(k - 1) - log_m(k)).exp();
        if k + 1 < n {
            d += (log_s(k) - log_m(k)).exp();
            off.push(-(log_s(k) - 0.5 * (log_m(k) + log_m(k + 1))).exp());
        }
        diag.push(d);
    }
    smallest_tridiagonal_eigenvalue(&diag, &off)
}

/// Lowest Gaussian-Dirichlet eigenvalue of a set `S` in the Gaussian frame:
/// the minimum of the discretized quotient [`gaussian_rayleigh`] over frame
/// fields vanishing outside `S` (and on the box boundary).
///
/// Solved by inverse iteration on the symmetrized operator with conjugate
/// gradients. Returns the eigenvalue and the minimizing field.
pub fn gaussian_dirichlet_eigenvalue(
    half_width: f64,
    points: usize,
    inside: impl Fn(f64, f64) -> bool,
) -> Result<(f64, GaussianFrameField)> {
    let grid = Grid2D::relaxed(half_width, points, FRAME_OMEGA)?;
    let n = points;
    let h = grid.spacing();
    let mut unknown = vec![usize::MAX; grid.len()];
    let mut nodes = Vec::new();
    for (i, j, y1, y2) in grid.nodes() {
        if !grid.is_boundary(i, j) && inside(y1, y2) {
            unknown[grid.index(i, j)] = nodes.len();
            nodes.push((i, j));
        }
    }
    if nodes.is_empty() {
        return Err(Error::Degenerate("set contains no interior grid node".into()));
    }
    let r2 = |i: usize, j: usize| grid.coord(i).powi(2) + grid.coord(j).powi(2);
    // Symmetrized operator D^{-1/2} K D^{-1/2} with D = diag(h² m_i): the
    // off-diagonal factor w_e / sqrt(m_i m_j) is e^{h²/8} for every edge.
    let off_w = -(h * h / 8.0).exp() / (h * h);
    let mut diag = vec![0.0; nodes.len()];
    let mut adj: Vec<[usize; 4]> = vec![[usize::MAX; 4]; nodes.len()];
    for (k, &(i, j)) in nodes.iter().enumerate() {
        let nbrs = [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)];
        for (slot, &(a, b)) in nbrs.iter().enumerate() {
            let mid2 = 0.25 * ((grid.coord(i) + grid.coord(a)).powi(2) + (grid.coord(j) + grid.coord(b)).powi(2));
            diag[k] += (-0.5 * (mid2 - r2(i, j))).exp() / (h * h);
            adj[k][slot] = unknown[a * n + b];
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        for k in 0..x.len() {
            let mut acc = diag[k] * x[k];
            for &m in &adj[k] {
                if m != usize::MAX {
                    acc += off_w * x[m];
                }
            }
            out[k] = acc;
        }
    };
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let norm = |x: &mut [f64]| {
        let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= s);
    };
    let mut y = vec![1.0; nodes.len()];
    norm(&mut y);
    let mut ty = vec![0.0; nodes.len()];
    let mut estimate = f64::INFINITY;
    for _ in 0..500 {
        let mut next = y.clone();
        pcg(apply, &inv_diag, &y, &mut next, 1e-12, 20 * n)?;
        norm(&mut next);
        y = next;
        apply(&y, &mut ty);
        let rq: f64 = y.iter().zip(&ty).map(|(a, b)| a * b).sum();
        let done = (estimate - rq).abs() <= 1e-13 * rq.abs();
        estimate = rq;
        if done {
            break;
        }
    }
    let mut values = vec![0.0; grid.len()];
    for (k, &(i, j)) in nodes.iter().enumerate() {
        // f = y / sqrt(m), m = e^{-|y|²/2}
        values[grid.index(i, j)] = y[k] * (0.25 * r2(i, j)).exp();
    }
    let field = ScalarField::from_values(grid, values)?;
    Ok((
        estimate,
        GaussianFrameField {
            field,
            source_omega: FRAME_OMEGA,
        },
    ))
}
