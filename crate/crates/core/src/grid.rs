//! Truncated computational domain, discrete fields and the finite-difference
//! operators shared by every other module.
//!
//! Nodes are `x_ij = (-L + i h, -L + j h)` for `0 <= i, j < N`, stored
//! row-major with `i` running along `x1`. Fields vanish on the outer ring of
//! nodes (homogeneous Dirichlet box). The Laplacian, the Dirichlet form and
//! the rectangle-rule quadrature are matched so that summation by parts holds
//! exactly for Dirichlet fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of nodes per dimension.
pub const MIN_POINTS: usize = 16;

/// Uniform square grid on `[-L, L]^2` carrying the trap frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    half_width: f64,
    points: usize,
    spacing: f64,
    omega: f64,
}

impl Grid2D {
    /// Builds a grid and enforces the truncation rule `L >= 6 / sqrt(omega)`.
    pub fn new(half_width: f64, points: usize, omega: f64) -> Result<Self> {
        let grid = Self::relaxed(half_width, points, omega)?;
        let min_width = 6.0 / omega.sqrt();
        if half_width < min_width {
            return Err(Error::param(format!(
                "half-width {half_width} is below the truncation rule 6/sqrt(omega) = {min_width}"
            )));
        }
        Ok(grid)
    }

    /// Builds a grid without the truncation rule. Used for frame grids and
    /// for deliberately undersized boxes in truncation diagnostics.
    pub fn relaxed(half_width: f64, points: usize, omega: f64) -> Result<Self> {
        if points < MIN_POINTS {
            return Err(Error::param(format!(
                "points per dimension {points} is below the minimum {MIN_POINTS}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::param(format!("half-width must be positive, got {half_width}")));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::param(format!("omega must be positive, got {omega}")));
        }
        Ok(Self {
            half_width,
            points,
            spacing: 2.0 * half_width / (points as f64 - 1.0),
            omega,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn len(&self) -> usize {
        self.points * self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node index `i` along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.points + j
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        let last = self.points - 1;
        i == 0 || j == 0 || i == last || j == last
    }

    /// Harmonic trap `V(x) = omega^2 |x|^2` at node `(i, j)`.
    #[inline]
    pub fn potential(&self, i: usize, j: usize) -> f64 {
        let (x1, x2) = (self.coord(i), self.coord(j));
        self.omega * self.omega * (x1 * x1 + x2 * x2)
    }

    /// Iterator over all `(i, j, x1, x2)` in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let n = self.points;
        (0..n).flat_map(move |i| (0..n).map(move |j| (i, j, self.coord(i), self.coord(j))))
    }

    /// Same grid geometry with a different recorded trap frequency.
    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::relaxed(self.half_width, self.points, omega)
    }

    pub fn ensure_same(&self, other: &Grid2D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(L={}, N={}, omega={}) vs (L={}, N={}, omega={})",
                self.half_width, self.points, self.omega, other.half_width, other.points, other.omega
            )))
        }
    }
}

/// Coupling triple `g = (g1, g2, g12)` together with the trap frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub g1: f64,
    pub g2: f64,
    pub g12: f64,
    pub omega: f64,
}

impl CouplingParams {
    pub fn new(g1: f64, g2: f64, g12: f64, omega: f64) -> Result<Self> {
        let g = Self { g1, g2, g12, omega };
        g.validate()?;
        Ok(g)
    }

    /// Checks repulsive intracomponent couplings (`g1 >= 0`, `g2 >= 0`),
    /// `g12 >= 0` and `omega > 0`.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("g1", self.g1), ("g2", self.g2)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::param(format!(
                    "{name} = {value} violates the repulsive-interaction assumption g1 >= 0 and g2 >= 0"
                )));
            }
        }
        if !(self.g12.is_finite() && self.g12 >= 0.0) {
            return Err(Error::param(format!("g12 = {} must be nonnegative", self.g12)));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::param(format!("omega = {} must be positive", self.omega)));
        }
        Ok(())
    }

    pub fn ensure_matches(&self, grid: &Grid2D) -> Result<()> {
        if self.omega == grid.omega() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "coupling omega {} differs from grid omega {}",
                self.omega,
                grid.omega()
            )))
        }
    }

    /// Same couplings with components exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            g1: self.g2,
            g2: self.g1,
            ..*self
        }
    }
}

/// Real field sampled on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f(x1, x2)` on interior nodes; the boundary ring is set to 0.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid
            .nodes()
            .map(|(i, j, x1, x2)| if grid.is_boundary(i, j) { 0.0 } else { f(x1, x2) })
            .collect();
        Self { grid, values }
    }

    /// Wraps raw values; the length must be `N * N` and all values finite.
    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param(format!("field contains non-finite value {bad}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Whether the boundary ring is exactly zero.
    pub fn is_dirichlet(&self) -> bool {
        self.grid
            .nodes()
            .all(|(i, j, _, _)| !self.grid.is_boundary(i, j) || self.at(i, j) == 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// Discrete mass `h^2 sum f^2`.
    pub fn mass(&self) -> f64 {
        let h = self.grid.spacing;
        h * h * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// Rescales to unit discrete mass. Fails on a zero field.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Degenerate(format!("cannot normalize a field of mass {m}")));
        }
        Ok(self.scaled(1.0 / m.sqrt()))
    }

    /// Discrete L2 distance to another field on the same grid.
    pub fn l2_distance(&self, other: &ScalarField) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        let h = self.grid.spacing;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(h * s.sqrt())
    }

    /// Bilinear interpolation at an arbitrary point; zero outside the box.
    pub fn sample(&self, x1: f64, x2: f64) -> f64 {
        let g = &self.grid;
        let n = g.points;
        let t1 = (x1 + g.half_width) / g.spacing;
        let t2 = (x2 + g.half_width) / g.spacing;
        let last = (n - 1) as f64;
        if !(0.0..=last).contains(&t1) || !(0.0..=last).contains(&t2) {
            return 0.0;
        }
        let i = (t1.floor() as usize).min(n - 2);
        let j = (t2.floor() as usize).min(n - 2);
        let (a, b) = (t1 - i as f64, t2 - j as f64);
        let f00 = self.at(i, j);
        let f10 = self.at(i + 1, j);
        let f01 = self.at(i, j + 1);
        let f11 = self.at(i + 1, j + 1);
        (1.0 - a) * (1.0 - b) * f00 + a * (1.0 - b) * f10 + (1.0 - a) * b * f01 + a * b * f11
    }

    /// Resamples `x -> f(R_theta^{-1} x)`, i.e. the field rotated by `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::from_fn(self.grid, |x1, x2| self.sample(c * x1 + s * x2, -s * x1 + c * x2))
    }
}

/// Five-point `Δf` on interior nodes; the output boundary ring is zero.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(f.grid);
    laplacian_into(f.grid, &f.values, &mut out.values);
    out
}

/// Slice form of [`laplacian`]; `out` is fully overwritten.
pub(crate) fn laplacian_into(grid: Grid2D, f: &[f64], out: &mut [f64]) {
    let n = grid.points;
    let inv_h2 = 1.0 / (grid.spacing * grid.spacing);
    out[..n].fill(0.0);
    out[(n - 1) * n..].fill(0.0);
    for i in 1..n - 1 {
        let row = i * n;
        out[row] = 0.0;
        out[row + n - 1] = 0.0;
        for j in 1..n - 1 {
            let k = row + j;
            out[k] = (f[k + n] + f[k - n] + f[k + 1] + f[k - 1] - 4.0 * f[k]) * inv_h2;
        }
    }
}

/// Rectangle rule `h^2 sum f_ij`.
pub fn integrate(f: &ScalarField) -> f64 {
    let h = f.grid.spacing;
    h * h * f.values.iter().sum::<f64>()
}

/// `integrate(f * g)` for two fields on the same grid.
pub fn inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    let h = f.grid.spacing;
    Ok(h * h * f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>())
}

/// Discrete Dirichlet form `sum over edges (f_a - f_b)(g_a - g_b)`, the
/// bilinear form behind [`gradient_squared_integral`].
pub fn dirichlet_form(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    Ok(dirichlet_form_slices(f.grid.points, &f.values, &g.values))
}

fn dirichlet_form_slices(n: usize, f: &[f64], g: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            if i + 1 < n {
                acc += (f[k + n] - f[k]) * (g[k + n] - g[k]);
            }
            if j + 1 < n {
                acc += (f[k + 1] - f[k]) * (g[k + 1] - g[k]);
            }
        }
    }
    acc
}

/// `∫|∇f|^2` from forward differences; the `h^2` cell area cancels the
/// `1/h^2` of the squared difference quotients.
pub fn gradient_squared_integral(f: &ScalarField) -> f64 {
    dirichlet_form_slices(f.grid.points, &f.values, &f.values)
}

/// Number of angular samples per ring in [`angular_modes`].
pub const ANGULAR_SAMPLES: usize = 256;

/// Fractions of angular power carried by modes `m = 0..=m_max`.
///
/// The field is resampled on rings of radius `k h` (`k >= 1`, `k h <= L`)
/// with [`ANGULAR_SAMPLES`] bilinear samples each. Mode `m >= 1` collects
/// both `±m` coefficients. Weights are normalized by the total power over
/// all rings and all modes, so they sum to at most one.
pub fn angular_modes(f: &ScalarField, m_max: usize) -> Result<Vec<f64>> {
    if m_max == 0 || m_max >= ANGULAR_SAMPLES / 2 {
        return Err(Error::param(format!(
            "m_max must lie in 1..{}, got {m_max}",
            ANGULAR_SAMPLES / 2
        )));
    }
    let grid = f.grid;
    let rings = (grid.half_width / grid.spacing + 1e-9).floor() as usize;
    let ns = ANGULAR_SAMPLES;
    let angles: Vec<(f64, f64)> = (0..ns)
        .map(|k| (2.0 * std::f64::consts::PI * k as f64 / ns as f64).sin_cos())
        .collect();

    let mut weights = vec![0.0; m_max + 1];
    let mut total = 0.0;
    let mut samples = vec![0.0; ns];
    for ring in 1..=rings {
        let r = ring as f64 * grid.spacing;
        for (s, &(sin, cos)) in samples.iter_mut().zip(&angles) {
            *s = f.sample(r * cos, r * sin);
        }
        // Parseval: sum_m |c_m|^2 = mean of squares.
        total += samples.iter().map(|s| s * s).sum::<f64>() / ns as f64;
        for (m, w) in weights.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, s) in samples.iter().enumerate() {
                let (sin, cos) = angles[(m * k) % ns];
                re += s * cos;
                im -= s * sin;
            }
            let power = (re * re + im * im) / (ns * ns) as f64;
            *w += if m == 0 { power } else { 2.0 * power };
        }
    }
    if total > 0.0 {
        for w in &mut weights {
            *w /= total;
        }
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_grid() -> Grid2D {
        Grid2D::new(8.0, 257, 1.0).unwrap()
    }

    fn phi0(grid: Grid2D) -> ScalarField {
        let w = grid.omega();
        ScalarField::from_fn(grid, |x, y| {
            (w / std::f64::consts::PI).sqrt() * (-0.5 * w * (x * x + y * y)).exp()
        })
    }

    #[test]
    fn grid_validation() {
        assert!(Grid2D::new(8.0, 15, 1.0).is_err());
        assert!(Grid2D::new(5.0, 65, 1.0).is_err());
        assert!(Grid2D::relaxed(5.0, 65, 1.0).is_ok());
        assert!(Grid2D::new(8.0, 65, 0.0).is_err());
        let g = Grid2D::new(8.0, 257, 1.0).unwrap();
        assert_eq!(g.spacing(), 1.0 / 16.0);
        assert_eq!(g.coord(128), 0.0);
        assert!(Grid2D::new(6.0 / 2.0, 64, 4.0).is_ok());
    }

    #[test]
    fn coupling_validation() {
        assert!(CouplingParams::new(-1.0, 0.0, 0.0, 1.0).is_err());
        assert!(CouplingParams::new(0.0, -0.1, 0.0, 1.0).is_err());
        assert!(CouplingParams::new(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(CouplingParams::new(0.0, 0.0, 1.0, 0.0).is_err());
        let msg = CouplingParams::new(-1.0, 0.0, 0.0, 1.0).unwrap_err().to_string();
        assert!(msg.contains("g1 >= 0 and g2 >= 0"), "{msg}");
    }

    #[test]
    fn laplacian_of_zero_and_linear() {
        let grid = Grid2D::new(8.0, 65, 1.0).unwrap();
        let z = laplacian(&ScalarField::zeros(grid));
        assert!(z.values().iter().all(|&v| v == 0.0));

        let f = ScalarField::from_fn(grid, |x, _| x);
        let lap = laplacian(&f);
        let n = grid.points();
        for i in 2..n - 2 {
            for j in 2..n - 2 {
                assert!(lap.at(i, j).abs() < 1e-9, "{}", lap.at(i, j));
            }
        }
        assert!(lap.is_dirichlet());
    }

    #[test]
    fn laplacian_of_gaussian_at_origin() {
        let grid = std_grid();
        let f = ScalarField::from_fn(grid, |x, y| (-0.5 * (x * x + y * y)).exp());
        let lap = laplacian(&f);
        let c = grid.points() / 2;
        // Five-point truncation error at the origin is (h²/12)(f_xxxx + f_yyyy) = h²/2.
        let h = grid.spacing();
        assert!((lap.at(c, c) - (-2.0 + 0.5 * h * h)).abs() < 1e-5, "{}", lap.at(c, c));
        assert!((lap.at(c, c) + 2.0).abs() < 2e-3);
    }

    #[test]
    fn laplacian_second_order_convergence() {
        // Smooth test function exp(-|x|^2/2) with exact Laplacian (|x|^2 - 2) exp(-|x|^2/2).
        let err = |n: usize| {
            let grid = Grid2D::new(8.0, n, 1.0).unwrap();
            let f = ScalarField::from_fn(grid, |x, y| (-0.5 * (x * x + y * y)).exp());
            let lap = laplacian(&f);
            let mut e: f64 = 0.0;
            for (i, j, x, y) in grid.nodes() {
                if !grid.is_boundary(i, j) {
                    let r2 = x * x + y * y;
                    e = e.max((lap.at(i, j) - (r2 - 2.0) * (-0.5 * r2).exp()).abs());
                }
            }
            e
        };
        let ratio = err(129) / err(257);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn integrate_ground_state_density() {
        let grid = std_grid();
        assert_eq!(integrate(&ScalarField::zeros(grid)), 0.0);
        let p = phi0(grid);
        assert!((p.mass() - 1.0).abs() < 1e-8);
        assert!((integrate(&p.map(|v| v * v)) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn kinetic_term_of_ground_state() {
        let grid = std_grid();
        assert_eq!(gradient_squared_integral(&ScalarField::zeros(grid)), 0.0);
        let k = gradient_squared_integral(&phi0(grid));
        assert!((k - 1.0).abs() < 1e-3, "{k}");
    }

    #[test]
    fn summation_by_parts_is_exact() {
        let grid = Grid2D::new(8.0, 65, 1.0).unwrap();
        let f = ScalarField::from_fn(grid, |x, y| (x * 0.7).sin() * (-(x * x + y * y) / 9.0).exp() + 0.1 * y);
        let g = ScalarField::from_fn(grid, |x, y| (1.0 + x * y).cos() * (-(x * x + y * y) / 16.0).exp());
        let lhs = -inner(&laplacian(&f), &g).unwrap();
        let rhs = dirichlet_form(&f, &g).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        let self_lhs = -inner(&laplacian(&f), &f).unwrap();
        let self_rhs = gradient_squared_integral(&f);
        assert!(
            (self_lhs - self_rhs).abs() <= 1e-13 * self_rhs,
            "{self_lhs} vs {self_rhs}"
        );
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = ScalarField::zeros(Grid2D::new(8.0, 65, 1.0).unwrap());
        let b = ScalarField::zeros(Grid2D::new(8.0, 67, 1.0).unwrap());
        assert!(matches!(inner(&a, &b), Err(Error::GridMismatch(_))));
        assert!(matches!(dirichlet_form(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn sample_reproduces_nodes() {
        let grid = Grid2D::new(8.0, 65, 1.0).unwrap();
        let f = ScalarField::from_fn(grid, |x, y| x * x - y);
        for &(i, j) in &[(3, 5), (32, 32), (60, 1)] {
            assert_eq!(f.sample(grid.coord(i), grid.coord(j)), f.at(i, j));
        }
        assert_eq!(f.sample(9.0, 0.0), 0.0);
    }

    #[test]
    fn angular_modes_radial_and_zero() {
        let grid = std_grid();
        let w = angular_modes(&phi0(grid), 8).unwrap();
        assert!(w[0] >= 1.0 - 1e-6, "{}", w[0]);
        assert!(w.iter().sum::<f64>() <= 1.0 + 1e-12);

        let z = angular_modes(&ScalarField::zeros(grid), 4).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));

        assert!(angular_modes(&phi0(grid), 128).is_err());
        assert!(angular_modes(&phi0(grid), 0).is_err());
    }

    #[test]
    fn angular_modes_of_half_dipole() {
        let grid = std_grid();
        let c = 2.0 / std::f64::consts::PI.sqrt();
        let f = ScalarField::from_fn(grid, |x, y| c * x.max(0.0) * (-0.5 * (x * x + y * y)).exp());
        let w = angular_modes(&f, 8).unwrap();
        // (cos θ)^+ has mean 1/π and first harmonic 1/2: weights 4/π^2 and 1/2.
        let pi = std::f64::consts::PI;
        assert!((w[0] - 4.0 / (pi * pi)).abs() < 1e-2, "{}", w[0]);
        assert!(w[1] >= 0.3, "{}", w[1]);
        assert!((w[1] - 0.5).abs() < 1e-2, "{}", w[1]);
    }
}
