//! Measurable signatures of segregation and symmetry breaking.
//!
//! * [`segregation_report`]: overlap `∫u²v²` and how small each component
//!   is on the bulk of the other (`U_ε = {u >= ε}`, thresholded per solve).
//! * [`fit_half_plane`]: moment fit of the dipole direction, L2 distance to
//!   the predicted half-dipoles, angular defects and the nodal curve.
//! * [`nodal_interior_probe`]: largest region where both components are
//!   negligible inside the trap bulk.
//! * [`truncation_check`]: field size next to the box boundary.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{angular_modes, inner, ScalarField};
use crate::oracles::{half_dipole, DipolePart, OscillatorEigenfunction};

/// Highest angular mode used for symmetry defects.
pub const DEFECT_MODES: usize = 8;
/// Cells whose corner amplitudes all fall below this fraction of the peak
/// are skipped when extracting the nodal curve.
pub const NODAL_AMPLITUDE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegregationReport {
    pub overlap: f64,
    pub sup_min: f64,
    pub eps: f64,
    pub max_v_on_u_eps: f64,
    pub max_u_on_v_eps: f64,
    /// `u < eps` everywhere; `max_v_on_u_eps` is then reported as 0.
    pub empty_u_region: bool,
    pub empty_v_region: bool,
}

impl SegregationReport {
    pub fn has_warning(&self) -> bool {
        self.empty_u_region || self.empty_v_region
    }
}

pub fn segregation_report(u: &ScalarField, v: &ScalarField, eps: f64) -> Result<SegregationReport> {
    u.grid().ensure_same(v.grid())?;
    if !(eps > 0.0) {
        return Err(Error::param(format!("eps must be positive, got {eps}")));
    }
    let uu = u.values();
    let vv = v.values();
    let max_on = |region: &[f64], other: &[f64]| {
        region
            .iter()
            .zip(other)
            .filter(|(r, _)| **r >= eps)
            .map(|(_, o)| *o)
            .fold(None, |m: Option<f64>, o| Some(m.map_or(o, |m| m.max(o))))
    };
    let on_u = max_on(uu, vv);
    let on_v = max_on(vv, uu);
    let sup_min = uu.iter().zip(vv).map(|(a, b)| a.min(*b)).fold(0.0, f64::max);
    let u2 = u.map(|x| x * x);
    let v2 = v.map(|x| x * x);
    Ok(SegregationReport {
        overlap: inner(&u2, &v2)?,
        sup_min,
        eps,
        max_v_on_u_eps: on_u.unwrap_or(0.0).max(0.0),
        max_u_on_v_eps: on_v.unwrap_or(0.0).max(0.0),
        empty_u_region: on_u.is_none(),
        empty_v_region: on_v.is_none(),
    })
}

/// Segment of the nodal curve, as two endpoints.
pub type Segment = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// `1 -` mode-0 angular weight of `u`.
    pub defect_u: f64,
    pub defect_v: f64,
    pub nu_fit: [f64; 2],
    pub l2_error_u: f64,
    pub l2_error_v: f64,
    pub nodal_curve: Vec<Segment>,
}

impl SymmetryReport {
    /// Largest distance from a nodal-curve point to the line `{x·ν = 0}`.
    pub fn nodal_line_deviation(&self) -> f64 {
        let nu = self.nu_fit;
        self.nodal_curve
            .iter()
            .flatten()
            .map(|p| (p[0] * nu[0] + p[1] * nu[1]).abs())
            .fold(0.0, f64::max)
    }
}

/// `1 -` the radial share of the angular power of `f`.
pub fn symmetry_defect(f: &ScalarField) -> Result<f64> {
    let w = angular_modes(f, DEFECT_MODES)?;
    Ok((1.0 - w[0]).clamp(0.0, 1.0))
}

/// Fits `ν̂ = normalize(∫x u² - ∫x v²)` and compares `(u, v)` with the
/// unit-mass halves `(w_ν̂^+, w_ν̂^-)`.
pub fn fit_half_plane(u: &ScalarField, v: &ScalarField) -> Result<SymmetryReport> {
    let grid = *u.grid();
    grid.ensure_same(v.grid())?;
    let h2 = grid.spacing() * grid.spacing();
    let mut m = [0.0; 2];
    for (i, j, x1, x2) in grid.nodes() {
        let d = u.at(i, j).powi(2) - v.at(i, j).powi(2);
        m[0] += x1 * d;
        m[1] += x2 * d;
    }
    let (m0, m1) = (h2 * m[0], h2 * m[1]);
    let norm = m0.hypot(m1);
    if !(norm >= 1e-8) {
        return Err(Error::DirectionUndefined(norm));
    }
    let nu = [m0 / norm, m1 / norm];
    let target_u = half_dipole(&grid, nu, DipolePart::Positive)?;
    let target_v = half_dipole(&grid, nu, DipolePart::Negative)?;
    Ok(SymmetryReport {
        defect_u: symmetry_defect(u)?,
        defect_v: symmetry_defect(v)?,
        nu_fit: nu,
        l2_error_u: u.l2_distance(&target_u)?,
        l2_error_v: v.l2_distance(&target_v)?,
        nodal_curve: nodal_curve(u, v)?,
    })
}

/// Zero set of `u - v` by marching squares, restricted to cells where the
/// fields are not negligible.
pub fn nodal_curve(u: &ScalarField, v: &ScalarField) -> Result<Vec<Segment>> {
    let grid = *u.grid();
    let diff = u.zip_with(v, |a, b| a - b)?;
    let amp = u.zip_with(v, |a, b| a.abs().max(b.abs()))?;
    let floor = NODAL_AMPLITUDE_FLOOR * amp.max();
    let n = grid.points();
    let mut segments = Vec::new();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            if corners.iter().all(|&(a, b)| amp.at(a, b) < floor) {
                continue;
            }
            let vals = corners.map(|(a, b)| diff.at(a, b));
            let pts = corners.map(|(a, b)| [grid.coord(a), grid.coord(b)]);
            let center = 0.25 * vals.iter().sum::<f64>();
            segments.extend(march_cell(vals, pts, center));
        }
    }
    Ok(segments)
}

/// Segments of the zero level inside one cell; corners counter-clockwise.
fn march_cell(vals: [f64; 4], pts: [[f64; 2]; 4], center: f64) -> Vec<Segment> {
    let above = vals.map(|x| x > 0.0);
    let crossing = |e: usize| {
        let (a, b) = (e, (e + 1) % 4);
        if above[a] == above[b] {
            return None;
        }
        let t = vals[a] / (vals[a] - vals[b]);
        Some([
            pts[a][0] + t * (pts[b][0] - pts[a][0]),
            pts[a][1] + t * (pts[b][1] - pts[a][1]),
        ])
    };
    let cuts: Vec<(usize, [f64; 2])> = (0..4).filter_map(|e| crossing(e).map(|p| (e, p))).collect();
    match cuts.len() {
        2 => vec![[cuts[0].1, cuts[1].1]],
        4 => {
            // Saddle: pair edges so that the center's side stays connected.
            // Edge e joins corners e and e+1; corner 0 sits between edges 3 and 0.
            let p: Vec<[f64; 2]> = cuts.iter().map(|c| c.1).collect();
            if (center > 0.0) == above[0] {
                vec![[p[0], p[1]], [p[2], p[3]]]
            } else {
                vec![[p[3], p[0]], [p[1], p[2]]]
            }
        }
        _ => Vec::new(),
    }
}

/// Area of the largest 4-connected set of nodes where `max(u, v) <
/// threshold`, counted inside the trap bulk: nodes with `|x| <= L - 1` where
/// the trap ground state itself is at least `threshold`.
pub fn nodal_interior_probe(u: &ScalarField, v: &ScalarField, threshold: f64) -> Result<f64> {
    let grid = *u.grid();
    grid.ensure_same(v.grid())?;
    if !(threshold > 0.0) {
        return Err(Error::param(format!("threshold must be positive, got {threshold}")));
    }
    let ground = OscillatorEigenfunction::ground(grid.omega());
    let r_max = grid.half_width() - 1.0;
    let n = grid.points();
    let candidate: Vec<bool> = grid
        .nodes()
        .map(|(i, j, x1, x2)| {
            x1.hypot(x2) <= r_max
                && ground.value(x1, x2, DipolePart::Signed) >= threshold
                && u.at(i, j).max(v.at(i, j)) < threshold
        })
        .collect();
    let mut seen = vec![false; candidate.len()];
    let mut largest = 0usize;
    let mut queue = VecDeque::new();
    for start in 0..candidate.len() {
        if !candidate[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut size = 0;
        while let Some(k) = queue.pop_front() {
            size += 1;
            let (i, j) = (k / n, k % n);
            let mut visit = |a: usize, b: usize| {
                let m = a * n + b;
                if candidate[m] && !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            };
            if i > 0 {
                visit(i - 1, j);
            }
            if i + 1 < n {
                visit(i + 1, j);
            }
            if j > 0 {
                visit(i, j - 1);
            }
            if j + 1 < n {
                visit(i, j + 1);
            }
        }
        largest = largest.max(size);
    }
    let h = grid.spacing();
    Ok(largest as f64 * h * h)
}

/// Largest `|u|` on the outer band `max(|x1|, |x2|) >= L - h`. Values above
/// [`TRUNCATION_WARNING`] indicate an undersized box.
pub fn truncation_check(u: &ScalarField) -> f64 {
    let grid = u.grid();
    let n = grid.points();
    grid.nodes()
        .filter(|&(i, j, _, _)| i <= 1 || j <= 1 || i >= n - 2 || j >= n - 2)
        .map(|(i, j, _, _)| u.at(i, j).abs())
        .fold(0.0, f64::max)
}

pub const TRUNCATION_WARNING: f64 = 1e-6;

/// Combined per-run diagnostics, serializable as key-value text or CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub segregation: SegregationReport,
    /// `None` when the fitted direction is undefined (e.g. `u = v`).
    pub symmetry: Option<SymmetryReport>,
    pub truncation_u: f64,
    pub truncation_v: f64,
}

/// Note attached to every serialized record: `U_ε` is thresholded on the
/// single solution, not as an infimum over a family of couplings.
pub const EPS_SET_NOTE: &str = "single-solution eps-sets";

impl DiagnosticsRecord {
    pub fn compute(u: &ScalarField, v: &ScalarField, eps: f64) -> Result<Self> {
        let symmetry = match fit_half_plane(u, v) {
            Ok(s) => Some(s),
            Err(Error::DirectionUndefined(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            segregation: segregation_report(u, v, eps)?,
            symmetry,
            truncation_u: truncation_check(u),
            truncation_v: truncation_check(v),
        })
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        let s = &self.segregation;
        let mut out = vec![
            ("overlap", fmt(s.overlap)),
            ("sup_min", fmt(s.sup_min)),
            ("eps", fmt(s.eps)),
            ("max_v_on_u_eps", fmt(s.max_v_on_u_eps)),
            ("max_u_on_v_eps", fmt(s.max_u_on_v_eps)),
            ("eps_region_warning", s.has_warning().to_string()),
        ];
        let sym = self.symmetry.as_ref();
        let opt = |f: fn(&SymmetryReport) -> f64| sym.map(|s| fmt(f(s))).unwrap_or_default();
        out.extend([
            ("defect_u", opt(|s| s.defect_u)),
            ("defect_v", opt(|s| s.defect_v)),
            ("nu_x", opt(|s| s.nu_fit[0])),
            ("nu_y", opt(|s| s.nu_fit[1])),
            ("l2_error_u", opt(|s| s.l2_error_u)),
            ("l2_error_v", opt(|s| s.l2_error_v)),
            ("nodal_line_deviation", opt(|s| s.nodal_line_deviation())),
            ("truncation_u", fmt(self.truncation_u)),
            ("truncation_v", fmt(self.truncation_v)),
            ("eps_sets", EPS_SET_NOTE.to_string()),
        ]);
        out
    }

    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn csv_header() -> String {
        let dummy = DiagnosticsRecord {
            segregation: SegregationReport {
                overlap: 0.0,
                sup_min: 0.0,
                eps: 0.0,
                max_v_on_u_eps: 0.0,
                max_u_on_v_eps: 0.0,
                empty_u_region: false,
                empty_v_region: false,
            },
            symmetry: None,
            truncation_u: 0.0,
            truncation_v: 0.0,
        };
        let keys: Vec<&str> = dummy.pairs().iter().map(|(k, _)| *k).collect();
        format!("run_id,{}", keys.join(","))
    }

    pub fn csv_row(&self, run_id: &str) -> String {
        let vals: Vec<String> = self.pairs().into_iter().map(|(_, v)| v).collect();
        format!("{run_id},{}", vals.join(","))
    }
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use std::f64::consts::PI;

    fn std_grid() -> Grid2D {
        Grid2D::new(8.0, 257, 1.0).unwrap()
    }

    fn phi0(grid: Grid2D) -> ScalarField {
        OscillatorEigenfunction::ground(grid.omega())
            .eval(&grid, DipolePart::Signed)
            .unwrap()
    }

    fn halves(grid: Grid2D, nu: [f64; 2]) -> (ScalarField, ScalarField) {
        (
            half_dipole(&grid, nu, DipolePart::Positive).unwrap(),
            half_dipole(&grid, nu, DipolePart::Negative).unwrap(),
        )
    }

    #[test]
    fn segregation_of_disjoint_pair() {
        let (u, v) = halves(std_grid(), [1.0, 0.0]);
        let r = segregation_report(&u, &v, 0.1).unwrap();
        assert_eq!(r.max_v_on_u_eps, 0.0);
        assert_eq!(r.max_u_on_v_eps, 0.0);
        assert_eq!(r.overlap, 0.0);
        assert!(!r.has_warning());
    }

    #[test]
    fn segregation_of_coincident_ground_states() {
        let p = phi0(std_grid());
        let r = segregation_report(&p, &p, 0.1).unwrap();
        assert!((r.max_v_on_u_eps - (1.0 / PI).sqrt()).abs() < 1e-6);
        assert!((r.sup_min - (1.0 / PI).sqrt()).abs() < 1e-6);
        assert!((r.overlap - 1.0 / (2.0 * PI)).abs() < 1e-4);
    }

    #[test]
    fn segregation_empty_region_and_errors() {
        let p = phi0(std_grid());
        let r = segregation_report(&p, &p, 1.0).unwrap();
        assert!(r.empty_u_region && r.empty_v_region && r.has_warning());
        assert_eq!(r.max_v_on_u_eps, 0.0);
        assert!(segregation_report(&p, &p, 0.0).is_err());
    }

    #[test]
    fn segregation_swap_symmetry() {
        let grid = Grid2D::new(8.0, 65, 1.0).unwrap();
        let u = ScalarField::from_fn(grid, |x, y| (-(x - 0.5).powi(2) - y * y).exp());
        let v = ScalarField::from_fn(grid, |x, y| 0.7 * (-(x + 0.8).powi(2) - 2.0 * y * y).exp());
        let a = segregation_report(&u, &v, 0.3).unwrap();
        let b = segregation_report(&v, &u, 0.3).unwrap();
        assert_eq!(a.max_v_on_u_eps, b.max_u_on_v_eps);
        assert_eq!(a.max_u_on_v_eps, b.max_v_on_u_eps);
        assert_eq!(a.overlap, b.overlap);
    }

    #[test]
    fn self_fit_recovers_direction() {
        let grid = std_grid();
        let (u, v) = halves(grid, [0.6, 0.8]);
        let s = fit_half_plane(&u, &v).unwrap();
        assert!((s.nu_fit[0] - 0.6).abs() < 1e-3 && (s.nu_fit[1] - 0.8).abs() < 1e-3);
        assert!(s.l2_error_u <= 1e-6 && s.l2_error_v <= 1e-6);
        assert!(s.defect_u >= 0.3 && s.defect_v >= 0.3);
        assert!(!s.nodal_curve.is_empty());
        assert!(s.nodal_line_deviation() <= 3.0 * grid.spacing());
        assert!((s.nu_fit[0].hypot(s.nu_fit[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_input_has_no_direction() {
        let p = phi0(std_grid());
        assert!(matches!(fit_half_plane(&p, &p), Err(Error::DirectionUndefined(_))));
        assert!(symmetry_defect(&p).unwrap() <= 1e-6);
    }

    #[test]
    fn rotated_inputs_rotate_the_fit() {
        let grid = std_grid();
        let (u, v) = halves(grid, [1.0, 0.0]);
        let base = fit_half_plane(&u, &v).unwrap();
        let theta = 0.5f64;
        let rot = fit_half_plane(&u.rotated(theta), &v.rotated(theta)).unwrap();
        let angle = rot.nu_fit[1].atan2(rot.nu_fit[0]) - base.nu_fit[1].atan2(base.nu_fit[0]);
        assert!((angle - theta).abs() < 2f64.to_radians(), "{angle}");
        assert!((rot.l2_error_u - base.l2_error_u).abs() < 1e-2);
        assert!((rot.l2_error_v - base.l2_error_v).abs() < 1e-2);
    }

    #[test]
    fn marching_square_cases() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(march_cell([1.0, 1.0, 1.0, 1.0], pts, 1.0).is_empty());
        let s = march_cell([-1.0, 1.0, 1.0, -1.0], pts, 0.0);
        assert_eq!(s.len(), 1);
        for p in s[0] {
            assert!((p[0] - 0.5).abs() < 1e-12);
        }
        assert_eq!(march_cell([1.0, -1.0, 1.0, -1.0], pts, 0.5).len(), 2);
        assert_eq!(march_cell([1.0, -1.0, 1.0, -1.0], pts, -0.5).len(), 2);
    }

    #[test]
    fn probe_on_half_dipoles_is_a_thin_band() {
        let grid = std_grid();
        let (u, v) = halves(grid, [1.0, 0.0]);
        let area = nodal_interior_probe(&u, &v, 1e-3).unwrap();
        let band = 20.0 * grid.spacing();
        assert!(area > 0.0 && area <= band, "{area} vs {band}");
    }

    #[test]
    fn probe_on_ground_states_is_empty() {
        let p = phi0(std_grid());
        assert_eq!(nodal_interior_probe(&p, &p, 1e-3).unwrap(), 0.0);
        assert!(nodal_interior_probe(&p, &p, 0.0).is_err());
    }

    #[test]
    fn probe_finds_a_zeroed_disc() {
        let grid = std_grid();
        let p = ScalarField::from_fn(grid, |x, y| {
            if x.hypot(y) <= 1.0 {
                0.0
            } else {
                (1.0 / PI).sqrt() * (-0.5 * (x * x + y * y)).exp()
            }
        });
        let area = nodal_interior_probe(&p, &p, 1e-3).unwrap();
        assert!((area - PI).abs() <= 0.1 * PI, "{area}");
    }

    #[test]
    fn truncation_values() {
        let grid = std_grid();
        assert!(truncation_check(&phi0(grid)) <= 1e-13);
        assert_eq!(truncation_check(&ScalarField::zeros(grid)), 0.0);
        let small = Grid2D::relaxed(2.0, 65, 1.0).unwrap();
        assert!(truncation_check(&phi0(small)) >= 1e-2);
    }

    #[test]
    fn record_serialization() {
        let (u, v) = halves(Grid2D::new(8.0, 65, 1.0).unwrap(), [1.0, 0.0]);
        let rec = DiagnosticsRecord::compute(&u, &v, 0.1).unwrap();
        let kv = rec.to_key_value();
        assert!(kv.contains("overlap = 0e0"));
        assert!(kv.lines().all(|l| l.contains(" = ")));
        let header = DiagnosticsRecord::csv_header();
        let row = rec.csv_row("run-1");
        assert_eq!(header.split(',').count(), row.split(',').count());
        assert!(row.starts_with("run-1,"));

        let p = phi0(Grid2D::new(8.0, 65, 1.0).unwrap());
        let rec = DiagnosticsRecord::compute(&p, &p, 0.1).unwrap();
        assert!(rec.symmetry.is_none());
        assert_eq!(rec.csv_row("x").split(',').count(), header.split(',').count());
    }
}
