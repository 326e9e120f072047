//! Run configuration, orchestration of solves and sweeps, and their on-disk
//! outputs (field files, `manifest.json`, `diagnostics.csv`).
//!
//! Config files are `key = value` lines; `#` starts a comment. A sweep
//! schedule is given as repeated `g = g1 g2 g12` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::{CouplingParams, Grid2D};
use crate::io::{read_field, write_field};
use crate::solver::{
    best_of_seeds, seed_pair, solve_from, solve_ground_state, GroundStateSolution, SeedKind, SolverConfig, StepScheme,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

/// Keys accepted in a config file.
pub const CONFIG_KEYS: &[&str] = &[
    "L",
    "N",
    "omega",
    "g1",
    "g2",
    "g12",
    "g",
    "seed",
    "seed_kind",
    "seed_u",
    "seed_v",
    "tol_residual",
    "tol_energy",
    "max_iters",
    "time_step",
    "scheme",
    "dipole_axis",
    "extra_random_seeds",
    "eps_fraction",
    "c0",
    "label",
    "out_dir",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub label: String,
    pub half_width: f64,
    pub points: usize,
    pub omega: f64,
    pub solver: SolverConfig,
    /// Random seeds tried besides the dipole seed by `solve`; 0 runs the
    /// configured seed only.
    pub extra_random_seeds: usize,
    /// `ε = eps_fraction · max u` for the segregation report.
    pub eps_fraction: f64,
    /// Advisory cap on `max(g1, g2)`, recorded only.
    pub c0: Option<f64>,
    pub out_dir: PathBuf,
    /// Whether the schedule came from explicit `g` lines.
    pub explicit_schedule: bool,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}` as a number")))
}

fn parse_list(key: &str, value: &str, len: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .collect();
    if parts.len() != len {
        return Err(Error::config(key, format!("expected {len} numbers, got `{value}`")));
    }
    parts.iter().map(|p| parse_num(key, p)).collect()
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses and validates a config; nothing is touched on disk.
    pub fn parse(text: &str) -> Result<Self> {
        let mut single: BTreeMap<String, String> = BTreeMap::new();
        let mut triples = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(line, format!("line {} is not `key = value`", lineno + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.contains(&key) {
                return Err(Error::config(key, "unknown key"));
            }
            if key == "g" {
                triples.push(parse_list("g", value, 3)?);
            } else if single.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::config(key, "given more than once"));
            }
        }
        let get = |k: &str| single.get(k).map(String::as_str);
        let num = |k: &str, default: f64| get(k).map_or(Ok(default), |v| parse_num::<f64>(k, v));

        let half_width = num("L", 8.0)?;
        let omega = num("omega", 1.0)?;
        let points = get("N").map_or(Ok(257), |v| parse_num::<usize>("N", v))?;
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::config("omega", format!("must be positive, got {omega}")));
        }
        if points < 16 {
            return Err(Error::config("N", format!("must be at least 16, got {points}")));
        }
        Grid2D::new(half_width, points, omega).map_err(|e| Error::config("L", e.to_string()))?;

        let coupling = |g1: f64, g2: f64, g12: f64, key: &str| {
            let key = if g1 < 0.0 {
                "g1"
            } else if g2 < 0.0 {
                "g2"
            } else if g12 < 0.0 {
                "g12"
            } else {
                key
            };
            CouplingParams::new(g1, g2, g12, omega).map_err(|e| Error::config(key, e.to_string()))
        };
        let explicit_schedule = !triples.is_empty();
        let schedule = if explicit_schedule {
            triples
                .iter()
                .map(|t| coupling(t[0], t[1], t[2], "g"))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![coupling(num("g1", 0.0)?, num("g2", 0.0)?, num("g12", 0.0)?, "g12")?]
        };

        let mut solver = SolverConfig::new(schedule);
        solver.time_step = num("time_step", solver.time_step)?;
        solver.residual_tol = num("tol_residual", solver.residual_tol)?;
        solver.energy_tol = num("tol_energy", solver.energy_tol)?;
        if let Some(v) = get("max_iters") {
            solver.max_iters = parse_num("max_iters", v)?;
        }
        if let Some(v) = get("seed") {
            solver.rng_seed = parse_num("seed", v)?;
        }
        if let Some(v) = get("dipole_axis") {
            let a = parse_list("dipole_axis", v, 2)?;
            solver.dipole_axis = [a[0], a[1]];
        }
        if let Some(v) = get("scheme") {
            solver.scheme = match v {
                "frozen" => StepScheme::FrozenNonlinear,
                "explicit" => StepScheme::ExplicitNonlinear,
                _ => {
                    return Err(Error::config(
                        "scheme",
                        format!("expected frozen or explicit, got `{v}`"),
                    ))
                }
            };
        }
        solver.seed_kind = match get("seed_kind").unwrap_or("dipole_perturbed") {
            "symmetric_gaussian" => SeedKind::SymmetricGaussian,
            "dipole_perturbed" => SeedKind::DipolePerturbed,
            "random" => SeedKind::Random,
            "from_file" => match (get("seed_u"), get("seed_v")) {
                (Some(u), Some(v)) => SeedKind::FromFile {
                    u: u.into(),
                    v: v.into(),
                },
                (None, _) => return Err(Error::config("seed_u", "required when seed_kind = from_file")),
                (_, None) => return Err(Error::config("seed_v", "required when seed_kind = from_file")),
            },
            other => return Err(Error::config("seed_kind", format!("unknown seed kind `{other}`"))),
        };
        if solver.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        for (key, v) in [
            ("time_step", solver.time_step),
            ("tol_residual", solver.residual_tol),
            ("tol_energy", solver.energy_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        solver
            .validate()
            .map_err(|e| Error::config("dipole_axis", e.to_string()))?;

        let eps_fraction = num("eps_fraction", 0.4)?;
        if !(eps_fraction > 0.0 && eps_fraction < 1.0) {
            return Err(Error::config(
                "eps_fraction",
                format!("must lie in (0, 1), got {eps_fraction}"),
            ));
        }
        let c0 = get("c0").map(|v| parse_num::<f64>("c0", v)).transpose()?;
        let extra_random_seeds = get("extra_random_seeds").map_or(Ok(0), |v| parse_num("extra_random_seeds", v))?;

        Ok(Self {
            label: get("label").unwrap_or("run").to_string(),
            half_width,
            points,
            omega,
            solver,
            extra_random_seeds,
            eps_fraction,
            c0,
            out_dir: get("out_dir").unwrap_or("out").into(),
            explicit_schedule,
        })
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.half_width, self.points, self.omega)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        Sha256::digest(json.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Checks that seed files exist and match the grid before any output is
    /// written.
    fn preflight(&self) -> Result<Grid2D> {
        let grid = self.grid()?;
        if let SeedKind::FromFile { u, v } = &self.solver.seed_kind {
            for (key, path) in [("seed_u", u), ("seed_v", v)] {
                let f = read_field(path).map_err(|e| Error::config(key, e.to_string()))?;
                grid.ensure_same(f.grid())
                    .map_err(|e| Error::config(key, e.to_string()))?;
            }
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub g: CouplingParams,
    /// Paths relative to the output directory; `None` when the solve failed.
    pub u_file: Option<PathBuf>,
    pub v_file: Option<PathBuf>,
    pub energy: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub overlap: Option<f64>,
    pub defect_u: Option<f64>,
    pub defect_v: Option<f64>,
    pub l2_error_u: Option<f64>,
    pub l2_error_v: Option<f64>,
    pub residual_u: Option<f64>,
    pub residual_v: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub label: String,
    pub tool_version: String,
    pub config_hash: String,
    pub mode: String,
    pub half_width: f64,
    pub points: usize,
    pub omega: f64,
    pub c0: Option<f64>,
    pub entries: Vec<ManifestEntry>,
}

impl SweepManifest {
    pub fn all_converged(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.converged)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })
    }
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Converged = 0,
    ConfigError = 1,
    NotConverged = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn for_manifest(m: &SweepManifest) -> Self {
        if m.all_converged() {
            ExitStatus::Converged
        } else {
            ExitStatus::NotConverged
        }
    }
}

/// Everything recorded about one schedule entry before it lands in the
/// manifest.
struct EntryOutput {
    entry: ManifestEntry,
    csv_row: Option<String>,
}

fn csv_header() -> String {
    let diag = DiagnosticsRecord::csv_header();
    let rest = diag.strip_prefix("run_id,").unwrap_or(&diag);
    format!("run_id,g1,g2,g12,energy,lambda,mu,converged,iterations,{rest}")
}

fn record_entry(
    cfg: &RunConfig,
    dir: &Path,
    sub: Option<&str>,
    index: usize,
    g: CouplingParams,
    result: Result<GroundStateSolution>,
    wall_time_s: f64,
) -> Result<EntryOutput> {
    let mut entry = ManifestEntry {
        index,
        g,
        u_file: None,
        v_file: None,
        energy: None,
        lambda: None,
        mu: None,
        overlap: None,
        defect_u: None,
        defect_v: None,
        l2_error_u: None,
        l2_error_v: None,
        residual_u: None,
        residual_v: None,
        iterations: None,
        converged: false,
        wall_time_s,
        error: None,
    };
    let sol = match result {
        Ok(sol) => sol,
        Err(e) => {
            entry.error = Some(e.to_string());
            return Ok(EntryOutput { entry, csv_row: None });
        }
    };
    let rel = |name: &str| sub.map_or_else(|| PathBuf::from(name), |s| Path::new(s).join(name));
    let (u_rel, v_rel) = (rel("u.gpe2"), rel("v.gpe2"));
    if let Some(s) = sub {
        fs::create_dir_all(dir.join(s)).map_err(|e| Error::io(dir.join(s), e))?;
    }
    write_field(dir.join(&u_rel), &sol.u)?;
    write_field(dir.join(&v_rel), &sol.v)?;

    let diag = DiagnosticsRecord::compute(&sol.u, &sol.v, cfg.eps_fraction * sol.u.max())?;
    entry.u_file = Some(u_rel);
    entry.v_file = Some(v_rel);
    entry.energy = Some(sol.energy.total);
    entry.lambda = Some(sol.multipliers.lambda);
    entry.mu = Some(sol.multipliers.mu);
    entry.overlap = Some(diag.segregation.overlap);
    if let Some(s) = &diag.symmetry {
        entry.defect_u = Some(s.defect_u);
        entry.defect_v = Some(s.defect_v);
        entry.l2_error_u = Some(s.l2_error_u);
        entry.l2_error_v = Some(s.l2_error_v);
    }
    entry.residual_u = Some(sol.residual_u);
    entry.residual_v = Some(sol.residual_v);
    entry.iterations = Some(sol.iterations);
    entry.converged = sol.converged;

    let run_id = format!("{}-{index:03}", cfg.label);
    let diag_row = diag.csv_row(&run_id);
    let rest = diag_row.strip_prefix(&format!("{run_id},")).unwrap_or(&diag_row);
    let csv_row = format!(
        "{run_id},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{rest}",
        g.g1, g.g2, g.g12, sol.energy.total, sol.multipliers.lambda, sol.multipliers.mu, sol.converged, sol.iterations
    );
    Ok(EntryOutput {
        entry,
        csv_row: Some(csv_row),
    })
}

fn finish(cfg: &RunConfig, mode: &str, outputs: Vec<EntryOutput>) -> Result<SweepManifest> {
    let dir = &cfg.out_dir;
    let mut csv = csv_header();
    csv.push('\n');
    for o in &outputs {
        if let Some(row) = &o.csv_row {
            csv.push_str(row);
            csv.push('\n');
        }
    }
    let path = dir.join(DIAGNOSTICS_FILE);
    fs::write(&path, csv).map_err(|e| Error::io(path, e))?;

    let manifest = SweepManifest {
        label: cfg.label.clone(),
        tool_version: TOOL_VERSION.to_string(),
        config_hash: cfg.hash(),
        mode: mode.to_string(),
        half_width: cfg.half_width,
        points: cfg.points,
        omega: cfg.omega,
        c0: cfg.c0,
        entries: outputs.into_iter().map(|o| o.entry).collect(),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::NumericalFailure(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(path, e))?;
    Ok(manifest)
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Solves the schedule (warm-started) and writes the last entry's fields to
/// `out_dir`. With `extra_random_seeds > 0`, the lowest-energy run among the
/// dipole seed and that many random seeds is kept.
pub fn run_solve(cfg: &RunConfig) -> Result<SweepManifest> {
    let grid = cfg.preflight()?;
    create_out_dir(&cfg.out_dir)?;
    let start = Instant::now();
    let result = if cfg.extra_random_seeds > 0 {
        best_of_seeds(&cfg.solver, &grid, cfg.extra_random_seeds)
    } else {
        solve_ground_state(&cfg.solver, &grid)
    };
    let g = *cfg.solver.continuation_schedule.last().expect("validated schedule");
    let out = record_entry(cfg, &cfg.out_dir, None, 0, g, result, start.elapsed().as_secs_f64())?;
    finish(cfg, "solve", vec![out])
}

/// Runs every schedule entry. Without `parallel`, entries are warm-started
/// in order and written to `entry_XXX/`. With `parallel = Some(k)`, each
/// entry is a cold start from the configured seed, run on `k` threads, each
/// writing into its own `branch_XXX/`.
pub fn run_sweep(cfg: &RunConfig, parallel: Option<usize>) -> Result<SweepManifest> {
    if !cfg.explicit_schedule {
        return Err(Error::config(
            "g",
            "sweep schedule is empty: add one `g = g1 g2 g12` line per entry",
        ));
    }
    let grid = cfg.preflight()?;
    create_out_dir(&cfg.out_dir)?;
    let dir = &cfg.out_dir;
    let schedule = &cfg.solver.continuation_schedule;
    match parallel {
        None => {
            let mut outputs = Vec::with_capacity(schedule.len());
            let mut seed = Some(seed_pair(&cfg.solver, &grid));
            let mut last_good = None;
            for (k, g) in schedule.iter().enumerate() {
                let start = Instant::now();
                let pair = match (seed.take(), &last_good) {
                    (Some(first), _) => first,
                    (None, Some((u, v))) => Ok((Clone::clone(u), Clone::clone(v))),
                    (None, None) => seed_pair(&cfg.solver, &grid),
                };
                let result = pair.and_then(|(u, v)| solve_from(u, v, g, &cfg.solver));
                if let Ok(sol) = &result {
                    last_good = Some((sol.u.clone(), sol.v.clone()));
                }
                let sub = format!("entry_{k:03}");
                outputs.push(record_entry(
                    cfg,
                    dir,
                    Some(&sub),
                    k,
                    *g,
                    result,
                    start.elapsed().as_secs_f64(),
                )?);
            }
            finish(cfg, "sweep", outputs)
        }
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))?;
            let outputs = pool.install(|| {
                schedule
                    .par_iter()
                    .enumerate()
                    .map(|(k, g)| {
                        let start = Instant::now();
                        let result = seed_pair(&cfg.solver, &grid).and_then(|(u, v)| solve_from(u, v, g, &cfg.solver));
                        let sub = format!("branch_{k:03}");
                        record_entry(cfg, dir, Some(&sub), k, *g, result, start.elapsed().as_secs_f64())
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            finish(cfg, "sweep-parallel", outputs)
        }
    }
}
