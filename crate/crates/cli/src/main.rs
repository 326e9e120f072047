use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gpe2_core::io::{read_field, write_field};
use gpe2_core::{
    lambda_halfspace, run_solve, run_sweep, to_gaussian_frame, DiagnosticsRecord, DipolePart, Error, ExitStatus,
    Grid2D, OscillatorEigenfunction, RunConfig, SweepManifest,
};

/// Two-component condensate ground states in a 2D harmonic trap.
#[derive(Parser)]
#[command(name = "gpe2", version, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one coupling triple (or a warm-started schedule, keeping the last).
    Solve { config: PathBuf },
    /// Solve every `g = g1 g2 g12` entry of the config.
    Sweep {
        config: PathBuf,
        /// Cold-start every entry independently on this many threads.
        #[arg(long, value_name = "K")]
        parallel: Option<usize>,
    },
    /// Closed-form reference quantities.
    Oracle {
        #[command(subcommand)]
        oracle: Oracle,
    },
    /// Segregation and symmetry diagnostics for a pair of field files.
    Diagnose {
        u: PathBuf,
        v: PathBuf,
        /// Segregation threshold as a fraction of max u.
        #[arg(long, default_value_t = 0.4)]
        eps_fraction: f64,
        /// Print a CSV header and row instead of key-value lines.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ground,
    Dipole,
}

#[derive(Subcommand)]
enum Oracle {
    /// Write the trap ground state or the second eigenfunction w_nu.
    #[command(allow_negative_numbers = true)]
    Eigen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], default_values_t = [1.0, 0.0])]
        nu: Vec<f64>,
        #[arg(long, default_value_t = 8.0)]
        half_width: f64,
        #[arg(long, default_value_t = 257)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, short, default_value = "eigen.gpe2")]
        out: PathBuf,
    },
    /// Table of the half-space Gaussian eigenvalue Lambda(H_a).
    #[command(allow_negative_numbers = true)]
    LambdaH {
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        step: f64,
        /// Output CSV; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Map a field file to the Gaussian frame.
    Frame {
        input: PathBuf,
        #[arg(long, short, default_value = "frame.gpe2")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<ExitStatus, Error> {
    match cli.command {
        Command::Solve { config } => {
            let cfg = RunConfig::from_path(&config)?;
            let m = run_solve(&cfg)?;
            report(&m, &cfg.out_dir);
            Ok(ExitStatus::for_manifest(&m))
        }
        Command::Sweep { config, parallel } => {
            let cfg = RunConfig::from_path(&config)?;
            let m = run_sweep(&cfg, parallel)?;
            report(&m, &cfg.out_dir);
            Ok(ExitStatus::for_manifest(&m))
        }
        Command::Oracle { oracle } => {
            run_oracle(oracle)?;
            Ok(ExitStatus::Converged)
        }
        Command::Diagnose {
            u,
            v,
            eps_fraction,
            csv,
        } => {
            let (u, v) = (read_field(u)?, read_field(v)?);
            let rec = DiagnosticsRecord::compute(&u, &v, eps_fraction * u.max())?;
            if csv {
                println!("{}\n{}", DiagnosticsRecord::csv_header(), rec.csv_row("diagnose"));
            } else {
                print!("{}", rec.to_key_value());
            }
            Ok(ExitStatus::Converged)
        }
    }
}

fn report(m: &SweepManifest, out_dir: &Path) {
    for e in &m.entries {
        let g = e.g;
        match (&e.error, e.energy) {
            (Some(err), _) => eprintln!("[{}] g = ({}, {}, {}): failed: {err}", e.index, g.g1, g.g2, g.g12),
            (None, Some(energy)) => eprintln!(
                "[{}] g = ({}, {}, {}): energy {energy:.6} after {} steps{}",
                e.index,
                g.g1,
                g.g2,
                g.g12,
                e.iterations.unwrap_or(0),
                if e.converged { "" } else { " (not converged)" }
            ),
            _ => {}
        }
    }
    eprintln!("wrote {}", out_dir.display());
}

fn run_oracle(oracle: Oracle) -> Result<(), Error> {
    match oracle {
        Oracle::Eigen {
            kind,
            nu,
            half_width,
            points,
            omega,
            out,
        } => {
            let grid = Grid2D::new(half_width, points, omega)?;
            let e = match kind {
                Kind::Ground => OscillatorEigenfunction::ground(omega),
                Kind::Dipole => OscillatorEigenfunction::dipole(omega, [nu[0], nu[1]])?,
            };
            write_field(&out, &e.eval(&grid, DipolePart::Signed)?)
        }
        Oracle::LambdaH { from, to, step, out } => {
            if !(step > 0.0) || !(to >= from) {
                return Err(Error::Parameter(format!(
                    "need step > 0 and to >= from, got from {from}, to {to}, step {step}"
                )));
            }
            let count = ((to - from) / step + 1e-9).floor() as usize + 1;
            let mut csv = String::from("a,lambda\n");
            for k in 0..count {
                // Round away accumulated step error so the `a` column prints cleanly.
                let a = ((from + k as f64 * step) * 1e12).round() / 1e12;
                csv.push_str(&format!("{a},{}\n", lambda_halfspace(a)?));
            }
            match out {
                Some(path) => fs::write(&path, csv).map_err(|e| Error::Io { path, source: e }),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
        Oracle::Frame { input, out } => {
            let u = read_field(input)?;
            write_field(&out, to_gaussian_frame(&u)?.field())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("gpe2: {e}");
            let status = match e {
                Error::Config { .. } | Error::Parameter(_) | Error::Io { .. } | Error::Format { .. } => {
                    ExitStatus::ConfigError
                }
                _ => ExitStatus::NotConverged,
            };
            ExitCode::from(status.code() as u8)
        }
    }
}
