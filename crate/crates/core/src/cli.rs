//! The `hclab` command line.
//!
//! Exit codes: 0 success or passing verdict, 1 failing verdict, 2 usage or
//! input error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::conditions::{check_all, sample_params};
use crate::error::{Error, Result};
use crate::geometry3d::{
    converge_to_sink, invariant_region_check, planes, restrict_triple, Plane3, RegionVerdict, SinkVerdict,
    TripleParams, DEFAULT_SINK_TMAX, DEFAULT_SINK_TOL,
};
use crate::integrator::{integrate, Formulation, IntegrateOptions, Method, Output, SaddleNeighborhood};
use crate::io;
use crate::manifold::{build_gamma, classify_combinatorial, classify_topology, trace_fan, GammaOptions, TraceOptions};
use crate::stability::{
    contraction_experiment, mesh_floor, stability_experiment, EtaDirection, MeshIndex, StabilityOptions,
};

#[derive(Debug, Parser)]
#[command(
    name = "hclab",
    version,
    about = "Heteroclinic networks of generalized Lotka-Volterra systems"
)]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "HCLAB_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every saddle and cycle condition; exit 1 if any fails.
    Validate { params: PathBuf },
    /// Draw a random parameter set satisfying all conditions.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Integrate one trajectory to CSV, with saddle events in a sidecar file.
    Simulate(SimulateArgs),
    /// Invariant-region and sink checks in one coordinate triple.
    Triple {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        check_region: bool,
        #[arg(long)]
        converge: bool,
        /// Start point in triple coordinates, for `--converge`.
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SINK_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_SINK_TMAX)]
        t_max: f64,
    },
    /// Trace the orbit fan leaving saddle k.
    Trace {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 33)]
        angles: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Build the triangulated heteroclinic surface.
    Gamma {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 33)]
        angles: usize,
        #[arg(long, default_value_t = 64)]
        arc: usize,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write a Wavefront OBJ view in cycle-local coordinates.
        #[arg(long)]
        obj: Option<PathBuf>,
    },
    /// Topological type of a mesh, or of the combinatorial model for `p`.
    Classify {
        #[arg(long, conflicts_with_all = ["p", "combinatorial"], required_unless_present = "p")]
        mesh: Option<PathBuf>,
        #[arg(long, requires = "combinatorial")]
        p: Option<usize>,
        #[arg(long)]
        combinatorial: bool,
    },
    /// Fit the passage contraction exponent at saddle k; exit 1 if it is not above 1.
    Contraction {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [1e-3, 1e-4, 1e-5, 1e-6])]
        eps_list: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Direction::Generic)]
        direction: Direction,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Perturb random surface points and follow them for several laps; exit 1
    /// on alarms, failures or non-contracting laps.
    Stability {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 3)]
        laps: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        delta: Option<f64>,
        /// Mesh error floor; estimated against a finer mesh when `--fine-mesh` is given.
        #[arg(long, default_value_t = 0.0)]
        mesh_floor: f64,
        #[arg(long)]
        fine_mesh: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    params: PathBuf,
    /// Initial state: a CSV file or an inline list such as `0.5,0.1,0.1`.
    #[arg(long)]
    x0: String,
    #[arg(long)]
    t_end: f64,
    #[arg(short, long)]
    out: PathBuf,
    /// Event file; defaults to the output path with extension `events.json`.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Adaptive)]
    method: MethodArg,
    /// Step for `rk4`.
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-10)]
    atol: f64,
    #[arg(long, default_value_t = 0.5)]
    h_max: f64,
    #[arg(long, value_enum, default_value_t = FormulationArg::Linear)]
    formulation: FormulationArg,
    /// Sample spacing; every accepted step when absent.
    #[arg(long)]
    every: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Rk4,
    Adaptive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormulationArg {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Direction {
    Generic,
    Strong,
}

/// What a command produced: text for stdout and the verdict.
struct Outcome {
    stdout: String,
    pass: bool,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, pass: true }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
    }
}

/// Reads a vector inline or from the first numeric line of a file.
fn read_vector(arg: &str) -> Result<Vec<f64>> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .find_map(|l| io::parse_vector(l).ok())
            .ok_or_else(|| Error::InvalidInput(format!("{arg}: no numeric row")));
    }
    io::parse_vector(arg)
}

/// Writes to `out` when given, otherwise returns the text for stdout.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<String> {
    match out {
        Some(path) => {
            io::write_json(path, value)?;
            Ok(String::new())
        }
        None => Ok(io::to_json(value)? + "\n"),
    }
}

#[derive(Serialize)]
struct TripleReport {
    k: usize,
    triple: TripleParams,
    planes: [Plane3; 4],
    eigen_preconditions: Vec<(&'static str, f64)>,
    region: Option<RegionVerdict>,
    convergence: Option<SinkVerdict>,
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Validate { params } => {
            let report = check_all(&io::read_params(&params)?);
            Ok(Outcome {
                stdout: io::to_json(&report)? + "\n",
                pass: report.all_pass,
            })
        }
        Command::Sample { n, p, seed, out } => {
            let params = sample_params(n, p, seed)?;
            let text = io::params_json(&params)? + "\n";
            match out {
                Some(path) => {
                    io::write_atomic(&path, text.as_bytes())?;
                    Ok(Outcome::ok(String::new()))
                }
                None => Ok(Outcome::ok(text)),
            }
        }
        Command::Simulate(a) => simulate(a),
        Command::Triple {
            params,
            k,
            check_region,
            converge,
            x0,
            tol,
            t_max,
        } => {
            let params = io::read_params(&params)?;
            params.check_cycle_index(k)?;
            positive("tol", tol)?;
            positive("t-max", t_max)?;
            let t = restrict_triple(&params, k);
            let region = if check_region {
                Some(invariant_region_check(&t)?)
            } else {
                None
            };
            let convergence = if converge {
                let x = read_vector(
                    x0.as_deref()
                        .ok_or_else(|| Error::InvalidInput("--converge needs --x0".into()))?,
                )?;
                let x: [f64; 3] = x
                    .try_into()
                    .map_err(|_| Error::InvalidInput("--x0 must have three components".into()))?;
                Some(converge_to_sink(&t, x, tol, t_max)?)
            } else {
                None
            };
            let pass = region.as_ref().is_none_or(|r| r.holds) && convergence.as_ref().is_none_or(|c| c.converged);
            let report = TripleReport {
                k,
                planes: planes(&t),
                eigen_preconditions: t.eigen_preconditions(),
                triple: t,
                region,
                convergence,
            };
            Ok(Outcome {
                stdout: io::to_json(&report)? + "\n",
                pass,
            })
        }
        Command::Trace { params, k, angles, out } => {
            let params = io::read_params(&params)?;
            let fan = trace_fan(&params, k, angles, &TraceOptions::default())?;
            Ok(Outcome::ok(emit(&fan, out.as_deref())?))
        }
        Command::Gamma {
            params,
            angles,
            arc,
            out,
            obj,
        } => {
            let params = io::read_params(&params)?;
            let opts = GammaOptions {
                m_angles: angles,
                m_arc: arc,
                ..GammaOptions::default()
            };
            let mesh = build_gamma(&params, &opts)?;
            let json = io::mesh_json(&mesh)? + "\n";
            let obj_text = match &obj {
                Some(_) => {
                    let mut buf = Vec::new();
                    mesh.write_obj(&mut buf)?;
                    Some(buf)
                }
                None => None,
            };
            io::write_atomic(&out, json.as_bytes())?;
            if let (Some(path), Some(buf)) = (obj, obj_text) {
                io::write_atomic(&path, &buf)?;
            }
            Ok(Outcome::ok(String::new()))
        }
        Command::Classify { mesh, p, .. } => {
            let report = match (mesh, p) {
                (Some(path), _) => classify_topology(&io::read_mesh(&path)?)?,
                (None, Some(p)) => classify_combinatorial(p)?,
                (None, None) => return Err(Error::InvalidInput("give --mesh or --p with --combinatorial".into())),
            };
            Ok(Outcome::ok(io::to_json(&report)? + "\n"))
        }
        Command::Contraction {
            params,
            k,
            delta,
            eps_list,
            direction,
            out,
        } => {
            let params = io::read_params(&params)?;
            let direction = match direction {
                Direction::Generic => EtaDirection::Generic,
                Direction::Strong => EtaDirection::Strong,
            };
            let fit = contraction_experiment(&params, k, delta, &eps_list, direction)?;
            Ok(Outcome {
                stdout: emit(&fit, out.as_deref())?,
                pass: fit.s > 1.0,
            })
        }
        Command::Stability {
            params,
            mesh,
            eps,
            laps,
            trials,
            seed,
            delta,
            mesh_floor: floor,
            fine_mesh,
            out,
        } => {
            let params = io::read_params(&params)?;
            let mesh = io::read_mesh(&mesh)?;
            let floor = match fine_mesh {
                Some(path) => floor.max(mesh_floor(&MeshIndex::new(&mesh)?, &io::read_mesh(&path)?)?),
                None => floor,
            };
            let opts = StabilityOptions {
                eps0: eps,
                laps,
                trials,
                seed,
                delta,
                mesh_floor: floor,
                ..StabilityOptions::default()
            };
            let report = stability_experiment(&params, &mesh, &opts)?;
            let pass = report.alarms == 0 && report.failures == 0 && report.channel_ok && report.all_laps_contract;
            io::write_json(&out, &report)?;
            Ok(Outcome {
                stdout: String::new(),
                pass,
            })
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let params = io::read_params(&a.params)?;
    let x0 = read_vector(&a.x0)?;
    positive("t-end", a.t_end)?;
    let method = match a.method {
        MethodArg::Rk4 => {
            positive("h", a.h)?;
            Method::Rk4 { h: a.h }
        }
        MethodArg::Adaptive => {
            positive("rtol", a.rtol)?;
            positive("atol", a.atol)?;
            positive("h-max", a.h_max)?;
            Method::Adaptive {
                rtol: a.rtol,
                atol: a.atol,
                h_max: a.h_max,
            }
        }
    };
    let output = match a.every {
        Some(dt) => {
            positive("every", dt)?;
            Output::Every(dt)
        }
        None => Output::Steps,
    };
    let opts = IntegrateOptions {
        method,
        formulation: match a.formulation {
            FormulationArg::Linear => Formulation::Linear,
            FormulationArg::Log => Formulation::Log,
        },
        neighborhoods: SaddleNeighborhood::for_cycle(&params, a.delta)?,
        output,
        ..IntegrateOptions::default()
    };
    let traj = integrate(&params, &x0, a.t_end, &opts)?;
    let csv = io::trajectory_csv(&traj, params.n());
    let events = io::events_json(&traj.events)?;
    let events_path = a.events.unwrap_or_else(|| a.out.with_extension("events.json"));
    io::write_atomic(&a.out, csv.as_bytes())?;
    io::write_atomic(&events_path, events.as_bytes())?;
    Ok(Outcome::ok(String::new()))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(Error::InvalidInput("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))
            .and_then(|pool| pool.install(|| execute(cli.command))),
        None => execute(cli.command),
    };
    match result {
        Ok(outcome) => {
            let _ = stdout.write_all(outcome.stdout.as_bytes());
            if outcome.pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "hclab: {e}");
            if e.is_usage() {
                2
            } else {
                3
            }
        }
    }
}

pub fn main() -> ExitCode {
    let code = run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("hclab").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn combinatorial_classification() {
        let (code, out, _) = call(&["classify", "--p", "5", "--combinatorial"]);
        assert_eq!(code, 0);
        assert_eq!(
            out.trim(),
            r#"{"classification":"MobiusStrip","boundary_components":1,"orientable":false,"euler":0}"#
        );
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["classify", "--bogus"]).0, 2);
        assert_eq!(call(&[]).0, 2);
        let (code, out, _) = call(&["validate", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("Usage"));
        assert_eq!(call(&["classify", "--p", "3", "--combinatorial"]).0, 2);
    }

    #[test]
    fn vector_from_file_skips_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x0.csv");
        std::fs::write(&path, "# hclab/v1\nx_1,x_2\n0.5,0.25\n").unwrap();
        assert_eq!(read_vector(path.to_str().unwrap()).unwrap(), vec![0.5, 0.25]);
        assert_eq!(read_vector("1,2").unwrap(), vec![1.0, 2.0]);
    }
}
