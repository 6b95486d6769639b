use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use imex_peer::coefficients::{
    construct_order_s, default_gamma, load_coefficients, save_coefficients, validate,
    ConstructionInputs, NodeVector,
};
use imex_peer::error::{Error, Result};
use imex_peer::harness::{
    ap_test, convergence_study, sweep_step_sizes, wb_test, write_convergence_csv,
    write_trajectory_csv, MethodSource, RunSpec,
};
use imex_peer::problems::{ap_pareschi_russo, build_problem, wb_boscarino_pareschi, ProblemKind, ProblemParams};
use imex_peer::stepper::{integrate, SolverConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "imex-peer", version, about = "Two-step IMEX Peer methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ProblemArgs {
    /// wb, ap, poly or jinxin
    #[arg(long)]
    problem: ProblemKind,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Degree of the polynomial test problem.
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Grid cells of the Jin-Xin problem.
    #[arg(long, default_value_t = 16)]
    cells: usize,
}

impl ProblemArgs {
    fn params(&self) -> ProblemParams {
        ProblemParams {
            epsilon: self.epsilon,
            degree: self.degree,
            cells: self.cells,
            ..ProblemParams::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build an order-s coefficient set and write it to a file.
    Construct {
        #[arg(long)]
        stages: usize,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        nodes: Vec<f64>,
        #[arg(long)]
        p_file: Option<PathBuf>,
        #[arg(long)]
        s2_file: Option<PathBuf>,
        #[arg(long)]
        r_lower_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a coefficient file; exits 0 only if every invariant holds.
    Validate { file: PathBuf },
    /// Integrate one problem and write the trajectory.
    Run {
        /// Coefficient file or builtin:sK
        #[arg(long)]
        method: MethodSource,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Step-size sweep against a reference solution with a fitted order.
    Convergence {
        #[arg(long)]
        method: MethodSource,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 0.2)]
        dt_max: f64,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, default_value_t = 5.0)]
        t_end: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Well-balancing checks on the Boscarino-Pareschi problem.
    WbTest {
        #[arg(long)]
        method: MethodSource,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-6")]
        perturb: Vec<f64>,
    },
    /// Asymptotic-preserving checks on the Pareschi-Russo problem.
    ApTest {
        #[arg(long)]
        method: MethodSource,
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-4,1e-6,1e-8")]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 0.0125)]
        dt: f64,
        #[arg(long, default_value_t = 5.0)]
        t_end: f64,
    },
}

fn read_matrix(path: &Path, s: usize) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: k + 1,
                message: format!("{}: {e}", path.display()),
            })?;
        if row.len() != s {
            return Err(Error::Parse {
                line: k + 1,
                message: format!("{}: expected {s} entries, found {}", path.display(), row.len()),
            });
        }
        rows.push(row);
    }
    if rows.len() != s {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("{}: expected {s} rows, found {}", path.display(), rows.len()),
        });
    }
    Ok(DMatrix::from_row_iterator(s, s, rows.into_iter().flatten()))
}

fn passfail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Construct {
            stages,
            gamma,
            nodes,
            p_file,
            s2_file,
            r_lower_file,
            out,
        } => {
            if nodes.len() != stages {
                return Err(Error::InvalidArgument(format!(
                    "--stages {stages} but {} nodes given",
                    nodes.len()
                )));
            }
            let mut inputs = ConstructionInputs::new(NodeVector::new(nodes)?)
                .with_gamma(gamma.unwrap_or_else(|| default_gamma(stages)));
            if let Some(path) = p_file {
                inputs = inputs.with_transfer(read_matrix(&path, stages)?);
            }
            if let Some(path) = s2_file {
                inputs = inputs.with_s2(read_matrix(&path, stages)?);
            }
            if let Some(path) = r_lower_file {
                inputs = inputs.with_r_lower(read_matrix(&path, stages)?);
            }
            let coeffs = construct_order_s(&inputs)?;
            save_coefficients(&coeffs, &out)?;
            println!("wrote {} to {}", coeffs.label(), out.display());
            Ok(true)
        }
        Command::Validate { file } => {
            let coeffs = load_coefficients(&file)?;
            let report = validate(&coeffs);
            println!("{report}");
            Ok(report.passed)
        }
        Command::Run {
            method,
            problem,
            dt,
            t_end,
            out,
        } => {
            let coeffs = method.load()?;
            let entry = build_problem(problem.problem, &problem.params())?;
            let trajectory = integrate(&coeffs, &entry.problem, &entry.initial(), t_end, dt, &SolverConfig::default())?;
            write_trajectory_csv(&trajectory, &out)?;
            println!("{} steps of {} on {} written to {}", trajectory.len(), method, entry.problem.label, out.display());
            Ok(true)
        }
        Command::Convergence {
            method,
            problem,
            dt_max,
            levels,
            t_end,
            out,
        } => {
            let spec = RunSpec::new(method, problem.problem, sweep_step_sizes(dt_max, levels), t_end)
                .with_params(problem.params())
                .with_output(&out);
            let report = convergence_study(&spec)?;
            write_convergence_csv(&report, &out)?;
            for entry in &report.entries {
                match &entry.error {
                    Ok(err) => println!("dt = {:<10} error = {err:.3e}", entry.dt),
                    Err(msg) => println!("dt = {:<10} failed: {msg}", entry.dt),
                }
            }
            println!("fitted order {:.3}", report.fitted_order);
            Ok(true)
        }
        Command::WbTest {
            method,
            steps,
            dt,
            perturb,
        } => {
            let coeffs = method.load()?;
            let report = wb_test(&coeffs, &wb_boscarino_pareschi(), steps, dt, &perturb, &SolverConfig::default())?;
            println!("[{}] exact drift {:.3e}", passfail(report.exact_passed()), report.exact_drift);
            for p in &report.perturbations {
                println!("[{}] eps {:e}: drift {:.3e}, ratio {:.3}", passfail(p.ratio <= imex_peer::harness::WB_PERTURBATION_RATIO), p.epsilon, p.drift, p.ratio);
            }
            println!(
                "[{}] distance at t = 15: {:.3e}, non-increasing tail: {}",
                passfail(report.dynamic.passed()),
                report.dynamic.final_distance,
                report.dynamic.non_increasing_tail
            );
            Ok(report.passed())
        }
        Command::ApTest {
            method,
            epsilons,
            dt,
            t_end,
        } => {
            let coeffs = method.load()?;
            let report = ap_test(&coeffs, &ap_pareschi_russo, &epsilons, dt, t_end, &SolverConfig::default())?;
            for e in &report.entries {
                println!("eps {:e}: residual {:.3e}, projection gap {:.3e}", e.epsilon, e.residual, e.projection_gap);
            }
            if let Some(slope) = report.residual_slope {
                println!("residual-vs-eps slope {slope:.3}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VALIDATION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Validation(_) => EXIT_VALIDATION,
                ref e if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_USAGE,
            })
        }
    }
}
