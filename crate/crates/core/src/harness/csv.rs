use std::fmt::Write as _;
use std::path::Path;

use super::ConvergenceReport;
use crate::coefficients::fmt_decimal;
use crate::error::{Error, Result};
use crate::stepper::Trajectory;

/// Header `t,u1,...,um`, then one row per grid point.
pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let m = trajectory.states.first().map_or(0, |u| u.len());
    let mut out = String::from("t");
    for j in 1..=m {
        let _ = write!(out, ",u{j}");
    }
    out.push('\n');
    for (t, u) in trajectory.iter() {
        out.push_str(&fmt_decimal(t));
        for x in u.iter() {
            out.push(',');
            out.push_str(&fmt_decimal(*x));
        }
        out.push('\n');
    }
    out
}

/// Header `dt,error`, one row per step size (`nan` for failed runs), then the fitted order.
pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("dt,error\n");
    for entry in &report.entries {
        let err = entry.error.as_ref().map_or_else(|_| "nan".to_string(), |e| fmt_decimal(*e));
        let _ = writeln!(out, "{},{}", fmt_decimal(entry.dt), err);
    }
    let _ = writeln!(out, "# fitted_order={}", report.fitted_order);
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_trajectory_csv(trajectory: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &trajectory_csv(trajectory))
}

pub fn write_convergence_csv(report: &ConvergenceReport, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &convergence_csv(report))
}
