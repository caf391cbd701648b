//! CSV writers. Every float is printed with 17 significant digits so the
//! files round-trip to the exact `f64` values.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::sim::Trajectory;
use crate::stats::{CellResult, GeneratorKind};

/// Formats `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// `t,x1,...,xn,eta,V,W,trigger`
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map_or(0, |s| s.len());
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",eta,V,W,trigger\n");
    for k in 0..traj.times.len() {
        out.push_str(&fmt_f64(traj.times[k]));
        for x in &traj.states[k] {
            out.push(',');
            out.push_str(&fmt_f64(*x));
        }
        for v in [
            traj.etas[k],
            traj.v_values[k],
            traj.w_values[k],
            traj.trigger_values[k],
        ] {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

/// `i,t_i`
pub fn execution_times_csv(traj: &Trajectory) -> String {
    let mut out = String::from("i,t_i\n");
    for (i, t) in traj.execution_times.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", fmt_f64(*t));
    }
    out
}

pub const TABLE_HEADER: &str = "generator,sigma,theta,lambda,mean,sd,cv,min,count";

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One table row; failed cells carry NaN statistics and a zero count.
pub fn table_row(cell: &CellResult) -> String {
    let theta = match cell.spec.kind {
        GeneratorKind::Static => None,
        GeneratorKind::Dynamic => Some(cell.spec.theta.unwrap_or(0.0)),
    };
    let (mean, sd, cv, min, count) = match &cell.stats {
        Ok(s) => (s.mean, s.sd, s.cv, s.min, s.count),
        Err(_) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0),
    };
    format!(
        "{},{},{},{},{},{},{},{},{}",
        cell.spec.kind.as_str(),
        fmt_f64(cell.spec.sigma),
        opt(theta),
        opt(cell.lambda),
        fmt_f64(mean),
        fmt_f64(sd),
        fmt_f64(cv),
        fmt_f64(min),
        count
    )
}

pub fn table_csv(cells: &[CellResult]) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for c in cells {
        out.push_str(&table_row(c));
        out.push('\n');
    }
    out
}

pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), trajectory_csv(traj))?;
    fs::write(
        dir.join(format!("{stem}_executions.csv")),
        execution_times_csv(traj),
    )
}
