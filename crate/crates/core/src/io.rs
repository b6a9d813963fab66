//! Plot-ready CSV emission. Floats use Rust's shortest round-trip formatting.

use std::io::{self, Write};

use crate::reference::{ConvergenceTable, MmSolution};
use crate::report::IdentityReport;
use crate::trajectory::Trajectory;
use crate::value::ValueRow;
use crate::wed::WedSolution;

fn num(x: f64) -> String {
    format!("{x}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

/// Columns `t, x0.., speed, phi, V, resid_fund, resid_inner`, one row per node.
/// Cell quantities of cell `i` are written on row `i`; missing entries are empty.
pub fn write_trajectory<W: Write>(out: W, sol: &WedSolution, resid_fund: &[f64], resid_inner: &[f64]) -> io::Result<()> {
    let mut w = writer(out);
    let d = sol.trajectory.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|k| format!("x{k}")));
    header.extend(["speed", "phi", "V", "resid_fund", "resid_inner"].map(String::from));
    w.write_record(&header)?;
    let cell = |v: &[f64], i: usize| v.get(i).map(|x| num(*x)).unwrap_or_default();
    for (i, (t, p)) in sol.nodes().iter().zip(&sol.trajectory.points).enumerate() {
        let mut row = vec![num(*t)];
        row.extend(p.coords.iter().map(|x| num(*x)));
        row.push(cell(&sol.speeds, i));
        row.push(num(sol.phi[i]));
        row.push(num(sol.values[i]));
        row.push(cell(resid_fund, i));
        row.push(cell(resid_inner, i));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Columns `x0.., epsilon, V, G, phi`.
pub fn write_value_rows<W: Write>(out: W, rows: &[ValueRow]) -> io::Result<()> {
    let mut w = writer(out);
    let d = rows.first().map_or(1, |r| r.x.len());
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    header.extend(["epsilon", "V", "G", "phi"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut row: Vec<String> = r.x.iter().map(|x| num(*x)).collect();
        row.extend([r.epsilon, r.v, r.g, r.phi].map(num));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Columns `epsilon, sup_err, lsc_residual, runtime_s`.
pub fn write_convergence<W: Write>(out: W, table: &ConvergenceTable) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["epsilon", "sup_err", "lsc_residual", "runtime_s"])?;
    for r in &table.rows {
        w.write_record([r.epsilon, r.sup_err, r.lsc_residual, r.runtime_s].map(num))?;
    }
    w.flush()
}

/// Columns `k, t, x0.., phi, movement`; the movement of row `k` is `d(u^k, u^{k+1})`.
pub fn write_mm<W: Write>(out: W, mm: &MmSolution) -> io::Result<()> {
    let mut w = writer(out);
    let d = mm.trajectory.dim();
    let mut header = vec!["k".to_string(), "t".to_string()];
    header.extend((0..d).map(|k| format!("x{k}")));
    header.extend(["phi", "movement"].map(String::from));
    w.write_record(&header)?;
    for (k, (t, p)) in mm.trajectory.grid.nodes.iter().zip(&mm.trajectory.points).enumerate() {
        let mut row = vec![k.to_string(), num(*t)];
        row.extend(p.coords.iter().map(|x| num(*x)));
        row.push(num(mm.phi[k]));
        row.push(mm.movements.get(k).map(|x| num(*x)).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()
}

/// Columns `t, x0..`.
pub fn write_curve<W: Write>(out: W, traj: &Trajectory) -> io::Result<()> {
    let mut w = writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..traj.dim()).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for (t, p) in traj.grid.nodes.iter().zip(&traj.points) {
        let mut row = vec![num(*t)];
        row.extend(p.coords.iter().map(|x| num(*x)));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Columns `abscissa, residual`.
pub fn write_residuals<W: Write>(out: W, report: &IdentityReport) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(["abscissa", "residual"])?;
    for (a, r) in report.abscissa.iter().zip(&report.residuals) {
        w.write_record([num(*a), num(*r)])?;
    }
    w.flush()
}
