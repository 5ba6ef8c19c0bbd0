//! Artifact writers: JSON headers next to CSV bodies. Floats use the shortest round-trip
//! representation, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::cell::CellSolution;
use crate::evolution::SolutionField;
use crate::harness::{ConvergenceReport, GradientReport, WeakMeanReport};
use crate::homogenize::Table;
use crate::scales::RegimeClassification;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

fn axis_names(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=dim).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// `u_eps_{eps}` or `u_hom`.
pub fn field_stem(eps: Option<f64>) -> String {
    match eps {
        Some(e) => format!("u_eps_{e}"),
        None => "u_hom".to_string(),
    }
}

/// Writes `{stem}.csv` and the sidecar `{stem}.json`.
///
/// Rows run over the vertices of the full grid (boundary included, first coordinate slowest)
/// and, for each vertex, over the time levels.
pub fn write_field(dir: &Path, field: &SolutionField) -> io::Result<()> {
    let stem = field_stem(field.eps);
    let nx = field.mesh.nx;
    let d = field.dim;
    let levels: Vec<Vec<f64>> = (0..=field.mesh.nt).map(|n| field.full_level(n)).collect();
    let h = 1.0 / nx as f64;
    let dt = field.dt();
    let mut names = axis_names("x", d);
    names.extend(["t".to_string(), "u".to_string()]);
    let mut out = names.join(",");
    out.push('\n');
    let vertices = (nx + 1).pow(d as u32);
    for v in 0..vertices {
        let x: Vec<f64> = if d == 1 { vec![v as f64 * h] } else { vec![(v / (nx + 1)) as f64 * h, (v % (nx + 1)) as f64 * h] };
        for (n, level) in levels.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", join(x.iter().copied()), n as f64 * dt, level[v]);
        }
    }
    fs::write(dir.join(format!("{stem}.csv")), out)?;
    let sidecar = json!({
        "dim": d,
        "mesh": field.mesh,
        "T": field.t_final,
        "eps": field.eps,
        "norms": field.norms,
        "iterations": field.iterations,
        "ordering": "space-major: vertices of the (nx+1)^N grid with x1 slowest, then time levels 0..=nt",
    });
    write_json(&dir.join(format!("{stem}.json")), &sidecar)
}

/// Writes `cell_solution.json` and `cell_solution.csv` (slice index slowest, then nodes with y1 slowest).
pub fn write_cell_solution(dir: &Path, sol: &CellSolution, regime: &RegimeClassification, xi: &[f64]) -> io::Result<()> {
    let header = json!({
        "grid": sol.grid,
        "regime": regime,
        "layout": sol.layout,
        "xi": xi,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "sweeps": sol.sweeps,
        "ds_norm": sol.ds_norm,
        "mean": sol.mean,
        "ordering": "row-major: slice (evolving s node) slowest, then cell nodes with y1 slowest",
    });
    write_json(&dir.join("cell_solution.json"), &header)?;
    let mesh = sol.grid.mesh();
    let d = sol.grid.dim;
    let s_nodes = sol.grid.s_nodes();
    let mut names = vec!["slice".to_string(), "s".to_string()];
    names.extend(axis_names("y", d));
    names.push("w".to_string());
    let mut out = names.join(",");
    out.push('\n');
    for j in 0..sol.slices() {
        let s = if sol.layout.evolving { s_nodes[j] } else { f64::NAN };
        for (idx, w) in sol.slice(j).iter().enumerate() {
            let c = mesh.node_coords(idx);
            let s_text = if s.is_nan() { String::new() } else { format!("{s}") };
            let _ = writeln!(out, "{j},{s_text},{},{w}", join(c[..d].iter().copied()));
        }
    }
    fs::write(dir.join("cell_solution.csv"), out)
}

/// Writes `b_table.json` (axes) and `b_table.csv` (one row per node, last axis fastest).
pub fn write_table(dir: &Path, table: &Table, regime: &RegimeClassification) -> io::Result<()> {
    let header = json!({
        "dim": table.dim,
        "regime": regime,
        "xi_axes": table.xi_axes,
        "x_axes": table.x_axes,
        "t_axis": table.t_axis,
        "nodes": table.node_count(),
    });
    write_json(&dir.join("b_table.json"), &header)?;
    let d = table.dim;
    let mut names = axis_names("xi", d);
    names.extend(axis_names("x", d));
    names.push("t".to_string());
    names.extend(axis_names("b", d));
    let mut out = names.join(",");
    out.push('\n');
    for idx in 0..table.node_count() {
        let node = table.node(idx);
        let b = &table.values[idx * d..(idx + 1) * d];
        let _ = writeln!(out, "{},{}", join(node), join(b.iter().copied()));
    }
    fs::write(dir.join("b_table.csv"), out)
}

const REPORT_COLUMNS: &str = "eps,nx,nt,l2_error,flux_weak_error,l2_space_time,l2_h01,dual_norm_estimate,iterations";

/// Writes `report.csv`, `report.json` and the gnuplot file `report.dat`.
pub fn write_report(dir: &Path, report: &ConvergenceReport) -> io::Result<()> {
    let mut csv = format!("{REPORT_COLUMNS}\n");
    let mut dat = format!("# {}\n", REPORT_COLUMNS.replace(',', " "));
    for r in &report.rows {
        let fields = [
            format!("{}", r.eps),
            format!("{}", r.nx),
            format!("{}", r.nt),
            format!("{}", r.l2_error),
            format!("{}", r.flux_weak_error),
            format!("{}", r.l2_space_time),
            format!("{}", r.l2_h01),
            format!("{}", r.dual_norm_estimate),
            format!("{}", r.iterations),
        ];
        let _ = writeln!(csv, "{}", fields.join(","));
        let _ = writeln!(dat, "{}", fields.join(" "));
    }
    fs::write(dir.join("report.csv"), csv)?;
    fs::write(dir.join("report.dat"), dat)?;
    write_json(&dir.join("report.json"), report)
}

/// Writes `multiscale.json`, `weak_mean.csv` and, when present, `gradient.csv`.
pub fn write_multiscale(dir: &Path, weak: &WeakMeanReport, gradient: Option<&GradientReport>) -> io::Result<()> {
    write_json(&dir.join("multiscale.json"), &json!({ "weak_mean": weak, "gradient": gradient }))?;
    let mut out = String::from("eps,nx,nt,integral,limit,error\n");
    for r in &weak.rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.eps, r.nx, r.nt, r.integral, r.limit, r.error);
    }
    fs::write(dir.join("weak_mean.csv"), out)?;
    if let Some(g) = gradient {
        let mut out = String::from("eps,j,j_star,error\n");
        for r in &g.rows {
            let _ = writeln!(out, "{},{},{},{}", r.eps, r.j, r.j_star, r.error);
        }
        fs::write(dir.join("gradient.csv"), out)?;
    }
    Ok(())
}
