//! File formats: the error-series CSV, binary graymap snapshots and the
//! verification reports.

use std::fs;
use std::path::Path;

use thermoctl_core::convergence::MmsLevel;
use thermoctl_core::stability::StabilityReport;
use thermoctl_core::{ErrorSeries, Mesh, NodalField};

use crate::error::{CliError, Result};

/// Default color map limits of snapshot images.
pub const IMAGE_MIN: f64 = -1.0;
pub const IMAGE_MAX: f64 = 1.0;

/// Scientific notation with 16 significant digits.
fn num(x: f64) -> String {
    format!("{x:.15e}")
}

pub fn series_header(n_signals: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "e_y", "e_grad", "mass"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=n_signals).map(|j| format!("kappa_{j}")));
    h
}

pub fn write_series_csv(series: &ErrorSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    w.write_record(series_header(series.n_signals())).map_err(CliError::csv(path))?;
    for m in 0..series.len() {
        let mut row = vec![num(series.times[m]), num(series.e_y[m]), num(series.e_grad[m]), num(series.mass_trace[m])];
        row.extend(series.kappa_traces.iter().map(|k| num(k[m])));
        w.write_record(&row).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_series_csv(path: &Path) -> Result<ErrorSeries> {
    let bad = |message: String| CliError::Parse { path: path.to_path_buf(), message };
    let mut r = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
    let header = r.headers().map_err(CliError::csv(path))?.clone();
    let n_signals = header.len().checked_sub(4).ok_or_else(|| bad("header has fewer than 4 columns".into()))?;
    if header.iter().ne(series_header(n_signals).iter().map(String::as_str)) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut s = ErrorSeries { kappa_traces: vec![Vec::new(); n_signals], ..Default::default() };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(CliError::csv(path))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", line + 1))))
            .collect::<Result<_>>()?;
        s.times.push(v[0]);
        s.e_y.push(v[1]);
        s.e_grad.push(v[2]);
        s.mass_trace.push(v[3]);
        for (trace, x) in s.kappa_traces.iter_mut().zip(&v[4..]) {
            trace.push(*x);
        }
    }
    Ok(s)
}

/// `floor(255 * clamp((v - min) / (max - min), 0, 1) + 1/2)`
pub fn pixel_value(v: f64, min: f64, max: f64) -> u8 {
    let t = ((v - min) / (max - min)).clamp(0.0, 1.0);
    (255.0 * t + 0.5).floor() as u8
}

/// Binary graymap bytes with one pixel per vertex; the top row is the
/// largest `x2`.
pub fn render_pgm(field: &NodalField, mesh: &Mesh, min: f64, max: f64) -> Result<Vec<u8>> {
    if !(min < max && min.is_finite() && max.is_finite()) {
        return Err(CliError::ImageRange { min, max });
    }
    if field.mesh_id() != mesh.id() {
        return Err(thermoctl_core::Error::MeshMismatch { left: mesh.id(), right: field.mesh_id() }.into());
    }
    if let Some(i) = field.values().iter().position(|v| !v.is_finite()) {
        return Err(thermoctl_core::Error::NonFinite(format!("snapshot value at vertex {i}")).into());
    }
    let side = mesh.n_div() + 1;
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.reserve(side * side);
    let v = field.values();
    for j in (0..side).rev() {
        out.extend((0..side).map(|i| pixel_value(v[mesh.grid_index(i, j)], min, max)));
    }
    Ok(out)
}

pub fn write_snapshot_image(field: &NodalField, mesh: &Mesh, min: f64, max: f64, path: &Path) -> Result<()> {
    let bytes = render_pgm(field, mesh, min, max)?;
    fs::write(path, bytes).map_err(CliError::io(path))
}

/// Header and pixel rows of a binary graymap written by [`render_pgm`].
pub fn parse_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos + 1..)?;
    (data.len() == w * h).then(|| (w, h, data.to_vec()))
}

pub fn write_stability_report(report: &StabilityReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    w.write_record(["delta", "response", "ratio", "sup_l2_y", "l2_grad_y", "sup_kappa", "l2_dkappa"])
        .map_err(CliError::csv(path))?;
    for (i, d) in report.perturbation_sizes.iter().enumerate() {
        let n = &report.difference_norms[i];
        let row = [*d, report.response_norms[i], report.ratios[i], n.sup_l2_y, n.l2_grad_y, n.sup_kappa, n.l2_dkappa];
        w.write_record(row.map(num)).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn write_convergence_report(levels: &[MmsLevel], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    w.write_record(["n_div", "h", "steps", "tau", "error", "order"]).map_err(CliError::csv(path))?;
    for l in levels {
        let order = l.order.map(num).unwrap_or_default();
        w.write_record([l.n_div.to_string(), num(l.h), l.steps.to_string(), num(l.tau), num(l.error), order])
            .map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}
