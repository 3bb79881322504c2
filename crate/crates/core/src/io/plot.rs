//! Deterministic SVG figures: heatmaps, ROC and risk-coverage curves, and
//! a radar chart of aggregate metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::domain::Method;
use crate::error::Result;
use crate::metrics::report::MetricsReport;
use crate::tune::{ExperimentResult, RunStatus};

use super::matrix::write_text;

const PALETTE: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];
const DIAGONAL_FILL: &str = "#d9d9d9";

fn svg_open(width: u32, height: u32, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        width / 2,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// White at `t = 0` to dark blue at `t = 1`.
fn blue(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// Square heatmap. The color scale spans the off-diagonal entries only;
/// diagonal cells are drawn gray with their value printed.
pub fn heatmap_svg(title: &str, matrix: &[Vec<f64>]) -> String {
    let c = matrix.len();
    let (w, h) = (520u32, 560u32);
    let origin = (60.0, 50.0);
    let side = 400.0 / c.max(1) as f64;
    let off: Vec<f64> = (0..c)
        .flat_map(|i| (0..c).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| matrix[i][j])
        .collect();
    let min = off.iter().copied().fold(f64::INFINITY, f64::min);
    let max = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut s = svg_open(w, h, title);
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let x = origin.0 + j as f64 * side;
            let y = origin.1 + i as f64 * side;
            let fill = if i == j {
                DIAGONAL_FILL.to_string()
            } else if span > 0.0 {
                blue((v - min) / span)
            } else {
                blue(0.5)
            };
            let _ = writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{side:.2}\" height=\"{side:.2}\" fill=\"{fill}\" stroke=\"white\" data-row=\"{i}\" data-col=\"{j}\" data-value=\"{v}\"/>"
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{i}</text>",
            origin.0 - 6.0,
            origin.1 + (i as f64 + 0.5) * side + 4.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{i}</text>",
            origin.0 + (i as f64 + 0.5) * side,
            origin.1 + 400.0 + 16.0
        );
    }
    let legend_y = origin.1 + 440.0;
    for k in 0..=20 {
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{legend_y:.2}\" width=\"20\" height=\"14\" fill=\"{}\"/>",
            origin.0 + k as f64 * 20.0,
            blue(k as f64 / 20.0)
        );
    }
    let (lo, hi) = if off.is_empty() { (0.0, 0.0) } else { (min, max) };
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\">min {lo:.6}</text>\n<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">max {hi:.6}</text>",
        origin.0,
        legend_y + 32.0,
        origin.0 + 420.0,
        legend_y + 32.0
    );
    s.push_str("</svg>\n");
    s
}

/// Line chart of one or more curves on the unit square.
fn curves_svg(title: &str, x_label: &str, y_label: &str, curves: &[(String, Vec<[f64; 2]>)], y_max: f64) -> String {
    let (w, h) = (480u32, 480u32);
    let (x0, y0, side) = (60.0, 40.0, 360.0);
    let y_max = if y_max > 0.0 { y_max } else { 1.0 };
    let mut s = svg_open(w, h, title);
    let _ = writeln!(
        s,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{side}\" height=\"{side}\" fill=\"none\" stroke=\"black\"/>"
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{f:.2}</text>\n<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{:.3}</text>",
            x0 + f * side,
            y0 + side + 16.0,
            x0 - 6.0,
            y0 + side - f * side + 4.0,
            f * y_max
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n<text x=\"14\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
        x0 + side / 2.0,
        y0 + side + 36.0,
        escape(x_label),
        y0 + side / 2.0,
        y0 + side / 2.0,
        escape(y_label)
    );
    for (k, (name, points)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .map(|p| format!("{:.3},{:.3}", x0 + p[0] * side, y0 + side - (p[1] / y_max) * side))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            path.join(" ")
        );
        let ly = y0 + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            x0 + side - 110.0,
            ly - 9.0,
            x0 + side - 95.0,
            ly,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn roc_svg(curves: &[(String, Vec<[f64; 2]>)]) -> String {
    curves_svg("ROC", "false positive rate", "true positive rate", curves, 1.0)
}

pub fn risk_coverage_svg(curves: &[(String, Vec<[f64; 2]>)]) -> String {
    let y_max = curves
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q[1]))
        .fold(0.0, f64::max);
    curves_svg("Risk-coverage", "coverage", "selective risk", curves, y_max)
}

/// Radar chart; every axis runs from 0 at the center to 1 at the rim.
pub fn radar_svg(title: &str, axes: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (480u32, 480u32);
    let (cx, cy, r) = (240.0, 250.0, 160.0);
    let n = axes.len();
    let at = |k: usize, v: f64| {
        let a = -std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        (cx + r * v * a.cos(), cy + r * v * a.sin())
    };
    let mut s = svg_open(w, h, title);
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let pts: Vec<String> = (0..n).map(|k| at(k, ring)).map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
        let _ = writeln!(s, "<polygon fill=\"none\" stroke=\"#cccccc\" points=\"{}\"/>", pts.join(" "));
    }
    for (k, name) in axes.iter().enumerate() {
        let (x, y) = at(k, 1.0);
        let (lx, ly) = at(k, 1.12);
        let _ = writeln!(
            s,
            "<line x1=\"{cx}\" y1=\"{cy}\" x2=\"{x:.3}\" y2=\"{y:.3}\" stroke=\"#cccccc\"/>\n<text x=\"{lx:.3}\" y=\"{ly:.3}\" text-anchor=\"middle\">{}</text>",
            escape(name)
        );
    }
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| at(i, v.clamp(0.0, 1.0)))
            .map(|(x, y)| format!("{x:.3},{y:.3}"))
            .collect();
        let _ = writeln!(
            s,
            "<polygon fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            "<rect x=\"10\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"25\" y=\"{:.2}\">{}</text>",
            34.0 + 16.0 * k as f64,
            43.0 + 16.0 * k as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn save(dir: &Path, name: &str, svg: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    write_text(&p, svg)?;
    written.push(p);
    Ok(())
}

fn first_reports(result: &ExperimentResult) -> Vec<(Method, &MetricsReport)> {
    let mut out: Vec<(Method, &MetricsReport)> = Vec::new();
    for r in &result.records {
        if r.status == RunStatus::Ok && !out.iter().any(|(m, _)| *m == r.method) {
            if let Some(rep) = &r.report {
                out.push((r.method, rep));
            }
        }
    }
    out
}

/// Figures for a finished experiment. Plots whose data is missing are
/// skipped with a warning.
pub fn render_experiment_plots(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let observer = result
        .records
        .iter()
        .filter(|r| r.status == RunStatus::Ok)
        .find_map(|r| r.observer.as_ref().and_then(|o| o.entries.clone()));
    match observer {
        Some(d) => save(dir, "d_matrix.svg", &heatmap_svg("Learned D (first seed)", &d), &mut written)?,
        None => log::warn!("no learned D matrix in the result; skipping d_matrix.svg"),
    }
    match &result.confusion {
        Some(c) => {
            let m: Vec<Vec<f64>> = c.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            save(dir, "confusion.svg", &heatmap_svg("Confusion matrix (true by predicted)", &m), &mut written)?;
        }
        None => log::warn!("no confusion matrix in the result; skipping confusion.svg"),
    }
    let firsts = first_reports(result);
    written.extend(render_report_plots(&firsts.iter().map(|(_, r)| *r).collect::<Vec<_>>(), dir)?);
    let rows: Vec<_> = result.aggregates.iter().filter(|a| a.fpr95_mean.is_some()).collect();
    if rows.is_empty() {
        log::warn!("no aggregate metrics; skipping radar.svg");
    } else {
        let axes = vec!["1 - FPR@95".to_string(), "AUROC".to_string(), "1 - AURC".to_string()];
        let series: Vec<(String, Vec<f64>)> = rows
            .iter()
            .map(|a| {
                let mut name = format!("{} f={}", a.method, a.tuning_fraction);
                if let Some(v) = a.ablation_value {
                    let _ = write!(name, " v={v}");
                }
                let vals = vec![
                    1.0 - a.fpr95_mean.unwrap_or(1.0),
                    a.auroc_mean.unwrap_or(0.0),
                    1.0 - a.aurc_mean.unwrap_or(1.0),
                ];
                (name, vals)
            })
            .collect();
        save(dir, "radar.svg", &radar_svg("Mean metrics", &axes, &series), &mut written)?;
    }
    Ok(written)
}

/// ROC and risk-coverage curves, one line per report.
pub fn render_report_plots(reports: &[&MetricsReport], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let label = |r: &MetricsReport| match r.seed {
        Some(s) => format!("{} (seed {s})", r.method),
        None => r.method.to_string(),
    };
    let roc: Vec<(String, Vec<[f64; 2]>)> = reports
        .iter()
        .filter(|r| !r.metrics.roc_points.is_empty())
        .map(|r| (label(r), r.metrics.roc_points.clone()))
        .collect();
    if roc.is_empty() {
        log::warn!("no ROC points; skipping roc.svg");
    } else {
        save(dir, "roc.svg", &roc_svg(&roc), &mut written)?;
    }
    let rc: Vec<(String, Vec<[f64; 2]>)> = reports
        .iter()
        .filter(|r| !r.metrics.rc_points.is_empty())
        .map(|r| (label(r), r.metrics.rc_points.clone()))
        .collect();
    if rc.is_empty() {
        log::warn!("no risk-coverage points; skipping risk_coverage.svg");
    } else {
        save(dir, "risk_coverage.svg", &risk_coverage_svg(&rc), &mut written)?;
    }
    Ok(written)
}
