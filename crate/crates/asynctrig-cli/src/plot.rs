//! Hand-rendered SVG line plots.
//!
//! Every polyline carries its series verbatim in `data-x` / `data-values`
//! (the same text as the CSV), so plots can be checked against the trace.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use asynctrig::SimTrace;

use crate::error::{CliError, Result};
use crate::output::fmt_num;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub name: String,
    /// Written to `data-x` and `data-values` exactly as in the CSV.
    pub data_x: Vec<f64>,
    pub data_values: Vec<f64>,
    /// Plotted coordinates.
    pub points: Vec<(f64, f64)>,
}

impl Series {
    fn line(name: String, x: Vec<f64>, y: Vec<f64>) -> Self {
        let points = x.iter().copied().zip(y.iter().copied()).collect();
        Self { name, data_x: x, data_values: y, points }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(" ")
}

/// Renders `series` into one SVG document.
pub fn render(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>
<line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>
<text x="12" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 12 {})">{}</text>
<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="10">{}</text>
<text x="{r}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>
<text x="{}" y="{b}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>
<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
        WIDTH / 2.0,
        escape(title),
        WIDTH / 2.0,
        HEIGHT - 10.0,
        escape(x_label),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label),
        HEIGHT - MARGIN + 14.0,
        fmt_num(x0),
        HEIGHT - MARGIN + 14.0,
        fmt_num(x1),
        MARGIN - 4.0,
        fmt_num(y0),
        MARGIN - 4.0,
        MARGIN + 4.0,
        fmt_num(y1),
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
    );
    for (i, s) in series.iter().enumerate() {
        let mut pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        if pts.len() == 1 {
            pts.push(pts[0].clone());
        }
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-name="{}" data-x="{}" data-values="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            escape(&s.name),
            join(&s.data_x),
            join(&s.data_values),
            COLORS[i % COLORS.len()],
            pts.join(" "),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn state_series(trace: &SimTrace) -> Vec<Series> {
    let n = trace.records.first().map_or(0, |r| r.x.len());
    let t: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    (0..n)
        .map(|i| Series::line(format!("x_{}", i + 1), t.clone(), trace.records.iter().map(|r| r.x[i]).collect()))
        .collect()
}

/// `log10 V` against time; zeros are clamped to the smallest positive value.
pub fn lyapunov_series(trace: &SimTrace) -> Series {
    let t: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    let v: Vec<f64> = trace.records.iter().map(|r| r.v).collect();
    let floor = v.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    let points = t.iter().zip(&v).map(|(&t, &v)| (t, v.max(floor).log10())).collect();
    Series { name: "V".into(), data_x: t, data_values: v, points }
}

/// Step chart of the action taken in each period.
pub fn sensor_series(trace: &SimTrace) -> Series {
    let steps: Vec<f64> = trace.records.iter().map(|r| r.step as f64).collect();
    let actions: Vec<f64> = trace.records.iter().map(|r| f64::from(r.action)).collect();
    let points = steps
        .iter()
        .zip(&actions)
        .flat_map(|(&h, &a)| [(h, a), (h + 1.0, a)])
        .collect();
    Series { name: "action".into(), data_x: steps, data_values: actions, points }
}

/// Writes `states.svg`, `lyapunov.svg` and `sensors.svg` into `dir`.
pub fn emit_plots(trace: &SimTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    if trace.records.is_empty() {
        return Err(CliError::EmptyTrace);
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let docs = [
        ("states.svg", render("States", "t [s]", "x", &state_series(trace))),
        ("lyapunov.svg", render("Lyapunov function", "t [s]", "log10 V", &[lyapunov_series(trace)])),
        ("sensors.svg", render("Sensor status", "step", "sensor read (0 = idle)", &[sensor_series(trace)])),
    ];
    let mut paths = Vec::new();
    for (name, text) in docs {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
