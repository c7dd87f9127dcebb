//! Deterministic SVG figures for training curves and comparison tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use odp_core::training::{read_curves, CurvePoint};
use odp_core::{OdpError, Result};

const W: f64 = 640.0;
const PANEL_H: f64 = 220.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const GAP: f64 = 50.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(vals: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vals.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            return None;
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
            lo -= pad;
            hi += pad;
        }
        Some(Self { lo, hi })
    }

    /// Map `v` to `[a, b]` (b may be smaller than a for screen y).
    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }
}

fn panel(svg: &mut String, top: f64, title: &str, xs: &[f64], ys: &[f64], x_axis: &Axis) {
    let bottom = top + PANEL_H;
    let (x0, x1) = (LEFT, W - RIGHT);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{PANEL_H:.2}" fill="none" stroke="black"/>"#,
        x1 - x0
    );
    let _ = writeln!(svg, r#"<text x="{x0:.2}" y="{:.2}" font-size="13">{title}</text>"#, top - 8.0);
    let Some(y_axis) = Axis::fit(ys.iter().copied()) else {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">no finite values</text>"#,
            0.5 * (x0 + x1),
            top + 0.5 * PANEL_H
        );
        return;
    };
    for (v, y) in [(y_axis.hi, top), (y_axis.lo, bottom)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{v:.4}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| y.is_finite())
        .map(|(&x, &y)| (x_axis.map(x, x0, x1), y_axis.map(y, bottom, top)))
        .collect();
    if pts.len() == 1 {
        let (px, py) = pts[0];
        let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="steelblue"/>"#);
    } else {
        let path: Vec<String> = pts.iter().map(|(px, py)| format!("{px:.2},{py:.2}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            path.join(" ")
        );
    }
}

/// Two stacked panels: log10 training loss and validation PSNR against
/// step. A single point is drawn as one marker.
pub fn render_curves_svg(curve: &[CurvePoint], title: &str) -> Result<String> {
    if curve.is_empty() {
        return Err(OdpError::Input("curve has no points; refusing to draw an empty figure".into()));
    }
    let xs: Vec<f64> = curve.iter().map(|p| p.step as f64).collect();
    let x_axis = Axis::fit(xs.iter().copied()).expect("non-empty steps");
    let loss: Vec<f64> = curve.iter().map(|p| if p.loss > 0.0 { p.loss.log10() } else { f64::NAN }).collect();
    let psnr: Vec<f64> = curve.iter().map(|p| p.val_psnr).collect();
    let h = TOP + 2.0 * PANEL_H + GAP + 40.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{h}" viewBox="0 0 {W} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="16" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    panel(&mut svg, TOP + 10.0, "log10 training loss", &xs, &loss, &x_axis);
    panel(&mut svg, TOP + 10.0 + PANEL_H + GAP, "validation PSNR (dB)", &xs, &psnr, &x_axis);
    let base = TOP + 10.0 + 2.0 * PANEL_H + GAP + 16.0;
    let _ = writeln!(svg, r#"<text x="{LEFT:.2}" y="{base:.2}" font-size="11">{}</text>"#, curve[0].step);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{base:.2}" font-size="11" text-anchor="end">step {}</text>"#,
        W - RIGHT,
        curve[curve.len() - 1].step
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Horizontal bars for a `method,params,psnr_db` table; `N/A` rows are
/// labelled but not drawn.
pub fn render_table_svg(rows: &[(String, Option<f64>)], title: &str) -> Result<String> {
    if rows.is_empty() {
        return Err(OdpError::Input("table has no rows".into()));
    }
    let bar_h = 26.0;
    let h = TOP + 20.0 + rows.len() as f64 * (bar_h + 10.0);
    let finite: Vec<f64> = rows.iter().filter_map(|r| r.1).filter(|v| v.is_finite()).collect();
    let hi = finite.iter().copied().fold(0.0f64, f64::max).max(1.0);
    let left = 140.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{h}" viewBox="0 0 {W} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="16" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    for (i, (name, v)) in rows.iter().enumerate() {
        let y = TOP + 10.0 + i as f64 * (bar_h + 10.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
            left - 8.0,
            y + bar_h * 0.65,
            escape(name)
        );
        let label = match v {
            Some(v) if v.is_finite() => {
                let wbar = v.max(0.0) / hi * (W - left - 90.0);
                let _ = writeln!(
                    svg,
                    r#"<rect x="{left:.2}" y="{y:.2}" width="{wbar:.2}" height="{bar_h:.2}" fill="steelblue"/>"#
                );
                (format!("{v:.2} dB"), left + wbar + 6.0)
            }
            Some(v) => (format!("{v}"), left + 6.0),
            None => ("N/A".to_string(), left + 6.0),
        };
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            label.1,
            y + bar_h * 0.65,
            label.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Read a `method,params,psnr_db` table.
pub fn read_table(path: &Path) -> Result<Vec<(String, Option<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| OdpError::io(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(OdpError::Format(format!("{}: bad row {line:?}", path.display())));
        }
        let v = match cols[2] {
            "N/A" => None,
            "inf" => Some(f64::INFINITY),
            s => Some(
                s.parse()
                    .map_err(|_| OdpError::Format(format!("{}: bad value {s:?}", path.display())))?,
            ),
        };
        rows.push((cols[0].to_string(), v));
    }
    Ok(rows)
}

fn write(path: PathBuf, svg: &str) -> Result<PathBuf> {
    fs::write(&path, svg).map_err(|e| OdpError::io(&path, e))?;
    Ok(path)
}

/// Render one input file. `curves.csv`-style inputs become curve plots,
/// `method,params,psnr_db` tables become bar charts. Output goes next to
/// the input with an `.svg` extension.
pub fn plot_file(input: &Path) -> Result<PathBuf> {
    let text = fs::read_to_string(input).map_err(|e| OdpError::io(input, e))?;
    let header = text.lines().next().unwrap_or("");
    let title = input.display().to_string();
    let svg = if header.starts_with("step,") {
        render_curves_svg(&read_curves(input)?, &title)?
    } else if header.starts_with("method,") {
        render_table_svg(&read_table(input)?, &title)?
    } else {
        return Err(OdpError::Format(format!("{}: unrecognized header {header:?}", input.display())));
    };
    write(input.with_extension("svg"), &svg)
}

/// Plot every known artifact in an output directory: `curves.csv`,
/// `ablation.csv`, `compare.csv` and `<alg>/curves.csv`.
pub fn plot_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut inputs = Vec::new();
    for name in ["curves.csv", "ablation.csv", "compare.csv"] {
        let p = dir.join(name);
        if p.is_file() {
            inputs.push(p);
        }
    }
    if let Ok(entries) = fs::read_dir(dir) {
        let mut subs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path().join("curves.csv")))
            .filter(|p| p.is_file())
            .collect();
        subs.sort();
        inputs.extend(subs);
    }
    if inputs.is_empty() {
        return Err(OdpError::io(
            dir.join("curves.csv"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no curve or table CSV to plot"),
        ));
    }
    inputs.iter().map(|p| plot_file(p)).collect()
}
