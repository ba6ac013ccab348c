//! Self-contained SVG output: gridworld snapshots and line charts.
//!
//! Snapshot cells are shaded linearly from `#f7fbff` at value 0 to `#08306b`
//! at value 1, clamped outside that range. Walls are grey and the terminal
//! cell is outlined in red.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_len, Result};
use crate::grid::{Action, Cell, GridSpec};
use crate::io::create_file;
use crate::mdp::{argmax, PolicyTable};

use super::AggregateCurve;

const CELL: f64 = 90.0;
const LOW: (f64, f64, f64) = (247.0, 251.0, 255.0);
const HIGH: (f64, f64, f64) = (8.0, 48.0, 107.0);

/// Fill colour for a state value.
pub fn value_color(v: f64) -> String {
    let t = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(LOW.0, HIGH.0),
        mix(LOW.1, HIGH.1),
        mix(LOW.2, HIGH.2)
    )
}

/// Grid render: value colour per cell, action probabilities at the four
/// edges and an arrow toward the most likely action.
pub fn snapshot_svg(spec: &GridSpec, values: &[f64], policy: &PolicyTable, title: &str) -> Result<String> {
    let n = spec.n_states();
    check_len("snapshot values", n, values.len())?;
    check_len("snapshot policy", n, policy.n_states())?;
    let width = spec.cols() as f64 * CELL;
    let height = spec.rows() as f64 * CELL + 30.0;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(svg, r#"<text x="4" y="20" font-size="14">{}</text>"#, escape(title)).unwrap();
    for r in 0..spec.rows() {
        for c in 0..spec.cols() {
            let x = c as f64 * CELL;
            let y = r as f64 * CELL + 30.0;
            if spec.cell(r, c) == Cell::Wall {
                writeln!(svg, r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#808080" stroke="#404040"/>"##).unwrap();
            }
        }
    }
    let terminal = spec.terminal_state();
    for s in 0..n {
        let (r, c) = spec.state_position(s);
        let x = c as f64 * CELL;
        let y = r as f64 * CELL + 30.0;
        let fill = value_color(values[s]);
        let stroke = if s == terminal { "#d62728" } else { "#404040" };
        writeln!(
            svg,
            r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="{stroke}" stroke-width="2" data-state="{s}"/>"#
        )
        .unwrap();
        let text_color = if values[s].is_finite() && values[s] > 0.55 { "#ffffff" } else { "#000000" };
        let cx = x + CELL / 2.0;
        let cy = y + CELL / 2.0;
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="10" fill="{text_color}">{s}</text>"#,
            x + 4.0,
            y + 12.0
        )
        .unwrap();
        if s == terminal {
            writeln!(svg, r#"<text x="{cx}" y="{}" font-size="20" text-anchor="middle" fill="{text_color}">G</text>"#, cy + 7.0).unwrap();
            continue;
        }
        let row = policy.row(s);
        for a in Action::ALL {
            let (tx, ty) = match a {
                Action::Up => (cx, y + 24.0),
                Action::Down => (cx, y + CELL - 8.0),
                Action::Left => (x + 18.0, cy + 4.0),
                Action::Right => (x + CELL - 18.0, cy + 4.0),
            };
            writeln!(
                svg,
                r#"<text x="{tx}" y="{ty}" font-size="11" text-anchor="middle" fill="{text_color}" class="prob" data-action="{}">{:.2}</text>"#,
                a.name(),
                row[a.index()]
            )
            .unwrap();
        }
        let best = Action::from_index(argmax(row)).expect("valid action index");
        let (dr, dc) = best.delta();
        let len = CELL * 0.18;
        let (ex, ey) = (cx + dc as f64 * len, cy + dr as f64 * len);
        writeln!(
            svg,
            r#"<line x1="{cx}" y1="{cy}" x2="{ex}" y2="{ey}" stroke="{text_color}" stroke-width="3" class="arrow" data-state="{s}" data-action="{}"/>"#,
            best.index()
        )
        .unwrap();
        writeln!(svg, r#"<circle cx="{ex}" cy="{ey}" r="4" fill="{text_color}"/>"#).unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_snapshot(
    spec: &GridSpec,
    values: &[f64],
    policy: &PolicyTable,
    title: &str,
    path: &Path,
) -> Result<()> {
    let svg = snapshot_svg(spec, values, policy, title)?;
    let mut f = create_file(path)?;
    std::io::Write::write_all(&mut f, svg.as_bytes())?;
    Ok(())
}

const PALETTE: [&str; 7] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];

/// Mean curves with shaded confidence bands, one series per label.
pub fn line_chart_svg(title: &str, y_label: &str, series: &[(String, &AggregateCurve)]) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let len = series.iter().map(|(_, c)| c.mean.len()).max().unwrap_or(0).max(2);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, c) in series {
        for (m, hw) in c.mean.iter().zip(&c.half_width) {
            if m.is_finite() {
                lo = lo.min(m - hw.max(0.0));
                hi = hi.max(m + hw.max(0.0));
            }
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let sx = |i: usize| left + pw * i as f64 / (len - 1) as f64;
    let sy = |v: f64| top + ph * (1.0 - (v - lo) / (hi - lo));
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#).unwrap();
    writeln!(svg, r#"<text x="{left}" y="24" font-size="15">{}</text>"#, escape(title)).unwrap();
    writeln!(svg, r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>"##).unwrap();
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = sy(v);
        writeln!(svg, r##"<text x="{}" y="{}" font-size="11" text-anchor="end">{v:.3}</text>"##, left - 6.0, y + 4.0).unwrap();
        writeln!(svg, r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, left + pw).unwrap();
    }
    for k in 0..=4 {
        let i = (len - 1) * k / 4;
        writeln!(svg, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{i}</text>"#, sx(i), top + ph + 16.0).unwrap();
    }
    writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">iteration</text>"#, left + pw / 2.0, h - 10.0).unwrap();
    writeln!(
        svg,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (k, (label, curve)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(usize, f64, f64)> = curve
            .mean
            .iter()
            .zip(&curve.half_width)
            .enumerate()
            .filter(|(_, (m, _))| m.is_finite())
            .map(|(i, (m, hw))| (i, *m, *hw))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let mut band = String::new();
        for (i, m, hw) in &pts {
            write!(band, "{:.2},{:.2} ", sx(*i), sy(m + hw)).unwrap();
        }
        for (i, m, hw) in pts.iter().rev() {
            write!(band, "{:.2},{:.2} ", sx(*i), sy(m - hw)).unwrap();
        }
        writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end()).unwrap();
        let line: Vec<String> = pts.iter().map(|(i, m, _)| format!("{:.2},{:.2}", sx(*i), sy(*m))).collect();
        writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" ")).unwrap();
        let ly = top + 16.0 * k as f64 + 10.0;
        writeln!(svg, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, left + pw + 10.0, left + pw + 30.0).unwrap();
        writeln!(svg, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, left + pw + 36.0, ly + 4.0, escape(label)).unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
