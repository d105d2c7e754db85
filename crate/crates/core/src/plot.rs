//! Static SVG output for the experiment reports.

use std::fmt::Write as _;

use crate::env::{CellKind, GridWorld, GridWorldSpec};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

pub const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub markers: bool,
    /// Highlights the last point with a star.
    pub mark_end: bool,
}

impl Series {
    pub fn line(label: &str, points: Vec<(f64, f64)>, color: &str) -> Self {
        Self {
            label: label.to_string(),
            points,
            color: color.to_string(),
            markers: false,
            mark_end: false,
        }
    }
}

/// Straight guide y = slope·x + intercept, optionally shading everything above.
#[derive(Debug, Clone)]
pub struct Guide {
    pub label: String,
    pub slope: f64,
    pub intercept: f64,
    pub color: String,
    pub fill_above: bool,
}

#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub guides: Vec<Guide>,
    /// Extra labelled points (x, y, label).
    pub annotations: Vec<(f64, f64, String)>,
    pub equal_aspect: bool,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac < 1.5 {
        1.0
    } else if frac < 3.5 {
        2.0
    } else if frac < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    format!("{:.*}", digits, v)
}

impl LinePlot {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .chain(self.annotations.iter().map(|(x, y, _)| (*x, *y)))
            .filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |lo: f64, hi: f64| {
            let span = hi - lo;
            let p = if span > 0.0 { 0.05 * span } else { 0.5 * lo.abs().max(1.0) };
            (lo - p, hi + p)
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        if self.equal_aspect {
            let (lo, hi) = (x0.min(y0), x1.max(y1));
            return (lo, hi, lo, hi);
        }
        (x0, x1, y0, y1)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * ph;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<defs><clipPath id="plot"><rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}"/></clipPath></defs>"#
        );
        for g in &self.guides {
            let (ya, yb) = (g.slope * x0 + g.intercept, g.slope * x1 + g.intercept);
            if g.fill_above {
                let _ = writeln!(
                    out,
                    r#"<polygon clip-path="url(#plot)" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{}" fill-opacity="0.12"/>"#,
                    sx(x0), sy(ya), sx(x1), sy(yb), sx(x1), sy(y1.max(yb)), sx(x0), sy(y1.max(ya)), g.color
                );
            }
            let _ = writeln!(
                out,
                r#"<line clip-path="url(#plot)" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-dasharray="6,4"/>"#,
                sx(x0), sy(ya), sx(x1), sy(yb), g.color
            );
        }
        // axes and ticks
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let xs = nice_step(x1 - x0);
        let mut t = (x0 / xs).ceil() * xs;
        while t <= x1 + 1e-12 {
            let _ = writeln!(
                out,
                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle">{4}</text>"#,
                sx(t), MARGIN_TOP + ph, MARGIN_TOP + ph + 5.0, MARGIN_TOP + ph + 18.0, fmt_tick(t, xs)
            );
            t += xs;
        }
        let ys = nice_step(y1 - y0);
        let mut t = (y0 / ys).ceil() * ys;
        while t <= y1 + 1e-12 {
            let _ = writeln!(
                out,
                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5}</text>"#,
                MARGIN_LEFT - 5.0, sy(t), MARGIN_LEFT, MARGIN_LEFT - 8.0, sy(t) + 4.0, fmt_tick(t, ys)
            );
            t += ys;
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="15">{}</text>"#,
            MARGIN_LEFT + pw / 2.0, MARGIN_TOP - 14.0, esc(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0, HEIGHT - 12.0, esc(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate(18,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + ph / 2.0, esc(&self.y_label)
        );
        for s in &self.series {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline clip-path="url(#plot)" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                pts.join(" "),
                s.color
            );
            if s.markers {
                for (x, y) in &s.points {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
                        sx(*x), sy(*y), s.color
                    );
                }
            }
            if let (true, Some(&(x, y))) = (s.mark_end, s.points.last()) {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="18" fill="{}">★</text>"#,
                    sx(x), sy(y) + 6.0, s.color
                );
            }
        }
        for (x, y, label) in &self.annotations {
            let _ = writeln!(
                out,
                r#"<circle cx="{0:.2}" cy="{1:.2}" r="4" fill="none" stroke="black"/><text x="{2:.2}" y="{1:.2}">{3}</text>"#,
                sx(*x), sy(*y), sx(*x) + 7.0, esc(label)
            );
        }
        // legend
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let entries = self
            .series
            .iter()
            .map(|s| (s.label.as_str(), s.color.as_str(), false))
            .chain(self.guides.iter().map(|g| (g.label.as_str(), g.color.as_str(), true)));
        for (i, (label, color, dashed)) in entries.enumerate() {
            let y = MARGIN_TOP + 12.0 + 18.0 * i as f64;
            let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 22.0, lx + 28.0, y + 4.0, esc(label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Grid map with per-pair reward deltas drawn next to each action arrow.
/// Positive deltas are red, negative blue; |δ| ≤ `tol` is left unlabelled.
pub fn grid_delta_map(
    title: &str,
    spec: &GridWorldSpec,
    world: &GridWorld,
    deltas: &[Vec<f64>],
    paths: &[(&str, &str, Vec<usize>)],
    tol: f64,
) -> String {
    let cell = 90.0;
    let top = 40.0;
    let left = 20.0;
    let (w, h) = (world.width(), world.height());
    let width = left * 2.0 + cell * w as f64 + 120.0;
    let height = top + cell * h as f64 + 20.0;
    let cx = |x: usize| left + cell * (x as f64 + 0.5);
    let cy = |y: usize| top + cell * ((h - 1 - y) as f64 + 0.5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        left + cell * w as f64 / 2.0,
        esc(title)
    );
    for y in 0..h {
        for x in 0..w {
            let kind = spec.cell(x, y);
            let fill = match kind {
                CellKind::Wall => "#222222",
                CellKind::Gray => "#b0b0b0",
                _ => "#ffffff",
            };
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="#666"/>"##,
                cx(x) - cell / 2.0,
                cy(y) - cell / 2.0
            );
            let tag = match kind {
                CellKind::Start => Some("S".to_string()),
                CellKind::Terminal(c) => Some(c.to_string()),
                _ => None,
            };
            if let Some(tag) = tag {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="18" font-weight="bold">{tag}</text>"#,
                    cx(x),
                    cy(y) + 6.0
                );
            }
        }
    }
    // arrows per (state, action): up, down, left, right
    let dirs: [(f64, f64); 4] = [(0.0, -1.0), (0.0, 1.0), (-1.0, 0.0), (1.0, 0.0)];
    for (s, &(x, y)) in world.cells.iter().enumerate() {
        if world.is_terminal(s) {
            continue;
        }
        for (a, (dx, dy)) in dirs.iter().enumerate() {
            let (x0, y0) = (cx(x) + dx * 12.0, cy(y) + dy * 12.0);
            let (x1, y1) = (cx(x) + dx * 28.0, cy(y) + dy * 28.0);
            let _ = writeln!(
                out,
                r##"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x1:.1}" y2="{y1:.1}" stroke="#f5a623" stroke-width="2"/>"##
            );
            let d = deltas.get(s).and_then(|row| row.get(a)).copied().unwrap_or(0.0);
            if d.abs() > tol {
                let color = if d > 0.0 { "#d62728" } else { "#1f4fd6" };
                let (tx, ty) = (cx(x) + dx * 34.0, cy(y) + dy * 34.0 + 4.0);
                let anchor = match a {
                    2 => "end",
                    3 => "start",
                    _ => "middle",
                };
                let _ = writeln!(
                    out,
                    r#"<text x="{tx:.1}" y="{ty:.1}" text-anchor="{anchor}" fill="{color}">{d:+.3}</text>"#
                );
            }
        }
    }
    for (i, (label, color, path)) in paths.iter().enumerate() {
        let off = 4.0 * i as f64 - 2.0;
        let pts: Vec<String> = path
            .iter()
            .map(|&s| {
                let (x, y) = world.cells[s];
                format!("{:.1},{:.1}", cx(x) + off, cy(y) + off)
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="4" stroke-opacity="0.5"/>"#,
            pts.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + cell * w as f64 + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="4" stroke-opacity="0.5"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            esc(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
