//! Minimal self-contained SVG charts.

use std::fmt::Write;

use super::experiment::Aggregate;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Final population histogram, one row of counts per context.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramData {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        let (y_min, y_max) = if y_max > y_min { (y_min, y_max) } else { (y_min - 1.0, y_max + 1.0) };
        let pad = 0.05 * (y_max - y_min);
        let x_max = if x_max > x_min { x_max } else { x_min + 1.0 };
        Self { x_min, x_max, y_min: y_min - pad, y_max: y_max + pad }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let y = f.y_min + (f.y_max - f.y_min) * i as f64 / 4.0;
        let py = f.py(y);
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, tick(y));
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        (y0 + y1) / 2.0
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean best-so-far curves with a shaded one-standard-error band.
pub fn render_convergence_svg(series: &[(String, Aggregate)]) -> String {
    let len = series.iter().map(|(_, a)| a.mean.len()).max().unwrap_or(1);
    let lo =
        series.iter().flat_map(|(_, a)| a.mean.iter().zip(&a.stderr).map(|(m, s)| m - s)).fold(f64::INFINITY, f64::min);
    let hi = series
        .iter()
        .flat_map(|(_, a)| a.mean.iter().zip(&a.stderr).map(|(m, s)| m + s))
        .fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame::new(1.0, len as f64, lo, hi);

    let mut out = String::new();
    header(&mut out);
    axes(&mut out, &frame, "iteration", "best reward");
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{:.1}" text-anchor="end">{len}</text>"#,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM + 16.0
    );
    for (k, (name, agg)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let upper = agg.mean.iter().zip(&agg.stderr).enumerate().map(|(i, (m, s))| (i, m + s));
        let lower = agg.mean.iter().zip(&agg.stderr).enumerate().rev().map(|(i, (m, s))| (i, m - s));
        let band: Vec<String> =
            upper.chain(lower).map(|(i, y)| format!("{:.1},{:.1}", frame.px(i as f64 + 1.0), frame.py(y))).collect();
        let _ =
            writeln!(out, r#"<polygon points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = agg
            .mean
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{:.1},{:.1}", frame.px(i as f64 + 1.0), frame.py(*m)))
            .collect();
        let _ =
            writeln!(out, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, line.join(" "));
        let ly = MARGIN_TOP + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(out, r#"<rect x="{lx}" y="{}" width="14" height="4" fill="{colour}"/>"#, ly - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 20.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}

/// Stacked bars of agents per action, one colour per context.
pub fn render_histogram_svg(data: &HistogramData, title: &str) -> String {
    let na = data.labels.len().max(1);
    let totals: Vec<usize> =
        (0..na).map(|a| data.counts.iter().map(|row| row.get(a).copied().unwrap_or(0)).sum()).collect();
    let max = totals.iter().copied().max().unwrap_or(1).max(1) as f64;
    let frame = Frame { x_min: 0.0, x_max: na as f64, y_min: 0.0, y_max: max * 1.05 };

    let mut out = String::new();
    header(&mut out);
    axes(&mut out, &frame, "action", "agents");
    let _ = writeln!(out, r#"<text x="{MARGIN_LEFT}" y="18">{}</text>"#, escape(title));
    let bar_w = (frame.px(1.0) - frame.px(0.0)) * 0.8;
    for a in 0..na {
        let mut base = 0usize;
        for (c, row) in data.counts.iter().enumerate() {
            let n = row.get(a).copied().unwrap_or(0);
            if n == 0 {
                continue;
            }
            let (y_top, y_bottom) = (frame.py((base + n) as f64), frame.py(base as f64));
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{y_top:.1}" width="{bar_w:.1}" height="{:.1}" fill="{}"><title>{}: {n}</title></rect>"#,
                frame.px(a as f64) + 0.1 * bar_w,
                y_bottom - y_top,
                PALETTE[c % PALETTE.len()],
                escape(&data.labels[a])
            );
            base += n;
        }
    }
    if data.counts.len() > 1 {
        for c in 0..data.counts.len() {
            let ly = MARGIN_TOP + 18.0 * c as f64;
            let lx = WIDTH - MARGIN_RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/>"#,
                ly - 9.0,
                PALETTE[c % PALETTE.len()]
            );
            let _ = writeln!(out, r#"<text x="{}" y="{ly}">context {c}</text>"#, lx + 16.0);
        }
    }
    out.push_str("</svg>\n");
    out
}
