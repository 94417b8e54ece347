//! Small SVG line charts, stacked vertically.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 36.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
    /// Dashed horizontal reference lines.
    pub references: Vec<(f64, String)>,
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        draw_panel(&mut svg, panel, k as f64 * PANEL_HEIGHT);
    }
    svg.push_str("</svg>\n");
    svg
}

fn draw_panel(svg: &mut String, panel: &Panel, top: f64) {
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (top + PANEL_HEIGHT - MARGIN_BOTTOM, top + MARGIN_TOP);
    let (xmin, xmax) = bounds(panel.series.iter().flat_map(|s| s.xs.iter().copied()));
    let (ymin, ymax) = bounds(
        panel
            .series
            .iter()
            .flat_map(|s| s.ys.iter().copied())
            .chain(panel.references.iter().map(|r| r.0)),
    );
    let px = |x: f64| x0 + (x - xmin) / (xmax - xmin) * (x1 - x0);
    let py = |y: f64| y0 - (y - ymin) / (ymax - ymin) * (y0 - y1);

    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" font-weight="bold">{}</text>"#,
        x0,
        top + 18.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        x1 - x0,
        y0 - y1
    );
    for (lo, hi, vertical) in [(xmin, xmax, true), (ymin, ymax, false)] {
        let step = nice_step(hi - lo);
        let mut v = (lo / step).ceil() * step;
        while v <= hi {
            if vertical {
                let _ = writeln!(
                    svg,
                    r##"<line x1="{0:.2}" y1="{y0}" x2="{0:.2}" y2="{1}" stroke="#444"/><text x="{0:.2}" y="{2}" text-anchor="middle">{3}</text>"##,
                    px(v),
                    y0 + 4.0,
                    y0 + 16.0,
                    label(v)
                );
            } else {
                let _ = writeln!(
                    svg,
                    r##"<line x1="{0}" y1="{1:.2}" x2="{x0}" y2="{1:.2}" stroke="#444"/><text x="{2}" y="{3:.2}" text-anchor="end">{4}</text>"##,
                    x0 - 4.0,
                    py(v),
                    x0 - 6.0,
                    py(v) + 4.0,
                    label(v)
                );
            }
            v += step;
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        0.5 * (x0 + x1),
        y0 + 30.0,
        escape(&panel.x_label)
    );
    for (value, name) in &panel.references {
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{0:.2}" x2="{x1}" y2="{0:.2}" stroke="#888" stroke-dasharray="5,4"/><text x="{1}" y="{2:.2}" fill="#666">{3}</text>"##,
            py(*value),
            x1 + 6.0,
            py(*value) + 4.0,
            escape(name)
        );
    }
    for (k, s) in panel.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut points = String::new();
        for (x, y) in s.xs.iter().zip(&s.ys) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", px(*x), py(*y));
            }
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.trim_end()
        );
        let ly = y1 + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
            x1 + 6.0,
            x1 + 24.0,
            x1 + 28.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
}
