//! Dependency-free SVG polyline plots for solver traces and profiles.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One named series of (implicitly indexed) values.
pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

/// Renders a line plot of the series against their index. `timestamp`, when
/// given, is embedded as a comment (and is the only non-deterministic byte).
pub fn line_plot(title: &str, series: &[Series], timestamp: Option<&str>) -> String {
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut max_len = 1usize;
    for s in series {
        for &v in s.values {
            min_y = min_y.min(v);
            max_y = max_y.max(v);
        }
        max_len = max_len.max(s.values.len());
    }
    if !min_y.is_finite() || !max_y.is_finite() {
        min_y = 0.0;
        max_y = 1.0;
    }
    if (max_y - min_y).abs() < 1e-300 {
        max_y = min_y + 1.0;
    }

    let x_of = |i: usize| -> f64 {
        if max_len <= 1 {
            MARGIN
        } else {
            MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (max_len - 1) as f64
        }
    };
    let y_of = |v: f64| -> f64 { HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - min_y) / (max_y - min_y) };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    if let Some(ts) = timestamp {
        let _ = writeln!(out, "<!-- generated {ts} -->");
    }
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="monospace" font-size="14">{}</text>"#,
        MARGIN,
        escape(title)
    );
    // axes
    let _ = writeln!(
        out,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        out,
        r#"<line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}" font-family="monospace" font-size="11">{max_y}</text>"#,
        MARGIN + 4.0
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}" font-family="monospace" font-size="11">{min_y}</text>"#,
        HEIGHT - MARGIN
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut points = String::new();
        for (i, &v) in s.values.iter().enumerate() {
            let _ = write!(points, "{:.2},{:.2} ", x_of(i), y_of(v));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="11" fill="{color}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * k as f64,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
