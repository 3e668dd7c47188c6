//! Minimal self-contained SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Multi-series line chart. Non-finite points are skipped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, W, H, title);
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
    axes(&mut out, pw, ph, (x0, x1), (y0, y1), x_label, y_label);
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                path.join(" ")
            );
        }
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT - 150.0,
            W - RIGHT - 130.0,
            W - RIGHT - 125.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn axes(out: &mut String, pw: f64, ph: f64, xr: (f64, f64), yr: (f64, f64), x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}" stroke="black"/>"#,
        b = TOP + ph,
        r = LEFT + pw
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xr.0 + f * (xr.1 - xr.0);
        let yv = yr.0 + f * (yr.1 - yr.0);
        let px = LEFT + f * pw;
        let py = TOP + ph - f * ph;
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>
<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            TOP + ph + 16.0,
            tick(xv),
            LEFT - 6.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>
<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        LEFT + pw / 2.0,
        H - 10.0,
        escape(x_label),
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Horizontal bar chart with optional error whiskers, bars in given order.
pub fn bar_chart(title: &str, value_label: &str, bars: &[(String, f64, Option<f64>)]) -> String {
    let row = 18.0;
    let height = TOP + BOTTOM + row * bars.len().max(1) as f64;
    let label_w = 130.0;
    let mut out = String::new();
    header(&mut out, W, height, title);
    let lo = bars.iter().map(|b| b.1 - b.2.unwrap_or(0.0)).fold(0.0_f64, f64::min);
    let hi = bars.iter().map(|b| b.1 + b.2.unwrap_or(0.0)).fold(0.0_f64, f64::max);
    let (lo, hi) = if hi - lo < 1e-12 { (lo, lo + 1.0) } else { (lo, hi) };
    let pw = W - label_w - RIGHT;
    let sx = |v: f64| label_w + (v - lo) / (hi - lo) * pw;
    let zero = sx(0.0);
    for (i, (name, value, err)) in bars.iter().enumerate() {
        let y = TOP + row * i as f64;
        let (a, b) = if *value >= 0.0 { (zero, sx(*value)) } else { (sx(*value), zero) };
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>
<rect x="{a:.2}" y="{:.1}" width="{:.2}" height="{:.1}" fill="{}"/>"#,
            label_w - 6.0,
            y + row * 0.7,
            escape(name),
            y + 2.0,
            (b - a).max(0.0),
            row - 4.0,
            PALETTE[0]
        );
        if let Some(e) = err {
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.1}" x2="{:.2}" y2="{:.1}" stroke="black"/>"#,
                sx(value - e),
                y + row / 2.0,
                sx(value + e),
                y + row / 2.0
            );
        }
    }
    let base = TOP + row * bars.len() as f64;
    let _ = writeln!(
        out,
        r#"<line x1="{zero:.2}" y1="{TOP}" x2="{zero:.2}" y2="{base:.1}" stroke="black"/>
<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>
<text x="{:.1}" y="{:.1}" text-anchor="start">{}</text>
<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
        label_w + pw / 2.0,
        base + 36.0,
        escape(value_label),
        label_w,
        base + 16.0,
        tick(lo),
        W - RIGHT,
        base + 16.0,
        tick(hi)
    );
    out.push_str("</svg>\n");
    out
}

/// Grid of shaded cells, values expected in [0, 1].
pub fn matrix_chart(title: &str, rows: &[&str], cols: &[&str], cells: &[Vec<Option<f64>>]) -> String {
    let cell = 110.0;
    let x0 = 150.0;
    let y0 = 80.0;
    let width = x0 + cell * cols.len() as f64 + 40.0;
    let height = y0 + cell * rows.len() as f64 + 40.0;
    let mut out = String::new();
    header(&mut out, width, height, title);
    for (j, c) in cols.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + cell * (j as f64 + 0.5),
            y0 - 10.0,
            escape(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = y0 + cell * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 10.0,
            y + cell / 2.0,
            escape(r)
        );
        for (j, v) in cells[i].iter().enumerate() {
            let x = x0 + cell * j as f64;
            let (fill, label) = match v {
                Some(v) => {
                    let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
                    (format!("rgb({shade},{shade},255)"), format!("{v:.3}"))
                }
                None => ("rgb(230,230,230)".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="black"/>
<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
