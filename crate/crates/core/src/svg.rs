//! Minimal standalone SVG rendering for evaluation reports: metric boxplots
//! and trajectory overlays. Output is a complete `<svg>` document with no
//! external references, so the files open in any browser.

use crate::eval::Stats;
use crate::kalman::Trajectory;
use std::fmt::Write;

/// One labeled distribution in a boxplot.
#[derive(Debug, Clone)]
pub struct BoxplotSeries {
    pub label: String,
    pub stats: Stats,
}

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Renders whisker-and-box summaries side by side: whiskers at p5/p95, box
/// at p25/p75, a heavy line at the median. The value axis is shared and
/// padded so every whisker stays inside the frame.
pub fn render_boxplot(title: &str, unit: &str, series: &[BoxplotSeries]) -> String {
    let width = 640.0;
    let height = 400.0;
    let margin_left = 70.0;
    let margin_right = 20.0;
    let margin_top = 50.0;
    let margin_bottom = 60.0;
    let plot_w = width - margin_left - margin_right;
    let plot_h = height - margin_top - margin_bottom;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        lo = lo.min(s.stats.p5);
        hi = hi.max(s.stats.p95);
    }
    if series.is_empty() {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = ((hi - lo) * 0.08).max(1e-9);
    lo -= pad;
    hi += pad;
    let y_of = |v: f64| margin_top + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = write!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="28" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape_xml(title)
    );

    // Frame plus four horizontal gridlines with value labels.
    let _ = write!(
        svg,
        r##"<rect x="{margin_left}" y="{margin_top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * f64::from(k) / 4.0;
        let y = y_of(v);
        let _ = write!(
            svg,
            r##"<line x1="{margin_left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            margin_left + plot_w
        );
        let _ = write!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.2}</text>"#,
            margin_left - 6.0,
            y + 4.0
        );
    }
    let _ = write!(
        svg,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        margin_top + plot_h / 2.0,
        margin_top + plot_h / 2.0,
        escape_xml(unit)
    );

    let n = series.len().max(1) as f64;
    let slot = plot_w / n;
    let box_w = (slot * 0.4).min(60.0);
    for (i, s) in series.iter().enumerate() {
        let cx = margin_left + slot * (i as f64 + 0.5);
        let color = PALETTE[i % PALETTE.len()];
        let (w_lo, q1, med, q3, w_hi) = (
            y_of(s.stats.p5),
            y_of(s.stats.p25),
            y_of(s.stats.median),
            y_of(s.stats.p75),
            y_of(s.stats.p95),
        );
        let _ = write!(
            svg,
            r#"<line x1="{cx:.2}" y1="{w_lo:.2}" x2="{cx:.2}" y2="{w_hi:.2}" stroke="{color}"/>"#
        );
        for wy in [w_lo, w_hi] {
            let _ = write!(
                svg,
                r#"<line x1="{:.2}" y1="{wy:.2}" x2="{:.2}" y2="{wy:.2}" stroke="{color}"/>"#,
                cx - box_w / 4.0,
                cx + box_w / 4.0
            );
        }
        let _ = write!(
            svg,
            r#"<rect x="{:.2}" y="{q3:.2}" width="{box_w:.2}" height="{:.2}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>"#,
            cx - box_w / 2.0,
            (q1 - q3).max(0.0)
        );
        let _ = write!(
            svg,
            r#"<line x1="{:.2}" y1="{med:.2}" x2="{:.2}" y2="{med:.2}" stroke="{color}" stroke-width="2"/>"#,
            cx - box_w / 2.0,
            cx + box_w / 2.0
        );
        let _ = write!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            margin_top + plot_h + 20.0,
            escape_xml(&s.label)
        );
        let _ = write!(
            svg,
            r##"<text x="{cx:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle" fill="#555">mean {:.2}</text>"##,
            margin_top + plot_h + 36.0,
            s.stats.mean
        );
    }
    svg.push_str("</svg>");
    svg
}

/// Renders ground truth (dashed black, point markers) against any number of
/// predicted trajectories in sensor pixel coordinates, y growing downward
/// as on the sensor.
pub fn render_overlay(title: &str, ground_truth: &Trajectory, runs: &[(String, Trajectory)]) -> String {
    let width = 640.0;
    let height = 480.0;
    let margin = 40.0;
    let legend_row = 16.0;

    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut scan = |t: &Trajectory| {
        for p in t.points() {
            min_x = min_x.min(p.cx);
            max_x = max_x.max(p.cx);
            min_y = min_y.min(p.cy);
            max_y = max_y.max(p.cy);
        }
    };
    scan(ground_truth);
    for (_, t) in runs {
        scan(t);
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let scale = ((width - 2.0 * margin) / span_x).min((height - 2.0 * margin) / span_y);
    let px = |x: f64| margin + (x - min_x) * scale;
    let py = |y: f64| margin + (y - min_y) * scale;

    let polyline = |t: &Trajectory| {
        let mut pts = String::new();
        for p in t.points() {
            let _ = write!(pts, "{:.2},{:.2} ", px(p.cx), py(p.cy));
        }
        pts.trim_end().to_string()
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = write!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape_xml(title)
    );
    let _ = write!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="black" stroke-dasharray="6 4" stroke-width="1.5"/>"#,
        polyline(ground_truth)
    );
    for p in ground_truth.points() {
        let _ = write!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="black"/>"#,
            px(p.cx),
            py(p.cy)
        );
    }
    for (i, (_, t)) in runs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            polyline(t)
        );
    }

    let mut ly = 40.0;
    let _ = write!(
        svg,
        r#"<text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="12">ground truth (dashed)</text>"#,
        width - 220.0
    );
    for (i, (label, _)) in runs.iter().enumerate() {
        ly += legend_row;
        let color = PALETTE[i % PALETTE.len()];
        let _ = write!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            width - 238.0,
            ly - 9.0,
            width - 220.0,
            escape_xml(label)
        );
    }
    svg.push_str("</svg>");
    svg
}
