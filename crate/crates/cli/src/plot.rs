//! Hand-rolled SVG line charts for sweep results: one panel per r1 group,
//! a polyline per series with a translucent ±std band. Output is a pure
//! function of the result, so reruns are byte-identical.

use std::fmt::Write;

use runest::harness::{SweepPoint, SweepResult};

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const WIDTH: f64 = 760.0;
const PANEL_H: f64 = 330.0;
const PLOT_LEFT: f64 = 64.0;
const PLOT_RIGHT: f64 = 736.0;
const PLOT_TOP: f64 = 56.0; // relative to panel origin
const PLOT_BOTTOM: f64 = 276.0;

pub fn render(result: &SweepResult) -> String {
    let panels = group_by_r1(&result.points);
    let height = PANEL_H * panels.len() as f64 + 8.0;
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{WIDTH}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    );
    for (i, (r1, points)) in panels.iter().enumerate() {
        panel(&mut svg, result, *r1, points, PANEL_H * i as f64);
    }
    svg.push_str("</svg>\n");
    svg
}

fn group_by_r1(points: &[SweepPoint]) -> Vec<(Option<f64>, Vec<&SweepPoint>)> {
    let mut panels: Vec<(Option<f64>, Vec<&SweepPoint>)> = Vec::new();
    for p in points {
        match panels.last_mut() {
            Some((r1, group)) if *r1 == p.r1 => group.push(p),
            _ => panels.push((p.r1, vec![p])),
        }
    }
    panels
}

fn panel(svg: &mut String, result: &SweepResult, r1: Option<f64>, points: &[&SweepPoint], y0: f64) {
    let (x_lo, x_hi) = pad_range(
        points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
        points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
    );
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for p in points {
        for &(mean, std) in &p.stats {
            y_lo = y_lo.min(mean - std);
            y_hi = y_hi.max(mean + std);
        }
    }
    let (y_lo, y_hi) = pad_range(y_lo, y_hi);
    let sx = |x: f64| PLOT_LEFT + (x - x_lo) / (x_hi - x_lo) * (PLOT_RIGHT - PLOT_LEFT);
    let sy = |y: f64| y0 + PLOT_BOTTOM - (y - y_lo) / (y_hi - y_lo) * (PLOT_BOTTOM - PLOT_TOP);

    // Title and legend.
    let title = match r1 {
        Some(r1) => format!("{} sweep, r1 = {}", result.meta.source, fmt_num(r1)),
        None => format!("{} sweep", result.meta.source),
    };
    let _ = writeln!(
        svg,
        "<text x=\"{PLOT_LEFT}\" y=\"{:.2}\" font-size=\"14\" fill=\"#222222\">{}</text>",
        y0 + 22.0,
        escape(&title)
    );
    let mut legend_x = PLOT_LEFT;
    for (s, name) in result.series.iter().enumerate() {
        let color = COLORS[s % COLORS.len()];
        let ly = y0 + 38.0;
        let _ = write!(
            svg,
            "<line x1=\"{legend_x:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" fill=\"#222222\">{name}</text>\n",
            legend_x + 18.0,
            legend_x + 23.0,
            ly + 4.0
        );
        legend_x += 34.0 + 7.2 * name.len() as f64;
    }

    // Axes, ticks, labels.
    let _ = write!(
        svg,
        "<line x1=\"{PLOT_LEFT}\" y1=\"{:.2}\" x2=\"{PLOT_RIGHT}\" y2=\"{:.2}\" stroke=\"#444444\"/>\n\
         <line x1=\"{PLOT_LEFT}\" y1=\"{:.2}\" x2=\"{PLOT_LEFT}\" y2=\"{:.2}\" stroke=\"#444444\"/>\n",
        y0 + PLOT_BOTTOM,
        y0 + PLOT_BOTTOM,
        y0 + PLOT_TOP,
        y0 + PLOT_BOTTOM
    );
    for i in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let (px, py) = (sx(fx), sy(fy));
        let _ = write!(
            svg,
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#444444\"/>\n\
             <text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#222222\">{}</text>\n",
            y0 + PLOT_BOTTOM,
            y0 + PLOT_BOTTOM + 5.0,
            y0 + PLOT_BOTTOM + 18.0,
            fmt_num(fx)
        );
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{PLOT_LEFT}\" y2=\"{py:.2}\" stroke=\"#444444\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#222222\">{}</text>\n",
            PLOT_LEFT - 5.0,
            PLOT_LEFT - 8.0,
            py + 4.0,
            fmt_num(fy)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#222222\">{}</text>",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        y0 + PLOT_BOTTOM + 38.0,
        result.axis.x_column()
    );

    // Bands beneath lines, then lines, series by series.
    for (s, _) in result.series.iter().enumerate() {
        let color = COLORS[s % COLORS.len()];
        let mut band = String::new();
        for p in points {
            let (mean, std) = p.stats[s];
            let _ = write!(band, "{:.2},{:.2} ", sx(p.x), sy(mean + std));
        }
        for p in points.iter().rev() {
            let (mean, std) = p.stats[s];
            let _ = write!(band, "{:.2},{:.2} ", sx(p.x), sy(mean - std));
        }
        let _ = writeln!(
            svg,
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>",
            band.trim_end()
        );
    }
    for (s, _) in result.series.iter().enumerate() {
        let color = COLORS[s % COLORS.len()];
        let mut line = String::new();
        for p in points {
            let _ = write!(line, "{:.2},{:.2} ", sx(p.x), sy(p.stats[s].0));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            line.trim_end()
        );
    }
}

fn pad_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span <= 0.0 {
        let pad = lo.abs().max(1.0) * 0.1;
        return (lo - pad, hi + pad);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.abs() >= 10_000.0 || v.abs() < 0.001 {
        return format!("{v:.2e}");
    }
    let mut s = format!("{v:.3}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
