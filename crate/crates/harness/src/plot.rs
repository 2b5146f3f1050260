//! Static SVG line charts of aggregate curves: one row per scenario, with
//! mean reward on the left and mean safe-region size on the right.

use std::fmt::Write as _;

use crate::bench::AggregateRow;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 280.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Round numbers spanning `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn panel(svg: &mut String, x0: f64, y0: f64, title: &str, series: &[Series<'_>], colors: &[&str]) {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut tmin, mut tmax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(t, v) in all {
        tmin = tmin.min(t);
        tmax = tmax.max(t);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    if !tmin.is_finite() {
        return;
    }
    if vmax - vmin < 1e-9 {
        vmin -= 0.5;
        vmax += 0.5;
    }
    if tmax - tmin < 1e-9 {
        tmax = tmin + 1.0;
    }
    let (w, h) = (PANEL_W - 1.5 * MARGIN, PANEL_H - 1.5 * MARGIN);
    let (px, py) = (x0 + MARGIN, y0 + MARGIN * 0.5);
    let sx = |t: f64| px + (t - tmin) / (tmax - tmin) * w;
    let sy = |v: f64| py + h - (v - vmin) / (vmax - vmin) * h;

    writeln!(svg, r##"<rect x="{px}" y="{py}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{title}</text>"#,
        px + w / 2.0,
        py - 8.0
    )
    .unwrap();
    for t in ticks(tmin, tmax) {
        let x = sx(t);
        writeln!(svg, r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#444"/>"##, py + h, py + h + 4.0).unwrap();
        writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            py + h + 16.0,
            fmt_tick(t)
        )
        .unwrap();
    }
    for v in ticks(vmin, vmax) {
        let y = sy(v);
        writeln!(svg, r##"<line x1="{}" y1="{y}" x2="{px}" y2="{y}" stroke="#444"/>"##, px - 4.0).unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
            px - 6.0,
            y + 3.0,
            fmt_tick(v)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">t</text>"#,
        px + w / 2.0,
        py + h + 32.0
    )
    .unwrap();
    for (i, s) in series.iter().enumerate().filter(|(_, s)| !s.points.is_empty()) {
        let pts: Vec<String> = s.points.iter().map(|&(t, v)| format!("{:.2},{:.2}", sx(t), sy(v))).collect();
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.8" points="{}"/>"#,
            colors[i % colors.len()],
            pts.join(" ")
        )
        .unwrap();
        let ly = py + 14.0 + 14.0 * i as f64;
        writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}" font-size="10">{}</text>"#,
            px + 8.0,
            px + 24.0,
            colors[i % colors.len()],
            px + 28.0,
            ly + 3.0,
            s.label
        )
        .unwrap();
    }
}

/// Renders the aggregate curves as a standalone SVG document.
pub fn render_svg(rows: &[AggregateRow]) -> String {
    let scenarios = unique(rows.iter().map(|r| r.scenario.as_str()));
    let algorithms = unique(rows.iter().map(|r| r.algorithm.as_str()));
    let height = PANEL_H * scenarios.len().max(1) as f64;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif">"#,
        2.0 * PANEL_W
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (row, scenario) in scenarios.iter().enumerate() {
        let y0 = row as f64 * PANEL_H;
        let curves = |value: fn(&AggregateRow) -> f64| -> Vec<Series<'_>> {
            algorithms
                .iter()
                .map(|&a| Series {
                    label: a,
                    points: rows
                        .iter()
                        .filter(|r| r.scenario == *scenario && r.algorithm == a)
                        .map(|r| (r.t as f64, value(r)))
                        .collect(),
                })
                .collect()
        };
        panel(&mut svg, 0.0, y0, &format!("{scenario}: mean reward"), &curves(|r| r.mean_reward), &COLORS);
        panel(&mut svg, PANEL_W, y0, &format!("{scenario}: mean safe-set size"), &curves(|r| r.mean_safe_size), &COLORS);
    }
    svg.push_str("</svg>\n");
    svg
}
