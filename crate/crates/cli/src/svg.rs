//! Static SVG line charts: bias, MSE and coverage against `ρˣ`, one
//! column of panels per reliability.

use std::collections::BTreeMap;
use std::fmt::Write;

use confound_core::engine::CellSummary;

const PANEL_W: f64 = 280.0;
const PANEL_H: f64 = 190.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 58.0;
const LEGEND_W: f64 = 230.0;

const PALETTE: [&str; 10] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
    "#1f78b4", "#b2182b",
];

#[derive(Clone, Copy)]
enum Metric {
    Bias,
    Mse,
    Coverage,
}

impl Metric {
    const ALL: [Metric; 3] = [Metric::Bias, Metric::Mse, Metric::Coverage];

    fn label(self) -> &'static str {
        match self {
            Metric::Bias => "Bias",
            Metric::Mse => "MSE",
            Metric::Coverage => "Coverage",
        }
    }

    fn value(self, row: &CellSummary) -> Option<f64> {
        let m = row.metrics?;
        Some(match self {
            Metric::Bias => m.bias,
            Metric::Mse => m.mse,
            Metric::Coverage => m.coverage,
        })
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Integer key that groups reliabilities equal to 3 decimals.
fn rel_key(r: f64) -> i64 {
    (r * 1000.0).round() as i64
}

fn series_label(row: &CellSummary, many_rho_w: bool) -> String {
    let kind = match row.estimator.as_str() {
        "IPTW_WREG" => "IPTW",
        "DR_WREG" => "DR",
        "IPTW_HAJEK" => "IPTW-Hájek",
        _ => "AIPW",
    };
    let reflected = if row.scenario_id.ends_with("_reflected") {
        " reflected"
    } else {
        ""
    };
    if many_rho_w {
        format!("{kind}({}) ρʷ={}{reflected}", row.covariate_set, row.rho_w)
    } else {
        format!("{kind}({}){reflected}", row.covariate_set)
    }
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 4.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-12 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

/// Renders `rows` as a grid of panels: rows are metrics, columns are
/// reliabilities (ascending), lines are estimator × covariate set.
pub fn summary_chart(rows: &[CellSummary]) -> String {
    let mut rels: Vec<i64> = rows.iter().map(|r| rel_key(r.reliability)).collect();
    rels.sort_unstable();
    rels.dedup();
    let mut rho_w: Vec<i64> = rows.iter().map(|r| rel_key(r.rho_w)).collect();
    rho_w.sort_unstable();
    rho_w.dedup();
    let many_rho_w = rho_w.len() > 1;

    let mut labels: Vec<String> = Vec::new();
    for r in rows {
        let l = series_label(r, many_rho_w);
        if !labels.contains(&l) {
            labels.push(l);
        }
    }

    let cols = rels.len().max(1);
    let width = MARGIN_L + cols as f64 * (PANEL_W + GAP) + LEGEND_W;
    let height = MARGIN_T + Metric::ALL.len() as f64 * (PANEL_H + GAP) + 10.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let x_vals: Vec<f64> = rows.iter().map(|r| r.rho_x).collect();
    let (x_lo, x_hi) = nice_range(
        x_vals.iter().copied().fold(f64::INFINITY, f64::min),
        x_vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );

    for (mi, metric) in Metric::ALL.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().filter_map(|r| metric.value(r)).collect();
        let (mut y_lo, mut y_hi) = nice_range(
            vals.iter().copied().fold(f64::INFINITY, f64::min),
            vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        if let Metric::Coverage = metric {
            y_lo = y_lo.min(0.0);
            y_hi = y_hi.max(1.0);
        }
        for (ci, rel) in rels.iter().enumerate() {
            let x0 = MARGIN_L + ci as f64 * (PANEL_W + GAP);
            let y0 = MARGIN_T + mi as f64 * (PANEL_H + GAP);
            let sx = |x: f64| x0 + (x - x_lo) / (x_hi - x_lo) * PANEL_W;
            let sy = |y: f64| y0 + PANEL_H - (y - y_lo) / (y_hi - y_lo) * PANEL_H;

            let _ = writeln!(
                svg,
                r##"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle" font-weight="bold">{} (reliability {})</text>"#,
                x0 + PANEL_W / 2.0,
                y0 - 8.0,
                metric.label(),
                *rel as f64 / 1000.0
            );
            for t in ticks(y_lo, y_hi) {
                let y = sy(t);
                let _ = writeln!(
                    svg,
                    r##"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
                    x0 + PANEL_W,
                    x0 - 4.0,
                    y + 4.0,
                    tick_label(t)
                );
            }
            for t in ticks(x_lo, x_hi) {
                let x = sx(t);
                let _ = writeln!(
                    svg,
                    r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
                    y0 + PANEL_H + 14.0,
                    tick_label(t)
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">ρˣ</text>"#,
                x0 + PANEL_W / 2.0,
                y0 + PANEL_H + 28.0
            );
            if let Metric::Coverage = metric {
                let y = sy(0.95);
                let _ = writeln!(
                    svg,
                    r##"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#999" stroke-dasharray="4 3"/>"##,
                    x0 + PANEL_W
                );
            }

            let mut series: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
            for r in rows.iter().filter(|r| rel_key(r.reliability) == *rel) {
                if let Some(v) = metric.value(r) {
                    let idx = labels
                        .iter()
                        .position(|l| *l == series_label(r, many_rho_w))
                        .expect("label collected");
                    series.entry(idx).or_default().push((r.rho_x, v));
                }
            }
            for (idx, mut pts) in series {
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let color = PALETTE[idx % PALETTE.len()];
                let path: Vec<String> = pts
                    .iter()
                    .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
                    path.join(" ")
                );
                for (x, y) in &pts {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                        sx(*x),
                        sy(*y)
                    );
                }
            }
        }
    }

    let lx = MARGIN_L + cols as f64 * (PANEL_W + GAP);
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN_T + 10.0 + i as f64 * 16.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            y + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
