//! Minimal SVG line charts: the model summary over rounds and the mixture
//! weights over rounds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Result};
use crate::harness::metrics::{write_text, RoundReport};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 130.0;
const MARGIN_Y: f64 = 30.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One named polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Renders `series` as a standalone SVG document.
pub fn line_chart(title: &str, y_label: &str, series: &[Series]) -> String {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.1 };
        y0 -= pad;
        y1 += pad;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_Y + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for (v, y) in [(y1, sy(y1)), (y0, sy(y0))] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 4.0,
            y + 4.0,
            short(v)
        );
    }
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN_Y + 14.0,
            short(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="11" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        MARGIN_Y + plot_h / 2.0,
        MARGIN_Y + plot_h / 2.0,
        escape(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(&s.name),
            pts.join(" ")
        );
        let ly = MARGIN_Y + 12.0 + 16.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 22.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn short(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes `{prefix}_model.svg` (model summary vs round) and
/// `{prefix}_lambda.svg` (one line per mixture weight). Returns both paths.
pub fn emit_plots(reports: &[RoundReport], summary_names: &[String], prefix: &Path) -> Result<[PathBuf; 2]> {
    let first = reports
        .first()
        .ok_or_else(|| invalid("cannot plot an empty run"))?;
    let series = |names: Vec<String>, pick: &dyn Fn(&RoundReport) -> &[f64]| -> Vec<Series> {
        names
            .into_iter()
            .enumerate()
            .map(|(i, name)| Series {
                name,
                points: reports.iter().map(|r| (r.round as f64, pick(r)[i])).collect(),
            })
            .collect()
    };
    let model_names = if summary_names.len() == first.model_summary.len() {
        summary_names.to_vec()
    } else {
        (0..first.model_summary.len()).map(|i| format!("summary_{i}")).collect()
    };
    let model = series(model_names, &|r| &r.model_summary);
    let lambda = series(
        (0..first.lambda.len()).map(|i| format!("lambda_{i}")).collect(),
        &|r| &r.lambda,
    );

    let stem = prefix.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let model_path = prefix.with_file_name(format!("{stem}_model.svg"));
    let lambda_path = prefix.with_file_name(format!("{stem}_lambda.svg"));
    write_text(&model_path, &line_chart("Model over rounds", "value", &model))?;
    write_text(&lambda_path, &line_chart("Domain weights over rounds", "lambda", &lambda))?;
    Ok([model_path, lambda_path])
}
