//! Self-contained SVG plots: task-wise metric curves and known-vs-novel
//! score histograms. No plotting dependency; output bytes are a pure
//! function of the input series.

use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    TaskwiseCurve,
    Histogram,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

fn bounds(series: &[Series], kind: PlotKind) -> (f64, f64, f64, f64) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if kind == PlotKind::Histogram {
        y_min = 0.0;
        // Bars need room for the last bin's width.
        if series.iter().map(|s| s.points.len()).max().unwrap_or(0) > 1 {
            let s = &series[0];
            let bin = s.points[1].0 - s.points[0].0;
            x_max += bin;
        }
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    (x_min, x_max, y_min, y_max)
}

/// Renders the SVG document as a string.
pub fn render_plot(
    series: &[Series],
    kind: PlotKind,
    title: &str,
    x_label: &str,
    y_label: &str,
) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        bail!("plot needs at least one non-empty series");
    }
    let (x_min, x_max, y_min, y_max) = bounds(series, kind);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_TOP + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )?;
    writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>")?;
    writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        title
    )?;

    // Axes.
    writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        MARGIN_LEFT,
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    )?;
    writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        MARGIN_LEFT,
        MARGIN_TOP,
        MARGIN_LEFT,
        MARGIN_TOP + plot_h
    )?;

    // Ticks and grid.
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>",
            MARGIN_LEFT,
            sy(fy),
            MARGIN_LEFT + plot_w,
            sy(fy)
        )?;
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>",
            MARGIN_LEFT - 6.0,
            sy(fy) + 4.0,
            fy
        )?;
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.2}</text>",
            sx(fx),
            MARGIN_TOP + plot_h + 16.0,
            fx
        )?;
    }
    writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        x_label
    )?;
    writeln!(
        svg,
        "<text x=\"16\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        y_label
    )?;

    // Data.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match kind {
            PlotKind::TaskwiseCurve => {
                let mut pts = String::new();
                for &(x, y) in &s.points {
                    write!(pts, "{:.2},{:.2} ", sx(x), sy(y))?;
                }
                writeln!(
                    svg,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                    pts.trim_end()
                )?;
                for &(x, y) in &s.points {
                    writeln!(
                        svg,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                        sx(x),
                        sy(y)
                    )?;
                }
            }
            PlotKind::Histogram => {
                let bin = if s.points.len() > 1 {
                    s.points[1].0 - s.points[0].0
                } else {
                    1.0
                };
                for &(x, y) in &s.points {
                    if y <= 0.0 {
                        continue;
                    }
                    let x0 = sx(x);
                    let x1 = sx(x + bin);
                    let y0 = sy(y);
                    writeln!(
                        svg,
                        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.45\"/>",
                        x0,
                        y0,
                        x1 - x0,
                        sy(0.0) - y0
                    )?;
                }
            }
        }
        // Legend entry.
        let ly = MARGIN_TOP + 14.0 * i as f64;
        writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            MARGIN_LEFT + plot_w - 150.0,
            ly
        )?;
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            MARGIN_LEFT + plot_w - 136.0,
            ly + 9.0,
            s.label
        )?;
    }
    writeln!(svg, "</svg>")?;
    Ok(svg)
}

/// Writes the rendered plot to `path`.
pub fn emit_plot(
    series: &[Series],
    kind: PlotKind,
    title: &str,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<()> {
    let svg = render_plot(series, kind, title, x_label, y_label)?;
    std::fs::write(path, svg).with_context(|| format!("writing plot {}", path.display()))?;
    Ok(())
}

/// Bins two score sets over shared equal-width bins, yielding a "known" and
/// a "novel" histogram series.
pub fn bin_scores(known: &[f64], novel: &[f64], bins: usize) -> Vec<Series> {
    let lo = known
        .iter()
        .chain(novel)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = known
        .iter()
        .chain(novel)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(1e-12);
    let histogram = |scores: &[f64], label: &str| -> Series {
        let mut counts = vec![0.0; bins];
        for &s in scores {
            let idx = (((s - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1.0;
        }
        Series {
            label: label.to_string(),
            points: counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (lo + i as f64 * width, c))
                .collect(),
        }
    };
    vec![histogram(known, "known"), histogram(novel, "novel")]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_series_has_one_polyline() {
        let svg = render_plot(
            &[Series {
                label: "auc".into(),
                points: vec![(1.0, 0.8), (2.0, 0.9)],
            }],
            PlotKind::TaskwiseCurve,
            "t",
            "task",
            "auc",
        )
        .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("</svg>"));
    }

    #[test]
    fn histogram_overlays_two_series_with_shared_bins() {
        let known = vec![1.0, 1.1, 2.4, 2.5, 2.6];
        let novel = vec![0.2, 0.3, 0.4, 1.2];
        let series = bin_scores(&known, &novel, 10);
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].points.len(), 10);
        assert_eq!(series[0].points[0].0, series[1].points[0].0);
        let total_known: f64 = series[0].points.iter().map(|p| p.1).sum();
        assert_eq!(total_known, known.len() as f64);
        let svg = render_plot(&series, PlotKind::Histogram, "scores", "s", "count").unwrap();
        assert!(svg.matches("<rect").count() > 3);
    }

    #[test]
    fn rendering_is_byte_deterministic() {
        let series = [Series {
            label: "x".into(),
            points: vec![(0.0, 0.5), (1.0, 0.25), (2.0, 0.75)],
        }];
        let a = render_plot(&series, PlotKind::TaskwiseCurve, "t", "x", "y").unwrap();
        let b = render_plot(&series, PlotKind::TaskwiseCurve, "t", "x", "y").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_series_rejected() {
        assert!(render_plot(&[], PlotKind::TaskwiseCurve, "t", "x", "y").is_err());
    }
}
