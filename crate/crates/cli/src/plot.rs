//! SVG trend plots of an aggregated sweep table: one file per metric, one
//! line per scheme, error bars at the 95% half-widths.

use anyhow::{bail, Result};
use irsgame::game::SchemeKind;
use irsgame::sweep::{ResultRow, ResultTable};
use plotters::prelude::*;
use std::path::{Path, PathBuf};

struct Metric {
    key: &'static str,
    title: &'static str,
    y_label: &'static str,
    pick: fn(&ResultRow) -> (f64, f64),
}

fn pick_utility(row: &ResultRow) -> (f64, f64) {
    (row.mean_u, row.ci95_u)
}

fn pick_revenue(row: &ResultRow) -> (f64, f64) {
    (row.mean_v, row.ci95_v)
}

fn pick_sum_rate(row: &ResultRow) -> (f64, f64) {
    (row.mean_sum_rate, row.ci95_sum_rate)
}

const METRICS: [Metric; 3] = [
    Metric {
        key: "follower_utility",
        title: "station utility",
        y_label: "mean rate minus bill (bits)",
        pick: pick_utility,
    },
    Metric {
        key: "operator_revenue",
        title: "operator revenue",
        y_label: "mean leasing revenue",
        pick: pick_revenue,
    },
    Metric {
        key: "sum_rate",
        title: "sum rate",
        y_label: "mean sum rate (bits)",
        pick: pick_sum_rate,
    },
];

fn scheme_color(scheme: SchemeKind) -> RGBColor {
    match scheme {
        SchemeKind::Stackelberg => BLUE,
        SchemeKind::RandomPricing => RED,
        SchemeKind::DirectLink => GREEN,
    }
}

fn x_label(sweep_name: &str) -> &str {
    match sweep_name {
        "p_max_dbm" => "transmit power budget (dBm)",
        "num_modules" => "reflection modules",
        other => other,
    }
}

fn draw_err<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow::anyhow!("rendering plot: {e}")
}

/// Render one SVG per metric into `dir`; returns the written paths.
pub fn render_plots(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        bail!("nothing to plot: the sweep table is empty");
    }
    let sweep_name = table.rows[0].sweep_name.clone();
    let mut schemes = Vec::new();
    for row in &table.rows {
        if !schemes.contains(&row.scheme) {
            schemes.push(row.scheme);
        }
    }

    let mut written = Vec::with_capacity(METRICS.len());
    for metric in &METRICS {
        let svg = render_metric(table, metric, &sweep_name, &schemes)?;
        let path = dir.join(format!("{}_{}.svg", sweep_name, metric.key));
        crate::write_atomic(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// One scheme's plotted points: `(sweep value, mean, 95% half-width)`.
type Series = (SchemeKind, Vec<(f64, f64, f64)>);

fn render_metric(
    table: &ResultTable,
    metric: &Metric,
    sweep_name: &str,
    schemes: &[SchemeKind],
) -> Result<String> {
    let series: Vec<Series> = schemes
        .iter()
        .map(|&scheme| {
            let points = table
                .rows
                .iter()
                .filter(|row| row.scheme == scheme)
                .map(|row| {
                    let (mean, ci) = (metric.pick)(row);
                    (row.sweep_value, mean, ci)
                })
                .collect();
            (scheme, points)
        })
        .collect();

    let xs: Vec<f64> = table.rows.iter().map(|r| r.sweep_value).collect();
    let (x_lo, x_hi) = bounds(&xs);
    let lows: Vec<f64> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|&(_, m, c)| m - c))
        .collect();
    let highs: Vec<f64> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|&(_, m, c)| m + c))
        .collect();
    let (y_lo, _) = bounds(&lows);
    let (_, y_hi) = bounds(&highs);
    let x_pad = 0.05 * (x_hi - x_lo).max(1e-9);
    let y_pad = 0.05 * (y_hi - y_lo).max(1e-9);

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (640, 440)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(metric.title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(42)
            .y_label_area_size(60)
            .build_cartesian_2d(x_lo - x_pad..x_hi + x_pad, y_lo - y_pad..y_hi + y_pad)
            .map_err(draw_err)?;
        chart
            .configure_mesh()
            .x_desc(x_label(sweep_name))
            .y_desc(metric.y_label)
            .draw()
            .map_err(draw_err)?;
        for (scheme, points) in &series {
            let color = scheme_color(*scheme);
            chart
                .draw_series(LineSeries::new(
                    points.iter().map(|&(x, mean, _)| (x, mean)),
                    color.stroke_width(2),
                ))
                .map_err(draw_err)?
                .label(scheme.label())
                .legend(move |(x, y)| {
                    PathElement::new([(x, y), (x + 18, y)], color.stroke_width(2))
                });
            chart
                .draw_series(points.iter().map(|&(x, mean, ci)| {
                    ErrorBar::new_vertical(x, mean - ci, mean, mean + ci, color.filled(), 6)
                }))
                .map_err(draw_err)?;
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::UpperLeft)
            .border_style(BLACK)
            .background_style(WHITE.mix(0.85))
            .draw()
            .map_err(draw_err)?;
        root.present().map_err(draw_err)?;
    }
    Ok(svg)
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use irsgame::sweep::ResultTable;

    fn sample_table() -> ResultTable {
        let mut rows = Vec::new();
        for (i, value) in [-5.0, 0.0, 5.0].into_iter().enumerate() {
            for scheme in SchemeKind::ALL {
                rows.push(ResultRow {
                    sweep_name: "p_max_dbm".into(),
                    sweep_value: value,
                    scheme,
                    trials: 10,
                    mean_u: i as f64 + 1.0,
                    ci95_u: 0.1,
                    mean_v: 0.5 * i as f64,
                    ci95_v: 0.05,
                    mean_sum_rate: i as f64 + 1.2,
                    ci95_sum_rate: 0.1,
                    mean_triggered: 3.0,
                    failure_count: 0,
                });
            }
        }
        ResultTable { rows }
    }

    #[test]
    fn renders_one_svg_per_metric() {
        let dir = tempfile::tempdir().unwrap();
        let paths = render_plots(&sample_table(), dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        for path in paths {
            let text = std::fs::read_to_string(path).unwrap();
            assert!(text.trim_start().starts_with("<svg"));
            assert!(text.trim_end().ends_with("</svg>"));
        }
    }

    #[test]
    fn empty_table_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_plots(&ResultTable::default(), dir.path()).is_err());
    }
}
