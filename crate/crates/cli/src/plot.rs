//! SVG figures from the CSV artifacts.
//!
//! The output depends only on the CSV contents: fixed canvas, fixed palette,
//! no timestamps.

use std::path::{Path, PathBuf};

use ctsd::analysis::fit_loglog_slope;
use plotters::prelude::*;

use crate::error::CliError;

pub const DEMOD_COLUMNS: [&str; 4] = ["t", "z_hat", "z_hat_sd", "error"];
pub const SWEEP_COLUMNS: [&str; 3] = ["input_label", "N", "l2_error"];

const CANVAS: (u32, u32) = (900, 640);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Demod,
    Sweep,
}

impl PlotKind {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Demod => &DEMOD_COLUMNS,
            Self::Sweep => &SWEEP_COLUMNS,
        }
    }

    fn from_header(header: &[String]) -> Option<Self> {
        [Self::Demod, Self::Sweep]
            .into_iter()
            .find(|k| header.iter().map(String::as_str).eq(k.columns().iter().copied()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemodTable {
    pub t: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub z_hat_sd: Vec<f64>,
    pub error: Vec<f64>,
}

/// Series in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Plot(e.to_string())
}

fn read_rows(path: &Path, kind: Option<PlotKind>) -> Result<(PlotKind, Vec<csv::StringRecord>), CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => plot_err(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| plot_err(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let detected = PlotKind::from_header(&header);
    let kind = match (kind, detected) {
        (Some(k), Some(d)) if k == d => k,
        (None, Some(d)) => d,
        (expected, _) => {
            let wanted = match expected {
                Some(k) => k.columns().join(","),
                None => format!("{} or {}", DEMOD_COLUMNS.join(","), SWEEP_COLUMNS.join(",")),
            };
            return Err(plot_err(format!(
                "{}: schema mismatch: expected columns {wanted}, found {}",
                path.display(),
                header.join(",")
            )));
        }
    };
    let rows = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| plot_err(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(plot_err(format!("{}: no data rows", path.display())));
    }
    Ok((kind, rows))
}

fn number(record: &csv::StringRecord, col: usize, line: usize) -> Result<f64, CliError> {
    let field = record.get(col).unwrap_or("").trim();
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| plot_err(format!("row {line}: `{field}` is not a finite number")))
}

fn demod_table(rows: &[csv::StringRecord]) -> Result<DemodTable, CliError> {
    let mut table = DemodTable::default();
    for (i, r) in rows.iter().enumerate() {
        table.t.push(number(r, 0, i + 1)?);
        table.z_hat.push(number(r, 1, i + 1)?);
        table.z_hat_sd.push(number(r, 2, i + 1)?);
        table.error.push(number(r, 3, i + 1)?);
    }
    Ok(table)
}

fn sweep_table(rows: &[csv::StringRecord]) -> Result<SweepTable, CliError> {
    let mut table = SweepTable::default();
    for (i, r) in rows.iter().enumerate() {
        let label = r.get(0).unwrap_or("").to_string();
        let n = number(r, 1, i + 1)?;
        let v = number(r, 2, i + 1)?;
        match table.series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push((n, v)),
            None => table.series.push((label, vec![(n, v)])),
        }
    }
    Ok(table)
}

pub fn read_demod(path: &Path) -> Result<DemodTable, CliError> {
    demod_table(&read_rows(path, Some(PlotKind::Demod))?.1)
}

pub fn read_sweep(path: &Path) -> Result<SweepTable, CliError> {
    sweep_table(&read_rows(path, Some(PlotKind::Sweep))?.1)
}

/// Renders `csv_path` to `out_dir/<stem>.svg`, detecting the kind from the
/// header when `kind` is `None`.
pub fn plot_file(csv_path: &Path, kind: Option<PlotKind>, out_dir: &Path) -> Result<PathBuf, CliError> {
    let (kind, rows) = read_rows(csv_path, kind)?;
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "plot".into());
    let svg = match kind {
        PlotKind::Demod => demod_svg(&demod_table(&rows)?, &stem)?,
        PlotKind::Sweep => sweep_svg(&sweep_table(&rows)?, &stem)?,
    };
    let out = out_dir.join(format!("{stem}.svg"));
    std::fs::write(&out, svg).map_err(|e| CliError::io(&out, e))?;
    Ok(out)
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        let pad = lo.abs().max(1e-12) * 0.1;
        (lo - pad, hi + pad)
    }
}

fn extent<'a>(values: impl IntoIterator<Item = &'a f64>) -> (f64, f64) {
    values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Estimates on top, the error `I(t)` below.
pub fn demod_svg(table: &DemodTable, title: &str) -> Result<String, CliError> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, CANVAS).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let root = root.titled(title, ("sans-serif", 20)).map_err(plot_err)?;
        let (top, bottom) = root.split_vertically(CANVAS.1 / 2 - 10);
        let (t0, t1) = extent(&table.t);
        let t_range = if t1 > t0 { (t0, t1) } else { padded(t0, t1) };

        let (lo, hi) = extent(table.z_hat.iter().chain(&table.z_hat_sd));
        let (lo, hi) = padded(lo, hi);
        let mut chart = ChartBuilder::on(&top)
            .margin(10)
            .margin_right(30)
            .x_label_area_size(30)
            .y_label_area_size(70)
            .build_cartesian_2d(t_range.0..t_range.1, lo..hi)
            .map_err(plot_err)?;
        chart.configure_mesh().y_desc("estimate").draw().map_err(plot_err)?;
        for (values, name, color) in [
            (&table.z_hat, "z_hat", PALETTE[0]),
            (&table.z_hat_sd, "z_hat_sd", PALETTE[1]),
        ] {
            chart
                .draw_series(LineSeries::new(
                    table.t.iter().copied().zip(values.iter().copied()),
                    &color,
                ))
                .map_err(plot_err)?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;

        let (lo, hi) = padded(extent(&table.error).0, extent(&table.error).1);
        let mut chart = ChartBuilder::on(&bottom)
            .margin(10)
            .margin_right(30)
            .x_label_area_size(30)
            .y_label_area_size(70)
            .build_cartesian_2d(t_range.0..t_range.1, lo..hi)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("t")
            .y_desc("I(t)")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(
                table.t.iter().copied().zip(table.error.iter().copied()),
                &PALETTE[3],
            ))
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Slope and intercept of `log10 v = intercept + slope · log10(1/N)`.
fn line_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let fit = fit_loglog_slope(points).ok()?;
    let n = points.len() as f64;
    let mx = points.iter().map(|(x, _)| (1.0 / x).log10()).sum::<f64>() / n;
    let my = points.iter().map(|(_, y)| y.log10()).sum::<f64>() / n;
    Some((fit.slope, my - fit.slope * mx))
}

/// `‖I‖₂` against `1/N` on log-log axes, one series per input with its fitted
/// line and slope in the legend.
pub fn sweep_svg(table: &SweepTable, title: &str) -> Result<String, CliError> {
    let all: Vec<(f64, f64)> = table.series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if all.iter().any(|&(n, v)| n <= 0.0 || v <= 0.0) {
        return Err(plot_err("log-log plot needs positive N and l2_error"));
    }
    let (x_lo, x_hi) = extent(all.iter().map(|(n, _)| 1.0 / n).collect::<Vec<_>>().iter());
    let (y_lo, y_hi) = extent(all.iter().map(|(_, v)| v));
    let x_range = (x_lo / 1.5)..(x_hi * 1.5);
    let y_range = (y_lo / 2.0)..(y_hi * 2.0);

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, CANVAS).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(15)
            .margin_right(30)
            .x_label_area_size(40)
            .y_label_area_size(80)
            .build_cartesian_2d(x_range.log_scale(), y_range.log_scale())
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("1/N")
            .y_desc("‖I‖₂")
            .x_label_formatter(&|x| format!("{x:.0e}"))
            .y_label_formatter(&|y| format!("{y:.0e}"))
            .draw()
            .map_err(plot_err)?;
        for (i, (label, points)) in table.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let xy: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (1.0 / n, v)).collect();
            chart
                .draw_series(xy.iter().map(|&p| Circle::new(p, 4, color.filled())))
                .map_err(plot_err)?;
            let legend = match line_fit(points) {
                Some((slope, intercept)) => {
                    let (a, b) = extent(xy.iter().map(|(x, _)| x));
                    let line = [a, b].map(|x| (x, 10f64.powf(intercept + slope * x.log10())));
                    chart
                        .draw_series(LineSeries::new(line, color.stroke_width(2)))
                        .map_err(plot_err)?;
                    format!("{label}: slope {slope:.2}")
                }
                None => format!("{label}: no fit"),
            };
            chart
                .draw_series(LineSeries::new(xy.iter().copied(), color.mix(0.4)))
                .map_err(plot_err)?
                .label(legend)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::UpperLeft)
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_demod() -> DemodTable {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.5).collect();
        let z_hat: Vec<f64> = t.iter().map(|t| 0.04 * (t / 12.0).cos()).collect();
        let z_hat_sd: Vec<f64> = z_hat.iter().map(|z| z + 1e-4).collect();
        let error = vec![-1e-4; t.len()];
        DemodTable {
            t,
            z_hat,
            z_hat_sd,
            error,
        }
    }

    #[test]
    fn demod_svg_is_deterministic() {
        let a = demod_svg(&demo_demod(), "demod").unwrap();
        let b = demod_svg(&demo_demod(), "demod").unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("z_hat_sd"));
        assert!(a.contains("I(t)"));
    }

    #[test]
    fn sweep_legend_carries_slopes() {
        let pts = |p: f64| (0..4).map(|i| {
            let n = 25.0 * 2f64.powi(i);
            (n, n.powf(-p))
        }).collect::<Vec<_>>();
        let table = SweepTable {
            series: vec![("u1".into(), pts(2.0)), ("u3".into(), pts(1.0))],
        };
        let svg = sweep_svg(&table, "sweep").unwrap();
        assert!(svg.contains("u1: slope 2.00"), "{svg}");
        assert!(svg.contains("u3: slope 1.00"));
    }

    #[test]
    fn two_point_series_has_no_fit() {
        let table = SweepTable {
            series: vec![("x".into(), vec![(10.0, 0.1), (20.0, 0.05)])],
        };
        assert!(sweep_svg(&table, "s").unwrap().contains("x: no fit"));
    }

    #[test]
    fn header_detection() {
        let h = |cols: &[&str]| cols.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(PlotKind::from_header(&h(&DEMOD_COLUMNS)), Some(PlotKind::Demod));
        assert_eq!(PlotKind::from_header(&h(&SWEEP_COLUMNS)), Some(PlotKind::Sweep));
        assert_eq!(PlotKind::from_header(&h(&["t", "x"])), None);
    }
}
