//! Learning-curve SVG emission: one chart per metric with per-seed traces
//! and a mean trace, plus a comparison mode that overlays the mean trace of
//! several runs (e.g. sac vs bsac).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use super::metrics::{parse_metrics, ParsedMetrics};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 8] =
    ["#4878cf", "#ee854a", "#6acc65", "#d65f5f", "#956cb4", "#8c613c", "#dc7ec0", "#82c6e2"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub emphasized: bool,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub metric: String,
    pub svg: String,
    /// Padded y-range actually drawn.
    pub y_min: f64,
    pub y_max: f64,
    /// Number of rendered traces (polylines plus single-point markers).
    pub trace_count: usize,
}

/// Render one metric chart. The y-range spans the data min/max padded 5%.
pub fn build_chart(metric: &str, series: &[Series]) -> Result<Chart> {
    let all: Vec<(f64, f64)> =
        series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        bail!("no data points for metric {metric}");
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if x_min == x_max {
        x_min -= 1.0;
        x_max += 1.0;
    }
    let pad = if y_hi > y_lo { 0.05 * (y_hi - y_lo) } else { y_hi.abs().max(0.5) * 0.05 };
    let y_min = y_lo - pad;
    let y_max = y_hi + pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_T + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{metric}</text>\n",
        WIDTH / 2.0
    ));
    // frame
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#999\"/>\n"
    ));
    // axis extremes
    for (v, y) in [(y_max, MARGIN_T), (y_min, MARGIN_T + plot_h)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{v:.4}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0
        ));
    }
    for (v, x) in [(x_min, MARGIN_L), (x_max, MARGIN_L + plot_w)] {
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{v:.0}</text>\n",
            HEIGHT - MARGIN_B + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">env_step</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    ));

    let mut traces = 0;
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let color = if s.emphasized { "#000000" } else { PALETTE[i % PALETTE.len()] };
        let width = if s.emphasized { 2.5 } else { 1.2 };
        if s.points.len() == 1 {
            let (x, y) = s.points[0];
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        } else {
            let pts: Vec<String> =
                s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" \
                 points=\"{}\"/>\n",
                pts.join(" ")
            ));
        }
        traces += 1;
        // legend entry
        let ly = MARGIN_T + 16.0 + 16.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"{width}\"/>\n",
            MARGIN_L + plot_w - 130.0,
            MARGIN_L + plot_w - 105.0,
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            MARGIN_L + plot_w - 100.0,
            ly + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    Ok(Chart { metric: metric.to_string(), svg, y_min, y_max, trace_count: traces })
}

fn metrics_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("metrics_seed_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Columns worth charting: everything except the step index and wall clock.
fn plottable_columns(parsed: &ParsedMetrics) -> Vec<(usize, String)> {
    parsed
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.as_str() != "env_step" && c.as_str() != "wall_clock_s")
        .map(|(i, c)| (i, c.clone()))
        .collect()
}

fn column_series(parsed: &ParsedMetrics, col: usize) -> Vec<(f64, f64)> {
    parsed
        .rows
        .iter()
        .filter_map(|r| match (r[0], r[col]) {
            (Some(step), Some(v)) => Some((step, v)),
            _ => None,
        })
        .collect()
}

/// Mean across runs at env_steps where every run has a value.
fn mean_series(per_run: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    if per_run.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for &(step, first) in &per_run[0] {
        let mut total = first;
        let mut n = 1;
        let mut complete = true;
        for other in &per_run[1..] {
            match other.iter().find(|(s, _)| *s == step) {
                Some(&(_, v)) => {
                    total += v;
                    n += 1;
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            out.push((step, total / n as f64));
        }
    }
    out
}

/// Emit one SVG per metric into `<run_dir>/curves/`. If `run_dir` holds
/// metrics CSVs, charts carry per-seed traces plus a mean trace; if it only
/// holds subdirectories of runs, charts overlay each variant's mean trace
/// (the side-by-side comparison report) and a `summary.csv` is written.
pub fn emit_curves(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let direct = metrics_files(run_dir)?;
    if !direct.is_empty() {
        return emit_single_run(run_dir, &direct);
    }
    // comparison mode over subdirectories
    let mut variants: Vec<(String, Vec<PathBuf>)> = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .with_context(|| format!("reading {}", run_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().map(|n| n != "curves").unwrap_or(false))
        .collect();
    entries.sort();
    for dir in entries {
        let files = metrics_files(&dir)?;
        if !files.is_empty() {
            let label = dir.file_name().unwrap().to_string_lossy().to_string();
            variants.push((label, files));
        }
    }
    if variants.is_empty() {
        bail!("no metrics files under {}", run_dir.display());
    }
    emit_comparison(run_dir, &variants)
}

fn emit_single_run(run_dir: &Path, files: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let parsed: Vec<ParsedMetrics> =
        files.iter().map(|f| parse_metrics(f)).collect::<Result<_>>()?;
    if parsed.iter().all(|p| p.rows.is_empty()) {
        bail!("metrics files under {} contain no rows", run_dir.display());
    }
    let out_dir = run_dir.join("curves");
    std::fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();
    for (col, name) in plottable_columns(&parsed[0]) {
        let per_seed: Vec<Vec<(f64, f64)>> =
            parsed.iter().map(|p| column_series(p, col)).collect();
        let mut series: Vec<Series> = parsed
            .iter()
            .zip(&per_seed)
            .map(|(p, pts)| Series {
                label: format!("seed {}", p.seed),
                points: pts.clone(),
                emphasized: false,
            })
            .collect();
        series.push(Series { label: "mean".into(), points: mean_series(&per_seed), emphasized: true });
        let chart = build_chart(&name, &series)?;
        let path = out_dir.join(format!("{name}.svg"));
        std::fs::write(&path, &chart.svg)?;
        written.push(path);
    }
    Ok(written)
}

fn emit_comparison(run_dir: &Path, variants: &[(String, Vec<PathBuf>)]) -> Result<Vec<PathBuf>> {
    let out_dir = run_dir.join("curves");
    std::fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();

    let mut parsed_variants: Vec<(String, Vec<ParsedMetrics>)> = Vec::new();
    for (label, files) in variants {
        let parsed: Vec<ParsedMetrics> =
            files.iter().map(|f| parse_metrics(f)).collect::<Result<_>>()?;
        parsed_variants.push((label.clone(), parsed));
    }

    for (col, name) in plottable_columns(&parsed_variants[0].1[0]) {
        let mut series = Vec::new();
        for (label, parsed) in &parsed_variants {
            let per_seed: Vec<Vec<(f64, f64)>> =
                parsed.iter().map(|p| column_series(p, col)).collect();
            series.push(Series {
                label: format!("{label} mean ({} seeds)", parsed.len()),
                points: mean_series(&per_seed),
                emphasized: true,
            });
            for (p, pts) in parsed.iter().zip(&per_seed) {
                series.push(Series {
                    label: format!("{label} s{}", p.seed),
                    points: pts.clone(),
                    emphasized: false,
                });
            }
        }
        let chart = build_chart(&name, &series)?;
        let path = out_dir.join(format!("compare_{name}.svg"));
        std::fs::write(&path, &chart.svg)?;
        written.push(path);
    }

    // summary table: final and best eval return per variant
    let mut summary = String::from("variant,seeds,final_eval_return_mean,best_eval_return_mean\n");
    for (label, parsed) in &parsed_variants {
        let col = parsed[0].columns.iter().position(|c| c == "eval_return_mean").unwrap();
        let per_seed: Vec<Vec<(f64, f64)>> = parsed.iter().map(|p| column_series(p, col)).collect();
        let mean = mean_series(&per_seed);
        let final_v = mean.last().map(|&(_, v)| v).unwrap_or(f64::NAN);
        let best = mean.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
        summary.push_str(&format!("{label},{},{final_v},{best}\n", parsed.len()));
    }
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&summary_path, summary)?;
    written.push(summary_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_range_is_padded_five_percent() {
        let series = [Series {
            label: "a".into(),
            points: vec![(0.0, -2.0), (10.0, 6.0)],
            emphasized: false,
        }];
        let chart = build_chart("test_metric", &series).unwrap();
        assert!((chart.y_min - (-2.4)).abs() < 1e-12);
        assert!((chart.y_max - 6.4).abs() < 1e-12);
        assert_eq!(chart.trace_count, 1);
        assert!(chart.svg.contains("polyline"));
    }

    #[test]
    fn single_point_becomes_marker() {
        let series =
            [Series { label: "a".into(), points: vec![(5.0, 1.0)], emphasized: false }];
        let chart = build_chart("m", &series).unwrap();
        assert!(chart.svg.contains("circle"));
        assert_eq!(chart.trace_count, 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(build_chart("m", &[]).is_err());
        let dir = std::env::temp_dir().join("bsac_plot_empty");
        std::fs::create_dir_all(&dir).unwrap();
        assert!(emit_curves(&dir).is_err());
    }

    #[test]
    fn mean_series_averages_common_steps() {
        let a = vec![(100.0, 1.0), (200.0, 2.0)];
        let b = vec![(100.0, 3.0), (200.0, 4.0)];
        assert_eq!(mean_series(&[a, b]), vec![(100.0, 2.0), (200.0, 3.0)]);
    }
}
