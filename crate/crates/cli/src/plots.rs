//! SVG line charts from sweep.csv: one file per metric, one series per
//! policy, vertical bars for the 95% interval.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use arsched::Policy;
use thiserror::Error;

use crate::experiment::SWEEP_HEADER;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sweep.csv row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("sweep.csv has no data rows")]
    Empty,
}

const COLORS: [&str; 7] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
/// Gap between the frame and the first and last axis positions.
const INSET: f64 = 30.0;

#[derive(Clone, Copy, Debug)]
struct Point {
    mean: f64,
    ci95: Option<f64>,
}

/// metric -> policy -> axis label -> point
type Series = BTreeMap<String, BTreeMap<Policy, BTreeMap<usize, Point>>>;

struct Parsed {
    axes: Vec<String>,
    series: Series,
}

fn parse(text: &str) -> Result<Parsed, PlotError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| PlotError::Malformed { row: 1, message: e.to_string() })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != SWEEP_HEADER {
        return Err(PlotError::Malformed {
            row: 1,
            message: format!("expected header `{SWEEP_HEADER}`, found `{header}`"),
        });
    }

    let mut axes: Vec<String> = Vec::new();
    let mut series = Series::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let bad = |message: String| PlotError::Malformed { row, message };
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", record.len())));
        }
        let axis = record[0].to_string();
        let policy: Policy = record[1].parse().map_err(|e| bad(format!("{e}")))?;
        let metric = record[2].to_string();
        if metric != "acceptance_rate" && metric != "avg_slowdown" {
            return Err(bad(format!("unknown metric `{metric}`")));
        }
        let number = |s: &str, what: &str| -> Result<Option<f64>, PlotError> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| bad(format!("{what} `{s}` is not a number")))
        };
        let mean = number(&record[3], "mean")?;
        let ci95 = number(&record[4], "ci95")?;
        let idx = match axes.iter().position(|a| *a == axis) {
            Some(idx) => idx,
            None => {
                axes.push(axis);
                axes.len() - 1
            }
        };
        if let Some(mean) = mean {
            series
                .entry(metric)
                .or_default()
                .entry(policy)
                .or_default()
                .insert(idx, Point { mean, ci95 });
        }
    }
    if axes.is_empty() {
        return Err(PlotError::Empty);
    }
    Ok(Parsed { axes, series })
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn render(metric: &str, axes: &[String], series: &BTreeMap<Policy, BTreeMap<usize, Point>>, x_label: &str) -> String {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in series.values().flat_map(|s| s.values()) {
        let h = p.ci95.unwrap_or(0.0);
        lo = lo.min(p.mean - h);
        hi = hi.max(p.mean + h);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.05;
    lo -= pad;
    hi += pad;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |i: usize| {
        if axes.len() == 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + INSET + (plot_w - 2.0 * INSET) * i as f64 / (axes.len() - 1) as f64
        }
    };
    let y = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);
    let title = match metric {
        "acceptance_rate" => "Acceptance rate",
        _ => "Average slowdown",
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, LEFT + plot_w / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            yy + 4.0,
            fmt_tick(v)
        );
    }
    for (i, label) in axes.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            x(i),
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );

    // Legend follows the canonical policy order, not the file order.
    let mut legend_row = 0;
    for policy in Policy::ALL {
        let Some(points) = series.get(&policy) else { continue };
        let color = COLORS[policy.rank()];
        let _ = writeln!(s, r#"<g class="series" data-policy="{policy}">"#);
        let path: Vec<String> = points.iter().map(|(&i, p)| format!("{:.1},{:.1}", x(i), y(p.mean))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for (&i, p) in points {
            let (px, py) = (x(i), y(p.mean));
            if let Some(h) = p.ci95 {
                let (y0, y1) = (y(p.mean - h), y(p.mean + h));
                let _ = writeln!(
                    s,
                    r#"<path d="M{px:.1},{y0:.1}V{y1:.1}M{:.1},{y0:.1}h8M{:.1},{y1:.1}h8" stroke="{color}"/>"#,
                    px - 4.0,
                    px - 4.0
                );
            }
            let _ = writeln!(s, r#"<circle cx="{px:.1}" cy="{py:.1}" r="3" fill="{color}"/>"#);
        }
        let _ = writeln!(s, "</g>");

        let ly = TOP + 10.0 + 20.0 * legend_row as f64;
        let lx = LEFT + plot_w + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{policy}</text>"#, lx + 26.0, ly + 4.0);
        legend_row += 1;
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders every metric in a sweep.csv text. Returns `(file name, svg)`
/// pairs in metric order.
pub fn render_sweep(text: &str, x_label: Option<&str>) -> Result<Vec<(String, String)>, PlotError> {
    let parsed = parse(text)?;
    let label = x_label.unwrap_or("sweep value");
    Ok(["acceptance_rate", "avg_slowdown"]
        .into_iter()
        .map(|metric| {
            let empty = BTreeMap::new();
            let series = parsed.series.get(metric).unwrap_or(&empty);
            (format!("{metric}.svg"), render(metric, &parsed.axes, series, label))
        })
        .collect())
}

pub fn render_sweep_csv(path: &Path, x_label: Option<&str>) -> Result<Vec<(String, String)>, PlotError> {
    let text = fs::read_to_string(path).map_err(|source| PlotError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    render_sweep(&text, x_label)
}

/// Reads `sweep_csv` and writes one SVG per metric into `output_dir`.
/// Nothing is written if the CSV is rejected.
pub fn emit_plots(sweep_csv: &Path, output_dir: &Path, x_label: Option<&str>) -> Result<Vec<PathBuf>, PlotError> {
    let rendered = render_sweep_csv(sweep_csv, x_label)?;
    let mut written = Vec::new();
    for (name, svg) in rendered {
        let path = output_dir.join(name);
        if let Err(source) = fs::write(&path, svg) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(PlotError::Io { path, source });
        }
        written.push(path);
    }
    Ok(written)
}
