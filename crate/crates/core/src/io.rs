//! Byte-stable serialization of traces, heatmaps, metrics, and Q-tables.
//!
//! Floats are printed with 9 significant digits ('%.9g' style: plain decimal
//! in a sane range, scientific outside it, trailing zeros trimmed), '.' as
//! the decimal separator, and '\n' line endings. Every writer is a pure
//! function of its input, so identical values produce identical bytes.

use crate::agent::{Action, QTable};
use crate::config::SimConfig;
use crate::engine::{EpisodeMetrics, EpisodeTrace, TrainingReport};
use crate::error::SimError;
use crate::field::{HeatmapGrid, Plane};
use serde::Serialize;
use std::fs;
use std::path::Path;

pub const TRACE_HEADER: &str =
    "step,robot_id,x,y,z,concentration,distance_to_cell,action,reward,cumulative_reward";

/// Format a float with 9 significant digits.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_decimal(format!("{v:.decimals$}"))
    } else {
        let s = format!("{v:.8e}");
        match s.split_once('e') {
            Some((mantissa, exponent)) => {
                format!("{}e{}", trim_decimal(mantissa.to_string()), exponent)
            }
            None => s,
        }
    }
}

fn trim_decimal(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), SimError> {
    fs::write(path, contents).map_err(|e| SimError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, SimError> {
    fs::read_to_string(path).map_err(|e| SimError::io(path, e))
}

/// Render a trace as CSV (header plus one row per step record).
pub fn trace_to_csv(trace: &EpisodeTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.step,
            r.robot_id,
            format_sig9(r.position.x),
            format_sig9(r.position.y),
            format_sig9(r.position.z),
            format_sig9(r.concentration),
            format_sig9(r.distance_to_cell),
            r.action.name(),
            format_sig9(r.reward),
            format_sig9(r.cumulative_reward),
        ));
    }
    out
}

pub fn write_trace(trace: &EpisodeTrace, path: &Path) -> Result<(), SimError> {
    write_file(path, &trace_to_csv(trace))
}

/// One parsed trace row; exactly the CSV columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: u32,
    pub robot_id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub concentration: f64,
    pub distance_to_cell: f64,
    pub action: Action,
    pub reward: f64,
    pub cumulative_reward: f64,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, SimError> {
    let text = read_file(path)?;
    let bad = |line: usize, reason: String| SimError::FileFormat {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRACE_HEADER => {}
        _ => return Err(bad(1, "missing or wrong trace header".to_string())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(bad(idx + 1, format!("expected 10 fields, got {}", fields.len())));
        }
        let f = |i: usize| -> Result<f64, SimError> {
            fields[i].parse().map_err(|e| bad(idx + 1, format!("field {i}: {e}")))
        };
        let action = match fields[7] {
            "toward_biomarker" => Action::TowardBiomarker,
            "toward_cell" => Action::TowardCell,
            "avoid_obstacle" => Action::AvoidObstacle,
            other => return Err(bad(idx + 1, format!("unknown action '{other}'"))),
        };
        rows.push(TraceRow {
            step: fields[0].parse().map_err(|e| bad(idx + 1, format!("step: {e}")))?,
            robot_id: fields[1].parse().map_err(|e| bad(idx + 1, format!("robot_id: {e}")))?,
            x: f(2)?,
            y: f(3)?,
            z: f(4)?,
            concentration: f(5)?,
            distance_to_cell: f(6)?,
            action,
            reward: f(8)?,
            cumulative_reward: f(9)?,
        });
    }
    Ok(rows)
}

/// Render a heatmap: a `# plane=<P> slice=<c> res=<n>` header line, then
/// `res` rows of `res` comma-separated values, row 0 at the lowest
/// first-axis coordinate.
pub fn heatmap_to_csv(grid: &HeatmapGrid) -> String {
    let mut out = format!(
        "# plane={} slice={} res={}\n",
        grid.plane.name(),
        format_sig9(grid.slice_coord),
        grid.resolution
    );
    for row in &grid.values {
        let line: Vec<String> = row.iter().map(|&v| format_sig9(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_heatmap(grid: &HeatmapGrid, path: &Path) -> Result<(), SimError> {
    write_file(path, &heatmap_to_csv(grid))
}

pub fn read_heatmap(path: &Path) -> Result<HeatmapGrid, SimError> {
    let text = read_file(path)?;
    let bad = |line: usize, reason: String| SimError::FileFormat {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".to_string()))?;
    let header = header
        .strip_prefix("# ")
        .ok_or_else(|| bad(1, "missing '# ' header prefix".to_string()))?;
    let mut plane = None;
    let mut slice_coord = None;
    let mut resolution = None;
    for part in header.split_whitespace() {
        match part.split_once('=') {
            Some(("plane", p)) => plane = Plane::parse(p),
            Some(("slice", s)) => slice_coord = s.parse::<f64>().ok(),
            Some(("res", r)) => resolution = r.parse::<usize>().ok(),
            _ => return Err(bad(1, format!("unexpected header token '{part}'"))),
        }
    }
    let plane = plane.ok_or_else(|| bad(1, "missing plane".to_string()))?;
    let slice_coord = slice_coord.ok_or_else(|| bad(1, "missing slice".to_string()))?;
    let resolution = resolution.ok_or_else(|| bad(1, "missing res".to_string()))?;

    let mut values = Vec::with_capacity(resolution);
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        values.push(row.map_err(|e| bad(idx + 1, e.to_string()))?);
    }
    if values.len() != resolution || values.iter().any(|r| r.len() != resolution) {
        return Err(bad(1, format!("grid is not {resolution}x{resolution}")));
    }
    Ok(HeatmapGrid { plane, slice_coord, resolution, values })
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    config: &'a SimConfig,
    seed: u64,
    #[serde(flatten)]
    metrics: &'a EpisodeMetrics,
}

/// Single-episode metrics JSON with the effective-config echo and master seed.
pub fn metrics_to_json(metrics: &EpisodeMetrics, config: &SimConfig) -> String {
    let doc = MetricsDoc { config, seed: config.seed, metrics };
    serde_json::to_string_pretty(&doc).expect("metrics serialization cannot fail")
}

pub fn write_metrics(
    metrics: &EpisodeMetrics,
    config: &SimConfig,
    path: &Path,
) -> Result<(), SimError> {
    write_file(path, &metrics_to_json(metrics, config))
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    config: &'a SimConfig,
    seed: u64,
    qtable_mode: &'static str,
    episodes: Vec<EpisodeMetrics>,
    epsilon: &'a [f64],
    steps_to_capture: &'a [u32],
}

/// Training-report JSON: config echo, seed, table mode, per-episode metrics
/// array, epsilon trajectory, and steps-to-capture series.
///
/// Per-episode wall-clock readings are zeroed in the file so a fixed seed
/// yields byte-identical output; total wall time is reported on the CLI
/// summary line instead.
pub fn report_to_json(report: &TrainingReport, config: &SimConfig) -> String {
    let episodes = report
        .episode_metrics
        .iter()
        .map(|m| EpisodeMetrics { wall_clock_seconds: 0.0, ..m.clone() })
        .collect();
    let doc = ReportDoc {
        config,
        seed: config.seed,
        qtable_mode: if report.shared_qtable { "shared" } else { "private" },
        episodes,
        epsilon: &report.epsilon,
        steps_to_capture: &report.steps_to_capture,
    };
    serde_json::to_string_pretty(&doc).expect("report serialization cannot fail")
}

pub fn write_report(
    report: &TrainingReport,
    config: &SimConfig,
    path: &Path,
) -> Result<(), SimError> {
    write_file(path, &report_to_json(report, config))
}

pub fn write_qtable(table: &QTable, path: &Path) -> Result<(), SimError> {
    write_file(path, &table.to_text())
}

pub fn read_qtable(path: &Path) -> Result<QTable, SimError> {
    let text = read_file(path)?;
    QTable::from_text(&text).map_err(|(line, reason)| SimError::FileFormat {
        path: path.to_path_buf(),
        line,
        reason,
    })
}

pub fn write_config(config: &SimConfig, path: &Path) -> Result<(), SimError> {
    write_file(path, &crate::config::emit_config(config))
}
