//! Loss-curve and metrics reports: CSV tables and an SVG plot.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curriculum::LossTrace;
use crate::error::{Error, Result};
use crate::eval::{combined, EvalReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumTraces {
    pub curriculum: String,
    pub traces: Vec<LossTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub curriculum: String,
    pub model_size: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Svg,
}

pub const TRACES_FILE: &str = "loss_traces.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PLOT_FILE: &str = "val_loss.svg";

pub fn traces_csv(runs: &[CurriculumTraces]) -> String {
    let mut out = String::from("curriculum,stage,step,train_loss,val_loss\n");
    for run in runs {
        for t in &run.traces {
            for p in &t.points {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    run.curriculum, t.stage, p.step, p.train_loss, p.val_loss
                );
            }
        }
    }
    out
}

/// One row per (curriculum, model size); COMBINED is recomputed from the
/// three metrics.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("curriculum,model_size,bleu,inform,success,combined\n");
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            out,
            "{},{},{:.1},{:.1},{:.1},{:.1}",
            r.curriculum,
            r.model_size,
            m.bleu,
            m.inform,
            m.success,
            combined(m.bleu, m.inform, m.success)
        );
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Validation loss of each curriculum's final stage, overlaid.
pub fn loss_svg(runs: &[CurriculumTraces]) -> Result<String> {
    let series: Vec<(&str, &LossTrace)> = runs
        .iter()
        .filter_map(|r| r.traces.last().map(|t| (r.curriculum.as_str(), t)))
        .filter(|(_, t)| !t.points.is_empty())
        .collect();
    if series.is_empty() {
        return Err(Error::validation("no loss points to plot"));
    }
    let points = series.iter().flat_map(|(_, t)| &t.points);
    let max_step = points.clone().map(|p| p.step).max().unwrap_or(0).max(1) as f64;
    let finite = points.map(|p| p.val_loss).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (lo.min(0.0), lo.max(0.0) + 1.0)
    };
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 160.0, 30.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let x = |s: usize| left + pw * s as f64 / max_step;
    let y = |v: f64| top + ph * (1.0 - (v - lo) / (hi - lo));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" font-size="14" text-anchor="middle" font-family="sans-serif">Validation loss</text>"#,
        left + pw / 2.0
    );
    let _ = writeln!(
        svg,
        r##"<path d="M{left} {top} V{} H{}" fill="none" stroke="#333"/>"##,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * f64::from(i) / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end" font-family="sans-serif">{v:.2}</text>"#,
            left - 6.0,
            y(v) + 3.0
        );
        let s = (max_step * f64::from(i) / 4.0).round() as usize;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" font-size="10" text-anchor="middle" font-family="sans-serif">{s}</text>"#,
            x(s),
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">step</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    for (i, (name, trace)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = trace
            .points
            .iter()
            .filter(|p| p.val_loss.is_finite())
            .map(|p| format!("{:.1},{:.1}", x(p.step), y(p.val_loss)))
            .collect();
        let name = escape(name);
        let _ = writeln!(svg, r#"<g class="series" data-curriculum="{name}">"#);
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 16.0 * i as f64 + 8.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            left + pw + 12.0,
            left + pw + 32.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif">{name}</text>"#,
            left + pw + 38.0,
            ly + 4.0
        );
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes the requested report files into `out_dir` and returns their paths.
pub fn emit_report(
    out_dir: &Path,
    runs: &[CurriculumTraces],
    metrics: &[MetricsRow],
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    if runs.iter().all(|r| r.traces.iter().all(|t| t.points.is_empty())) && metrics.is_empty() {
        return Err(Error::validation("nothing to report: no traces and no metrics"));
    }
    if formats.is_empty() {
        return Err(Error::validation("no report format requested"));
    }
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = out_dir.join(name);
        crate::io::write_atomic(&path, body.as_bytes())?;
        written.push(path);
        Ok(())
    };
    if formats.contains(&ReportFormat::Csv) {
        if !runs.is_empty() {
            put(TRACES_FILE, traces_csv(runs))?;
        }
        if !metrics.is_empty() {
            put(METRICS_FILE, metrics_csv(metrics))?;
        }
    }
    if formats.contains(&ReportFormat::Svg) && !runs.is_empty() {
        put(PLOT_FILE, loss_svg(runs)?)?;
    }
    Ok(written)
}
