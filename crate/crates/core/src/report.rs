//! CSV, JSON and SVG output for sweep results.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::sweep::{desired_behavior_flags, BehaviorReport, FairnessCurve, SweepResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("curve {metric}/{scope} has {found} defined points, need at least 2 to plot")]
    TooFewPoints { metric: String, scope: String, found: usize },
    #[error("nothing to report")]
    Empty,
}

pub const CSV_HEADER: &str = "metric,scope,tau,series,value,n_retained";

/// Rounds to 12 significant digits and prints the shortest decimal that
/// reads back as the rounded value.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("float formatting parses");
    format!("{rounded}")
}

fn cell(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub metric: String,
    pub scope: String,
    pub tau: f64,
    pub series: String,
    pub value: Option<f64>,
    pub n_retained: usize,
}

fn curve_rows(c: &FairnessCurve) -> Vec<CsvRow> {
    let mut rows = Vec::with_capacity(4 * c.taus.len());
    for (i, &tau) in c.taus.iter().enumerate() {
        let (n0, n1) = (c.n_retained_d0[i], c.n_retained_d1[i]);
        for (series, value, n) in [
            ("D0", c.em_d0[i].value, n0),
            ("D1", c.em_d1[i].value, n1),
            ("FG", c.fg[i], n0 + n1),
            ("all", c.em_all[i].value, n0 + n1),
        ] {
            rows.push(CsvRow {
                metric: c.id.name.as_str().to_string(),
                scope: c.scope_label.clone(),
                tau,
                series: series.to_string(),
                value,
                n_retained: n,
            });
        }
    }
    rows
}

/// Rows sorted by metric, scope, descending threshold, then series.
pub fn curves_csv(curves: &[FairnessCurve]) -> Result<String, ReportError> {
    if curves.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut rows: Vec<CsvRow> = curves.iter().flat_map(curve_rows).collect();
    rows.sort_by(|a, b| {
        (a.metric.as_str(), a.scope.as_str())
            .cmp(&(b.metric.as_str(), b.scope.as_str()))
            .then(b.tau.total_cmp(&a.tau))
            .then(a.series.cmp(&b.series))
    });
    let mut out = String::with_capacity(48 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.metric,
            r.scope,
            format_number(r.tau),
            r.series,
            cell(r.value),
            r.n_retained
        );
    }
    Ok(out)
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing header".into());
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let err = |what: &str| format!("line {}: {what}", k + 2);
            if f.len() != 6 {
                return Err(err("expected 6 fields"));
            }
            Ok(CsvRow {
                metric: f[0].into(),
                scope: f[1].into(),
                tau: f[2].parse().map_err(|_| err("bad tau"))?,
                series: f[3].into(),
                value: if f[4].is_empty() {
                    None
                } else {
                    Some(f[4].parse().map_err(|_| err("bad value"))?)
                },
                n_retained: f[5].parse().map_err(|_| err("bad count"))?,
            })
        })
        .collect()
}

pub fn emit_curves_csv(curves: &[FairnessCurve], path: &Path) -> crate::Result<()> {
    let text = curves_csv(curves).map_err(crate::Error::from)?;
    fs::write(path, text).map_err(|e| crate::Error::io(path, e))
}

fn num(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| json!(x))
}

fn behavior_json(r: &BehaviorReport) -> Value {
    json!({
        "pairs": r.pairs.len(),
        "fg_improved": r.fg_improved_fraction,
        "em_improved_d0": r.em_improved_d0_fraction,
        "em_improved_d1": r.em_improved_d1_fraction,
    })
}

/// Per curve: the unfiltered (`tau = 100`) anchors and the fraction of
/// adjacent threshold pairs showing the desired behavior. Segmentation
/// results add per-region QU-BraTS scores. Keys are sorted.
pub fn summary_json(result: &SweepResult) -> Value {
    let curves: Vec<Value> = result
        .curves
        .iter()
        .map(|c| {
            let anchors = c.unfiltered_index().map_or(Value::Null, |i| {
                json!({
                    "d0": num(c.em_d0[i].value),
                    "d1": num(c.em_d1[i].value),
                    "all": num(c.em_all[i].value),
                    "fg": num(c.fg[i]),
                })
            });
            let behavior = desired_behavior_flags(c)
                .map(|r| behavior_json(&r))
                .unwrap_or(Value::Null);
            json!({
                "metric": c.id.name.as_str(),
                "scope": c.scope_label,
                "unfiltered": anchors,
                "behavior": behavior,
            })
        })
        .collect();
    let mut top = Map::new();
    top.insert("task".into(), json!(result.task.to_string()));
    top.insert("thresholds".into(), json!(result.taus.len()));
    top.insert("curves".into(), Value::Array(curves));
    if !result.qubrats.is_empty() {
        let rows = result
            .qubrats
            .iter()
            .map(|q| {
                json!({
                    "region": q.region,
                    "d0": num(q.d0),
                    "d1": num(q.d1),
                    "all": num(q.all),
                    "fg": num(q.fg),
                })
            })
            .collect();
        top.insert("qubrats".into(), Value::Array(rows));
    }
    Value::Object(top)
}

pub fn summary_string(result: &SweepResult) -> String {
    serde_json::to_string_pretty(&summary_json(result)).expect("summary serializes") + "\n"
}

pub fn emit_summary_json(result: &SweepResult, path: &Path) -> crate::Result<()> {
    fs::write(path, summary_string(result)).map_err(|e| crate::Error::io(path, e))
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 500.0;
pub const PLOT_LEFT: f64 = 70.0;
pub const PLOT_RIGHT: f64 = 730.0;
pub const PLOT_TOP: f64 = 40.0;
pub const PLOT_BOTTOM: f64 = 440.0;

/// Horizontal position of threshold `tau`; the axis shows `100 - tau`.
pub fn x_of(tau: f64) -> f64 {
    PLOT_LEFT + (PLOT_RIGHT - PLOT_LEFT) * (100.0 - tau) / 100.0
}

/// Linear map of a data range onto the plot height. A degenerate range is
/// widened by 0.5 either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMap {
    pub lo: f64,
    pub hi: f64,
}

impl AxisMap {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Some(Self { lo, hi })
    }

    pub fn y(&self, v: f64) -> f64 {
        PLOT_BOTTOM - (PLOT_BOTTOM - PLOT_TOP) * (v - self.lo) / (self.hi - self.lo)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maximal runs of consecutive defined points.
fn segments(taus: &[f64], ys: &[Option<f64>]) -> Vec<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (t, y) in taus.iter().zip(ys) {
        match y {
            Some(v) => cur.push((*t, *v)),
            None if !cur.is_empty() => out.push(std::mem::take(&mut cur)),
            None => {}
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn draw_series(svg: &mut String, class: &str, color: &str, taus: &[f64], ys: &[Option<f64>], axis: AxisMap) {
    for seg in segments(taus, ys) {
        if seg.len() == 1 {
            let (t, v) = seg[0];
            let _ = writeln!(
                svg,
                r#"<circle class="{class}" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                x_of(t),
                axis.y(v)
            );
            continue;
        }
        let pts: Vec<String> = seg.iter().map(|&(t, v)| format!("{:.2},{:.2}", x_of(t), axis.y(v))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
    }
}

/// Dual-axis line chart: subgroup metrics on the left axis, fairness gap
/// (dashed) on the right, against `100 - tau`.
pub fn curve_svg(c: &FairnessCurve) -> Result<String, ReportError> {
    let em = |s: &[crate::metrics::MetricValue]| s.iter().map(|v| v.value).collect::<Vec<_>>();
    let (d0, d1, all) = (em(&c.em_d0), em(&c.em_d1), em(&c.em_all));
    let defined = [&d0, &d1, &all, &c.fg]
        .iter()
        .map(|s| s.iter().flatten().count())
        .max()
        .unwrap_or(0);
    if defined < 2 {
        return Err(ReportError::TooFewPoints {
            metric: c.id.name.as_str().into(),
            scope: c.scope_label.clone(),
            found: defined,
        });
    }
    let left = AxisMap::fit(d0.iter().chain(&d1).chain(&all).flatten().copied()).unwrap_or(AxisMap { lo: 0.0, hi: 1.0 });
    let right = AxisMap::fit(c.fg.iter().flatten().copied()).unwrap_or(AxisMap { lo: 0.0, hi: 1.0 });
    let title = format!("{} ({})", c.id.name.as_str(), escape(&c.scope_label));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(s, r#"<text x="400" y="24" text-anchor="middle" font-size="16">{title}</text>"#);
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        PLOT_RIGHT - PLOT_LEFT,
        PLOT_BOTTOM - PLOT_TOP
    );
    for k in 0..=5 {
        let frac = k as f64 / 5.0;
        let x = PLOT_LEFT + (PLOT_RIGHT - PLOT_LEFT) * frac;
        let y = PLOT_BOTTOM - (PLOT_BOTTOM - PLOT_TOP) * frac;
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-size="11">{}</text>"#,
            PLOT_BOTTOM + 16.0,
            format_number(100.0 * frac)
        );
        let lv = left.lo + (left.hi - left.lo) * frac;
        let rv = right.lo + (right.hi - right.lo) * frac;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="11">{lv:.3}</text>"#,
            PLOT_LEFT - 6.0,
            y + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="start" font-size="11">{rv:.3}</text>"#,
            PLOT_RIGHT + 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="400" y="{}" text-anchor="middle" font-size="12">100 - uncertainty threshold</text>"#,
        PLOT_BOTTOM + 36.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="240" text-anchor="middle" font-size="12" transform="rotate(-90 18 240)">{}</text>"#,
        c.id.name.as_str()
    );
    let _ = writeln!(
        s,
        r#"<text x="782" y="240" text-anchor="middle" font-size="12" transform="rotate(90 782 240)">fairness gap</text>"#
    );
    draw_series(&mut s, "d0", "#1f77b4", &c.taus, &d0, left);
    draw_series(&mut s, "d1", "#d62728", &c.taus, &d1, left);
    draw_series(&mut s, "all", "#7f7f7f", &c.taus, &all, left);
    let before = s.len();
    draw_series(&mut s, "fg", "#2ca02c", &c.taus, &c.fg, right);
    let fg_part = s.split_off(before).replace("stroke-width=\"2\"", "stroke-width=\"2\" stroke-dasharray=\"6 4\"");
    s.push_str(&fg_part);
    for (k, (label, color)) in [("D0", "#1f77b4"), ("D1", "#d62728"), ("all", "#7f7f7f"), ("FG", "#2ca02c")]
        .iter()
        .enumerate()
    {
        let y = PLOT_TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-size="11" fill="{color}">{label}</text>"#,
            PLOT_RIGHT - 40.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_svg(c: &FairnessCurve, path: &Path) -> crate::Result<()> {
    let text = curve_svg(c).map_err(crate::Error::from)?;
    fs::write(path, text).map_err(|e| crate::Error::io(path, e))
}

/// File stem for a curve's chart, e.g. `accuracy_overall`.
pub fn svg_file_stem(c: &FairnessCurve) -> String {
    let scope: String = c
        .scope_label
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' { ch } else { '_' })
        .collect();
    format!("{}_{}", c.id.name.as_str(), scope)
}
