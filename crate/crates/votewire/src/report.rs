//! Artifact emission: CSV tables, JSON test rows, deterministic SVG plots
//! and the content-hash manifest every run writes.
//!
//! All numeric output is rounded only here, at emission time (two decimals
//! for table cells, scientific notation for vanishing p-values). SVG is
//! the single plot format: deterministic, diffable and dependency-free.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{CenterClassification, MachineClassification, RegionRow};
use crate::model::{
    DistributionSummary, ElectionId, TallySheet, TestResult, TrafficClass,
};
use crate::regression::{RegressionFit, ScatterPoint};

/// Maps artifact names to SHA-256 content hashes; identical inputs and
/// config reproduce identical manifests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn record(&mut self, name: &str, bytes: &[u8]) {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.artifacts.insert(name.to_string(), hex(&hasher.finalize()));
    }

    /// Writes `bytes` under `dir/name` and records its hash.
    pub fn write_file(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> io::Result<()> {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)?;
        self.record(name, bytes);
        Ok(())
    }

    /// Serializes the manifest itself to `dir/manifest.json`.
    pub fn save(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, body)?;
        Ok(path)
    }

    pub fn len(&self) -> usize {
        self.artifacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.artifacts.is_empty()
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Two-decimal cell formatting used across the tables.
pub fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

/// Four decimals for ordinary p-values; scientific notation below 1e-4;
/// bare zero for exact zeros.
pub fn fmt_p(p: f64) -> String {
    if p == 0.0 {
        "0".to_string()
    } else if p < 1e-4 {
        format!("{p:.1E}")
    } else {
        format!("{p:.4}")
    }
}

/// Summary rows in the layout of the distribution tables:
/// Level, Number, Mean, Std dev, 25%-Q, Median, 75%-Q.
pub fn summaries_csv(rows: &[(String, DistributionSummary)]) -> String {
    let mut out = String::from("level,number,mean,std_dev,q25,median,q75\n");
    for (level, s) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            level,
            s.n,
            fmt2(s.mean),
            fmt2(s.std),
            fmt2(s.q25),
            fmt2(s.median),
            fmt2(s.q75)
        );
    }
    out
}

/// Test results as JSON rows `{test, statistic, df, p}`.
pub fn tests_json(results: &[TestResult]) -> String {
    let rows: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "test": r.test_name,
                "statistic": r.statistic,
                "df": r.df,
                "p": r.p_value,
            })
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("test rows serialize")
}

/// One class of the partition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub class: TrafficClass,
    pub centers: usize,
    pub machines: usize,
    pub votes: u64,
    pub vote_share_percent: f64,
}

/// Machine/center/vote partition per traffic class, the shape of the
/// headline class table.
pub fn class_partition(
    machines: &[MachineClassification],
    centers: &[CenterClassification],
    tallies: &[TallySheet],
) -> Vec<PartitionRow> {
    let votes_by_machine: BTreeMap<&str, u64> = tallies
        .iter()
        .filter(|t| t.election_id == ElectionId::Prr2004)
        .map(|t| (t.machine_id.as_str(), t.total_votes))
        .collect();
    let classes = [
        TrafficClass::HighWire,
        TrafficClass::LowWire,
        TrafficClass::Cellular,
        TrafficClass::Unclassified,
    ];
    let mut votes = BTreeMap::new();
    let mut machine_counts = BTreeMap::new();
    for m in machines {
        *machine_counts.entry(m.traffic_class).or_insert(0usize) += 1;
        let v = votes_by_machine.get(m.machine_id.as_str()).copied().unwrap_or(0);
        *votes.entry(m.traffic_class).or_insert(0u64) += v;
    }
    let mut center_counts = BTreeMap::new();
    for c in centers {
        *center_counts.entry(c.center_class).or_insert(0usize) += 1;
    }
    let total_votes: u64 = votes.values().sum();
    classes
        .iter()
        .filter_map(|&class| {
            let machines = machine_counts.get(&class).copied().unwrap_or(0);
            let centers = center_counts.get(&class).copied().unwrap_or(0);
            if machines == 0 && centers == 0 {
                return None;
            }
            let v = votes.get(&class).copied().unwrap_or(0);
            Some(PartitionRow {
                class,
                centers,
                machines,
                votes: v,
                vote_share_percent: if total_votes == 0 {
                    0.0
                } else {
                    100.0 * v as f64 / total_votes as f64
                },
            })
        })
        .collect()
}

pub fn partition_csv(rows: &[PartitionRow]) -> String {
    let mut out = String::from("class,centers,machines,votes,vote_share_percent\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.class,
            r.centers,
            r.machines,
            r.votes,
            fmt2(r.vote_share_percent)
        );
    }
    out
}

/// Per-machine classification table: stable column order, rows sorted by
/// machine id by construction.
pub fn classification_csv(machines: &[MachineClassification]) -> String {
    let mut out = String::from("machine_id,class,subgroup,total_octets\n");
    for m in machines {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            m.machine_id,
            m.traffic_class,
            m.subgroup.map(|g| g.as_str()).unwrap_or(""),
            m.total_octets
        );
    }
    out
}

/// Per-center classification table.
pub fn centers_csv(centers: &[CenterClassification]) -> String {
    let mut out = String::from("center_id,class,flags\n");
    for c in centers {
        let flags: Vec<String> = c.flags.iter().map(|f| format!("{f:?}")).collect();
        let _ = writeln!(out, "{},{},{}", c.center_id, c.center_class, flags.join(";"));
    }
    out
}

/// Scatter export of a group regression.
pub fn scatter_csv(points: &[ScatterPoint]) -> String {
    let mut out = String::from("votes,bytes,machine_id\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.votes, p.bytes, p.machine_id);
    }
    out
}

pub fn region_csv(rows: &[RegionRow]) -> String {
    let mut out = String::from("state,municipality,high,low,cellular,unclassified,mixing_index\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.state,
            r.municipality,
            r.counts[0],
            r.counts[1],
            r.counts[2],
            r.counts[3],
            fmt2(r.mixing_index)
        );
    }
    out
}

pub fn qq_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("quantile_a,quantile_b\n");
    for (a, b) in points {
        let _ = writeln!(out, "{a},{b}");
    }
    out
}

/// Mean/std of a per-center metric difference between two elections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceRow {
    pub level: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn differences_csv(rows: &[DifferenceRow]) -> String {
    let mut out = String::from("level,number,mean,std_dev\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.level, r.n, fmt2(r.mean), fmt2(r.std));
    }
    out
}

// ---------------------------------------------------------------------------
// SVG plotting
// ---------------------------------------------------------------------------

const PLOT_W: f64 = 720.0;
const PLOT_H: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const GROUP_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#7f7f7f"];

fn f(x: f64) -> String {
    format!("{x:.2}")
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_bounds(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Frame {
        let pad = |lo: f64, hi: f64| {
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (x_min, x_max) = pad(x_min, x_max);
        let (y_min, y_max) = pad(y_min, y_max);
        Frame { x_min, x_max, y_min, y_max }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_min) / (self.x_max - self.x_min) * (PLOT_W - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        PLOT_H - MARGIN_B
            - (y - self.y_min) / (self.y_max - self.y_min) * (PLOT_H - MARGIN_T - MARGIN_B)
    }
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if span <= 0.0 || !span.is_finite() {
        return vec![lo];
    }
    let raw_step = span / 6.0;
    let mag = 10f64.powf(raw_step.log10().floor());
    let norm = raw_step / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let mut ticks = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + step * 1e-9 {
        ticks.push(t);
        t += step;
    }
    ticks
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Svg {
        let mut body = String::new();
        let _ = writeln!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\">"
        );
        let _ = writeln!(
            body,
            "<rect x=\"0\" y=\"0\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"white\"/>"
        );
        let _ = writeln!(
            body,
            "<text x=\"{}\" y=\"22\" font-family=\"monospace\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
            PLOT_W / 2.0,
            escape(title)
        );
        Svg { body }
    }

    fn axes(&mut self, frame: &Frame, x_label: &str, y_label: &str) {
        let x0 = MARGIN_L;
        let x1 = PLOT_W - MARGIN_R;
        let y0 = PLOT_H - MARGIN_B;
        let y1 = MARGIN_T;
        let _ = writeln!(
            self.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            f(x0), f(y0), f(x1), f(y0)
        );
        let _ = writeln!(
            self.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            f(x0), f(y0), f(x0), f(y1)
        );
        for t in nice_ticks(frame.x_min, frame.x_max) {
            let sx = frame.sx(t);
            let _ = writeln!(
                self.body,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
                f(sx), f(y0), f(sx), f(y0 + 5.0)
            );
            let _ = writeln!(
                self.body,
                "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
                f(sx), f(y0 + 18.0), tick_label(t)
            );
        }
        for t in nice_ticks(frame.y_min, frame.y_max) {
            let sy = frame.sy(t);
            let _ = writeln!(
                self.body,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
                f(x0 - 5.0), f(sy), f(x0), f(sy)
            );
            let _ = writeln!(
                self.body,
                "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{}</text>",
                f(x0 - 8.0), f(sy + 4.0), tick_label(t)
            );
        }
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            f((x0 + x1) / 2.0), f(PLOT_H - 12.0), escape(x_label)
        );
        let _ = writeln!(
            self.body,
            "<text x=\"16\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
            f((y0 + y1) / 2.0), f((y0 + y1) / 2.0), escape(y_label)
        );
    }

    fn finish(mut self) -> String {
        let _ = writeln!(self.body, "</svg>");
        self.body
    }
}

fn tick_label(t: f64) -> String {
    if t.abs() >= 1000.0 || (t - t.round()).abs() < 1e-9 {
        format!("{t:.0}")
    } else {
        format!("{t:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Keeps at most `cap` points, deterministic stride subsampling.
fn subsample(points: &[(f64, f64)], cap: usize) -> Vec<(f64, f64)> {
    if points.len() <= cap {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(cap);
    points.iter().step_by(stride).copied().collect()
}

/// Scatter of (votes, bytes) with an optional fitted line.
pub fn scatter_svg(
    title: &str,
    points: &[(f64, f64)],
    fit: Option<&RegressionFit>,
    x_label: &str,
    y_label: &str,
) -> String {
    let pts = subsample(points, 4_000);
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if pts.is_empty() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    let frame = Frame::from_bounds(x_min, x_max, y_min, y_max);
    let mut svg = Svg::new(title);
    svg.axes(&frame, x_label, y_label);
    for &(x, y) in &pts {
        let _ = writeln!(
            svg.body,
            "<circle cx=\"{}\" cy=\"{}\" r=\"1.5\" fill=\"#1f77b4\" fill-opacity=\"0.5\"/>",
            f(frame.sx(x)), f(frame.sy(y))
        );
    }
    if let Some(fit) = fit {
        let y_at = |x: f64| fit.intercept + fit.slope * x;
        let _ = writeln!(
            svg.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#d62728\" stroke-width=\"1.5\"/>",
            f(frame.sx(x_min)), f(frame.sy(y_at(x_min))),
            f(frame.sx(x_max)), f(frame.sy(y_at(x_max)))
        );
        let _ = writeln!(
            svg.body,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" fill=\"#d62728\">slope {} ({}% err)</text>",
            f(MARGIN_L + 10.0), f(MARGIN_T + 14.0), fmt2(fit.slope), fmt2(fit.slope_error_percent())
        );
    }
    svg.finish()
}

/// Variable-width box plot: box from q25 to q75 with the width scaled by
/// the sample size, whiskers at q10/q90, median line, and dashed lines
/// marking the mean plus/minus one standard deviation.
pub fn box_plot_svg(title: &str, groups: &[(String, DistributionSummary)], y_label: &str) -> String {
    if groups.is_empty() {
        return Svg::new(title).finish();
    }
    let y_min = groups
        .iter()
        .map(|(_, s)| s.q10.min(s.mean - s.std))
        .fold(f64::INFINITY, f64::min);
    let y_max = groups
        .iter()
        .map(|(_, s)| s.q90.max(s.mean + s.std))
        .fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame::from_bounds(0.0, groups.len() as f64, y_min, y_max);
    let mut svg = Svg::new(title);
    svg.axes(&frame, "", y_label);
    let n_max = groups.iter().map(|(_, s)| s.n).max().unwrap_or(1).max(1);
    let slot = (PLOT_W - MARGIN_L - MARGIN_R) / groups.len() as f64;
    for (i, (label, s)) in groups.iter().enumerate() {
        let cx = frame.sx(i as f64 + 0.5);
        let half = 0.38 * slot * (s.n as f64 / n_max as f64).sqrt().max(0.15);
        let color = GROUP_COLORS[i % GROUP_COLORS.len()];
        // Whiskers q10..q90.
        let _ = writeln!(
            svg.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\"/>",
            f(cx), f(frame.sy(s.q10)), f(cx), f(frame.sy(s.q90))
        );
        for q in [s.q10, s.q90] {
            let _ = writeln!(
                svg.body,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\"/>",
                f(cx - half * 0.5), f(frame.sy(q)), f(cx + half * 0.5), f(frame.sy(q))
            );
        }
        // Box q25..q75.
        let _ = writeln!(
            svg.body,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"0.25\" stroke=\"{color}\"/>",
            f(cx - half), f(frame.sy(s.q75)), f(2.0 * half), f(frame.sy(s.q25) - frame.sy(s.q75))
        );
        // Median.
        let _ = writeln!(
            svg.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            f(cx - half), f(frame.sy(s.median)), f(cx + half), f(frame.sy(s.median))
        );
        // Mean and one-sigma markers.
        for y in [s.mean - s.std, s.mean, s.mean + s.std] {
            let _ = writeln!(
                svg.body,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-dasharray=\"3,2\"/>",
                f(cx - half * 0.7), f(frame.sy(y)), f(cx + half * 0.7), f(frame.sy(y))
            );
        }
        let _ = writeln!(
            svg.body,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{} (n={})</text>",
            f(cx), f(PLOT_H - MARGIN_B + 32.0), escape(label), s.n
        );
    }
    svg.finish()
}

/// Q-Q plot with the identity diagonal for reference.
pub fn qq_svg(title: &str, points: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    let lo = points
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .fold(f64::INFINITY, f64::min);
    let hi = points
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if points.is_empty() { (0.0, 1.0) } else { (lo, hi) };
    let frame = Frame::from_bounds(lo, hi, lo, hi);
    let mut svg = Svg::new(title);
    svg.axes(&frame, x_label, y_label);
    let _ = writeln!(
        svg.body,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999999\" stroke-dasharray=\"4,3\"/>",
        f(frame.sx(lo)), f(frame.sy(lo)), f(frame.sx(hi)), f(frame.sy(hi))
    );
    for &(a, b) in points {
        let _ = writeln!(
            svg.body,
            "<circle cx=\"{}\" cy=\"{}\" r=\"2.0\" fill=\"#1f77b4\"/>",
            f(frame.sx(a)), f(frame.sy(b))
        );
    }
    svg.finish()
}

/// One series of a means chart: (x label, mean, std) triples.
#[derive(Debug, Clone, PartialEq)]
pub struct MeansSeries {
    pub name: String,
    pub points: Vec<(String, f64, f64)>,
}

/// Means with one-standard-deviation bars, one colored series per group.
pub fn means_chart_svg(title: &str, series: &[MeansSeries], y_label: &str) -> String {
    let mut labels: Vec<String> = Vec::new();
    for s in series {
        for (l, _, _) in &s.points {
            if !labels.contains(l) {
                labels.push(l.clone());
            }
        }
    }
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(_, mean, std) in &s.points {
            y_min = y_min.min(mean - std);
            y_max = y_max.max(mean + std);
        }
    }
    if series.is_empty() {
        y_min = 0.0;
        y_max = 1.0;
    }
    let frame = Frame::from_bounds(0.0, labels.len().max(1) as f64, y_min, y_max);
    let mut svg = Svg::new(title);
    svg.axes(&frame, "", y_label);
    for (li, label) in labels.iter().enumerate() {
        let _ = writeln!(
            svg.body,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            f(frame.sx(li as f64 + 0.5)), f(PLOT_H - MARGIN_B + 32.0), escape(label)
        );
    }
    for (si, s) in series.iter().enumerate() {
        let color = GROUP_COLORS[si % GROUP_COLORS.len()];
        let offset = (si as f64 - (series.len() as f64 - 1.0) / 2.0) * 0.12;
        let mut path = Vec::new();
        for (label, mean, std) in &s.points {
            let li = labels.iter().position(|l| l == label).unwrap_or(0);
            let cx = frame.sx(li as f64 + 0.5 + offset);
            path.push((cx, frame.sy(*mean)));
            let _ = writeln!(
                svg.body,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\"/>",
                f(cx), f(frame.sy(mean - std)), f(cx), f(frame.sy(mean + std))
            );
            let _ = writeln!(
                svg.body,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
                f(cx), f(frame.sy(*mean))
            );
        }
        if path.len() > 1 {
            let coords: Vec<String> =
                path.iter().map(|(x, y)| format!("{},{}", f(*x), f(*y))).collect();
            let _ = writeln!(
                svg.body,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\"/>",
                coords.join(" ")
            );
        }
        let _ = writeln!(
            svg.body,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" fill=\"{color}\">{}</text>",
            f(PLOT_W - MARGIN_R - 90.0), f(MARGIN_T + 16.0 * (si as f64 + 1.0)), escape(&s.name)
        );
    }
    svg.finish()
}

/// Markdown table from headers and rows.
pub fn md_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", headers.join(" | "));
    let _ = writeln!(
        out,
        "|{}|",
        headers.iter().map(|_| " --- ").collect::<Vec<_>>().join("|")
    );
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hashes_are_stable() {
        let mut a = Manifest::default();
        a.record("x.csv", b"hello");
        let mut b = Manifest::default();
        b.record("x.csv", b"hello");
        assert_eq!(a, b);
        assert_eq!(
            a.artifacts["x.csv"],
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }

    #[test]
    fn p_value_formatting() {
        assert_eq!(fmt_p(0.0447), "0.0447");
        assert_eq!(fmt_p(3.7e-6), "3.7E-6");
        assert_eq!(fmt_p(0.0), "0");
    }

    #[test]
    fn svg_is_deterministic() {
        let pts = vec![(1.0, 2.0), (3.0, 4.0), (5.0, 4.5)];
        let a = scatter_svg("t", &pts, None, "x", "y");
        let b = scatter_svg("t", &pts, None, "x", "y");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn subsample_caps() {
        let pts: Vec<(f64, f64)> = (0..10_000).map(|i| (i as f64, i as f64)).collect();
        assert!(subsample(&pts, 4_000).len() <= 4_000);
        assert_eq!(subsample(&pts[..10], 4_000).len(), 10);
    }

    #[test]
    fn summaries_layout() {
        let s = crate::stats::summarize(
            &crate::stats::Sample::new("A", vec![1.0, 2.0, 3.0]).unwrap(),
        )
        .unwrap();
        let csv = summaries_csv(&[("A".to_string(), s)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "level,number,mean,std_dev,q25,median,q75");
        assert!(lines.next().unwrap().starts_with("A,3,2.00,1.00,"));
    }
}
