//! SVG line charts from `results.csv` rows.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::results::{Metric, ResultRow};
use crate::scenario::ScenarioKind;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub const OFPR_FIGURE: &str = "ofpr_pick.svg";
pub const DELTA_FIGURE: &str = "delta_ck.svg";

struct Series {
    label: String,
    points: Vec<Option<f64>>,
}

struct Band {
    label: &'static str,
    color: &'static str,
    lo: Vec<Option<f64>>,
    hi: Vec<Option<f64>>,
}

struct Chart<'a> {
    title: &'a str,
    y_label: &'a str,
    x_ticks: &'a [String],
    y_range: (f64, f64),
    series: Vec<Series>,
    bands: Vec<Band>,
}

/// Barrier ids in curriculum order; ids that are not barrier kind names
/// follow in first-seen order.
fn barrier_axis(rows: &[ResultRow]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for r in rows {
        if !ids.contains(&r.barrier) {
            ids.push(r.barrier.clone());
        }
    }
    let rank = |id: &String| {
        ScenarioKind::CURRICULUM
            .iter()
            .position(|k| k.name() == id)
            .unwrap_or(ScenarioKind::CURRICULUM.len())
    };
    ids.sort_by_key(rank);
    ids
}

fn ordered_unique<'a>(values: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in values {
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

fn lookup(rows: &[ResultRow], barrier: &str, pick: impl Fn(&ResultRow) -> bool) -> Option<f64> {
    rows.iter().find(|r| r.barrier == barrier && pick(r)).map(|r| r.mean)
}

impl Chart<'_> {
    fn x(&self, i: usize) -> f64 {
        let plot_w = WIDTH - LEFT - RIGHT;
        if self.x_ticks.len() == 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * i as f64 / (self.x_ticks.len() - 1) as f64
        }
    }

    fn y(&self, v: f64) -> f64 {
        let (lo, hi) = self.y_range;
        let plot_h = HEIGHT - TOP - BOTTOM;
        TOP + plot_h * (1.0 - (v - lo) / (hi - lo))
    }

    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            (WIDTH - RIGHT + LEFT) / 2.0,
            escape(self.title)
        );

        // y grid and labels
        let (lo, hi) = self.y_range;
        for k in 0..=5 {
            let v = lo + (hi - lo) * k as f64 / 5.0;
            let y = self.y(v);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
                WIDTH - RIGHT
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
                LEFT - 6.0,
                y + 4.0
            );
        }
        if lo < 0.0 && hi > 0.0 {
            let y = self.y(0.0);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#444444"/>"##,
                WIDTH - RIGHT
            );
        }
        for (i, tick) in self.x_ticks.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text class="xtick" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                self.x(i),
                HEIGHT - BOTTOM + 18.0,
                escape(tick)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">barrier difficulty</text>"#,
            (WIDTH - RIGHT + LEFT) / 2.0,
            HEIGHT - 15.0
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(self.y_label)
        );

        let mut legend = Vec::new();
        for band in &self.bands {
            let upper: Vec<(f64, f64)> = band
                .hi
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| (self.x(i), self.y(v))))
                .collect();
            let lower: Vec<(f64, f64)> = band
                .lo
                .iter()
                .enumerate()
                .rev()
                .filter_map(|(i, v)| v.map(|v| (self.x(i), self.y(v))))
                .collect();
            if upper.is_empty() {
                continue;
            }
            let pts = points_attr(upper.iter().chain(&lower));
            let _ = writeln!(
                s,
                r#"<polygon class="band" points="{pts}" fill="{}" fill-opacity="0.2" stroke="{}" stroke-width="1"/>"#,
                band.color, band.color
            );
            legend.push((band.label.to_string(), band.color, true));
        }
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| (self.x(i), self.y(v))))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                points_attr(pts.iter())
            );
            for (x, y) in &pts {
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
            }
            legend.push((series.label.clone(), color, false));
        }
        for (k, (label, color, is_band)) in legend.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * k as f64;
            let x = WIDTH - RIGHT + 15.0;
            if *is_band {
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{:.2}" width="18" height="10" fill="{color}" fill-opacity="0.3"/>"#,
                    y - 5.0
                );
            } else {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
                    x + 18.0
                );
            }
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 24.0, y + 4.0, escape(label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn points_attr<'a>(pts: impl Iterator<Item = &'a (f64, f64)>) -> String {
    pts.map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn band(rows: &[ResultRow], axis: &[String], subject: &str, label: &'static str, color: &'static str) -> Band {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for b in axis {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| &r.barrier == b && r.metric == Metric::Ofpr && r.subject == subject)
            .map(|r| r.mean)
            .collect();
        lo.push(vals.iter().copied().reduce(f64::min));
        hi.push(vals.iter().copied().reduce(f64::max));
    }
    Band { label, color, lo, hi }
}

/// Renders both charts as SVG strings: `(ofpr_pick, delta_ck)`.
pub fn render_charts(rows: &[ResultRow]) -> Result<(String, String)> {
    if rows.is_empty() {
        return Err(Error::Parse("results contain no rows".into()));
    }
    let axis = barrier_axis(rows);
    let goals = ordered_unique(rows.iter().map(|r| &r.goal_scenario));

    let ofpr_series = goals
        .iter()
        .map(|g| Series {
            label: g.clone(),
            points: axis
                .iter()
                .map(|b| lookup(rows, b, |r| &r.goal_scenario == g && r.metric == Metric::Ofpr && r.subject == "PiCK"))
                .collect(),
        })
        .filter(|s| s.points.iter().any(Option::is_some))
        .collect();
    let ofpr = Chart {
        title: "OFPR of the causal-knowledge agent",
        y_label: "OFPR",
        x_ticks: &axis,
        y_range: (0.0, 1.0),
        series: ofpr_series,
        bands: vec![
            band(rows, &axis, "Rand", "Rand", "#999999"),
            band(rows, &axis, "PStar", "P*", "#2ca02c"),
        ],
    };

    let delta_rows: Vec<&ResultRow> = rows.iter().filter(|r| r.metric == Metric::DeltaCk).collect();
    let pairs = ordered_unique(delta_rows.iter().map(|r| &r.subject));
    let delta_series: Vec<Series> = pairs
        .iter()
        .map(|p| {
            let goal = delta_rows
                .iter()
                .find(|r| &r.subject == p)
                .map(|r| r.goal_scenario.clone())
                .unwrap_or_default();
            Series {
                label: if p.ends_with(&format!(">{goal}")) { goal } else { p.clone() },
                points: axis
                    .iter()
                    .map(|b| lookup(rows, b, |r| r.metric == Metric::DeltaCk && &r.subject == p))
                    .collect(),
            }
        })
        .collect();
    let extent = delta_rows
        .iter()
        .map(|r| r.mean.abs())
        .fold(0.05_f64, f64::max);
    let extent = (extent * 10.0).ceil() / 10.0;
    let delta = Chart {
        title: "Net teacher value after transfer",
        y_label: "Delta CK",
        x_ticks: &axis,
        y_range: (-extent, extent),
        series: delta_series,
        bands: vec![],
    };
    Ok((ofpr.render(), delta.render()))
}

/// Writes both figures into `dir`. Nothing is written if the rows are empty.
pub fn emit_plots(rows: &[ResultRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let (ofpr, delta) = render_charts(rows)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, body) in [(OFPR_FIGURE, ofpr), (DELTA_FIGURE, delta)] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
