//! Output artifacts: report JSON, model checkpoints, CSV tables and SVG plots.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::{FairnessReport, Metrics};
use crate::model::{Layout, ModelState};
use crate::sampler::SamplerMode;
use crate::train::History;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config_digest: String,
    pub bundle_digest: String,
    pub config: RunConfig,
    pub results: Vec<FairnessReport>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported report schema {}", r.schema_version)));
        }
        Ok(r)
    }
}

/// Trained parameters plus everything needed to rebuild the evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub seed: u64,
    pub mode: SamplerMode,
    pub history: History,
    pub config_digest: String,
    pub bundle_digest: String,
    pub config: RunConfig,
    pub model: ModelState,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    /// Parses a checkpoint and checks that its parts agree with each other.
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint schema {}", c.schema_version)));
        }
        c.config.validate()?;
        if c.config.digest() != c.config_digest {
            return Err(Error::HashMismatch("checkpoint config does not match its digest".into()));
        }
        if c.model.config != c.config.model.model_config() {
            return Err(Error::Parse("checkpoint model does not match its config".into()));
        }
        let n = Layout::new(&c.model.config).total;
        let adam = &c.model.optimizer;
        if c.model.params.len() != n || adam.m.len() != n || adam.v.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint has {} parameters and {}/{} moments, layout needs {n}",
                c.model.params.len(),
                adam.m.len(),
                adam.v.len()
            )));
        }
        if c.model.params.iter().chain(&adam.m).chain(&adam.v).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameter".into()));
        }
        Ok(c)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

/// `segment_id,s_value,group,rmse`; rmse is empty without test observations.
pub fn per_segment_csv(m: &Metrics) -> String {
    let mut out = String::from("segment_id,s_value,group,rmse\n");
    for s in &m.segments {
        let _ = writeln!(out, "{},{:.16e},{},{}", s.segment_id, s.s_value, s.group, opt(s.rmse));
    }
    out
}

/// `window_size,window_center,rmse` for every stride window.
pub fn window_curve_csv(m: &Metrics) -> String {
    let mut out = String::from("window_size,window_center,rmse\n");
    for w in &m.windows {
        for win in &w.curve {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", w.window_size, win.center(), win.rmse);
        }
    }
    out
}

/// One row per mode and seed, then one mean row per mode.
pub fn ablation_csv(reports: &[FairnessReport], window_sizes: &[f64]) -> String {
    let mut out = String::from("mode,seed,rmse,m_fair");
    for w in window_sizes {
        let _ = write!(out, ",worst_window_{w}");
    }
    out.push('\n');
    for r in reports {
        for s in &r.per_seed {
            let _ = write!(out, "{},{},{:.16e},{:.16e}", r.mode, s.seed, s.metrics.overall_rmse, s.metrics.fairness.m_fair);
            for w in &s.metrics.windows {
                let _ = write!(out, ",{:.16e}", w.worst.rmse);
            }
            out.push('\n');
        }
    }
    for r in reports {
        if let Some(a) = &r.aggregate {
            let _ = write!(out, "{},mean,{:.16e},{:.16e}", r.mode, a.overall_rmse.mean, a.m_fair.mean);
            for (_, s) in &a.worst_window_rmse {
                let _ = write!(out, ",{:.16e}", s.mean);
            }
            out.push('\n');
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (y_lo, y_hi) = span(&mut ys.clone());
        Frame {
            x: span(&mut xs.clone()),
            y: (y_lo.min(0.0), y_hi),
        }
    }

    fn px(&self, v: f64) -> f64 {
        PAD + (v - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }

    fn py(&self, v: f64) -> f64 {
        H - PAD - (v - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let _ = writeln!(
            out,
            r##"<line x1="{p}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{p}" y1="{b}" x2="{p}" y2="{p}" stroke="black"/>"##,
            p = PAD,
            b = H - PAD,
            r = W - PAD
        );
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"##,
            W / 2.0,
            H - 12.0
        );
        let _ = writeln!(
            out,
            r##"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">{y_label}</text>"##,
            H / 2.0,
            H / 2.0
        );
        for (v, anchor, x, y) in [
            (self.x.0, "start", PAD, H - PAD + 16.0),
            (self.x.1, "end", W - PAD, H - PAD + 16.0),
        ] {
            let _ = writeln!(out, r##"<text x="{x}" y="{y}" font-size="10" text-anchor="{anchor}">{v:.4}</text>"##);
        }
        for v in [self.y.0, self.y.1] {
            let _ = writeln!(
                out,
                r##"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"##,
                PAD - 4.0,
                self.py(v) + 4.0
            );
        }
    }
}

fn svg_open(title: &str, digest: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <desc>config {digest}</desc>\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        W / 2.0
    )
}

/// Per-segment test RMSE against the sensitive value, with the sliding-window
/// curve of every window size.
pub fn rmse_curve_svg(m: &Metrics, title: &str, digest: &str) -> String {
    let points: Vec<(f64, f64)> = m.segments.iter().filter_map(|s| s.rmse.map(|r| (s.s_value, r))).collect();
    let curves: Vec<(f64, f64)> = m
        .windows
        .iter()
        .flat_map(|w| w.curve.iter().map(|c| (c.center(), c.rmse)))
        .collect();
    let frame = Frame::new(
        points.iter().chain(&curves).map(|p| p.0),
        points.iter().chain(&curves).map(|p| p.1),
    );
    let mut out = svg_open(title, digest);
    frame.axes(&mut out, "sensitive value", "test RMSE");
    for &(x, y) in &points {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#999999"/>"##,
            frame.px(x),
            frame.py(y)
        );
    }
    for (k, w) in m.windows.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = w
            .curve
            .iter()
            .map(|c| format!("{:.2},{:.2}", frame.px(c.center()), frame.py(c.rmse)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##,
            path.join(" ")
        );
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" font-size="11" fill="{color}">window {}</text>"##,
            W - PAD - 90.0,
            PAD + 14.0 * k as f64,
            w.window_size
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Absolute deviation of each group's RMSE from the overall RMSE.
pub fn group_deviation_svg(m: &Metrics, labels: &[String], title: &str, digest: &str) -> String {
    let groups = &m.fairness.groups;
    let top = groups.iter().map(|g| g.deviation.abs()).fold(0.0, f64::max);
    let top = if top > 0.0 { top } else { 1.0 };
    let mut out = svg_open(title, digest);
    let frame = Frame {
        x: (0.0, groups.len().max(1) as f64),
        y: (0.0, top),
    };
    frame.axes(&mut out, "group", "|RMSE(group) - RMSE(all)|");
    let slot = (W - 2.0 * PAD) / groups.len().max(1) as f64;
    for (k, g) in groups.iter().enumerate() {
        let x = PAD + slot * k as f64 + slot * 0.2;
        let y = frame.py(g.deviation.abs());
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"##,
            slot * 0.6,
            H - PAD - y,
            PALETTE[k % PALETTE.len()]
        );
        let label = labels.get(g.group).map_or("?", String::as_str);
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{}" font-size="11" text-anchor="middle">{label}</text>"##,
            x + slot * 0.3,
            H - PAD + 28.0
        );
    }
    out.push_str("</svg>\n");
    out
}
