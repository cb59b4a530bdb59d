//! Flow-ratio influence between prediction-graph neighbors.
//!
//! The one-hop influence of `j` on its direct downstream neighbor `i` is
//! `q_j / (q_j + q_i)`. A multi-hop edge multiplies the one-hop factors along
//! its stream path, left to right from the upstream end.

use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{PredictionGraph, SegmentId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowSource {
    Observed,
    Simulated,
}

/// Gap-filled streamflow, `[segment][day]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTable {
    pub flow: Vec<Vec<f64>>,
    pub source: Vec<Vec<FlowSource>>,
}

impl FlowTable {
    pub fn days(&self) -> usize {
        self.flow.first().map_or(0, Vec::len)
    }

    /// Wraps an already complete series (e.g. a bundle's merged flow column).
    pub fn from_filled(flow: Vec<Vec<f64>>, observed: &[Vec<bool>]) -> Self {
        let source = observed
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&m| if m { FlowSource::Observed } else { FlowSource::Simulated })
                    .collect()
            })
            .collect();
        FlowTable { flow, source }
    }
}

/// Uses the observation where the mask is set and the simulation elsewhere.
/// `simulated[i][t]` may be NaN for observed cells only.
pub fn fill_flow(
    segments: &[SegmentId],
    observed: &[Vec<f64>],
    mask: &[Vec<bool>],
    simulated: &[Vec<f64>],
) -> Result<FlowTable> {
    if observed.len() != segments.len() || mask.len() != segments.len() || simulated.len() != segments.len() {
        return Err(Error::DimensionMismatch(
            "flow tables must have one row per segment".into(),
        ));
    }
    let mut flow = Vec::with_capacity(segments.len());
    let mut source = Vec::with_capacity(segments.len());
    for (ix, &id) in segments.iter().enumerate() {
        let days = mask[ix].len();
        if observed[ix].len() != days || simulated[ix].len() != days {
            return Err(Error::DimensionMismatch(format!(
                "segment {id}: flow rows have inconsistent lengths"
            )));
        }
        let mut row = Vec::with_capacity(days);
        let mut src = Vec::with_capacity(days);
        for day in 0..days {
            if mask[ix][day] {
                row.push(observed[ix][day]);
                src.push(FlowSource::Observed);
            } else {
                let q = simulated[ix][day];
                if !q.is_finite() {
                    return Err(Error::MissingSimulated { segment: id, day });
                }
                row.push(q);
                src.push(FlowSource::Simulated);
            }
        }
        flow.push(row);
        source.push(src);
    }
    Ok(FlowTable { flow, source })
}

pub fn one_hop_influence(q_upstream: f64, q_downstream: f64) -> Result<f64> {
    if !(q_upstream > 0.0 && q_upstream.is_finite()) {
        return Err(Error::NonPositiveFlow {
            segment: u32::MAX,
            day: 0,
            value: q_upstream,
        });
    }
    if !(q_downstream > 0.0 && q_downstream.is_finite()) {
        return Err(Error::NonPositiveFlow {
            segment: u32::MAX,
            day: 0,
            value: q_downstream,
        });
    }
    Ok(q_upstream / (q_upstream + q_downstream))
}

fn path_product(path: &[usize], day: usize, flows: &FlowTable, segments: &[SegmentId]) -> Result<f64> {
    let mut acc = 1.0;
    for hop in path.windows(2) {
        let (a, b) = (hop[0], hop[1]);
        let qa = flows.flow[a][day];
        let qb = flows.flow[b][day];
        let factor = one_hop_influence(qa, qb).map_err(|_| {
            let (seg, value) = if !(qa > 0.0) { (a, qa) } else { (b, qb) };
            Error::NonPositiveFlow {
                segment: segments[seg],
                day,
                value,
            }
        })?;
        acc *= factor;
    }
    Ok(acc)
}

/// Influence of `upstream` on `downstream` at `day`, following the stored
/// stream path.
pub fn path_influence(
    pgraph: &PredictionGraph,
    upstream: usize,
    downstream: usize,
    day: usize,
    flows: &FlowTable,
) -> Result<f64> {
    let path = pgraph.enumerate_path(upstream, downstream)?;
    path_product(path, day, flows, pgraph.segments())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfluenceMode {
    PerStep,
    Averaged,
}

/// Influence for every prediction-graph edge. `per_step` is dense,
/// edge-major (`edge * days + day`) and only present in per-step mode.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceTable {
    days: usize,
    per_step: Option<Vec<f64>>,
    averaged: Vec<f64>,
}

pub fn build_table(pgraph: &PredictionGraph, flows: &FlowTable, mode: InfluenceMode) -> Result<InfluenceTable> {
    let days = flows.days();
    if flows.flow.len() != pgraph.node_count() {
        return Err(Error::DimensionMismatch(format!(
            "flow table has {} segments, graph has {}",
            flows.flow.len(),
            pgraph.node_count()
        )));
    }
    if days == 0 {
        return Err(Error::Empty("flow table"));
    }
    let rows: Vec<Vec<f64>> = pgraph
        .edges()
        .par_iter()
        .map(|e| {
            (0..days)
                .map(|day| path_product(&e.path, day, flows, pgraph.segments()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let averaged = rows
        .iter()
        .map(|r| r.iter().sum::<f64>() / days as f64)
        .collect();
    let per_step = match mode {
        InfluenceMode::PerStep => Some(rows.concat()),
        InfluenceMode::Averaged => None,
    };
    Ok(InfluenceTable {
        days,
        per_step,
        averaged,
    })
}

impl InfluenceTable {
    pub fn days(&self) -> usize {
        self.days
    }

    pub fn edge_count(&self) -> usize {
        self.averaged.len()
    }

    pub fn averaged(&self) -> &[f64] {
        &self.averaged
    }

    pub fn per_step(&self) -> Option<&[f64]> {
        self.per_step.as_deref()
    }

    pub fn at(&self, edge: usize, day: usize) -> Option<f64> {
        self.per_step
            .as_ref()
            .map(|v| v[edge * self.days + day])
    }

    /// Mean influence over `days` for every edge; needs per-step values.
    pub fn window_mean(&self, days: Range<usize>) -> Result<Vec<f64>> {
        let per_step = self.per_step.as_ref().ok_or_else(|| {
            Error::InvalidConfig("window influence needs a per-step table".into())
        })?;
        if days.is_empty() || days.end > self.days {
            return Err(Error::InvalidConfig(format!(
                "influence window {days:?} outside 0..{}",
                self.days
            )));
        }
        let width = days.len() as f64;
        Ok((0..self.edge_count())
            .map(|e| per_step[e * self.days + days.start..e * self.days + days.end].iter().sum::<f64>() / width)
            .collect())
    }

    /// `upstream_id,downstream_id,day_or_AVG,value`.
    pub fn to_csv(&self, pgraph: &PredictionGraph) -> String {
        let mut out = String::from("upstream_id,downstream_id,day_or_AVG,value\n");
        for (k, e) in pgraph.edges().iter().enumerate() {
            let up = pgraph.segments()[e.upstream];
            let down = pgraph.segments()[e.downstream];
            if let Some(per_step) = &self.per_step {
                for day in 0..self.days {
                    let _ = writeln!(out, "{up},{down},{day},{:.16e}", per_step[k * self.days + day]);
                }
            }
            let _ = writeln!(out, "{up},{down},AVG,{:.16e}", self.averaged[k]);
        }
        out
    }
}
