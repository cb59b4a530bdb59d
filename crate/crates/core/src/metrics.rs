//! Accuracy and fairness metrics: RMSE, group fairness and worst-window RMSE
//! along the continuous sensitive axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn rmse(predictions: &[f64], observations: &[f64]) -> Result<f64> {
    if predictions.len() != observations.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("rmse subset"));
    }
    let sse: f64 = predictions
        .iter()
        .zip(observations)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Squared-error total and observation count of one segment over the
/// evaluation period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentError {
    pub s: f64,
    pub sse: f64,
    pub count: usize,
}

impl SegmentError {
    pub fn rmse(&self) -> Option<f64> {
        (self.count > 0).then(|| (self.sse / self.count as f64).sqrt())
    }
}

fn pooled<'a>(it: impl IntoIterator<Item = &'a SegmentError>) -> Option<(f64, usize)> {
    let (sse, count) = it
        .into_iter()
        .fold((0.0, 0), |(s, c), e| (s + e.sse, c + e.count));
    (count > 0).then(|| ((sse / count as f64).sqrt(), count))
}

/// Mean absolute deviation of group scores from the overall score.
pub fn m_fair(group_rmse: &[f64], overall: f64) -> Result<f64> {
    if group_rmse.is_empty() {
        return Err(Error::Empty("group list"));
    }
    Ok(group_rmse.iter().map(|r| (r - overall).abs()).sum::<f64>() / group_rmse.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupPooling {
    /// RMSE over every observation of the group's segments.
    #[default]
    Observations,
    /// Mean of the group's per-segment RMSEs.
    Segments,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group: usize,
    pub rmse: f64,
    pub deviation: f64,
    pub segments: usize,
    pub observations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupFairness {
    pub overall_rmse: f64,
    pub m_fair: f64,
    pub groups: Vec<GroupScore>,
    /// Groups without any evaluation observation; left out of the mean.
    pub excluded: Vec<usize>,
}

pub fn group_fairness(
    errors: &[SegmentError],
    groups: &[usize],
    group_count: usize,
    pooling: GroupPooling,
) -> Result<GroupFairness> {
    if errors.len() != groups.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} segment errors vs {} group labels",
            errors.len(),
            groups.len()
        )));
    }
    if let Some(&g) = groups.iter().find(|&&g| g >= group_count) {
        return Err(Error::InvalidConfig(format!("group {g} outside 0..{group_count}")));
    }
    let score = |members: &[&SegmentError]| -> Option<f64> {
        match pooling {
            GroupPooling::Observations => pooled(members.iter().copied()).map(|p| p.0),
            GroupPooling::Segments => {
                let r: Vec<f64> = members.iter().filter_map(|e| e.rmse()).collect();
                (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
            }
        }
    };
    let all: Vec<&SegmentError> = errors.iter().collect();
    let overall = score(&all).ok_or(Error::Empty("evaluation observations"))?;
    let mut scores = Vec::new();
    let mut excluded = Vec::new();
    for g in 0..group_count {
        let members: Vec<&SegmentError> = errors
            .iter()
            .zip(groups)
            .filter(|(_, &k)| k == g)
            .map(|(e, _)| e)
            .collect();
        match score(&members) {
            Some(r) => scores.push(GroupScore {
                group: g,
                rmse: r,
                deviation: r - overall,
                segments: members.iter().filter(|e| e.count > 0).count(),
                observations: members.iter().map(|e| e.count).sum(),
            }),
            None => excluded.push(g),
        }
    }
    let rmses: Vec<f64> = scores.iter().map(|s| s.rmse).collect();
    Ok(GroupFairness {
        overall_rmse: overall,
        m_fair: m_fair(&rmses, overall)?,
        groups: scores,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub rmse: f64,
    pub segments: usize,
    pub observations: usize,
}

impl Window {
    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowScan {
    /// Window starts at `min_s + k·stride·width`.
    Stride(f64),
    /// Every distinct membership a window can have (the dense-stride limit).
    Exhaustive,
}

impl Default for WindowScan {
    fn default() -> Self {
        WindowScan::Stride(0.1)
    }
}

#[inline]
fn inside(s: f64, start: f64, width: f64) -> bool {
    s >= start && s <= start + width
}

struct Axis {
    sorted: Vec<SegmentError>,
    lo: f64,
    hi: f64,
}

fn axis(errors: &[SegmentError], width: f64) -> Result<Axis> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidConfig(format!("window size must be positive, got {width}")));
    }
    let mut sorted: Vec<SegmentError> = errors.iter().filter(|e| e.count > 0).copied().collect();
    if sorted.iter().any(|e| !e.s.is_finite()) {
        return Err(Error::NonFinite("sensitive value".into()));
    }
    if sorted.is_empty() {
        return Err(Error::Empty("windows with observations"));
    }
    sorted.sort_by(|a, b| a.s.total_cmp(&b.s));
    let lo = sorted[0].s;
    let hi = sorted[sorted.len() - 1].s;
    Ok(Axis { sorted, lo, hi })
}

impl Axis {
    fn window_at(&self, start: f64, width: f64) -> Option<Window> {
        let first = self.sorted.partition_point(|e| e.s < start);
        let end = start + width;
        let last = self.sorted.partition_point(|e| e.s <= end);
        if first >= last {
            return None;
        }
        let run = &self.sorted[first..last];
        debug_assert!(run.iter().all(|e| inside(e.s, start, width)));
        pooled(run).map(|(rmse, observations)| Window {
            start,
            end,
            rmse,
            segments: run.len(),
            observations,
        })
    }

    fn stride_starts(&self, width: f64, fraction: f64) -> Vec<f64> {
        let step = fraction * width;
        let mut starts = Vec::new();
        let mut k = 0u64;
        loop {
            let start = self.lo + k as f64 * step;
            starts.push(start);
            if start + width >= self.hi {
                break;
            }
            k += 1;
        }
        starts
    }

    /// Positions where membership can change, plus one interior point of
    /// every gap, restricted to starts in `[lo, max(lo, hi - width)]`.
    fn exhaustive_starts(&self, width: f64) -> Vec<f64> {
        let top = self.lo.max(self.hi - width);
        let mut events: Vec<f64> = self
            .sorted
            .iter()
            .flat_map(|e| [e.s, e.s - width])
            .chain([self.lo, top])
            .filter(|&a| a >= self.lo && a <= top)
            .collect();
        events.sort_by(f64::total_cmp);
        events.dedup();
        let mut starts = Vec::with_capacity(2 * events.len());
        for (k, &a) in events.iter().enumerate() {
            starts.push(a);
            if let Some(&b) = events.get(k + 1) {
                starts.push(0.5 * (a + b));
            }
        }
        starts
    }
}

/// RMSE of every stride window, in order of position; windows without
/// observations are skipped.
pub fn window_curve(errors: &[SegmentError], width: f64, stride_fraction: f64) -> Result<Vec<Window>> {
    if !(stride_fraction > 0.0 && stride_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "window stride must be in (0, 1], got {stride_fraction}"
        )));
    }
    let axis = axis(errors, width)?;
    Ok(axis
        .stride_starts(width, stride_fraction)
        .into_iter()
        .filter_map(|a| axis.window_at(a, width))
        .collect())
}

/// Highest pooled RMSE over windows of the given width; ties go to the
/// leftmost window.
pub fn worst_window(errors: &[SegmentError], width: f64, scan: WindowScan) -> Result<Window> {
    let windows = match scan {
        WindowScan::Stride(fraction) => window_curve(errors, width, fraction)?,
        WindowScan::Exhaustive => {
            let axis = axis(errors, width)?;
            axis.exhaustive_starts(width)
                .into_iter()
                .filter_map(|a| axis.window_at(a, width))
                .collect()
        }
    };
    windows
        .into_iter()
        .fold(None, |best: Option<Window>, w| match best {
            Some(b) if b.rmse >= w.rmse => Some(b),
            _ => Some(w),
        })
        .ok_or(Error::Empty("windows with observations"))
}
