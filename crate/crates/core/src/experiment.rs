//! Fairness evaluation of trained models and aggregation over seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SegmentId;
use crate::metrics::{self, GroupFairness, GroupPooling, SegmentError, Window, WindowScan};
use crate::model::{ModelConfig, ModelState};
use crate::sampler::{Neighborhoods, SamplerConfig, SamplerMode};
use crate::train::{self, History, Prepared, TrainConfig, TrainOutcome};


fn default_window_sizes() -> Vec<f64> {
    vec![1000.0, 3000.0, 5000.0]
}
fn default_stride() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "default_window_sizes")]
    pub window_sizes: Vec<f64>,
    /// Window stride as a fraction of the window width.
    #[serde(default = "default_stride")]
    pub stride: f64,
    #[serde(default)]
    pub group_pooling: GroupPooling,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            window_sizes: default_window_sizes(),
            stride: default_stride(),
            group_pooling: GroupPooling::default(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_sizes.is_empty() || self.window_sizes.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig("window_sizes must be positive and non-empty".into()));
        }
        if !(self.stride > 0.0 && self.stride <= 1.0) {
            return Err(Error::InvalidConfig("stride must be in (0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub segment_id: SegmentId,
    pub s_value: f64,
    pub group: String,
    pub observations: usize,
    /// Absent for segments without test observations.
    pub rmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window_size: f64,
    pub worst: Window,
    pub curve: Vec<Window>,
}

/// Test-period metrics of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall_rmse: f64,
    pub fairness: GroupFairness,
    pub windows: Vec<WindowResult>,
    pub segments: Vec<SegmentRecord>,
}

impl Metrics {
    pub fn worst_window_rmse(&self) -> Vec<f64> {
        self.windows.iter().map(|w| w.worst.rmse).collect()
    }
}

pub fn compute_metrics(data: &Prepared, errors: &[SegmentError], cfg: &EvaluationConfig) -> Result<Metrics> {
    cfg.validate()?;
    let fairness = metrics::group_fairness(
        errors,
        &data.partition.membership,
        data.partition.group_count(),
        cfg.group_pooling,
    )?;
    let (sse, count) = errors.iter().fold((0.0, 0), |(s, c), e| (s + e.sse, c + e.count));
    let pooled = (sse / count as f64).sqrt();
    let windows = cfg
        .window_sizes
        .iter()
        .map(|&w| {
            Ok(WindowResult {
                window_size: w,
                worst: metrics::worst_window(errors, w, WindowScan::Stride(cfg.stride))?,
                curve: metrics::window_curve(errors, w, cfg.stride)?,
            })
        })
        .collect::<Result<_>>()?;
    let segments = errors
        .iter()
        .enumerate()
        .map(|(node, e)| SegmentRecord {
            segment_id: data.pgraph.segments()[node],
            s_value: e.s,
            group: data.partition.labels[data.partition.membership[node]].clone(),
            observations: e.count,
            rmse: e.rmse(),
        })
        .collect();
    Ok(Metrics {
        overall_rmse: pooled,
        fairness,
        windows,
        segments,
    })
}

pub fn evaluate(
    data: &Prepared,
    state: &ModelState,
    hoods: &Neighborhoods,
    cfg: &EvaluationConfig,
) -> Result<Metrics> {
    let errors = train::evaluate_test(data, state, hoods)?;
    compute_metrics(data, &errors, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub metrics: Metrics,
    pub history: History,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        Some(Summary {
            mean: values.iter().sum::<f64>() / m as f64,
            median,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds: usize,
    pub overall_rmse: Summary,
    pub m_fair: Summary,
    /// One entry per configured window size.
    pub worst_window_rmse: Vec<(f64, Summary)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub mode: SamplerMode,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedReport>,
    pub failures: Vec<SeedFailure>,
    pub aggregate: Option<Aggregate>,
}

pub fn aggregate(per_seed: &[SeedReport], window_sizes: &[f64]) -> Option<Aggregate> {
    let rmse: Vec<f64> = per_seed.iter().map(|r| r.metrics.overall_rmse).collect();
    let fair: Vec<f64> = per_seed.iter().map(|r| r.metrics.fairness.m_fair).collect();
    Some(Aggregate {
        seeds: per_seed.len(),
        overall_rmse: Summary::of(&rmse)?,
        m_fair: Summary::of(&fair)?,
        worst_window_rmse: window_sizes
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let v: Vec<f64> = per_seed.iter().map(|r| r.metrics.windows[k].worst.rmse).collect();
                Summary::of(&v).map(|s| (w, s))
            })
            .collect::<Option<_>>()?,
    })
}

/// Result of one seed: the trained model (if training succeeded) and its
/// report entry.
pub type SeedRun = (u64, Result<(TrainOutcome, SeedReport)>);

pub fn run_seed(
    data: &Prepared,
    model_cfg: &ModelConfig,
    sampler_cfg: &SamplerConfig,
    train_cfg: &TrainConfig,
    eval_cfg: &EvaluationConfig,
    seed: u64,
) -> Result<(TrainOutcome, SeedReport)> {
    let outcome = train::train(data, model_cfg, sampler_cfg, train_cfg, seed)?;
    let metrics = evaluate(data, &outcome.state, &outcome.neighborhoods, eval_cfg)?;
    let report = SeedReport {
        seed,
        metrics,
        history: outcome.history.clone(),
    };
    Ok((outcome, report))
}

/// Trains and evaluates every configured seed. Seeds run in parallel; each
/// run is deterministic on its own, so results do not depend on the thread
/// count.
pub fn multi_seed(
    data: &Prepared,
    model_cfg: &ModelConfig,
    sampler_cfg: &SamplerConfig,
    train_cfg: &TrainConfig,
    eval_cfg: &EvaluationConfig,
) -> Result<(FairnessReport, Vec<SeedRun>)> {
    train_cfg.validate()?;
    eval_cfg.validate()?;
    let runs: Vec<SeedRun> = train_cfg
        .seeds
        .par_iter()
        .map(|&seed| (seed, run_seed(data, model_cfg, sampler_cfg, train_cfg, eval_cfg, seed)))
        .collect();
    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    for (seed, run) in &runs {
        match run {
            Ok((_, report)) => per_seed.push(report.clone()),
            Err(e) => failures.push(SeedFailure {
                seed: *seed,
                error: e.to_string(),
            }),
        }
    }
    let aggregate = aggregate(&per_seed, &eval_cfg.window_sizes);
    Ok((
        FairnessReport {
            mode: sampler_cfg.mode,
            seeds: train_cfg.seeds.clone(),
            per_seed,
            failures,
            aggregate,
        },
        runs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_hand_values() {
        let s = Summary::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.median), (2.0, 2.0));
        let s = Summary::of(&[4.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.median), (2.5, 2.5));
        assert!(Summary::of(&[]).is_none());
    }
}
