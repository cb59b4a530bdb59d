//! Data preparation, time splits and the training loop with per-epoch
//! neighborhood resampling and early stopping.

use std::fmt;
use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::basin::{SegmentSeries, SyntheticBasin, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::graph::{self, BasinGraph, GroupPartition, PredictionGraph};
use crate::influence::{self, FlowTable, InfluenceMode, InfluenceTable};
use crate::metrics::SegmentError;
use crate::model::{self, FeatureCube, ModelConfig, ModelState, Observation};
use crate::rng;
use crate::sampler::{self, Neighborhoods, SamplerConfig, SamplerInputs};

/// Contiguous, ordered day ranges; together they cover `0..days`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

/// The first `round(days · train_fraction)` days form the training period,
/// whose last third is held out for validation; the rest is the test period.
pub fn split(days: usize, train_fraction: f64) -> Result<Split> {
    if days < 3 {
        return Err(Error::InvalidConfig(format!("need at least 3 days to split, got {days}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let period = (days as f64 * train_fraction).round() as usize;
    let validation = (period as f64 / 3.0).round() as usize;
    let s = Split {
        train: 0..period.saturating_sub(validation),
        validation: period.saturating_sub(validation)..period,
        test: period..days,
    };
    if s.train.is_empty() || s.validation.is_empty() || s.test.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{days} days with train_fraction {train_fraction} leave an empty split"
        )));
    }
    Ok(s)
}

fn default_epochs() -> usize {
    100
}
fn default_batch_nodes() -> usize {
    32
}
fn default_sequence_length() -> usize {
    365
}
fn default_train_fraction() -> f64 {
    2.0 / 3.0
}
fn default_seeds() -> Vec<u64> {
    vec![1, 5, 85, 500, 1000]
}
fn default_learning_rate() -> f64 {
    0.001
}
fn default_patience() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_nodes")]
    pub batch_nodes: usize,
    /// Training days per mini-batch; the recurrent state restarts at zero at
    /// the start of each window.
    #[serde(default = "default_sequence_length")]
    pub sequence_length: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            batch_nodes: default_batch_nodes(),
            sequence_length: default_sequence_length(),
            train_fraction: default_train_fraction(),
            seeds: default_seeds(),
            learning_rate: default_learning_rate(),
            patience: default_patience(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_nodes == 0 || self.sequence_length == 0 {
            return bad("batch_nodes and sequence_length must be >= 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must be in (0,1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default)]
    pub hop_limit: Option<usize>,
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default = "default_influence_mode")]
    pub influence_mode: InfluenceMode,
}

fn default_influence_mode() -> InfluenceMode {
    InfluenceMode::Averaged
}

impl GraphConfig {
    pub fn new(thresholds: Vec<f64>) -> Self {
        GraphConfig {
            hop_limit: None,
            thresholds,
            labels: None,
            influence_mode: default_influence_mode(),
        }
    }
}

/// Everything the pipeline needs from a basin, whether generated in memory
/// or read back from a bundle.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: BasinGraph,
    pub series: Vec<SegmentSeries>,
    pub sensitive: Vec<f64>,
}

impl From<SyntheticBasin> for Dataset {
    fn from(b: SyntheticBasin) -> Self {
        Dataset {
            graph: b.graph,
            series: b.series,
            sensitive: b.sensitive,
        }
    }
}

impl Dataset {
    pub fn days(&self) -> usize {
        self.series.first().map_or(0, SegmentSeries::days)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.len();
        if self.series.len() != n || self.sensitive.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} segments, {} series, {} sensitive values",
                n,
                self.series.len(),
                self.sensitive.len()
            )));
        }
        let days = self.days();
        for (ix, s) in self.series.iter().enumerate() {
            let id = self.graph.id(ix);
            if s.days() != days
                || s.features.len() != days * FEATURE_COUNT
                || s.flow_observed.len() != days
                || s.flow_simulated.len() != days
                || s.temp.len() != days
                || s.temp_observed.len() != days
            {
                return Err(Error::DimensionMismatch(format!("segment {id}: ragged series")));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("segment {id}: feature value")));
            }
            if let Some(d) = (0..days).find(|&d| s.temp_observed[d] && !s.temp[d].is_finite()) {
                return Err(Error::NonFinite(format!("segment {id}: observed temperature on day {d}")));
            }
        }
        if self.sensitive.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sensitive value".into()));
        }
        Ok(())
    }

    pub fn flow_table(&self) -> Result<FlowTable> {
        let observed: Vec<Vec<f64>> = self.series.iter().map(|s| s.flow.clone()).collect();
        let mask: Vec<Vec<bool>> = self.series.iter().map(|s| s.flow_observed.clone()).collect();
        let simulated: Vec<Vec<f64>> = self.series.iter().map(|s| s.flow_simulated.clone()).collect();
        influence::fill_flow(self.graph.segments(), &observed, &mask, &simulated)
    }
}

/// Per-feature affine standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    fn fit(columns: usize, rows: impl Iterator<Item = Vec<f64>>) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; columns];
        let mut m2 = vec![0.0; columns];
        for row in rows {
            n += 1;
            for k in 0..columns {
                let delta = row[k] - mean[k];
                mean[k] += delta / n as f64;
                m2[k] += delta * (row[k] - mean[k]);
            }
        }
        let std = m2
            .iter()
            .map(|&v| {
                let s = if n > 0 { (v / n as f64).sqrt() } else { 0.0 };
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, k: usize, v: f64) -> f64 {
        (v - self.mean[k]) / self.std[k]
    }

    pub fn invert(&self, k: usize, v: f64) -> f64 {
        v * self.std[k] + self.mean[k]
    }
}

/// Model-ready view of a dataset: prediction graph, influence, groups,
/// standardized inputs and per-node observations.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub pgraph: PredictionGraph,
    pub influence_table: InfluenceTable,
    /// Influence per prediction-graph edge as seen by the sampler.
    pub influence: Vec<f64>,
    pub partition: GroupPartition,
    pub sensitive: Vec<f64>,
    pub split: Split,
    pub features: Standardizer,
    pub target: Standardizer,
    pub cube: FeatureCube,
    pub feature_summary: Vec<Vec<f64>>,
    /// Observed `(day, °C)` per node.
    pub observations: Vec<Vec<(usize, f64)>>,
}

pub fn prepare(
    data: &Dataset,
    graph_cfg: &GraphConfig,
    sampler_cfg: &SamplerConfig,
    train_fraction: f64,
) -> Result<Prepared> {
    data.validate()?;
    let days = data.days();
    let split = split(days, train_fraction)?;
    let pgraph = graph::expand_multihop(&data.graph, graph_cfg.hop_limit)?;
    let flows = data.flow_table()?;
    let mode = if sampler_cfg.influence_window.is_some() {
        InfluenceMode::PerStep
    } else {
        graph_cfg.influence_mode
    };
    let influence_table = influence::build_table(&pgraph, &flows, mode)?;
    let influence = match sampler_cfg.influence_window {
        Some([a, b]) => influence_table.window_mean(a..b)?,
        None => influence_table.averaged().to_vec(),
    };
    let partition = graph::discretize(&data.sensitive, &graph_cfg.thresholds, graph_cfg.labels.clone())?;

    let n = data.graph.len();
    let train_days = split.train.clone();
    let features = Standardizer::fit(
        FEATURE_COUNT,
        data.series
            .iter()
            .flat_map(|s| train_days.clone().map(move |d| s.feature_row(d).to_vec())),
    );
    let target = Standardizer::fit(
        1,
        data.series.iter().flat_map(|s| {
            train_days
                .clone()
                .filter(move |&d| s.temp_observed[d])
                .map(move |d| vec![s.temp[d]])
        }),
    );
    let mut cube_data = Vec::with_capacity(n * days * FEATURE_COUNT);
    for s in &data.series {
        for d in 0..days {
            for (k, &v) in s.feature_row(d).iter().enumerate() {
                cube_data.push(features.apply(k, v));
            }
        }
    }
    let cube = FeatureCube::new(n, days, FEATURE_COUNT, cube_data)?;
    let feature_summary = (0..n)
        .map(|node| {
            let mut acc = [0.0; FEATURE_COUNT];
            for d in train_days.clone() {
                let row = cube.series(node, d..d + 1);
                for k in 0..FEATURE_COUNT {
                    acc[k] += row[k];
                }
            }
            acc.iter().map(|v| v / train_days.len() as f64).collect()
        })
        .collect();
    let observations: Vec<Vec<(usize, f64)>> = data
        .series
        .iter()
        .map(|s| (0..days).filter(|&d| s.temp_observed[d]).map(|d| (d, s.temp[d])).collect())
        .collect();
    for (name, range) in [
        ("training", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        if !observations.iter().flatten().any(|(d, _)| range.contains(d)) {
            return Err(Error::InvalidConfig(format!("the {name} period has no temperature observations")));
        }
    }
    Ok(Prepared {
        pgraph,
        influence_table,
        influence,
        partition,
        sensitive: data.sensitive.clone(),
        split,
        features,
        target,
        cube,
        feature_summary,
        observations,
    })
}

impl Prepared {
    pub fn node_count(&self) -> usize {
        self.cube.nodes
    }

    pub fn sampler_inputs(&self) -> SamplerInputs<'_> {
        SamplerInputs {
            pgraph: &self.pgraph,
            influence: &self.influence,
            groups: &self.partition.membership,
            sensitive: &self.sensitive,
            feature_summary: &self.feature_summary,
        }
    }

    pub fn neighborhoods(&self, cfg: &SamplerConfig, epoch: u64) -> Neighborhoods {
        sampler::sample_all(&self.sampler_inputs(), cfg, epoch)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(FEATURE_COUNT)
    }

    /// Predictions in °C for every node on days `0..end`, running the
    /// recurrent encoder from the first day.
    pub fn predict(&self, state: &ModelState, hoods: &Neighborhoods, end: usize) -> Result<Vec<Vec<f64>>> {
        let pools = pooling_lists(hoods);
        let raw = model::predict_all(state, &self.cube, &pools, 0..end)?;
        Ok(raw
            .into_iter()
            .map(|row| row.into_iter().map(|v| self.target.invert(0, v)).collect())
            .collect())
    }

    /// Squared-error totals per segment over observed days in `days`.
    pub fn segment_errors(&self, predictions: &[Vec<f64>], days: Range<usize>) -> Vec<SegmentError> {
        self.observations
            .iter()
            .enumerate()
            .map(|(node, obs)| {
                let (sse, count) = obs
                    .iter()
                    .filter(|(d, _)| days.contains(d))
                    .fold((0.0, 0), |(s, c), &(d, y)| {
                        let e = predictions[node][d] - y;
                        (s + e * e, c + 1)
                    });
                SegmentError {
                    s: self.sensitive[node],
                    sse,
                    count,
                }
            })
            .collect()
    }
}

pub fn pooling_lists(hoods: &Neighborhoods) -> Vec<Vec<(usize, f64)>> {
    hoods
        .iter()
        .map(|h| h.neighbors.iter().map(|n| (n.source, n.weight)).collect())
        .collect()
}

fn pooled_rmse(errors: &[SegmentError]) -> Result<f64> {
    let (sse, count) = errors.iter().fold((0.0, 0), |(s, c), e| (s + e.sse, c + e.count));
    if count == 0 {
        return Err(Error::Empty("evaluation observations"));
    }
    Ok((sse / count as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss in standardized units.
    pub train_loss: f64,
    pub train_rmse: f64,
    pub validation_rmse: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial_train_rmse: f64,
    pub initial_validation_rmse: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_rmse: f64,
    pub stopped_early: bool,
}

/// Training failure with the history recorded up to that point.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub history: History,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} epochs)", self.error, self.history.epochs.len())
    }
}

impl std::error::Error for TrainFailure {}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        f.error
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub state: ModelState,
    pub history: History,
    /// Neighborhoods sampled in the best epoch.
    pub neighborhoods: Neighborhoods,
}

struct Batch {
    nodes: Vec<usize>,
    window: Range<usize>,
}

fn batches(data: &Prepared, cfg: &TrainConfig, seed: u64, epoch: u64) -> Vec<Batch> {
    let mut rng = rng::stream(seed, &[rng::TAG_BATCH, epoch]);
    let mut nodes: Vec<usize> = (0..data.node_count())
        .filter(|&n| data.observations[n].iter().any(|(d, _)| data.split.train.contains(d)))
        .collect();
    nodes.shuffle(&mut rng);
    let train = data.split.train.clone();
    let windows: Vec<Range<usize>> = train
        .clone()
        .step_by(cfg.sequence_length)
        .map(|a| a..(a + cfg.sequence_length).min(train.end))
        .collect();
    let mut out: Vec<Batch> = nodes
        .chunks(cfg.batch_nodes)
        .flat_map(|chunk| {
            windows.iter().map(move |w| Batch {
                nodes: chunk.to_vec(),
                window: w.clone(),
            })
        })
        .collect();
    out.shuffle(&mut rng);
    out
}

/// Trains one model; `sampler.seed` is replaced by `seed`.
pub fn train(
    data: &Prepared,
    model_cfg: &ModelConfig,
    sampler_cfg: &SamplerConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainFailure> {
    let mut history = History::default();
    let fail = |error: Error, history: &History| TrainFailure {
        error,
        history: history.clone(),
    };
    let setup = || -> Result<ModelState> {
        cfg.validate()?;
        sampler_cfg.validate()?;
        if model_cfg.feature_dim != data.cube.dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, data has {}",
                model_cfg.feature_dim, data.cube.dim
            )));
        }
        ModelState::new(model_cfg.clone(), seed, cfg.learning_rate)
    };
    let mut state = setup().map_err(|e| fail(e, &history))?;
    let sampler_cfg = SamplerConfig {
        seed,
        ..sampler_cfg.clone()
    };

    let evaluate = |state: &ModelState, hoods: &Neighborhoods| -> Result<(f64, f64)> {
        let preds = data.predict(state, hoods, data.split.validation.end)?;
        let train = pooled_rmse(&data.segment_errors(&preds, data.split.train.clone()))?;
        let validation = pooled_rmse(&data.segment_errors(&preds, data.split.validation.clone()))?;
        Ok((train, validation))
    };

    let first = data.neighborhoods(&sampler_cfg, 0);
    let (t0, v0) = evaluate(&state, &first).map_err(|e| fail(e, &history))?;
    history.initial_train_rmse = t0;
    history.initial_validation_rmse = v0;
    history.best_validation_rmse = f64::INFINITY;
    let mut best = (state.clone(), first.clone());
    let mut hoods = first;
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        if epoch > 0 {
            hoods = data.neighborhoods(&sampler_cfg, epoch as u64);
        }
        let pools = pooling_lists(&hoods);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for batch in batches(data, cfg, seed, epoch as u64) {
            let obs: Vec<Observation> = batch
                .nodes
                .iter()
                .flat_map(|&node| {
                    data.observations[node]
                        .iter()
                        .filter(|(d, _)| batch.window.contains(d))
                        .map(move |&(day, y)| Observation {
                            node,
                            day,
                            value: data.target.apply(0, y),
                        })
                })
                .collect();
            if obs.is_empty() {
                continue;
            }
            let (loss, grad) = model::loss_and_gradient(&state, &data.cube, &pools, batch.window.clone(), &obs)
                .map_err(|e| fail(e, &history))?;
            state.step(&grad).map_err(|e| fail(e, &history))?;
            loss_sum += loss;
            steps += 1;
        }
        let (train_rmse, validation_rmse) = evaluate(&state, &hoods).map_err(|e| fail(e, &history))?;
        if !validation_rmse.is_finite() {
            return Err(fail(
                Error::NonFinite(format!("validation RMSE diverged in epoch {epoch}")),
                &history,
            ));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
            train_rmse,
            validation_rmse,
        });
        if validation_rmse < history.best_validation_rmse {
            history.best_validation_rmse = validation_rmse;
            history.best_epoch = epoch;
            best = (state.clone(), hoods.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        state: best.0,
        history,
        neighborhoods: best.1,
    })
}

/// Test-period predictions and per-segment errors of a trained model.
pub fn evaluate_test(data: &Prepared, state: &ModelState, hoods: &Neighborhoods) -> Result<Vec<SegmentError>> {
    let preds = data.predict(state, hoods, data.split.test.end)?;
    Ok(data.segment_errors(&preds, data.split.test.clone()))
}
