//! The four commands: generate a bundle, train, evaluate a checkpoint and run
//! the sampler ablation. Each reads one [`RunConfig`] and writes its outputs
//! deterministically, overwriting earlier runs.

use std::fs;
use std::path::{Path, PathBuf};

use crate::basin;
use crate::bundle;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::{self, EvaluationConfig, FairnessReport, SeedReport};
use crate::report::{self, Checkpoint, RunReport, CHECKPOINT_SCHEMA_VERSION, REPORT_SCHEMA_VERSION};
use crate::sampler::{self, SamplerConfig, SamplerMode};
use crate::train::{self, Dataset, Prepared};

pub const REPORT_FILE: &str = "report.json";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSummary {
    pub segments: usize,
    pub edges: usize,
    pub days: usize,
    pub temperature_observations: usize,
    pub flow_observations: usize,
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    cfg.validate()?;
    let data: Dataset = basin::generate(&cfg.basin)?.into();
    bundle::write_bundle(&cfg.bundle_dir, &data)?;
    let count = |f: fn(&basin::SegmentSeries) -> &Vec<bool>| {
        data.series.iter().map(|s| f(s).iter().filter(|&&b| b).count()).sum()
    };
    Ok(GenerateSummary {
        segments: data.graph.len(),
        edges: data.graph.edges().len(),
        days: data.days(),
        temperature_observations: count(|s| &s.temp_observed),
        flow_observations: count(|s| &s.flow_observed),
    })
}

struct Loaded {
    prepared: Prepared,
    bundle_digest: String,
}

fn load(cfg: &RunConfig, sampler_cfg: &SamplerConfig) -> Result<Loaded> {
    let data = bundle::read_bundle(&cfg.bundle_dir)?;
    let bundle_digest = bundle::bundle_digest(&cfg.bundle_dir)?;
    let prepared = train::prepare(&data, &cfg.graph, sampler_cfg, cfg.train.train_fraction)?;
    Ok(Loaded {
        prepared,
        bundle_digest,
    })
}

fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

/// Per-seed CSV tables and plots.
fn write_seed_artifacts(dir: &Path, rep: &SeedReport, labels: &[String], digest: &str) -> Result<()> {
    let m = &rep.metrics;
    write(&dir.join("per_segment_rmse.csv"), &report::per_segment_csv(m))?;
    write(&dir.join("window_curve.csv"), &report::window_curve_csv(m))?;
    let title = format!("seed {}", rep.seed);
    write(&dir.join("rmse_curve.svg"), &report::rmse_curve_svg(m, &title, digest))?;
    write(
        &dir.join("group_deviation.svg"),
        &report::group_deviation_svg(m, labels, &title, digest),
    )
}

fn write_audit(cfg: &RunConfig, data: &Prepared, out: &Path) -> Result<()> {
    if cfg.audit.prediction_graph {
        write(&out.join("audit").join("pgraph.json"), &data.pgraph.to_json())?;
    }
    if cfg.audit.influence {
        write(&out.join("audit").join("influence.csv"), &data.influence_table.to_csv(&data.pgraph))?;
    }
    Ok(())
}

/// Trains every seed of one sampler mode and writes checkpoints, tables and
/// plots under `out`. Successful seeds are written even when others fail;
/// the first failure is then returned.
fn train_mode(cfg: &RunConfig, mode: SamplerMode, out: &Path) -> Result<(FairnessReport, Option<Error>)> {
    let mut run_cfg = cfg.clone();
    run_cfg.sampler.mode = mode;
    let sampler_cfg = run_cfg.sampler.clone();
    let loaded = load(&run_cfg, &sampler_cfg)?;
    let data = &loaded.prepared;
    write_audit(&run_cfg, data, out)?;
    let model_cfg = run_cfg.model.model_config();
    let (fairness, runs) = experiment::multi_seed(data, &model_cfg, &sampler_cfg, &run_cfg.train, &run_cfg.evaluation)?;
    let digest = run_cfg.digest();
    let mut first_error = None;
    for (seed, run) in runs {
        let (outcome, rep) = match run {
            Ok(ok) => ok,
            Err(e) => {
                first_error.get_or_insert(e);
                continue;
            }
        };
        let dir = seed_dir(out, seed);
        let checkpoint = Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            seed,
            mode,
            history: outcome.history.clone(),
            config_digest: digest.clone(),
            bundle_digest: loaded.bundle_digest.clone(),
            config: run_cfg.clone(),
            model: outcome.state,
        };
        write(&dir.join(CHECKPOINT_FILE), &checkpoint.to_json())?;
        write_seed_artifacts(&dir, &rep, &data.partition.labels, &digest)?;
        if run_cfg.audit.neighborhoods {
            let epoch = outcome.history.best_epoch as u64;
            write(
                &dir.join(format!("neighborhoods_epoch{epoch}.json")),
                &sampler::neighborhoods_json(&outcome.neighborhoods, data.pgraph.segments(), mode, epoch),
            )?;
        }
    }
    Ok((fairness, first_error))
}

fn run_report(command: &str, cfg: &RunConfig, bundle_digest: String, results: Vec<FairnessReport>) -> RunReport {
    RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: command.to_string(),
        config_digest: cfg.digest(),
        bundle_digest,
        config: cfg.clone(),
        results,
    }
}

/// Trains the configured sampler mode over all seeds and writes
/// `report.json` plus one directory per seed.
pub fn cmd_train(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let (fairness, failure) = train_mode(cfg, cfg.sampler.mode, out)?;
    let report = run_report("train", cfg, bundle::bundle_digest(&cfg.bundle_dir)?, vec![fairness]);
    write(&out.join(REPORT_FILE), &report.to_json())?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Runs every ablation mode under the same seeds and writes a side-by-side
/// table. Models of different modes start from identical parameters because
/// initialization depends on the seed only.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let mut results = Vec::new();
    let mut failure = None;
    for &mode in &cfg.ablation.modes {
        let (fairness, err) = train_mode(cfg, mode, &out.join(mode.name()))?;
        results.push(fairness);
        if let Some(e) = err {
            failure.get_or_insert(e);
        }
    }
    write(
        &out.join(ABLATION_FILE),
        &report::ablation_csv(&results, &cfg.evaluation.window_sizes),
    )?;
    let report = run_report("ablate", cfg, bundle::bundle_digest(&cfg.bundle_dir)?, results);
    write(&out.join(REPORT_FILE), &report.to_json())?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

/// Recomputes the test metrics of a checkpoint on `bundle_dir`, rebuilding
/// the neighborhoods of its best epoch. The bundle must hash to the value
/// recorded at training time.
pub fn cmd_evaluate(
    checkpoint: &Checkpoint,
    bundle_dir: &Path,
    window_sizes: Option<Vec<f64>>,
    out: &Path,
) -> Result<RunReport> {
    let digest = bundle::bundle_digest(bundle_dir)?;
    if digest != checkpoint.bundle_digest {
        return Err(Error::HashMismatch(format!(
            "bundle {} hashes to {digest}, checkpoint was trained on {}",
            bundle_dir.display(),
            checkpoint.bundle_digest
        )));
    }
    let mut cfg = checkpoint.config.clone();
    cfg.bundle_dir = bundle_dir.to_path_buf();
    let eval_cfg = EvaluationConfig {
        window_sizes: window_sizes.unwrap_or_else(|| cfg.evaluation.window_sizes.clone()),
        ..cfg.evaluation.clone()
    };
    eval_cfg.validate()?;
    let sampler_cfg = SamplerConfig {
        seed: checkpoint.seed,
        ..cfg.sampler.clone()
    };
    let loaded = load(&cfg, &sampler_cfg)?;
    let data = &loaded.prepared;
    let hoods = data.neighborhoods(&sampler_cfg, checkpoint.history.best_epoch as u64);
    let metrics = experiment::evaluate(data, &checkpoint.model, &hoods, &eval_cfg)?;
    let rep = SeedReport {
        seed: checkpoint.seed,
        metrics,
        history: checkpoint.history.clone(),
    };
    write_seed_artifacts(out, &rep, &data.partition.labels, &checkpoint.config_digest)?;
    let aggregate = experiment::aggregate(std::slice::from_ref(&rep), &eval_cfg.window_sizes);
    let fairness = FairnessReport {
        mode: checkpoint.mode,
        seeds: vec![checkpoint.seed],
        per_seed: vec![rep],
        failures: Vec::new(),
        aggregate,
    };
    let report = run_report("evaluate", &checkpoint.config, digest, vec![fairness]);
    write(&out.join(EVALUATION_FILE), &report.to_json())?;
    Ok(report)
}
