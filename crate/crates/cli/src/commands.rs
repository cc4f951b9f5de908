use std::path::{Path, PathBuf};

use culture_bridge::dlirl::{
    calibrate_culture, closed_form_culture, model_from_json, model_to_json, train_archetype, ArchetypeModel,
    CultureVector, DlirlError, EpochLoss,
};
use culture_bridge::featurize::{extract_samples, subsample_windows, write_sample_dump, ActionSample, SceneIndex};
use culture_bridge::metrics::{build_report, case_report, write_density_csvs, CaseReport, EvaluationReport, Variable};
use culture_bridge::rollout::{
    export_trace, run_rollout_with, substitute_tracks, ModelDriver, RolloutConfig, RolloutResult, WARMUP_FRAMES,
};
use culture_bridge::synth::{gen_world, presets, CultureSpec, GroundTruthFeatureMap};
use culture_bridge::trajectory::{
    import_highd_like, import_ngsim_like, parse_canonical_csv, sample_fraction, write_canonical_csv, TrajectoryDataset,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{InputFormat, Mode, RunConfig};
use crate::digest::section_digest;
use crate::error::{CliError, Result};
use crate::plot::density_svg;

pub const WORLD_CSV: &str = "world.csv";
pub const CULTURE_JSON: &str = "culture.json";
pub const DATASET_CSV: &str = "dataset.csv";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const MODEL_JSON: &str = "model.json";
pub const TRAINING_JSON: &str = "training.json";
pub const CALIBRATION_JSON: &str = "calibration.json";
pub const ROLLOUT_DIR: &str = "rollouts";
pub const SIMULATED_CSV: &str = "simulated.csv";
pub const CASES_JSON: &str = "cases.json";
pub const REPORT_JSON: &str = "report.json";
pub const PLOT_DIR: &str = "plots";

/// Model-file section holding every network coefficient.
pub const NETWORK_SECTION: &str = "branches";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub samples: usize,
    pub best_epoch: usize,
    pub loss_curve: Vec<EpochLoss>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub mode: Mode,
    pub samples: usize,
    pub steps: usize,
    pub final_update_norm: f64,
    /// Calibration loss; absent when no fitting ran.
    pub loss: Option<f64>,
    /// Largest |w - w_ls| against the exact least-squares culture, when the
    /// design has full rank.
    pub closed_form_gap: Option<f64>,
    pub network_digest_before: String,
    pub network_digest_after: String,
    pub culture: CultureVector,
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.paths.output.as_path();
    std::fs::create_dir_all(dir).map_err(CliError::output(dir))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(CliError::output(parent))?;
    }
    std::fs::write(path, text).map_err(CliError::output(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(value).expect("output serializes") + "\n"),
    )
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn load_culture_spec(cfg: &RunConfig) -> Result<CultureSpec> {
    match &cfg.paths.culture {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read culture spec {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
        None => match cfg.synth.preset.as_str() {
            "culture_a" => Ok(presets::culture_a()),
            "culture_b" => Ok(presets::culture_b()),
            other => Err(CliError::Config(format!(
                "synth.preset: unknown preset `{other}` (expected culture_a or culture_b)"
            ))),
        },
    }
}

/// Generates a synthetic world and writes it as canonical CSV plus sidecar,
/// together with the culture spec that drove it.
pub fn synth(cfg: &RunConfig) -> Result<PathBuf> {
    let spec = load_culture_spec(cfg)?;
    spec.validate()?;
    let map = GroundTruthFeatureMap::new(cfg.synth.map_seed);
    let ds = gen_world(&spec, &map, cfg.synth.n_tracks, cfg.synth.duration, cfg.seed)?;
    let dir = output_dir(cfg)?;
    let csv = dir.join(WORLD_CSV);
    write_canonical_csv(&ds, &csv).map_err(|e| CliError::Data(e.to_string()))?;
    write_json(&dir.join(CULTURE_JSON), &spec)?;
    info!("wrote {} tracks to {}", ds.tracks.len(), csv.display());
    Ok(csv)
}

/// Normalizes a raw dataset to the canonical schema, optionally keeping a
/// seeded share of its tracks.
pub fn ingest(cfg: &RunConfig) -> Result<PathBuf> {
    let input = cfg.require_data()?;
    let ds = match cfg.ingest.format {
        InputFormat::Canonical => parse_canonical_csv(input)?,
        InputFormat::Highd => import_highd_like(input)?,
        InputFormat::Ngsim => import_ngsim_like(input)?,
    };
    let ds = if cfg.fraction < 1.0 {
        sample_fraction(&ds, cfg.fraction, cfg.seed)?
    } else {
        ds
    };
    ds.validate()?;
    let dir = output_dir(cfg)?;
    let csv = dir.join(DATASET_CSV);
    write_canonical_csv(&ds, &csv).map_err(|e| CliError::Data(e.to_string()))?;
    if cfg.ingest.dump_samples {
        let dump = dir.join(SAMPLES_CSV);
        write_sample_dump(&extract_samples(&ds), &dump).map_err(|e| CliError::Output {
            path: dump.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
    }
    info!("ingested {} tracks into {}", ds.tracks.len(), csv.display());
    Ok(csv)
}

fn load_dataset(path: &Path) -> Result<TrajectoryDataset> {
    Ok(parse_canonical_csv(path)?)
}

/// Windows of `path`, reduced to the configured seeded share.
fn load_samples(cfg: &RunConfig, path: &Path) -> Result<Vec<ActionSample>> {
    let ds = load_dataset(path)?;
    let samples = extract_samples(&ds);
    if cfg.fraction < 1.0 {
        Ok(subsample_windows(&samples, cfg.fraction, cfg.seed)?)
    } else {
        Ok(samples)
    }
}

/// Trains an archetype with the culture vector fixed at all-ones.
pub fn train(cfg: &RunConfig) -> Result<PathBuf> {
    let samples = load_samples(cfg, cfg.require_data()?)?;
    let run = train_archetype(&samples, &cfg.training)?;
    let dir = output_dir(cfg)?;
    let path = dir.join(MODEL_JSON);
    write_text(&path, &model_to_json(&run.model, &CultureVector::ones()))?;
    write_json(
        &dir.join(TRAINING_JSON),
        &TrainingSummary {
            samples: samples.len(),
            best_epoch: run.best_epoch,
            loss_curve: run.loss_curve,
        },
    )?;
    info!("trained on {} windows, best epoch {}", samples.len(), run.best_epoch);
    Ok(path)
}

/// Re-estimates the culture vector of a source model on target data and
/// writes a model file whose network section is unchanged.
pub fn calibrate(cfg: &RunConfig) -> Result<CalibrationSummary> {
    if cfg.mode == Mode::Localized {
        return Err(CliError::Config(
            "mode localized trains on the target data directly; calibrate needs mode direct or cross-cultural".into(),
        ));
    }
    let source = read_text(cfg.require_model()?)?;
    let before = section_digest(&source, NETWORK_SECTION)?;
    let (model, culture) = model_from_json(&source)?;

    let (culture, samples, steps, norm, loss, gap) = match cfg.mode {
        Mode::CrossCultural => {
            let samples = load_samples(cfg, cfg.require_data()?)?;
            let run = calibrate_culture(&model, &samples, &cfg.training)?;
            let gap = match closed_form_culture(&model, &samples) {
                Ok(exact) => Some(run.culture.linf_distance(&exact)),
                Err(DlirlError::RankDeficient { rank, dim, .. }) => {
                    warn!("calibration design has rank {rank} < {dim}");
                    None
                }
                Err(e) => return Err(e.into()),
            };
            (
                run.culture,
                samples.len(),
                run.steps,
                run.final_update_norm,
                Some(run.loss),
                gap,
            )
        }
        _ => (culture, 0, 0, 0.0, None, None),
    };

    let text = model_to_json(&model, &culture);
    let after = section_digest(&text, NETWORK_SECTION)?;
    if after != before {
        return Err(CliError::Data(
            "network coefficients did not survive the model round trip".into(),
        ));
    }
    let dir = output_dir(cfg)?;
    write_text(&dir.join(MODEL_JSON), &text)?;
    let summary = CalibrationSummary {
        mode: cfg.mode,
        samples,
        steps,
        final_update_norm: norm,
        loss,
        closed_form_gap: gap,
        network_digest_before: before,
        network_digest_after: after,
        culture,
    };
    write_json(&dir.join(CALIBRATION_JSON), &summary)?;
    info!("calibrated on {} windows in {} steps", summary.samples, summary.steps);
    Ok(summary)
}

/// Closed-loop (or teacher-forced) rollouts of the configured vehicles,
/// returned in vehicle-id order.
pub fn rollouts(
    cfg: &RunConfig,
    ds: &TrajectoryDataset,
    model: &ArchetypeModel,
    culture: &CultureVector,
) -> Result<Vec<RolloutResult>> {
    let mut ids: Vec<u64> = if cfg.rollout.vehicles.is_empty() {
        ds.ego_tracks()
            .filter(|t| {
                let long_enough = t.frames.len() >= WARMUP_FRAMES;
                if !long_enough {
                    warn!("skipping vehicle {}: {} frames", t.vehicle_id, t.frames.len());
                }
                long_enough
            })
            .map(|t| t.vehicle_id)
            .collect()
    } else {
        cfg.rollout.vehicles.clone()
    };
    ids.sort_unstable();
    ids.dedup();
    let rcfg = RolloutConfig {
        gpi: cfg.rollout.gpi,
        gamma: cfg.training.gamma,
        teacher_forced: cfg.rollout.teacher_forced,
        action_bound: model.action_bound,
    };
    let driver = ModelDriver {
        model,
        culture,
        gpi: rcfg.gpi,
        gamma: rcfg.gamma,
    };
    let index = SceneIndex::new(ds);
    let results: Vec<_> = ids
        .par_iter()
        .map(|&id| run_rollout_with(&index, id, &driver, &rcfg))
        .collect();
    Ok(results.into_iter().collect::<std::result::Result<Vec<_>, _>>()?)
}

fn load_deployment(cfg: &RunConfig) -> Result<(ArchetypeModel, CultureVector)> {
    let text = read_text(cfg.require_model()?)?;
    let (model, culture) = model_from_json(&text)?;
    Ok(match cfg.mode {
        Mode::Direct => (model, CultureVector::ones()),
        _ => (model, culture),
    })
}

/// Rolls the model out on every ego track and writes per-vehicle traces,
/// the substituted dataset and the per-case errors.
pub fn rollout(cfg: &RunConfig) -> Result<Vec<CaseReport>> {
    let (model, culture) = load_deployment(cfg)?;
    let ds = load_dataset(cfg.require_data()?)?;
    let results = rollouts(cfg, &ds, &model, &culture)?;
    let dir = output_dir(cfg)?;
    for r in &results {
        let path = dir.join(ROLLOUT_DIR).join(format!("vehicle_{}.csv", r.vehicle_id));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(CliError::output(parent))?;
        }
        export_trace(&ds, r, &path)?;
    }
    let simulated = substitute_tracks(&ds, &results);
    write_canonical_csv(&simulated, &dir.join(SIMULATED_CSV)).map_err(|e| CliError::Data(e.to_string()))?;
    let cases: Vec<CaseReport> = results.iter().map(case_report).collect();
    write_json(&dir.join(CASES_JSON), &cases)?;
    info!("rolled out {} vehicles", results.len());
    Ok(cases)
}

/// Compares a candidate against the reference data (`paths.data`). The
/// candidate is `paths.candidate` when set, otherwise the rollout of
/// `paths.model` on the reference scenes.
pub fn evaluate(cfg: &RunConfig) -> Result<EvaluationReport> {
    let reference = load_dataset(cfg.require_data()?)?;
    let (candidate, cases) = match (&cfg.paths.candidate, &cfg.paths.model) {
        (Some(path), _) => (load_dataset(path)?, Vec::new()),
        (None, Some(_)) => {
            let (model, culture) = load_deployment(cfg)?;
            let results = rollouts(cfg, &reference, &model, &culture)?;
            let cases = results.iter().map(case_report).collect();
            (substitute_tracks(&reference, &results), cases)
        }
        (None, None) => return Err(CliError::Config("evaluate needs paths.candidate or paths.model".into())),
    };
    let mut report = build_report(&reference, &candidate, &cases)?;
    let mode = serde_json::to_value(cfg.mode).expect("mode serializes");
    report
        .metadata
        .notes
        .push(format!("deployment mode: {}", mode.as_str().unwrap_or_default()));
    report.metadata.notes.push(format!(
        "rollout: {}{}",
        if cfg.rollout.teacher_forced {
            "teacher-forced"
        } else {
            "closed-loop"
        },
        if cfg.rollout.gpi { " with gpi" } else { "" }
    ));
    report.metadata.generated_at = Some(chrono::Utc::now().to_rfc3339());

    let dir = output_dir(cfg)?;
    write_json(&dir.join(REPORT_JSON), &report)?;
    write_density_csvs(&report, dir).map_err(|e| CliError::Output {
        path: dir.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    if cfg.evaluate.plots {
        for (name, series) in &report.densities {
            let unit = Variable::ALL.iter().find(|v| v.name() == name).map_or("", |v| v.unit());
            write_text(
                &dir.join(PLOT_DIR).join(format!("density_{name}.svg")),
                &density_svg(name, unit, series),
            )?;
        }
    }
    info!("report written to {}", dir.join(REPORT_JSON).display());
    Ok(report)
}
