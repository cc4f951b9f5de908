use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    classify_styles, density_estimate, density_mse, lane_change_frequency, quartiles, ttc_density_rmse, CaseReport,
    DensityProfile, Quartiles, Result, StyleCentroid, Variable, GRID_POINTS, LANE_PERSIST_FRAMES,
};
use crate::featurize::{total_ttc, SceneIndex, VehicleState};
use crate::trajectory::TrajectoryDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// Wall-clock creation time; the only field allowed to differ between
    /// two runs of the same configuration.
    pub generated_at: Option<String>,
    pub density_estimator: String,
    pub ttc_rmse_convention: String,
    pub lane_change_rule: String,
    pub reference_tracks: usize,
    pub candidate_tracks: usize,
    pub notes: Vec<String>,
}

/// A variable's reference density and the candidate density on the same
/// grid (interpolated, zero outside the candidate's own grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySeries {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub reference: Vec<f64>,
    pub bandwidth: f64,
    pub reference_bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeSummary {
    pub reference: f64,
    pub candidate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSummary {
    pub centroids: Vec<StyleCentroid>,
    pub lambdas: [f64; 2],
    pub sigma_v: f64,
    pub sigma_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylesReport {
    pub reference: Option<StyleSummary>,
    pub candidate: Option<StyleSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartilePair {
    pub reference: Option<Quartiles>,
    pub candidate: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: ReportMetadata,
    pub densities: BTreeMap<String, DensitySeries>,
    pub mse: BTreeMap<String, f64>,
    pub lane_change_freq: LaneChangeSummary,
    pub styles: StylesReport,
    pub ttc_rmse: Option<f64>,
    pub quartiles: BTreeMap<String, QuartilePair>,
    pub cases: Vec<CaseReport>,
}

impl EvaluationReport {
    /// JSON with the timestamp removed, for reproducibility comparisons.
    pub fn comparable_json(&self) -> String {
        let mut copy = self.clone();
        copy.metadata.generated_at = None;
        serde_json::to_string_pretty(&copy).expect("report serializes")
    }
}

/// The dataset restricted to its ego tracks (all tracks when none are
/// declared).
pub fn ego_subset(ds: &TrajectoryDataset) -> TrajectoryDataset {
    TrajectoryDataset {
        tracks: ds.ego_tracks().cloned().collect(),
        ..ds.clone()
    }
}

fn variable_values(ds: &TrajectoryDataset, variable: Variable) -> Vec<f64> {
    if variable == Variable::Ttc {
        let index = SceneIndex::new(ds);
        return ds
            .ego_tracks()
            .flat_map(|t| {
                let index = &index;
                t.frames
                    .iter()
                    .filter_map(move |f| total_ttc(&index.slots_for(&VehicleState::from_frame(t, f), f.t)))
            })
            .collect();
    }
    ds.ego_tracks()
        .flat_map(|t| t.frames.iter())
        .map(|f| match variable {
            Variable::Ax => f.ax,
            Variable::Ay => f.ay,
            Variable::Vx => f.vx,
            Variable::Vy => f.vy,
            Variable::Ttc => unreachable!(),
        })
        .collect()
}

fn summary(ds: &TrajectoryDataset, notes: &mut Vec<String>, label: &str) -> Option<StyleSummary> {
    match classify_styles(&ego_subset(ds)) {
        Ok(s) => Some(StyleSummary {
            centroids: s.centroids,
            lambdas: s.lambdas,
            sigma_v: s.sigma_v,
            sigma_a: s.sigma_a,
        }),
        Err(e) => {
            notes.push(format!("{label} styles skipped: {e}"));
            None
        }
    }
}

/// Compares the ego behavior of `candidate` against `reference`.
pub fn build_report(
    reference: &TrajectoryDataset,
    candidate: &TrajectoryDataset,
    cases: &[CaseReport],
) -> Result<EvaluationReport> {
    let mut notes = Vec::new();
    let mut densities = BTreeMap::new();
    let mut mse = BTreeMap::new();
    let mut quarts = BTreeMap::new();
    let mut ttc_rmse = None;

    for variable in Variable::ALL {
        let ref_values = variable_values(reference, variable);
        let cand_values = variable_values(candidate, variable);
        quarts.insert(
            variable.name().to_string(),
            QuartilePair {
                reference: quartiles(&ref_values),
                candidate: quartiles(&cand_values),
            },
        );
        let profiles: (Result<DensityProfile>, Result<DensityProfile>) = (
            density_estimate(&ref_values, variable),
            density_estimate(&cand_values, variable),
        );
        let (p, q) = match profiles {
            (Ok(p), Ok(q)) => (p, q),
            (p, q) => {
                let why = p.err().or(q.err()).map(|e| e.to_string()).unwrap_or_default();
                notes.push(format!("{} density skipped: {why}", variable.name()));
                continue;
            }
        };
        if variable == Variable::Ttc {
            ttc_rmse = Some(ttc_density_rmse(&p, &q)?);
        } else {
            mse.insert(variable.name().to_string(), density_mse(&p, &q)?);
        }
        densities.insert(
            variable.name().to_string(),
            DensitySeries {
                density: p.grid.iter().map(|&x| q.at(x)).collect(),
                grid: p.grid,
                reference: p.density,
                bandwidth: q.bandwidth,
                reference_bandwidth: p.bandwidth,
            },
        );
    }

    let lane_change_freq = LaneChangeSummary {
        reference: lane_change_frequency(&ego_subset(reference))?,
        candidate: lane_change_frequency(&ego_subset(candidate))?,
    };
    let styles = StylesReport {
        reference: summary(reference, &mut notes, "reference"),
        candidate: summary(candidate, &mut notes, "candidate"),
    };

    Ok(EvaluationReport {
        metadata: ReportMetadata {
            generated_at: None,
            density_estimator: format!(
                "gaussian kde, silverman bandwidth, {GRID_POINTS}-point grid over [min - 3 bw, max + 3 bw]"
            ),
            ttc_rmse_convention:
                "densities multiplied by the reference grid span S before the RMSE; value = S * sqrt(mean((p - q)^2))"
                    .into(),
            lane_change_rule: format!(
                "lane other than the first recorded one held for at least {LANE_PERSIST_FRAMES} consecutive frames"
            ),
            reference_tracks: reference.ego_tracks().count(),
            candidate_tracks: candidate.ego_tracks().count(),
            notes,
        },
        densities,
        mse,
        lane_change_freq,
        styles,
        ttc_rmse,
        quartiles: quarts,
        cases: cases.to_vec(),
    })
}

/// Writes `density_<var>.csv` (grid, reference, candidate) per variable and
/// returns the paths in variable order.
pub fn write_density_csvs(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (name, series) in &report.densities {
        let path = dir.join(format!("density_{name}.csv"));
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "grid,reference,candidate")?;
        for i in 0..series.grid.len() {
            writeln!(out, "{},{},{}", series.grid[i], series.reference[i], series.density[i])?;
        }
        out.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
