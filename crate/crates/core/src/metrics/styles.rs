use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};
use crate::trajectory::{TrajectoryDataset, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleClass {
    Conservative,
    Moderate,
    Aggressive,
}

impl StyleClass {
    pub const ALL: [StyleClass; 3] = [StyleClass::Conservative, StyleClass::Moderate, StyleClass::Aggressive];

    fn from_rank(rank: usize, n: usize) -> Self {
        Self::ALL[3 * rank / n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleEntry {
    pub vehicle_id: VehicleId,
    /// Mean speed magnitude over the track, m/s.
    pub mean_speed: f64,
    /// Mean acceleration magnitude over the track, m/s^2.
    pub mean_accel: f64,
    pub score: f64,
    pub class: StyleClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleCentroid {
    pub class: StyleClass,
    pub count: usize,
    pub mean_speed: f64,
    pub mean_accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleClassification {
    /// Tracks in ascending score order.
    pub entries: Vec<StyleEntry>,
    /// Lowest scores of the moderate and aggressive classes.
    pub lambdas: [f64; 2],
    pub sigma_v: f64,
    pub sigma_a: f64,
    pub centroids: Vec<StyleCentroid>,
}

impl StyleClassification {
    pub fn class_of(&self, id: VehicleId) -> Option<StyleClass> {
        self.entries.iter().find(|e| e.vehicle_id == id).map(|e| e.class)
    }
}

fn population_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Splits tracks into tertiles by `v^2 / sigma_v^2 + a^2 / sigma_a^2`, where
/// `v` and `a` are a track's mean speed and mean acceleration magnitudes and
/// the sigmas are their population standard deviations across tracks. Ties
/// in score are ordered by vehicle id.
pub fn classify_styles(ds: &TrajectoryDataset) -> Result<StyleClassification> {
    let n = ds.tracks.len();
    if n < 3 {
        return Err(MetricsError::InsufficientTracks(n));
    }
    let per_track: Vec<(VehicleId, f64, f64)> = ds
        .tracks
        .iter()
        .map(|t| {
            let m = t.frames.len() as f64;
            let v = t.frames.iter().map(|f| f.vx.hypot(f.vy)).sum::<f64>() / m;
            let a = t.frames.iter().map(|f| f.ax.hypot(f.ay)).sum::<f64>() / m;
            (t.vehicle_id, v, a)
        })
        .collect();
    let speeds: Vec<f64> = per_track.iter().map(|p| p.1).collect();
    let accels: Vec<f64> = per_track.iter().map(|p| p.2).collect();
    let sigma_v = population_sd(&speeds);
    let sigma_a = population_sd(&accels);
    if sigma_v.is_nan() || sigma_v <= 0.0 {
        return Err(MetricsError::ZeroVariance("speed"));
    }
    if sigma_a.is_nan() || sigma_a <= 0.0 {
        return Err(MetricsError::ZeroVariance("acceleration"));
    }

    let mut scored: Vec<(VehicleId, f64, f64, f64)> = per_track
        .into_iter()
        .map(|(id, v, a)| (id, v, a, v * v / (sigma_v * sigma_v) + a * a / (sigma_a * sigma_a)))
        .collect();
    scored.sort_by(|x, y| x.3.total_cmp(&y.3).then(x.0.cmp(&y.0)));
    let entries: Vec<StyleEntry> = scored
        .iter()
        .enumerate()
        .map(|(rank, &(vehicle_id, mean_speed, mean_accel, score))| StyleEntry {
            vehicle_id,
            mean_speed,
            mean_accel,
            score,
            class: StyleClass::from_rank(rank, n),
        })
        .collect();

    let first_of = |class| entries.iter().find(|e| e.class == class).map_or(f64::NAN, |e| e.score);
    let centroids = StyleClass::ALL
        .iter()
        .map(|&class| {
            let members: Vec<&StyleEntry> = entries.iter().filter(|e| e.class == class).collect();
            let k = members.len() as f64;
            StyleCentroid {
                class,
                count: members.len(),
                mean_speed: members.iter().map(|e| e.mean_speed).sum::<f64>() / k,
                mean_accel: members.iter().map(|e| e.mean_accel).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(StyleClassification {
        lambdas: [first_of(StyleClass::Moderate), first_of(StyleClass::Aggressive)],
        entries,
        sigma_v,
        sigma_a,
        centroids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::testing::{dataset, straight_track};

    fn population(speeds: &[f64], accels: &[f64]) -> TrajectoryDataset {
        let tracks = speeds
            .iter()
            .zip(accels)
            .enumerate()
            .map(|(i, (&v, &a))| {
                let mut t = straight_track(i as u64 + 1, 6, 0.2, 0.0, 0.0, v, 0);
                t.frames.iter_mut().for_each(|f| f.ax = a);
                t
            })
            .collect();
        dataset(tracks, 0.2)
    }

    #[test]
    fn nine_increasing_tracks_split_three_ways() {
        let v: Vec<f64> = (0..9).map(|i| 20.0 + i as f64).collect();
        let a: Vec<f64> = (0..9).map(|i| 0.1 + 0.05 * i as f64).collect();
        let s = classify_styles(&population(&v, &a)).unwrap();
        let classes: Vec<StyleClass> = s.entries.iter().map(|e| e.class).collect();
        assert_eq!(classes[..3], [StyleClass::Conservative; 3]);
        assert_eq!(classes[3..6], [StyleClass::Moderate; 3]);
        assert_eq!(classes[6..], [StyleClass::Aggressive; 3]);
        let ids: Vec<u64> = s.entries.iter().map(|e| e.vehicle_id).collect();
        assert_eq!(ids, (1..=9).collect::<Vec<_>>());
        assert_eq!(s.lambdas, [s.entries[3].score, s.entries[6].score]);
        assert_eq!(s.centroids.iter().map(|c| c.count).collect::<Vec<_>>(), vec![3, 3, 3]);
        assert!((s.centroids[0].mean_speed - 21.0).abs() < 1e-9);
    }

    #[test]
    fn input_order_does_not_matter() {
        let v = [25.0, 21.0, 30.0, 22.0, 27.0, 24.0, 26.0];
        let a = [0.3, 0.1, 0.5, 0.2, 0.1, 0.4, 0.2];
        let ds = population(&v, &a);
        let mut reversed = ds.clone();
        reversed.tracks.reverse();
        assert_eq!(classify_styles(&ds).unwrap(), classify_styles(&reversed).unwrap());
    }

    #[test]
    fn uniform_rescaling_keeps_classes() {
        let v = [25.0, 21.0, 30.0, 22.0, 27.0, 24.0];
        let a = [0.3, 0.1, 0.5, 0.2, 0.1, 0.4];
        let base = classify_styles(&population(&v, &a)).unwrap();
        let scaled = classify_styles(&population(&v.map(|x| x * 1.7), &a.map(|x| x * 1.7))).unwrap();
        for e in &base.entries {
            assert_eq!(scaled.class_of(e.vehicle_id), Some(e.class));
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            classify_styles(&population(&[20.0, 21.0], &[0.1, 0.2])),
            Err(MetricsError::InsufficientTracks(2))
        ));
        assert!(matches!(
            classify_styles(&population(&[20.0; 4], &[0.1, 0.2, 0.3, 0.4])),
            Err(MetricsError::ZeroVariance("speed"))
        ));
    }
}
