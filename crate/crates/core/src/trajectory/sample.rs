use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, TrajectoryDataset, TrajectoryError};

/// Selects `ceil(fraction * N)` whole tracks without replacement. Selected
/// tracks keep their original relative order.
pub fn sample_fraction(ds: &TrajectoryDataset, fraction: f64, seed: u64) -> Result<TrajectoryDataset> {
    let n = ds.tracks.len();
    let wanted = fraction * n as f64;
    if !(fraction > 0.0 && fraction <= 1.0) || wanted < 1.0 - 1e-9 {
        return Err(TrajectoryError::FractionOutOfRange { fraction, tracks: n });
    }
    // 0.3 * 10 is 3.0000000000000004 in binary; do not round that up to 4.
    let count = ((wanted - 1e-9).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();

    let tracks = picked.iter().map(|&i| ds.tracks[i].clone()).collect::<Vec<_>>();
    let mut meta = ds.meta.clone();
    if !meta.ego_ids.is_empty() {
        meta.ego_ids.retain(|id| tracks.iter().any(|t| t.vehicle_id == *id));
    }
    Ok(TrajectoryDataset {
        tracks,
        meta,
        lane_centers_y: ds.lane_centers_y.clone(),
        ..*ds
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::testing::*;
    use proptest::prelude::*;

    fn many(n: u64) -> TrajectoryDataset {
        dataset(
            (0..n)
                .map(|i| straight_track(i + 1, 5, 0.2, 10.0 * i as f64, 0.0, 20.0, 0))
                .collect(),
            0.2,
        )
    }

    #[test]
    fn data_light_slice_rounds_up() {
        let out = sample_fraction(&many(100), 0.0133, 1).unwrap();
        assert_eq!(out.tracks.len(), 2);
    }

    #[test]
    fn three_tenths_of_ten_is_three() {
        assert_eq!(sample_fraction(&many(10), 0.3, 5).unwrap().tracks.len(), 3);
    }

    #[test]
    fn full_fraction_is_identity() {
        let ds = many(17);
        assert_eq!(sample_fraction(&ds, 1.0, 99).unwrap(), ds);
    }

    #[test]
    fn out_of_range_fractions() {
        let ds = many(10);
        for f in [0.0, -0.5, 1.5, 0.05, f64::NAN] {
            assert!(matches!(
                sample_fraction(&ds, f, 0),
                Err(TrajectoryError::FractionOutOfRange { .. })
            ));
        }
    }

    proptest! {
        #[test]
        fn deterministic_subset(n in 1u64..60, fraction in 0.01f64..=1.0, seed in any::<u64>()) {
            let ds = many(n);
            prop_assume!(fraction * n as f64 >= 1.0);
            let a = sample_fraction(&ds, fraction, seed).unwrap();
            let b = sample_fraction(&ds, fraction, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let ids: Vec<u64> = ds.tracks.iter().map(|t| t.vehicle_id).collect();
            prop_assert!(a.tracks.iter().all(|t| ids.contains(&t.vehicle_id)));
            prop_assert!(a.tracks.windows(2).all(|p| p[0].vehicle_id < p[1].vehicle_id));
        }
    }
}
