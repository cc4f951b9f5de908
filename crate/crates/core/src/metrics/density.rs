use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};

pub const GRID_POINTS: usize = 512;
/// Grid padding on each side of the sample range, in bandwidths.
const GRID_PAD: f64 = 3.0;
/// Kernel evaluations beyond this many bandwidths are negligible (< 1e-30).
const KERNEL_REACH: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Ax,
    Ay,
    Vx,
    Vy,
    Ttc,
}

impl Variable {
    pub const ALL: [Variable; 5] = [Variable::Ax, Variable::Ay, Variable::Vx, Variable::Vy, Variable::Ttc];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Ax => "ax",
            Variable::Ay => "ay",
            Variable::Vx => "vx",
            Variable::Vy => "vy",
            Variable::Ttc => "ttc",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Variable::Ax | Variable::Ay => "m/s^2",
            Variable::Vx | Variable::Vy => "m/s",
            Variable::Ttc => "s",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub variable: Variable,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityProfile {
    /// Trapezoidal integral of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Density at `x` by linear interpolation, zero outside the grid.
    pub fn at(&self, x: f64) -> f64 {
        interpolate(&self.grid, &self.density, x)
    }
}

/// Linear interpolation of `(xs, ys)` at `x`; zero outside `[xs[0], xs[n-1]]`.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let (Some(&lo), Some(&hi)) = (xs.first(), xs.last()) else {
        return 0.0;
    };
    if !(x >= lo && x <= hi) {
        return 0.0;
    }
    let i = xs.partition_point(|&g| g <= x);
    if i >= xs.len() {
        return ys[xs.len() - 1];
    }
    if i == 0 {
        return ys[0];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let f = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[i - 1] + f * (ys[i] - ys[i - 1])
}

/// Linear-interpolated quantile of sorted data (`p` in `[0, 1]`).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// `0.9 min(sigma, IQR / 1.34) n^(-1/5)`, falling back to `sigma` when the
/// interquartile range is zero. `sorted` must be ascending.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sigma = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel density on a 512-point grid spanning three bandwidths
/// beyond the sample range.
pub fn density_estimate(values: &[f64], variable: Variable) -> Result<DensityProfile> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < 2 || sorted[0] == sorted[sorted.len() - 1] {
        return Err(MetricsError::DegenerateSample(sorted.len()));
    }
    let bw = silverman_bandwidth(&sorted);
    let lo = sorted[0] - GRID_PAD * bw;
    let hi = sorted[sorted.len() - 1] + GRID_PAD * bw;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let norm = 1.0 / (sorted.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&x| {
            let from = sorted.partition_point(|&v| v < x - KERNEL_REACH * bw);
            let to = sorted.partition_point(|&v| v <= x + KERNEL_REACH * bw);
            let sum: f64 = sorted[from..to]
                .iter()
                .map(|&v| {
                    let u = (x - v) / bw;
                    (-0.5 * u * u).exp()
                })
                .sum();
            sum * norm
        })
        .collect();
    Ok(DensityProfile {
        variable,
        grid,
        density,
        bandwidth: bw,
    })
}

/// Mean over `p`'s grid of `(p - q)^2`, with `q` interpolated onto that grid.
pub fn density_mse(p: &DensityProfile, q: &DensityProfile) -> Result<f64> {
    if p.variable != q.variable {
        return Err(MetricsError::VariableMismatch(p.variable, q.variable));
    }
    let total: f64 = p
        .grid
        .iter()
        .zip(&p.density)
        .map(|(&x, &d)| (d - q.at(x)).powi(2))
        .sum();
    Ok(total / p.grid.len() as f64)
}

/// RMSE between two TTC densities after both are multiplied by the span
/// `S` of the reference grid, which puts the value on the seconds scale.
/// Equals `S * sqrt(density_mse)`.
pub fn ttc_density_rmse(reference: &DensityProfile, candidate: &DensityProfile) -> Result<f64> {
    for p in [reference, candidate] {
        if p.variable != Variable::Ttc {
            return Err(MetricsError::VariableMismatch(Variable::Ttc, p.variable));
        }
    }
    let span = reference.grid.last().unwrap_or(&0.0) - reference.grid.first().unwrap_or(&0.0);
    let total: f64 = reference
        .grid
        .iter()
        .zip(&reference.density)
        .map(|(&x, &d)| (d * span - candidate.at(x) * span).powi(2))
        .sum();
    Ok((total / reference.grid.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn standard_normal_matches_analytic_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = density_estimate(&values, Variable::Ax).unwrap();
        let worst = p
            .grid
            .iter()
            .zip(&p.density)
            .map(|(&x, &d)| (d - (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.01, "{worst}");
        let mass = p.mass();
        assert!((0.95..=1.0).contains(&mass), "{mass}");
    }

    #[test]
    fn symmetric_pair_gives_symmetric_density() {
        let p = density_estimate(&[-1.0, 1.0], Variable::Vy).unwrap();
        for i in 0..GRID_POINTS {
            assert!((p.grid[i] + p.grid[GRID_POINTS - 1 - i]).abs() < 1e-12);
            assert!((p.density[i] - p.density[GRID_POINTS - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_values_are_degenerate() {
        assert!(matches!(
            density_estimate(&[2.0; 10], Variable::Vx),
            Err(MetricsError::DegenerateSample(10))
        ));
        assert!(density_estimate(&[2.0], Variable::Vx).is_err());
    }

    #[test]
    fn bandwidth_uses_sigma_when_iqr_vanishes() {
        // IQR is zero: the quartiles both sit on the repeated value.
        let v = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0];
        let mean = 10.0 / 8.0;
        let sigma = ((7.0 * mean * mean + (10.0 - mean) * (10.0 - mean)) / 7.0_f64).sqrt();
        let expected = 0.9 * sigma * 8f64.powf(-0.2);
        assert!((silverman_bandwidth(&v) - expected).abs() < 1e-12);
    }

    #[test]
    fn self_distance_is_zero() {
        let p = density_estimate(&[0.1, 0.4, 0.2, 0.9, -0.3], Variable::Ax).unwrap();
        assert_eq!(density_mse(&p, &p).unwrap(), 0.0);
        let t = DensityProfile {
            variable: Variable::Ttc,
            ..p.clone()
        };
        assert_eq!(ttc_density_rmse(&t, &t).unwrap(), 0.0);
        assert!(matches!(density_mse(&p, &t), Err(MetricsError::VariableMismatch(..))));
    }

    fn spike(at: usize, variable: Variable) -> DensityProfile {
        let grid: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let mut density = vec![0.0; 8];
        // Unit trapezoidal mass on a grid of spacing 0.5.
        density[at] = 2.0;
        DensityProfile {
            variable,
            grid,
            density,
            bandwidth: 0.5,
        }
    }

    #[test]
    fn spikes_one_cell_apart() {
        let p = spike(3, Variable::Ax);
        let q = spike(4, Variable::Ax);
        // Two grid points differ by 2 each: (4 + 4) / 8.
        assert_eq!(density_mse(&p, &q).unwrap(), 1.0);
        assert_eq!(density_mse(&q, &p).unwrap(), 1.0);
    }

    #[test]
    fn two_bin_ttc_rmse_by_hand() {
        let p = DensityProfile {
            variable: Variable::Ttc,
            grid: vec![0.0, 10.0],
            density: vec![0.1, 0.1],
            bandwidth: 1.0,
        };
        let q = DensityProfile {
            density: vec![0.05, 0.15],
            ..p.clone()
        };
        // Scaled differences are -0.5 and 0.5; RMSE 0.5.
        assert!((ttc_density_rmse(&p, &q).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_zero_outside() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 3.0, 5.0];
        assert_eq!(interpolate(&xs, &ys, -0.1), 0.0);
        assert_eq!(interpolate(&xs, &ys, 2.1), 0.0);
        assert_eq!(interpolate(&xs, &ys, 0.5), 2.0);
        assert_eq!(interpolate(&xs, &ys, 2.0), 5.0);
        assert_eq!(interpolate(&xs, &ys, 0.0), 1.0);
    }
}
