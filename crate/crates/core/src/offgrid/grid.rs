use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretization of the position axis for the convolutional stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_unit: usize,
    pub margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points_per_unit: 64,
            margin: 0.1,
        }
    }
}

/// Uniform grid with spacing `1/points_per_unit` centred on the padded range
/// of `x_all`, with a length that is a multiple of `multiple`.
///
/// The grid depends on the positions only through their padded range and its
/// midpoint, so translating every position translates every grid point.
pub fn build_grid(x_all: &[f64], spec: &GridSpec, multiple: usize) -> Result<Vec<f64>> {
    if x_all.is_empty() {
        return Err(Error::contract("build_grid needs at least one position"));
    }
    if spec.points_per_unit == 0 || !(spec.margin >= 0.0) {
        return Err(Error::contract(format!("invalid grid spec {spec:?}")));
    }
    let (min, max) = x_all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let (lo, hi) = (min - spec.margin, max + spec.margin);
    let ppu = spec.points_per_unit as f64;
    let needed = ((hi - lo) * ppu).ceil() as usize + 1;
    let len = needed.div_ceil(multiple).max(1) * multiple;
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (len - 1) as f64;
    Ok((0..len).map(|i| centre + (i as f64 - half) / ppu).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_grid() {
        let grid = build_grid(&[0.0, 1.0], &GridSpec::default(), 64).unwrap();
        assert_eq!(grid.len() % 64, 0);
        assert!(grid[0] <= -0.1);
        assert!(*grid.last().unwrap() >= 1.1);
        for w in grid.windows(2) {
            assert!((w[1] - w[0] - 0.015625).abs() < 1e-12);
        }
    }

    #[test]
    fn shifting_positions_shifts_grid() {
        let xs = [-0.3, 0.25, 1.7];
        let a = build_grid(&xs, &GridSpec::default(), 64).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + 3.0).collect();
        let b = build_grid(&shifted, &GridSpec::default(), 64).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert!((q - p - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_grid() {
        let grid = build_grid(&[2.0], &GridSpec::default(), 64).unwrap();
        assert_eq!(grid.len(), 64);
        assert!(grid[0] <= 1.9 && grid[63] >= 2.1);
        assert!(build_grid(&[], &GridSpec::default(), 64).is_err());
    }
}
