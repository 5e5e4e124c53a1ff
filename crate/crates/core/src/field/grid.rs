use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

/// Minimum number of tangential modes.
pub const MIN_NX: usize = 8;
/// Minimum number of wall-normal cells (the SBP closure needs eight points).
pub const MIN_NY: usize = 8;

/// Periodic truncation of the band `ℝ × (−1, 1)` with uniform wall-normal
/// spacing.
///
/// Samples live at `x_i = x_min + i·dx` for `i < nx` and at
/// `y_j = −1 + j·dy` for `j ≤ ny`, so both walls are grid points. The
/// physical domain is `Ω = (0, length) × (−1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    ny: usize,
    x_min: f64,
    x_max: f64,
    length: f64,
}

impl Grid {
    /// Validates and builds a grid.
    ///
    /// The band must be longer than `7L` and must contain `[−L, 5L]`, which
    /// holds the extension support `[−L, 2L]` and the control zone `[2L, 5L]`.
    pub fn new(nx: usize, ny: usize, x_min: f64, x_max: f64, length: f64) -> Result<Self> {
        if nx < MIN_NX || nx % 2 != 0 {
            return Err(Error::Resolution(format!(
                "nx = {nx} must be even and at least {MIN_NX}"
            )));
        }
        if ny < MIN_NY {
            return Err(Error::Resolution(format!("ny = {ny} must be at least {MIN_NY}")));
        }
        if !(length > 0.0) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "length {length} must be positive and the band finite"
            )));
        }
        let span = x_max - x_min;
        let (lo, hi) = (-length, 5.0 * length);
        if span <= 7.0 * length || x_min > lo || x_max < hi {
            return Err(Error::DomainTooSmall {
                span,
                required: 7.0 * length,
                lo,
                hi,
            });
        }
        Ok(Self {
            nx,
            ny,
            x_min,
            x_max,
            length,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of wall-normal cells; there are `ny + 1` sample rows.
    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn rows(&self) -> usize {
        self.ny + 1
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Length `L` of the physical domain.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn period(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.period() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        -1.0 + j as f64 * self.dy()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.rows()).map(|j| self.y(j)).collect()
    }

    /// Fundamental tangential wavenumber `2π / period`.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.period()
    }

    /// Signed integer index of FFT bin `k` (`k ≤ nx/2` maps to itself).
    pub fn mode_index(&self, k: usize) -> i64 {
        if k <= self.nx / 2 {
            k as i64
        } else {
            k as i64 - self.nx as i64
        }
    }

    /// Tangential wavenumber `ξ_k` of FFT bin `k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        self.mode_index(k) as f64 * self.dxi()
    }

    pub fn is_nyquist(&self, k: usize) -> bool {
        k == self.nx / 2
    }

    /// Largest retained `|ξ|` (the Nyquist wavenumber).
    pub fn xi_max(&self) -> f64 {
        (self.nx / 2) as f64 * self.dxi()
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_band_has_period_ten() {
        let g = Grid::new(64, 64, -4.0, 6.0, 1.0).unwrap();
        assert_eq!(g.period(), 10.0);
        assert!((g.dxi() - 2.0 * PI / 10.0).abs() < 1e-15);
        assert!((g.wavenumber(3) - 3.0 * 2.0 * PI / 10.0).abs() < 1e-14);
        assert!((g.wavenumber(63) + 2.0 * PI / 10.0).abs() < 1e-14);
        assert_eq!(g.y(0), -1.0);
        assert!((g.y(64) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn odd_nx_is_a_resolution_error() {
        assert!(matches!(
            Grid::new(63, 64, -4.0, 6.0, 1.0),
            Err(Error::Resolution(_))
        ));
        assert!(matches!(
            Grid::new(64, 4, -4.0, 6.0, 1.0),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn short_band_is_rejected() {
        assert!(matches!(
            Grid::new(64, 64, 0.0, 3.0, 1.0),
            Err(Error::DomainTooSmall { .. })
        ));
        // long enough but missing the extension support
        assert!(matches!(
            Grid::new(64, 64, 0.0, 8.0, 1.0),
            Err(Error::DomainTooSmall { .. })
        ));
    }
}
