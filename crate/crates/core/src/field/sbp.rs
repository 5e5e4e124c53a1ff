//! Wall-normal summation-by-parts first derivative.
//!
//! Diagonal-norm SBP operator with fourth-order interior stencil and a
//! second-order closure on the four rows next to each wall. With the norm
//! `H` and derivative `D` it satisfies `H D + Dᵀ H = diag(−1, 0, …, 0, 1)`,
//! so discrete integration by parts holds exactly. `H` doubles as the
//! y-quadrature everywhere in the crate.

use std::ops::{Add, Mul};

const CLOSURE: [[f64; 6]; 4] = [
    [-24.0 / 17.0, 59.0 / 34.0, -4.0 / 17.0, -3.0 / 34.0, 0.0, 0.0],
    [-0.5, 0.0, 0.5, 0.0, 0.0, 0.0],
    [4.0 / 43.0, -59.0 / 86.0, 0.0, 59.0 / 86.0, -4.0 / 43.0, 0.0],
    [3.0 / 98.0, 0.0, -59.0 / 98.0, 0.0, 32.0 / 49.0, -4.0 / 49.0],
];
const INTERIOR: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
const NORM_CLOSURE: [f64; 4] = [17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0];

/// Minimum number of points supported by the closure.
pub const MIN_POINTS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Sbp {
    points: usize,
    dy: f64,
    weights: Vec<f64>,
}

impl Sbp {
    pub fn new(points: usize, dy: f64) -> Self {
        assert!(points >= MIN_POINTS, "SBP closure needs at least {MIN_POINTS} points");
        let mut weights = vec![dy; points];
        for (i, w) in NORM_CLOSURE.iter().enumerate() {
            weights[i] = w * dy;
            weights[points - 1 - i] = w * dy;
        }
        Self { points, dy, weights }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    /// Quadrature weights (the diagonal of `H`).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row `r` of `D` as `(first column, coefficients)`, already divided by `dy`.
    pub fn row(&self, r: usize) -> (usize, Vec<f64>) {
        let n = self.points;
        let inv = 1.0 / self.dy;
        if r < 4 {
            (0, CLOSURE[r].iter().map(|c| c * inv).collect())
        } else if r >= n - 4 {
            let i = n - 1 - r;
            let coeffs = (0..6).map(|c| -CLOSURE[i][5 - c] * inv).collect();
            (n - 6, coeffs)
        } else {
            (r - 2, INTERIOR.iter().map(|c| c * inv).collect())
        }
    }

    /// `out = D f`.
    pub fn apply<T>(&self, f: &[T], out: &mut [T])
    where
        T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
    {
        let n = self.points;
        debug_assert_eq!(f.len(), n);
        debug_assert_eq!(out.len(), n);
        let inv = 1.0 / self.dy;
        for r in 0..4 {
            let mut lo = T::default();
            let mut hi = T::default();
            for c in 0..6 {
                lo = lo + f[c] * (CLOSURE[r][c] * inv);
                hi = hi + f[n - 6 + c] * (-CLOSURE[r][5 - c] * inv);
            }
            out[r] = lo;
            out[n - 1 - r] = hi;
        }
        for r in 4..n - 4 {
            out[r] = (f[r + 1] + f[r - 1] * -1.0) * (INTERIOR[3] * inv)
                + (f[r + 2] + f[r - 2] * -1.0) * (INTERIOR[4] * inv);
        }
    }

    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply(f, &mut out);
        out
    }

    /// `∫_{-1}^{1} f dy` with the SBP norm.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Dense `D` (row-major), for assembling small per-mode systems.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.points;
        (0..n)
            .map(|r| {
                let mut row = vec![0.0; n];
                let (c0, coeffs) = self.row(r);
                for (k, c) in coeffs.into_iter().enumerate() {
                    row[c0 + k] = c;
                }
                row
            })
            .collect()
    }
}
