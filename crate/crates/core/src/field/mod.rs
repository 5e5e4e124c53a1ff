//! Fields on the truncated band.

mod grid;
pub mod io;
mod norms;
pub(crate) mod ops;
pub mod sbp;
pub mod spectral;

pub use grid::Grid;
pub use norms::{
    l1_in_time, l2_interval, l2_omega, norms, norms_on, Domain, IntervalSampler, NormReport,
};
pub use ops::{
    curl2d, divergence, dx, dy, extend_initial_data, gradient, leray_project, max_divergence,
    solve_div_curl, stream_function, velocity_from_stream, zero_mean, Extension,
};
pub use sbp::Sbp;

use ndarray::Array2;
use num_complex::Complex64;
use std::sync::OnceLock;

use crate::{Error, Result};

/// Scalar or vector field sampled on a [`Grid`].
///
/// Each component is a `(ny + 1, nx)` array indexed `[j, i]` (wall-normal
/// row first). The tangential spectrum is computed lazily and cached.
#[derive(Debug, Clone)]
pub struct Field2D {
    grid: Grid,
    layers: Vec<Array2<f64>>,
    time: f64,
    divergence_free: bool,
    spectrum: OnceLock<Vec<Array2<Complex64>>>,
}

impl Field2D {
    pub fn zeros(grid: &Grid, components: usize) -> Self {
        assert!(components == 1 || components == 2, "1 or 2 components");
        let layers = (0..components)
            .map(|_| Array2::zeros((grid.rows(), grid.nx())))
            .collect();
        Self::from_layers_unchecked(grid.clone(), layers)
    }

    pub fn from_layers(grid: &Grid, layers: Vec<Array2<f64>>) -> Result<Self> {
        if layers.is_empty() || layers.len() > 2 {
            return Err(Error::Shape(format!("{} components", layers.len())));
        }
        for l in &layers {
            if l.dim() != (grid.rows(), grid.nx()) {
                return Err(Error::Shape(format!(
                    "layer {:?} does not match grid ({}, {})",
                    l.dim(),
                    grid.rows(),
                    grid.nx()
                )));
            }
        }
        Ok(Self::from_layers_unchecked(grid.clone(), layers))
    }

    pub(crate) fn from_layers_unchecked(grid: Grid, layers: Vec<Array2<f64>>) -> Self {
        Self {
            grid,
            layers,
            time: 0.0,
            divergence_free: false,
            spectrum: OnceLock::new(),
        }
    }

    pub fn from_spectrum(grid: &Grid, spectrum: Vec<Array2<Complex64>>) -> Self {
        let layers = spectrum.iter().map(spectral::inverse).collect();
        let f = Self::from_layers_unchecked(grid.clone(), layers);
        let _ = f.spectrum.set(spectrum);
        f
    }

    pub fn scalar_from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut a = Array2::zeros((grid.rows(), grid.nx()));
        for ((j, i), v) in a.indexed_iter_mut() {
            *v = f(grid.x(i), grid.y(j));
        }
        Self::from_layers_unchecked(grid.clone(), vec![a])
    }

    pub fn vector_from_fn(grid: &Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut a = Array2::zeros((grid.rows(), grid.nx()));
        let mut b = Array2::zeros((grid.rows(), grid.nx()));
        for j in 0..grid.rows() {
            for i in 0..grid.nx() {
                let (u, v) = f(grid.x(i), grid.y(j));
                a[[j, i]] = u;
                b[[j, i]] = v;
            }
        }
        Self::from_layers_unchecked(grid.clone(), vec![a, b])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, c: usize) -> &Array2<f64> {
        &self.layers[c]
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Array2<f64>> {
        self.layers
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    /// True when the field was produced by an operation that guarantees
    /// discrete incompressibility and wall tangency.
    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub(crate) fn flagged_divergence_free(mut self, flag: bool) -> Self {
        self.divergence_free = flag;
        self
    }

    pub fn value(&self, c: usize, i: usize, j: usize) -> f64 {
        self.layers[c][[j, i]]
    }

    /// Cached tangential spectrum of every component.
    pub fn spectrum(&self) -> &[Array2<Complex64>] {
        self.spectrum
            .get_or_init(|| self.layers.iter().map(spectral::forward).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.iter().all(|v| v.is_finite()))
    }

    fn check_compatible(&self, other: &Field2D) -> Result<()> {
        if self.grid != other.grid || self.components() != other.components() {
            return Err(Error::Shape("fields live on different grids or shapes".into()));
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Field2D, b: f64) -> Result<Field2D> {
        self.check_compatible(other)?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Ok(Self::from_layers_unchecked(self.grid.clone(), layers)
            .with_time(self.time)
            .flagged_divergence_free(self.divergence_free && other.divergence_free))
    }

    pub fn add(&self, other: &Field2D) -> Result<Field2D> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Field2D) -> Result<Field2D> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scaled(&self, a: f64) -> Field2D {
        let layers = self.layers.iter().map(|x| x * a).collect();
        Self::from_layers_unchecked(self.grid.clone(), layers)
            .with_time(self.time)
            .flagged_divergence_free(self.divergence_free)
    }

    /// Pointwise multiplication of every component by `w(x, y)`.
    pub fn weighted(&self, w: impl Fn(f64, f64) -> f64) -> Field2D {
        let g = &self.grid;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let mut out = l.clone();
                for ((j, i), v) in out.indexed_iter_mut() {
                    *v *= w(g.x(i), g.y(j));
                }
                out
            })
            .collect();
        Self::from_layers_unchecked(self.grid.clone(), layers).with_time(self.time)
    }

    /// Applies a tangential Fourier multiplier `m(k, ξ_k)` to every component.
    pub fn map_spectrum(&self, m: impl Fn(usize, f64) -> Complex64) -> Field2D {
        let g = &self.grid;
        let mult: Vec<Complex64> = (0..g.nx()).map(|k| m(k, g.wavenumber(k))).collect();
        let spec = self
            .spectrum()
            .iter()
            .map(|s| {
                let mut out = s.clone();
                for mut row in out.rows_mut() {
                    for (c, f) in row.iter_mut().zip(&mult) {
                        *c *= f;
                    }
                }
                out
            })
            .collect();
        Self::from_spectrum(g, spec).with_time(self.time)
    }

    /// Wraps the two components of a vector field.
    pub fn from_components(a: &Field2D, b: &Field2D) -> Result<Field2D> {
        if a.components() != 1 || b.components() != 1 || a.grid != b.grid {
            return Err(Error::Shape("expected two scalar fields on one grid".into()));
        }
        Ok(Self::from_layers_unchecked(
            a.grid.clone(),
            vec![a.layers[0].clone(), b.layers[0].clone()],
        )
        .with_time(a.time))
    }

    pub fn component(&self, c: usize) -> Field2D {
        Self::from_layers_unchecked(self.grid.clone(), vec![self.layers[c].clone()])
            .with_time(self.time)
    }

    /// Largest absolute difference to another field.
    pub fn max_diff(&self, other: &Field2D) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(32, 16, -4.0, 6.0, 1.0).unwrap()
    }

    proptest! {
        #[test]
        fn transform_round_trip(seed in 0u64..1000) {
            let g = grid();
            let f = Field2D::scalar_from_fn(&g, |x, y| {
                let s = seed as f64;
                (x * 1.3 + s).sin() * (y * 2.0 - s).cos() + ((x * y + s) * 7.1).sin()
            });
            let back = Field2D::from_spectrum(&g, f.spectrum().to_vec());
            let scale = f.max_abs().max(1e-300);
            prop_assert!(f.max_diff(&back) / scale < 1e-12);
        }
    }

    #[test]
    fn single_mode_lands_in_one_bin() {
        let g = grid();
        let xi = g.wavenumber(3);
        let f = Field2D::scalar_from_fn(&g, |x, _| (xi * (x - g.x_min())).cos());
        let s = &f.spectrum()[0];
        assert!((s[[5, 3]].re - 0.5).abs() < 1e-14);
        assert!((s[[5, 29]].re - 0.5).abs() < 1e-14);
        assert!(s[[5, 4]].norm() < 1e-14);
    }

    #[test]
    fn incompatible_shapes_are_rejected() {
        let g = grid();
        let a = Field2D::zeros(&g, 1);
        let b = Field2D::zeros(&g, 2);
        assert!(a.add(&b).is_err());
    }
}
