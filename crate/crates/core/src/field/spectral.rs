//! Row-wise tangential FFTs.
//!
//! Coefficients are normalised so that
//! `u(x_i, y_j) = Σ_k c_k(y_j) · exp(i ξ_k (x_i − x_min))`.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        if let Some(f) = p.1.get(&(n, inverse)) {
            return f.clone();
        }
        let f = if inverse {
            p.0.plan_fft_inverse(n)
        } else {
            p.0.plan_fft_forward(n)
        };
        p.1.insert((n, inverse), f.clone());
        f
    })
}

/// Forward transform of every row of a `(rows, nx)` array.
pub fn forward(a: &Array2<f64>) -> Array2<Complex64> {
    let (rows, nx) = a.dim();
    let fft = plan(nx, false);
    let scale = 1.0 / nx as f64;
    let mut buf: Vec<Complex64> = a.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft.process(&mut buf);
    for c in buf.iter_mut() {
        *c *= scale;
    }
    Array2::from_shape_vec((rows, nx), buf).expect("shape preserved")
}

/// Inverse transform of every row; the imaginary part is discarded.
pub fn inverse(c: &Array2<Complex64>) -> Array2<f64> {
    let (rows, nx) = c.dim();
    let fft = plan(nx, true);
    let mut buf: Vec<Complex64> = c.iter().copied().collect();
    fft.process(&mut buf);
    Array2::from_shape_vec((rows, nx), buf.into_iter().map(|z| z.re).collect())
        .expect("shape preserved")
}

/// In-place inverse on a flat buffer of `rows` contiguous rows.
pub fn inverse_flat(buf: &mut [Complex64], nx: usize) {
    plan(nx, true).process(buf);
}

/// In-place forward (normalised) on a flat buffer of contiguous rows.
pub fn forward_flat(buf: &mut [Complex64], nx: usize) {
    plan(nx, false).process(buf);
    let scale = 1.0 / nx as f64;
    for c in buf.iter_mut() {
        *c *= scale;
    }
}
