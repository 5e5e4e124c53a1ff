//! L² and H^k norms on the band or on a tangential window of it.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::ops::{dx, dy, sbp_for};
use super::{Field2D, Grid};
use crate::quad::Rule;

/// Norms of one field, optionally with an accumulated L¹-in-time value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l2: f64,
    pub hk: BTreeMap<u32, f64>,
    pub l1_time_hk: f64,
}

/// Where a norm is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// The whole periodic band.
    Band,
    /// `Ω = (0, L) × (−1, 1)`.
    Omega,
    /// `(a, b) × (−1, 1)`.
    Window(f64, f64),
}

/// Evaluates the tangential trigonometric interpolant at Gauss–Legendre
/// nodes of `[a, b]`, so window integrals are exact up to quadrature error
/// of a band-limited integrand.
#[derive(Debug, Clone)]
pub struct IntervalSampler {
    rule: Rule,
    /// `basis[q][k]`: value of mode `k` at node `q`.
    basis: Vec<Vec<Complex64>>,
    y_weights: Vec<f64>,
}

impl IntervalSampler {
    pub fn new(grid: &Grid, a: f64, b: f64) -> Self {
        let frac = ((b - a) / grid.period()).clamp(0.0, 1.0);
        let nq = (2.0 * frac * grid.nx() as f64).ceil() as usize + 24;
        let rule = Rule::gauss(a, b, nq);
        let x0 = grid.x_min();
        let basis = rule
            .nodes
            .iter()
            .map(|x| {
                (0..grid.nx())
                    .map(|k| {
                        let ph = grid.wavenumber(k) * (x - x0);
                        if grid.is_nyquist(k) {
                            Complex64::new(ph.cos(), 0.0)
                        } else {
                            Complex64::new(ph.cos(), ph.sin())
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            rule,
            basis,
            y_weights: sbp_for(grid).weights().to_vec(),
        }
    }

    pub fn omega(grid: &Grid) -> Self {
        Self::new(grid, 0.0, grid.length())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.rule.nodes
    }

    /// Interpolant values `(rows, nodes)` of one spectral layer.
    pub fn values(&self, spec: &Array2<Complex64>) -> Array2<f64> {
        let rows = spec.nrows();
        let mut out = Array2::zeros((rows, self.basis.len()));
        for j in 0..rows {
            let row = spec.row(j);
            for (q, b) in self.basis.iter().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for (c, e) in row.iter().zip(b) {
                    s += c * e;
                }
                out[[j, q]] = s.re;
            }
        }
        out
    }

    /// `∫∫ |u|²` over the window, all components.
    pub fn squared(&self, f: &Field2D) -> f64 {
        f.spectrum()
            .iter()
            .map(|s| {
                let v = self.values(s);
                let mut acc = 0.0;
                for (j, wy) in self.y_weights.iter().enumerate() {
                    for (q, wx) in self.rule.weights.iter().enumerate() {
                        acc += wy * wx * v[[j, q]] * v[[j, q]];
                    }
                }
                acc
            })
            .sum()
    }

    pub fn l2(&self, f: &Field2D) -> f64 {
        self.squared(f).max(0.0).sqrt()
    }
}

/// `∫∫ |u|²` over the band (Parseval in x, SBP norm in y).
fn band_squared(f: &Field2D) -> f64 {
    let g = f.grid();
    let w = sbp_for(g).weights().to_vec();
    let dxp = g.period() / g.nx() as f64;
    f.layers()
        .iter()
        .map(|l| {
            let mut acc = 0.0;
            for (j, wy) in w.iter().enumerate() {
                acc += wy * l.row(j).iter().map(|v| v * v).sum::<f64>();
            }
            acc * dxp
        })
        .sum()
}

fn squared_on(f: &Field2D, sampler: Option<&IntervalSampler>) -> f64 {
    match sampler {
        None => band_squared(f),
        Some(s) => s.squared(f),
    }
}

pub fn l2_interval(f: &Field2D, a: f64, b: f64) -> f64 {
    IntervalSampler::new(f.grid(), a, b).l2(f)
}

/// `‖u‖_{L²(Ω)}`.
pub fn l2_omega(f: &Field2D) -> f64 {
    IntervalSampler::omega(f.grid()).l2(f)
}

/// Norms on the whole band.
pub fn norms(u: &Field2D, orders: &[u32]) -> NormReport {
    norms_on(u, orders, Domain::Band)
}

/// L² and `H^k` norms, `‖u‖²_{H^k} = Σ_{a+b ≤ k} ‖∂x^a ∂y^b u‖²`.
pub fn norms_on(u: &Field2D, orders: &[u32], domain: Domain) -> NormReport {
    let g = u.grid();
    let sampler = match domain {
        Domain::Band => None,
        Domain::Omega => Some(IntervalSampler::omega(g)),
        Domain::Window(a, b) => Some(IntervalSampler::new(g, a, b)),
    };
    let kmax = orders.iter().copied().max().unwrap_or(0);
    // derivative terms grouped by total order
    let mut by_order = vec![0.0; kmax as usize + 1];
    let mut col = u.clone();
    for a in 0..=kmax {
        let mut d = col.clone();
        for b in 0..=(kmax - a) {
            by_order[(a + b) as usize] += squared_on(&d, sampler.as_ref());
            if a + b < kmax {
                d = dy(&d);
            }
        }
        if a < kmax {
            col = dx(&col);
        }
    }
    let l2 = by_order[0].max(0.0).sqrt();
    let mut hk = BTreeMap::new();
    for k in orders {
        let s: f64 = by_order[..=*k as usize].iter().sum();
        hk.insert(*k, s.max(0.0).sqrt());
    }
    NormReport {
        l2,
        hk,
        l1_time_hk: 0.0,
    }
}

/// Trapezoid rule for `∫ g dt` over samples `(t, g(t))`.
pub fn l1_in_time(samples: &[(f64, f64)]) -> f64 {
    samples
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(64, 32, -4.0, 6.0, 1.0).unwrap()
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let r = norms(&Field2D::zeros(&grid(), 2), &[0, 1, 2]);
        assert_eq!(r.l2, 0.0);
        assert!(r.hk.values().all(|v| *v == 0.0));
    }

    #[test]
    fn sine_mode_norm_matches_closed_form() {
        let g = grid();
        let xi = g.wavenumber(1);
        let u = Field2D::vector_from_fn(&g, |x, _| ((xi * (x - g.x_min())).sin(), 0.0));
        let r = norms(&u, &[0, 1]);
        assert!((r.l2 - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.hk[&0], r.l2);
        assert!((r.hk[&1] - (10.0 * (1.0 + xi * xi)).sqrt()).abs() < 1e-10);
        // the same mode over one full period window
        let w = norms_on(&u, &[0], Domain::Window(-4.0, 6.0));
        assert!((w.l2 - r.l2).abs() < 1e-11);
    }

    #[test]
    fn omega_norm_of_constant() {
        let g = grid();
        let u = Field2D::vector_from_fn(&g, |_, _| (1.0, 0.0));
        assert!((l2_omega(&u) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_in_time() {
        let s: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64 * 0.1, 2.0)).collect();
        assert!((l1_in_time(&s) - 2.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn hk_is_monotone(a in -2.0f64..2.0, b in 0.1f64..3.0) {
            let g = Grid::new(32, 16, -4.0, 6.0, 1.0).unwrap();
            let u = Field2D::vector_from_fn(&g, |x, y| ((a * x).sin() * y, (b * x).cos() * (1.0 - y * y)));
            for d in [Domain::Band, Domain::Omega] {
                let r = norms_on(&u, &[0, 1, 2, 3], d);
                prop_assert!(r.l2 >= 0.0);
                let v: Vec<f64> = r.hk.values().copied().collect();
                prop_assert!(v.windows(2).all(|w| w[1] >= w[0]));
            }
        }
    }
}
