//! Tangential Fourier multipliers, dyadic blocks and the analyticity radius.
//!
//! All multipliers act on the tangential variable only. Dyadic blocks are
//! sharp: block `j ≥ 0` keeps `2^j ≤ |ξ| < 2^{j+1}`, block `−1` keeps `|ξ| < 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::field::ops::sbp_for;
use crate::field::{dx, dy, l1_in_time, norms, Field2D};
use crate::{Error, Result};
use num_complex::Complex64;

/// Largest exponent accepted by [`analytic_weight`].
pub const MAX_EXPONENT: f64 = 700.0;

/// `|∂x|`: multiplies mode `ξ` by `|ξ|`.
pub fn abs_dx(u: &Field2D) -> Field2D {
    u.map_spectrum(|_, xi| Complex64::new(xi.abs(), 0.0))
}

/// `e^{ρ|∂x|}` on modes with `|index| ≤ n`; higher modes are removed.
pub fn analytic_weight(u: &Field2D, rho: f64, n: usize) -> Result<Field2D> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter(format!("ρ = {rho} must be nonnegative")));
    }
    let g = u.grid();
    let top = n.min(g.nx() / 2) as f64 * g.dxi();
    if rho * top > MAX_EXPONENT {
        return Err(Error::Overflow(rho * top));
    }
    let g = g.clone();
    Ok(u.map_spectrum(|k, xi| {
        if g.mode_index(k).unsigned_abs() as usize <= n {
            Complex64::new((rho * xi.abs()).exp(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Dyadic index of `|ξ|`.
pub fn block_index(xi: f64) -> i32 {
    let a = xi.abs();
    if a < 1.0 {
        -1
    } else {
        a.log2().floor() as i32
    }
}

/// Sharp Littlewood–Paley block `j ≥ −1`.
pub fn lp_block(u: &Field2D, j: i32) -> Field2D {
    u.map_spectrum(|_, xi| {
        if block_index(xi) == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Highest nonempty block index on the grid of `u`.
pub fn top_block(u: &Field2D) -> i32 {
    block_index(u.grid().xi_max())
}

/// Energy `∫∫|c_k e^{iξx}|²` of every tangential bin, summed over components
/// (discrete Parseval in x, SBP norm in y).
pub fn mode_energies(u: &Field2D) -> Vec<f64> {
    let g = u.grid();
    let w = sbp_for(g).weights().to_vec();
    let mut e = vec![0.0; g.nx()];
    for s in u.spectrum() {
        for (j, row) in s.rows().into_iter().enumerate() {
            for (k, c) in row.iter().enumerate() {
                e[k] += w[j] * c.norm_sqr();
            }
        }
    }
    e.iter().map(|v| v * g.period()).collect()
}

/// `‖u‖_{L²}` of the band from the spectrum.
pub fn spectral_l2(u: &Field2D) -> f64 {
    mode_energies(u).iter().sum::<f64>().sqrt()
}

fn block_sum(grid: &crate::Grid, energies: &[f64]) -> f64 {
    let top = block_index(grid.xi_max());
    let mut blocks = vec![0.0; (top + 2) as usize];
    for (k, e) in energies.iter().enumerate() {
        blocks[(block_index(grid.wavenumber(k)) + 1) as usize] += e;
    }
    blocks.iter().map(|b| b.sqrt()).sum()
}

/// `Σ_j ‖Δ_j u‖_{L²}`.
pub fn besov_b021_norm(u: &Field2D) -> f64 {
    block_sum(u.grid(), &mode_energies(u))
}

/// `Σ_j ‖Δ_j ∇u‖_{L²}` with all components of `∇u` in each block.
pub fn besov_grad_norm(u: &Field2D) -> f64 {
    let g = u.grid();
    let ex = mode_energies(&dx(u));
    let ey = mode_energies(&dy(u));
    let e: Vec<f64> = ex.iter().zip(&ey).map(|(a, b)| a + b).collect();
    block_sum(g, &e)
}

/// `max_x ‖u(x, ·)‖_{L²_y}` over grid columns, all components.
pub fn sup_x_l2_y(u: &Field2D) -> f64 {
    let g = u.grid();
    let w = sbp_for(g).weights().to_vec();
    (0..g.nx())
        .map(|i| {
            u.layers()
                .iter()
                .map(|l| (0..g.rows()).map(|j| w[j] * l[[j, i]] * l[[j, i]]).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Output of [`low_pass_regularize`].
#[derive(Debug, Clone)]
pub struct Regularization {
    pub field: Field2D,
    /// The constant ramp force `−tail/τ` sampled on `[0, τ]`.
    pub force: Vec<Field2D>,
    /// Largest retained mode index.
    pub cutoff_index: usize,
    /// `‖force‖_{L¹((0,τ); H^k)}` measured on the samples.
    pub force_norm: f64,
    /// `ln ‖e^{2ρ|∂x|} field‖_{L²}`.
    pub log_weighted_norm: f64,
}

/// Samples of the ramp force over `[0, τ]`.
const RAMP_SAMPLES: usize = 5;

/// Trims the tangential spectrum of `u_star` to the highest mode for which
/// `e^{2ρ|ξ|}` stays representable (and at most `max_index`), removing the
/// tail by a linear ramp over `τ`. Fails if the ramp force exceeds `η` in
/// `L¹((0,τ); H^k)`.
pub fn low_pass_regularize(
    u_star: &Field2D,
    rho: f64,
    eta: f64,
    k: u32,
    tau: f64,
    max_index: Option<usize>,
) -> Result<Regularization> {
    if !(rho > 0.0) || !(eta >= 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ρ = {rho}, η = {eta}, τ = {tau}: need ρ > 0, η ≥ 0, τ > 0"
        )));
    }
    let g = u_star.grid().clone();
    let by_radius = (MAX_EXPONENT / (2.0 * rho * g.dxi())).floor() as usize;
    let n = by_radius.min(g.nx() / 2).min(max_index.unwrap_or(usize::MAX));
    let tail = if n >= g.nx() / 2 {
        Field2D::zeros(&g, u_star.components())
    } else {
        u_star.map_spectrum(|kk, _| {
            let drop = g.mode_index(kk).unsigned_abs() as usize > n;
            Complex64::new(if drop { 1.0 } else { 0.0 }, 0.0)
        })
    };
    let field = u_star.sub(&tail)?.with_time(u_star.time());
    let tail_hk = norms(&tail, &[k]).hk[&k];
    if tail_hk > eta {
        // the smallest η any cutoff up to the radius limit could meet
        return Err(Error::Infeasible(format!(
            "cutoff index {n} (radius {rho}) leaves a tail of {tail_hk:.3e} in H^{k} > η = {eta:.3e}"
        )));
    }
    let force: Vec<Field2D> = (0..RAMP_SAMPLES)
        .map(|i| tail.scaled(-1.0 / tau).with_time(tau * i as f64 / (RAMP_SAMPLES - 1) as f64))
        .collect();
    let series: Vec<(f64, f64)> = force
        .iter()
        .map(|f| (f.time(), norms(f, &[k]).hk[&k]))
        .collect();
    let force_norm = l1_in_time(&series);
    if force_norm > eta {
        return Err(Error::BudgetExceeded {
            realized: force_norm,
            eta,
        });
    }
    let log_weighted_norm = log_weighted_l2(&field, 2.0 * rho, n);
    Ok(Regularization {
        field,
        force,
        cutoff_index: n,
        force_norm,
        log_weighted_norm,
    })
}

/// `ln ‖e^{ρ|∂x|} u‖_{L²}` over modes with `|index| ≤ n`, without forming
/// the weight.
pub fn log_weighted_l2(u: &Field2D, rho: f64, n: usize) -> f64 {
    let g = u.grid();
    let logs: Vec<f64> = mode_energies(u)
        .iter()
        .enumerate()
        .filter(|(k, e)| **e > 0.0 && g.mode_index(*k).unsigned_abs() as usize <= n)
        .map(|(k, e)| e.ln() + 2.0 * rho * g.wavenumber(k).abs())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    0.5 * (top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln())
}

/// Evolution of the analyticity radius `ρ′ = −ℓ − b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusTrace {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    /// `ℓ(t) = ‖z∂zV(t)‖_∞`.
    pub loss: Vec<f64>,
    /// `b(t) = ε‖∇r_ρ(t)‖_{B⁰₂,₁}`.
    pub besov: Vec<f64>,
    pub truncation: usize,
    pub eps: f64,
    pub valid: bool,
    /// First sample time with `ρ ≤ 0`.
    pub invalid_at: Option<f64>,
}

/// Summary written next to a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSummary {
    pub valid: bool,
    pub invalid_at: Option<f64>,
    pub rho_initial: f64,
    pub rho_final: f64,
    pub total_loss: f64,
    pub total_besov: f64,
    /// `(ε ∫ ‖∇r_ρ‖²_{B⁰₂,₁})^{1/2}`.
    pub cs_energy: f64,
    /// `√(εT) · cs_energy`, an upper bound for `∫ b`.
    pub cs_bound: f64,
}

/// Trapezoid integrator that can be fed one sample at a time.
#[derive(Debug, Clone)]
pub struct RadiusIntegrator {
    trace: RadiusTrace,
}

impl RadiusIntegrator {
    pub fn new(rho0: f64, eps: f64, truncation: usize) -> Self {
        Self {
            trace: RadiusTrace {
                times: vec![],
                rho: vec![],
                loss: vec![],
                besov: vec![],
                truncation,
                eps,
                valid: rho0 > 0.0,
                invalid_at: None,
            },
        }
        .with_initial(rho0)
    }

    fn with_initial(mut self, rho0: f64) -> Self {
        self.trace.rho.push(rho0);
        self
    }

    /// Current radius.
    pub fn rho(&self) -> f64 {
        *self.trace.rho.last().expect("initial radius")
    }

    /// Adds the integrand at time `t`; returns the updated radius.
    pub fn push(&mut self, t: f64, loss: f64, besov: f64) -> f64 {
        let tr = &mut self.trace;
        if let (Some(&t0), Some(&l0), Some(&b0)) = (tr.times.last(), tr.loss.last(), tr.besov.last()) {
            let r = tr.rho.last().copied().unwrap_or(0.0) - 0.5 * (t - t0) * (l0 + b0 + loss + besov);
            tr.rho.push(r);
        }
        tr.times.push(t);
        tr.loss.push(loss);
        tr.besov.push(besov);
        let r = *tr.rho.last().unwrap_or(&0.0);
        if r <= 0.0 && tr.invalid_at.is_none() {
            tr.valid = false;
            tr.invalid_at = Some(t);
        }
        r
    }

    pub fn finish(self) -> RadiusTrace {
        self.trace
    }
}

/// Integrates `ρ′ = −ℓ − b` on a common time grid.
pub fn integrate_radius(rho0: f64, times: &[f64], loss: &[f64], besov: &[f64], eps: f64, truncation: usize) -> Result<RadiusTrace> {
    if times.len() != loss.len() || times.len() != besov.len() || times.is_empty() {
        return Err(Error::Shape("radius series must share a nonempty time grid".into()));
    }
    let mut it = RadiusIntegrator::new(rho0, eps, truncation);
    for ((t, l), b) in times.iter().zip(loss).zip(besov) {
        it.push(*t, *l, *b);
    }
    Ok(it.finish())
}

impl RadiusTrace {
    pub fn summary(&self) -> RadiusSummary {
        let series = |v: &[f64]| -> Vec<(f64, f64)> {
            self.times.iter().copied().zip(v.iter().copied()).collect()
        };
        let total_loss = l1_in_time(&series(&self.loss));
        let total_besov = l1_in_time(&series(&self.besov));
        let b2: Vec<f64> = self.besov.iter().map(|b| b * b).collect();
        let eps = self.eps.max(f64::MIN_POSITIVE);
        let cs_energy = (l1_in_time(&series(&b2)) / eps).sqrt();
        let span = match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        RadiusSummary {
            valid: self.valid,
            invalid_at: self.invalid_at,
            rho_initial: self.rho.first().copied().unwrap_or(0.0),
            rho_final: self.rho.last().copied().unwrap_or(0.0),
            total_loss,
            total_besov,
            cs_energy,
            cs_bound: (self.eps * span).sqrt() * cs_energy,
        }
    }

    /// Largest mismatch between the stored radius and one rebuilt from the
    /// stored integrand.
    pub fn consistency_error(&self) -> f64 {
        let mut r = self.rho[0];
        let mut err = 0.0_f64;
        for i in 1..self.times.len() {
            let dt = self.times[i] - self.times[i - 1];
            r -= 0.5 * dt * (self.loss[i - 1] + self.besov[i - 1] + self.loss[i] + self.besov[i]);
            err = err.max((r - self.rho[i]).abs());
        }
        err
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,rho,loss,besov")?;
        for i in 0..self.times.len() {
            writeln!(w, "{:e},{:e},{:e},{:e}", self.times[i], self.rho[i], self.loss[i], self.besov[i])?;
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(&self.summary()).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Block norms `‖Δ_j u‖` for `j = −1..=top`, computed in parallel.
pub fn block_norms(u: &Field2D) -> Vec<f64> {
    (-1..=top_block(u))
        .into_par_iter()
        .map(|j| norms(&lp_block(u, j), &[]).l2)
        .collect()
}
