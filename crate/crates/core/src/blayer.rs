//! Boundary-layer heat profile on the half line.
//!
//! `V` solves `∂tV = ∂zzV` on `z > 0` with `V(t, 0) = h(t)` and `V(0, z) = 0`:
//!
//! `V(t, z) = ∫₀^t h(s) K(t − s, z) ds`,
//! `K(τ, z) = z (4π)^{−1/2} τ^{−3/2} exp(−z²/(4τ))`.
//!
//! Near the support of `h` the substitution `σ = z / (2√(t − s))` turns the
//! kernel into `(2/√π) e^{−σ²} dσ` and removes the singularity at `s → t`.
//! Once `t` is past the support, the integrand is smooth and the `s`-integral
//! is taken with the base flow's own design quadrature. Far from the support
//! the kernel is expanded about the centre `s₀` of the data:
//!
//! `V = Σ_k (−1)^k M_k / k! ∂τ^k K(t − s₀, z)`, `M_k = ∫ (s − s₀)^k h ds`,
//!
//! with `∂τ^k K = H_{2k+1}(u) e^{−u²} / (2√π τ (4τ)^k)`, `u = z / 2√τ`.
//! Moments that are zero to the precision of their own sum are dropped
//! exactly, so the fast decay is not buried under a round-off floor.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::baseflow::BaseFlow;
use crate::quad::{adaptive_n, Rule};
use crate::{Error, Result};

/// Dirichlet data `h` seen by the heat solver.
pub trait BoundaryData: Send + Sync {
    fn value(&self, t: f64) -> f64;
    /// End of the support; `f64::INFINITY` for data that never switch off.
    fn support_end(&self) -> f64;
    /// Breakpoints between which `h` is smooth.
    fn breaks(&self) -> Vec<f64>;
    /// Quadrature with nodes/values of `h`, exact for its moments.
    fn design_rule(&self) -> Option<(&Rule, &[f64])>;
    fn max_abs(&self) -> f64;
}

impl BoundaryData for BaseFlow {
    fn value(&self, t: f64) -> f64 {
        BaseFlow::value(self, t)
    }

    fn support_end(&self) -> f64 {
        self.t_final()
    }

    fn breaks(&self) -> Vec<f64> {
        BaseFlow::breaks(self)
    }

    fn design_rule(&self) -> Option<(&Rule, &[f64])> {
        Some((BaseFlow::design_rule(self), self.design_values()))
    }

    fn max_abs(&self) -> f64 {
        BaseFlow::max_abs(self)
    }
}

/// Constant data switched on at `t = 0` (not smooth; used as a closed-form
/// reference: `V = c·erfc(z / 2√t)`).
#[derive(Debug, Clone, Copy)]
pub struct ConstantData(pub f64);

impl BoundaryData for ConstantData {
    fn value(&self, _t: f64) -> f64 {
        self.0
    }

    fn support_end(&self) -> f64 {
        f64::INFINITY
    }

    fn breaks(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn design_rule(&self) -> Option<(&Rule, &[f64])> {
        None
    }

    fn max_abs(&self) -> f64 {
        self.0.abs()
    }
}

/// `e^{−σ²}` is below 1e−35 past this point.
const SIGMA_CUT: f64 = 9.0;

/// `K(τ, z)`.
pub fn kernel(tau: f64, z: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let u = z / (2.0 * tau.sqrt());
    u * (-u * u).exp() / (PI.sqrt() * tau)
}

/// Resolution of a profile table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileGrids {
    /// Samples on `(0, t_switch]`, clustered quadratically towards 0.
    pub early_points: usize,
    /// Log-spaced samples per decade beyond `t_switch`.
    pub per_decade: usize,
    /// The table extends to `t_max_factor · T`.
    pub t_max_factor: f64,
    /// `z_max = z_factor · √t`.
    pub z_factor: f64,
    /// Geometric ratio of the z panels.
    pub z_ratio: f64,
    /// Gauss points per z panel.
    pub z_order: usize,
}

impl Default for ProfileGrids {
    fn default() -> Self {
        Self {
            early_points: 96,
            per_decade: 24,
            t_max_factor: 1e4,
            z_factor: 40.0,
            z_ratio: 1.5,
            z_order: 16,
        }
    }
}

impl ProfileGrids {
    /// Twice the resolution in `t` and `z`.
    pub fn refined(&self) -> Self {
        Self {
            early_points: 2 * self.early_points,
            per_decade: 2 * self.per_decade,
            z_ratio: self.z_ratio.sqrt(),
            z_order: self.z_order,
            ..*self
        }
    }
}

/// Tabulated diagnostics at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub t: f64,
    pub l2: f64,
    /// `‖z ∂zV(t)‖_∞`.
    pub grad_sup: f64,
    /// `∫ z^k V dz` for `k = 1, 3, 5`.
    pub moments: [f64; 3],
}

/// Solution of the boundary-layer heat problem with its diagnostic table.
#[derive(Clone)]
pub struct HalfLineProfile {
    data: Arc<dyn BoundaryData>,
    grids: ProfileGrids,
    /// Time scale of the data (the support end, or 1 for unbounded data).
    scale: f64,
    expansion: Option<MomentExpansion>,
    samples: Vec<ProfileSample>,
}

/// Terms kept in the far-field expansion.
const EXPANSION_TERMS: usize = 36;
/// The expansion takes over at `t = EXPANSION_START · T`.
const EXPANSION_START: f64 = 6.0;

/// Central moments of `h`, normalised as `M_k / (k! (T/2)^k)`.
#[derive(Debug, Clone)]
struct MomentExpansion {
    center: f64,
    half: f64,
    moments: Vec<f64>,
}

impl MomentExpansion {
    fn new(rule: &Rule, vals: &[f64], t_final: f64) -> Self {
        let center = 0.5 * t_final;
        let half = 0.5 * t_final;
        let mut fact = 1.0;
        let moments = (0..EXPANSION_TERMS)
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                // Neumaier-compensated sum with its absolute bound
                let (mut sum, mut comp, mut bound) = (0.0_f64, 0.0_f64, 0.0_f64);
                for ((s, w), h) in rule.nodes.iter().zip(&rule.weights).zip(vals) {
                    let x = w * h * ((s - center) / half).powi(k as i32);
                    let t = sum + x;
                    comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
                    sum = t;
                    bound += x.abs();
                }
                let m = sum + comp;
                if m.abs() <= 1e-12 * bound {
                    0.0
                } else {
                    m / fact
                }
            })
            .collect();
        Self { center, half, moments }
    }

    fn eval(&self, t: f64, z: f64) -> (f64, f64) {
        let tau = t - self.center;
        let u = z / (2.0 * tau.sqrt());
        let gauss = (-u * u).exp();
        if gauss == 0.0 {
            return (0.0, 0.0);
        }
        let pref = gauss / (2.0 * PI.sqrt() * tau);
        let r = self.half / (4.0 * tau);
        // H_n(u) by the three-term recurrence, n up to 2K + 1
        let (mut hm, mut h) = (1.0, 2.0 * u);
        let (mut v, mut g) = (0.0, 0.0);
        let mut rk = 1.0;
        for (k, m) in self.moments.iter().enumerate() {
            let n = 2 * k + 1;
            let hn1 = 2.0 * u * h - 2.0 * n as f64 * hm;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            v += sign * m * rk * h;
            g -= sign * m * rk * u * hn1;
            let hn2 = 2.0 * u * hn1 - 2.0 * (n + 1) as f64 * h;
            hm = hn1;
            h = hn2;
            rk *= r;
        }
        (pref * v, pref * g)
    }
}

impl std::fmt::Debug for HalfLineProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HalfLineProfile")
            .field("grids", &self.grids)
            .field("samples", &self.samples.len())
            .finish()
    }
}

/// Solves the heat problem for `h` and tabulates norms on the time grid.
pub fn solve_boundary_layer(
    h: Arc<dyn BoundaryData>,
    grids: ProfileGrids,
) -> Result<HalfLineProfile> {
    let end = h.support_end();
    let scale = if end.is_finite() { end } else { 1.0 };
    let expansion = h
        .design_rule()
        .filter(|_| end.is_finite())
        .map(|(rule, vals)| MomentExpansion::new(rule, vals, end));
    let mut p = HalfLineProfile {
        data: h,
        grids,
        scale,
        expansion,
        samples: Vec::new(),
    };
    let times = p.time_grid();
    let samples: Result<Vec<ProfileSample>> = {
        use rayon::prelude::*;
        times.par_iter().map(|t| p.sample(*t)).collect()
    };
    p.samples = samples?;
    Ok(p)
}

impl HalfLineProfile {
    pub fn data(&self) -> &dyn BoundaryData {
        self.data.as_ref()
    }

    pub fn samples(&self) -> &[ProfileSample] {
        &self.samples
    }

    pub fn grids(&self) -> &ProfileGrids {
        &self.grids
    }

    /// Past this time the design quadrature is used.
    fn t_switch(&self) -> f64 {
        1.25 * self.scale
    }

    fn time_grid(&self) -> Vec<f64> {
        let g = &self.grids;
        let ts = self.t_switch();
        let mut t: Vec<f64> = (1..=g.early_points)
            .map(|i| ts * (i as f64 / g.early_points as f64).powi(2))
            .collect();
        let t_max = g.t_max_factor * self.scale;
        let decades = (t_max / ts).log10();
        let n = (decades * g.per_decade as f64).ceil() as usize;
        for i in 1..=n {
            t.push(ts * 10f64.powf(decades * i as f64 / n as f64));
        }
        t
    }

    /// `(V, z∂zV)` at one point.
    pub fn eval(&self, t: f64, z: f64) -> Result<(f64, f64)> {
        if t <= 0.0 {
            return Ok((0.0, 0.0));
        }
        if z <= 0.0 {
            return Ok((self.data.value(t), 0.0));
        }
        if let Some(e) = &self.expansion {
            if t >= EXPANSION_START * self.scale {
                return Ok(e.eval(t, z));
            }
        }
        match self.data.design_rule() {
            Some((rule, vals)) if t >= self.t_switch() => Ok(s_form(rule, vals, t, z)),
            _ => self.sigma_form(t, z),
        }
    }

    pub fn value(&self, t: f64, z: f64) -> Result<f64> {
        Ok(self.eval(t, z)?.0)
    }

    fn sigma_form(&self, t: f64, z: f64) -> Result<(f64, f64)> {
        let mut pts: Vec<f64> = self
            .data
            .breaks()
            .into_iter()
            .filter(|b| *b >= 0.0 && *b < t)
            .collect();
        if pts.first().is_none_or(|b| *b > 0.0) {
            pts.insert(0, 0.0);
        }
        pts.push(t);
        let tol = 1e-13 * self.data.max_abs().max(1e-300);
        let c = 2.0 / PI.sqrt();
        let sig = |s: f64| z / (2.0 * (t - s).sqrt());
        let (mut v, mut g) = (0.0, 0.0);
        let h = |s: f64| self.data.value(t - z * z / (4.0 * s * s));
        for w in pts.windows(2) {
            let lo = sig(w[0]);
            if lo > SIGMA_CUT {
                continue;
            }
            let hi = if w[1] >= t { SIGMA_CUT } else { sig(w[1]).min(SIGMA_CUT) };
            // geometric sub-intervals: the piece can span many decades in σ
            let mut a = lo;
            while a < hi {
                let b = (2.0 * a).min(hi);
                let [dv, dg] = adaptive_n(
                    |s| {
                        let e = h(s) * (-s * s).exp();
                        [e, (1.0 - 2.0 * s * s) * e]
                    },
                    a,
                    b,
                    tol,
                )?;
                v += dv;
                g += dg;
                a = b;
            }
        }
        Ok((c * v, c * g))
    }

    /// Panel breakpoints of the z quadrature at time `t`.
    fn z_breaks(&self, t: f64, z_end: Option<f64>) -> Vec<f64> {
        let g = &self.grids;
        let z_max = g.z_factor * t.sqrt();
        let z_top = z_end.map_or(z_max, |e| e.min(z_max));
        let mut z = 0.005 * t.sqrt().min(self.scale.sqrt());
        let mut b = vec![0.0];
        while z < z_top {
            b.push(z);
            z *= g.z_ratio;
        }
        b.push(z_top);
        b
    }

    fn z_rule(&self, t: f64, z_end: Option<f64>) -> Rule {
        Rule::on_breaks(&self.z_breaks(t, z_end), self.grids.z_order)
    }

    fn sample(&self, t: f64) -> Result<ProfileSample> {
        let rule = self.z_rule(t, None);
        let mut vals = Vec::with_capacity(rule.len());
        for z in &rule.nodes {
            vals.push(self.eval(t, *z)?);
        }
        let mut l2 = 0.0;
        let mut moments = [0.0; 3];
        for ((z, w), (v, _)) in rule.nodes.iter().zip(&rule.weights).zip(&vals) {
            l2 += w * v * v;
            moments[0] += w * z * v;
            moments[1] += w * z.powi(3) * v;
            moments[2] += w * z.powi(5) * v;
        }
        let grad_sup = self.refine_max(t, &rule.nodes, &vals.iter().map(|p| p.1).collect::<Vec<_>>())?;
        Ok(ProfileSample {
            t,
            l2: l2.sqrt(),
            grad_sup,
            moments,
        })
    }

    /// Grid maximum of `|z∂zV|` with one parabolic refinement.
    fn refine_max(&self, t: f64, z: &[f64], g: &[f64]) -> Result<f64> {
        let (q, best) = g
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(qi, m), (i, v)| if v.abs() > m { (i, v.abs()) } else { (qi, m) });
        if q == 0 || q + 1 >= z.len() || best == 0.0 {
            return Ok(best);
        }
        let (z0, z1, z2) = (z[q - 1], z[q], z[q + 1]);
        let (f0, f1, f2) = (g[q - 1].abs(), g[q].abs(), g[q + 1].abs());
        let den = (z1 - z0) * (f1 - f2) - (z1 - z2) * (f1 - f0);
        if den == 0.0 {
            return Ok(best);
        }
        let num = (z1 - z0).powi(2) * (f1 - f2) - (z1 - z2).powi(2) * (f1 - f0);
        let zs = z1 - 0.5 * num / den;
        if !(zs > z0 && zs < z2) {
            return Ok(best);
        }
        Ok(best.max(self.eval(t, zs)?.1.abs()))
    }

    /// `‖V(t)‖_{L²(ℝ₊)}`.
    pub fn l2_norm(&self, t: f64) -> Result<f64> {
        self.l2_on(t, None)
    }

    fn l2_on(&self, t: f64, z_end: Option<f64>) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let rule = self.z_rule(t, z_end);
        let mut acc = 0.0;
        for (z, w) in rule.nodes.iter().zip(&rule.weights) {
            let v = self.eval(t, *z)?.0;
            acc += w * v * v;
        }
        Ok(acc.sqrt())
    }

    /// Writes `(t, ‖V‖, ‖z∂zV‖_∞, moments 1, 3, 5)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,l2,grad_sup,moment1,moment3,moment5")?;
        for s in &self.samples {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                s.t, s.l2, s.grad_sup, s.moments[0], s.moments[1], s.moments[2]
            )?;
        }
        Ok(())
    }
}

fn s_form(rule: &Rule, vals: &[f64], t: f64, z: f64) -> (f64, f64) {
    let (mut v, mut g) = (0.0, 0.0);
    for ((s, w), h) in rule.nodes.iter().zip(&rule.weights).zip(vals) {
        let tau = t - s;
        let u2 = z * z / (4.0 * tau);
        let k = kernel(tau, z);
        v += w * h * k;
        g += w * h * (1.0 - 2.0 * u2) * k;
    }
    (v, g)
}

/// `‖z∂zV(t)‖_∞` over the z quadrature nodes, refined once around the maximum.
pub fn weighted_grad_norm(v: &HalfLineProfile, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let rule = v.z_rule(t, None);
    let mut g = Vec::with_capacity(rule.len());
    for z in &rule.nodes {
        g.push(v.eval(t, *z)?.1);
    }
    v.refine_max(t, &rule.nodes, &g)
}

/// `∫ z^k V(t, z) dz`.
pub fn z_moment(v: &HalfLineProfile, t: f64, k: u32) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let rule = v.z_rule(t, None);
    let mut acc = 0.0;
    for (z, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * z.powi(k as i32) * v.eval(t, *z)?.0;
    }
    Ok(acc)
}

/// Tail exponent above which `∫ ℓ dt` is reported divergent (`ℓ ~ t^p`,
/// divergent when `p ≥ −1 − DIVERGENCE_MARGIN`).
pub const DIVERGENCE_MARGIN: f64 = 0.05;

/// `∫₀^∞ ‖z∂zV(t)‖_∞ dt` from the tabulated samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusLoss {
    pub value: f64,
    /// Power-law extrapolation beyond the table.
    pub tail: f64,
    pub tail_fraction: f64,
    /// Fitted exponent of `ℓ(t)` over the last decade.
    pub tail_exponent: f64,
    pub divergent: bool,
}

pub fn total_radius_loss(v: &HalfLineProfile) -> RadiusLoss {
    let s = v.samples();
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    pts.extend(s.iter().map(|p| (p.t, p.grad_sup)));
    let body = crate::field::l1_in_time(&pts);
    if body == 0.0 {
        return RadiusLoss {
            value: 0.0,
            tail: 0.0,
            tail_fraction: 0.0,
            tail_exponent: f64::NEG_INFINITY,
            divergent: false,
        };
    }
    let t_max = s.last().map_or(0.0, |p| p.t);
    let series: Vec<(f64, f64)> = s
        .iter()
        .filter(|p| p.t >= t_max / 10.0 && p.grad_sup > 0.0)
        .map(|p| (p.t, p.grad_sup))
        .collect();
    let p = log_slope(&series).unwrap_or(f64::NAN);
    let divergent = !(p < -1.0 - DIVERGENCE_MARGIN);
    let last = s.last().map_or(0.0, |p| p.grad_sup);
    let tail = if divergent {
        f64::INFINITY
    } else {
        last * t_max / (-p - 1.0)
    };
    if divergent {
        log::warn!("radius-loss integrand decays like t^{p:.3}; the integral does not converge");
    }
    let value = body + tail;
    RadiusLoss {
        value,
        tail,
        tail_fraction: tail / value,
        tail_exponent: p,
        divergent,
    }
}

fn log_slope(series: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, v)| *t > 0.0 && *v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Least-squares slope of `log v` against `log t` over samples in `[t1, t2]`.
pub fn fit_decay_exponent(series: &[(f64, f64)], window: (f64, f64)) -> Result<f64> {
    let (t1, t2) = window;
    if !(t1 > 0.0) || t2 < 10.0 * t1 * (1.0 - 1e-12) {
        return Err(Error::WindowTooNarrow { t1, t2 });
    }
    let inside: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= t1 * (1.0 - 1e-12) && *t <= t2 * (1.0 + 1e-12))
        .collect();
    log_slope(&inside).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "need at least two positive samples in [{t1}, {t2}]"
        ))
    })
}

/// `‖V(t, (1 + y)/√ε)‖_{L²(−1, 1)} = ε^{1/4} ‖V(t)‖_{L²(0, 2/√ε)}`.
pub fn rescaled_trace_norm(v: &HalfLineProfile, t: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0, 1]")));
    }
    Ok(eps.powf(0.25) * v.l2_on(t, Some(2.0 / eps.sqrt()))?)
}

/// JSON report of a decay study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub m: usize,
    pub exponent: f64,
    pub window: (f64, f64),
    pub radius_loss: RadiusLoss,
}
