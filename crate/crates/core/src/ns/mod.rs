//! The ε-scaled channel problem.
//!
//! In the scaled variables `u^ε(s) = ε u(εs)` the controlled flow solves
//!
//! `∂s u + (u·∇)u − εΔu + ∇p = f^ε`, `u(0) = ε u_*`, `s ∈ [0, T/ε]`,
//!
//! with no-slip walls. The Ansatz is
//!
//! `[h(s) − χ₋(y) V(s, (1+y)/√ε) − χ₊(y) V(s, (1−y)/√ε)] e_x + ε u¹(s)`,
//!
//! where `V(s, 0) = h(s)` cancels the tangential trace of `h` on each wall.
//! The flushing flow `h e_x` is driven by a uniform pressure gradient `h′`;
//! `ε f¹` (minus its near-wall residual) is the only body force.

mod pipeline;
mod solver;

pub use pipeline::{
    co_integrate, default_truncation, prepare_datum, run_scaled, vortex_datum, write_run,
    DiagnosticRow, PhantomLedger, PreparedDatum, RegularizationOptions, RunOptions, RunOutput,
};
pub use solver::{step_ns, NsSolver, DEFAULT_CFL};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baseflow::BaseFlow;
use crate::blayer::HalfLineProfile;
use crate::field::{dx, dy, leray_project, norms, Field2D};
use crate::transport::{SplitCutoffs, TransportProfile};
use crate::{analytic, Error, Result};

/// Parameters of one scaled run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    /// Viscosity scale `ε`.
    pub eps: f64,
    /// Control horizon `T` (in scaled time the flushing lasts `[0, T]`).
    pub t_final: f64,
    /// Length `L` of the physical domain.
    pub length: f64,
    /// Phantom budget `η`.
    pub eta: f64,
    /// Sobolev order of the phantom norms.
    pub k: u32,
    /// Vertical localization margin `δ` of the force split.
    pub delta: f64,
    /// Endgame threshold on `‖u^ε(T/ε)|Ω‖ / ε`.
    pub theta: f64,
    /// Vanishing odd moments of `h`.
    pub m: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            t_final: 3.0,
            length: 1.0,
            eta: 1e-3,
            k: 2,
            delta: 0.1,
            theta: 0.05,
            m: 0,
        }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(&format!("eps = {} must lie in (0, 1)", self.eps));
        }
        if !(self.t_final > 0.0) {
            return bad(&format!("t_final = {} must be positive", self.t_final));
        }
        if !(self.length > 0.0) {
            return bad(&format!("length = {} must be positive", self.length));
        }
        if !(self.eta > 0.0) {
            return bad(&format!("eta = {} must be positive", self.eta));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(&format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if !(self.theta > 0.0) {
            return bad(&format!("theta = {} must be positive", self.theta));
        }
        Ok(())
    }

    /// `T/ε`.
    pub fn horizon(&self) -> f64 {
        self.t_final / self.eps
    }
}

/// Wall cutoffs `χ±` with a tanh transition of the given width about `y = 0`,
/// normalised so that `χ₋(−1) = χ₊(1) = 1` and `χ₋(1) = χ₊(−1) = 0` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WallCutoffs {
    pub width: f64,
}

impl Default for WallCutoffs {
    fn default() -> Self {
        Self { width: 0.2 }
    }
}

impl WallCutoffs {
    pub fn lower(&self, y: f64) -> f64 {
        let t = (1.0 / self.width).tanh();
        (t - (y / self.width).tanh()) / (2.0 * t)
    }

    pub fn upper(&self, y: f64) -> f64 {
        1.0 - self.lower(y)
    }
}

/// Everything needed to evaluate the Ansatz.
#[derive(Debug, Clone)]
pub struct AnsatzBundle {
    pub h: BaseFlow,
    /// Layer profile, used for both walls.
    pub v: HalfLineProfile,
    pub u1: TransportProfile,
    pub cutoffs: WallCutoffs,
    pub eps: f64,
}

impl AnsatzBundle {
    /// `h(s) − χ₋V(s, (1+y)/√ε) − χ₊V(s, (1−y)/√ε)` on the grid rows.
    pub fn mean_profile(&self, s: f64) -> Result<Vec<f64>> {
        let g = self.u1.grid();
        let h = self.h.value(s);
        let se = self.eps.sqrt();
        (0..g.rows())
            .map(|j| {
                let y = g.y(j);
                let lo = self.cutoffs.lower(y);
                let hi = self.cutoffs.upper(y);
                let mut v = h;
                if lo != 0.0 {
                    v -= lo * self.v.value(s, (1.0 + y) / se)?;
                }
                if hi != 0.0 {
                    v -= hi * self.v.value(s, (1.0 - y) / se)?;
                }
                Ok(v)
            })
            .collect()
    }
}

/// The Ansatz velocity at scaled time `s`.
pub fn assemble_ansatz(bundle: &AnsatzBundle, s: f64) -> Result<Field2D> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("t = {s} must be nonnegative")));
    }
    let u1 = bundle.u1.velocity(s)?;
    let profile = bundle.mean_profile(s)?;
    let g = u1.grid().clone();
    let mut layers = u1.scaled(bundle.eps).into_layers();
    let mut mean = Array2::zeros((g.rows(), g.nx()));
    for (j, v) in profile.iter().enumerate() {
        mean.row_mut(j).fill(*v);
    }
    layers[0] = &layers[0] + &mean;
    Ok(Field2D::from_layers(&g, layers)?.with_time(s))
}

/// Remainder of a state with respect to the Ansatz.
#[derive(Debug, Clone)]
pub struct RemainderState {
    /// `r = (u^ε − ansatz)/ε`.
    pub r: Field2D,
    pub l2: f64,
    /// `e^{ρ|∂x|} r` truncated at mode `N`, when a radius was given.
    pub r_rho: Option<Field2D>,
    /// `ε ‖∇r_ρ‖_{B⁰₂,₁}` (zero without a radius).
    pub besov: f64,
}

/// `r = (u − assemble_ansatz(bundle, s))/ε` and, for `weight = (ρ, N)`,
/// the weighted remainder and its Besov feedback.
pub fn extract_remainder(
    u: &Field2D,
    bundle: &AnsatzBundle,
    s: f64,
    weight: Option<(f64, usize)>,
) -> Result<RemainderState> {
    let a = assemble_ansatz(bundle, s)?;
    if !u.grid().same_shape(a.grid()) {
        return Err(Error::Shape("state and Ansatz grids differ".into()));
    }
    let r = u.sub(&a)?.scaled(1.0 / bundle.eps).with_time(s);
    let l2 = norms(&r, &[]).l2;
    let (r_rho, besov) = match weight {
        Some((rho, n)) => {
            let w = analytic::analytic_weight(&r, rho.max(0.0), n)?;
            let b = bundle.eps * analytic::besov_grad_norm(&w);
            (Some(w), b)
        }
        None => (None, 0.0),
    };
    Ok(RemainderState { r, l2, r_rho, besov })
}

/// Ansatz residual `σ`: what the Ansatz leaves unbalanced in the scaled
/// equation, after removing gradients, divided by `ε`.
///
/// The layer and transport parts solve their own equations exactly, so
/// only the interaction terms are evaluated:
///
/// * the cutoff commutator `ε Σ (χ″V + 2χ′∂yV)`,
/// * `ε (U − h) ∂x u¹ + ε u¹₂ U′ e_x`,
/// * `ε² ((u¹·∇)u¹ − Δu¹)`,
/// * the near-wall part of `ε f¹` dropped from the applied force
///   (given the split cutoffs).
pub fn ansatz_residual(bundle: &AnsatzBundle, s: f64, split: Option<&SplitCutoffs>) -> Result<f64> {
    let g = bundle.u1.grid().clone();
    let eps = bundle.eps;
    let se = eps.sqrt();
    let w = bundle.cutoffs.width;
    let t = (1.0 / w).tanh();
    let h = bundle.h.value(s);
    let rows = g.rows();
    let (mut big_u, mut du, mut comm) = (vec![0.0; rows], vec![0.0; rows], vec![0.0; rows]);
    for j in 0..rows {
        let y = g.y(j);
        let th = (y / w).tanh();
        let sech2 = 1.0 - th * th;
        let lo = (t - th) / (2.0 * t);
        let d1 = -sech2 / (2.0 * t * w);
        let d2 = th * sech2 / (t * w * w);
        // ∂y of V(s, (1 ± y)/√ε), from z∂zV
        let side = |z: f64, sign: f64| -> Result<(f64, f64)> {
            let (v, zv) = bundle.v.eval(s, z)?;
            let dv = if z > 0.0 { sign * zv / (z * se) } else { 0.0 };
            Ok((v, dv))
        };
        let (vl, dvl) = side((1.0 + y) / se, 1.0)?;
        let (vu, dvu) = side((1.0 - y) / se, -1.0)?;
        big_u[j] = h - lo * vl - (1.0 - lo) * vu;
        du[j] = -(d1 * vl + lo * dvl) + d1 * vu - (1.0 - lo) * dvu;
        comm[j] = eps * ((d2 * vl + 2.0 * d1 * dvl) - (d2 * vu + 2.0 * d1 * dvu));
    }
    let u1 = bundle.u1.velocity(s)?;
    let a = u1.component(0);
    let b = u1.component(1);
    let lap = |c: &Field2D| dx(&dx(c)).add(&dy(&dy(c)));
    let part = |c: &Field2D, idx: usize| -> Result<Array2<f64>> {
        let cx = dx(c).into_layers().remove(0);
        let cy = dy(c).into_layers().remove(0);
        let l = lap(c)?.into_layers().remove(0);
        let mut out = (&cx * a.layer(0) + &cy * b.layer(0) - &l) * (eps * eps);
        for ((j, i), v) in out.indexed_iter_mut() {
            *v += eps * (big_u[j] - h) * cx[[j, i]];
            if idx == 0 {
                *v += eps * b.layer(0)[[j, i]] * du[j] + comm[j];
            }
        }
        Ok(out)
    };
    let mut res = Field2D::from_layers(&g, vec![part(&a, 0)?, part(&b, 1)?])?;
    if let Some(cut) = split {
        let f = bundle.u1.force(s)?;
        let dropped = f.weighted(|x, y| cut.inside_x(x) * (1.0 - cut.vertical(y))).scaled(eps);
        res = res.add(&dropped)?;
    }
    // the wall rows carry the no-slip constraint, not the momentum equation
    let mut layers = res.into_layers();
    for l in layers.iter_mut() {
        l.row_mut(0).fill(0.0);
        l.row_mut(rows - 1).fill(0.0);
    }
    let p = leray_project(&Field2D::from_layers(&g, layers)?)?;
    Ok(norms(&p, &[]).l2 / eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseflow::{design_base_flow, design_cutoff};
    use crate::blayer::{solve_boundary_layer, ProfileGrids};
    use crate::field::{extend_initial_data, l2_omega, Grid};
    use std::sync::Arc;

    fn bundle(g: &Grid, eps: f64, amp: f64) -> AnsatzBundle {
        let h = design_base_flow(3.0, 1.0, 0).unwrap();
        let v = solve_boundary_layer(Arc::new(h.clone()), ProfileGrids::default()).unwrap();
        let u = vortex_datum(g, amp, 0.5, 0.12).unwrap();
        let ext = extend_initial_data(&u, 1e-6).unwrap();
        let u1 = TransportProfile::new(&ext.field, h.clone(), design_cutoff(3.0).unwrap()).unwrap();
        AnsatzBundle {
            h,
            v,
            u1,
            cutoffs: WallCutoffs::default(),
            eps,
        }
    }

    #[test]
    fn config_ranges_are_enforced() {
        assert!(ScalingConfig::default().validate().is_ok());
        for c in [
            ScalingConfig { eps: 1.5, ..Default::default() },
            ScalingConfig { eps: 0.0, ..Default::default() },
            ScalingConfig { delta: 1.0, ..Default::default() },
            ScalingConfig { eta: 0.0, ..Default::default() },
            ScalingConfig { theta: -1.0, ..Default::default() },
            ScalingConfig { t_final: 0.0, ..Default::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn wall_cutoffs_are_complementary_and_exact_at_walls() {
        let c = WallCutoffs::default();
        assert_eq!(c.lower(-1.0), 1.0);
        assert_eq!(c.upper(1.0), 1.0);
        assert!(c.lower(1.0).abs() < 1e-15);
        assert!((c.lower(0.0) - 0.5).abs() < 1e-15);
        for y in [-0.7, -0.1, 0.4] {
            assert!((c.lower(y) + c.upper(y) - 1.0).abs() < 1e-15);
            assert!((c.lower(y) - c.upper(-y)).abs() < 1e-14);
        }
    }

    #[test]
    fn ansatz_starts_from_the_scaled_datum_and_keeps_no_slip() {
        let g = Grid::new(256, 64, -4.0, 6.0, 1.0).unwrap();
        let b = bundle(&g, 0.1, 0.1);
        let a0 = assemble_ansatz(&b, 0.0).unwrap();
        let target = b.u1.initial().scaled(0.1);
        // u¹(0) goes through the stream function and back
        assert!(a0.max_diff(&target) < 1e-12 * target.max_abs());
        let last = g.rows() - 1;
        let trace = |f: &Field2D| {
            let l = f.layer(0);
            l.row(0).iter().chain(l.row(last).iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
        };
        for s in [0.3, 1.0, 1.7, 2.5, 3.0, 10.0] {
            let p = b.mean_profile(s).unwrap();
            assert!(p[0].abs() < 1e-12 && p[last].abs() < 1e-12, "s = {s}");
            // the rest is the discrete wall derivative of εu¹'s stream function
            let a = assemble_ansatz(&b, s).unwrap();
            let u1 = b.u1.velocity(s).unwrap().scaled(0.1);
            assert!((trace(&a) - trace(&u1)).abs() < 1e-12, "s = {s}");
            // horizontal and x-independent layer: the divergence is that of εu¹
            assert!(crate::field::max_divergence(&a).unwrap() < 1e-10);
        }
        // past T only the layers remain in Ω
        let a = assemble_ansatz(&b, 3.5).unwrap();
        let prof = b.mean_profile(3.5).unwrap();
        let layer = Field2D::vector_from_fn(&g, |_, y| (prof[((y + 1.0) / g.dy()).round() as usize], 0.0));
        assert!((l2_omega(&a) - l2_omega(&layer)).abs() < 1e-12);
    }

    #[test]
    fn remainder_of_the_ansatz_vanishes() {
        let g = Grid::new(256, 32, -4.0, 6.0, 1.0).unwrap();
        let b = bundle(&g, 0.2, 0.1);
        for s in [0.0, 1.3, 2.0, 7.0] {
            let a = assemble_ansatz(&b, s).unwrap();
            let r = extract_remainder(&a, &b, s, Some((3.0, 4))).unwrap();
            assert_eq!(r.r.max_abs(), 0.0);
            assert_eq!(r.besov, 0.0);
        }
        let u0 = b.u1.initial().scaled(0.2);
        let r0 = extract_remainder(&u0, &b, 0.0, None).unwrap();
        assert!(r0.r.max_abs() < 1e-10 * b.u1.initial().max_abs());
    }

    #[test]
    fn ansatz_residual_is_small_away_from_the_control_window() {
        let g = Grid::new(128, 64, -4.0, 6.0, 1.0).unwrap();
        let b = bundle(&g, 0.1, 0.0);
        // with u* = 0 only the cutoff commutator is left; it is set by the
        // overlap of the two layers at y = 0 and shrinks with ε
        let coarse = ansatz_residual(&b, 2.0, None).unwrap();
        let fine = ansatz_residual(&bundle(&g, 0.02, 0.0), 2.0, None).unwrap();
        assert!(coarse.is_finite() && fine < 0.1 * coarse, "{coarse} {fine}");
    }
}
