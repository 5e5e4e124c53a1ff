//! Full scaled run: design, Ansatz, force ledger, time loop and radius ODE.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use super::{
    ansatz_residual, extract_remainder, AnsatzBundle, NsSolver, ScalingConfig, WallCutoffs,
    DEFAULT_CFL,
};
use crate::analytic::{low_pass_regularize, RadiusIntegrator, RadiusTrace, Regularization};
use crate::baseflow::{design_base_flow, design_cutoff};
use crate::blayer::{solve_boundary_layer, total_radius_loss, weighted_grad_norm, ProfileGrids, RadiusLoss};
use crate::field::io::write_binary;
use crate::field::{extend_initial_data, l2_omega, velocity_from_stream, Field2D, Grid};
use crate::transport::{split_force, SplitCutoffs, TransportProfile};
use crate::{Error, Result};

/// Numerical knobs of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Largest time step.
    pub dt_max: f64,
    /// Advective Courant number.
    pub cfl: f64,
    /// Diagnostic records on `[0, T]`.
    pub records_control: usize,
    /// Diagnostic records on `(T, T/ε]`.
    pub records_free: usize,
    /// Keep every n-th record as a snapshot (0 keeps none).
    pub snapshot_stride: usize,
    /// Run with `h ≡ 0` and no force.
    pub ablation: bool,
    /// Initial radius; `2 · total radius loss` when absent.
    pub rho0: Option<f64>,
    /// Tangential truncation `N` of the weighted remainder.
    pub truncation: Option<usize>,
    /// Samples of `f¹` on `[T/3, 2T/3]` for the phantom ledger.
    pub force_samples: usize,
    /// Phantom norm already spent on the datum (regularization ramp).
    pub prior_phantom: f64,
    /// Compute the Ansatz residual at each record.
    pub residual: bool,
    pub profile: ProfileGrids,
    pub cutoffs: WallCutoffs,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            dt_max: 0.02,
            cfl: DEFAULT_CFL,
            records_control: 150,
            records_free: 150,
            snapshot_stride: 0,
            ablation: false,
            rho0: None,
            truncation: None,
            force_samples: 49,
            prior_phantom: 0.0,
            residual: false,
            profile: ProfileGrids::default(),
            cutoffs: WallCutoffs::default(),
        }
    }
}

/// One line of the diagnostics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    /// `‖u^ε(t)|Ω‖_{L²}`.
    pub omega_l2: f64,
    /// `‖r(t)‖_{L²}` over the band (NaN in ablation runs).
    pub r_l2: f64,
    pub rho: f64,
    /// `ℓ(t)`.
    pub loss: f64,
    /// `b(t)`.
    pub besov: f64,
    /// Ansatz residual (NaN unless requested).
    pub sigma: f64,
}

/// Realized phantom norms in `L¹(H^k)`, in original (unscaled) units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomLedger {
    pub k: u32,
    pub eta: f64,
    /// Phantom part of `f¹`.
    pub transport: f64,
    /// Ramp force of the datum regularization.
    pub regularization: f64,
    pub total: f64,
    /// Largest near-wall residual dropped from the applied force.
    pub residual_l2: f64,
}

/// Result of [`run_scaled`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScalingConfig,
    pub options: RunOptions,
    pub grid: Grid,
    pub rows: Vec<DiagnosticRow>,
    pub radius: RadiusTrace,
    pub radius_loss: RadiusLoss,
    pub truncation: usize,
    pub ledger: PhantomLedger,
    pub final_omega_l2: f64,
    /// `‖u^ε(T/ε)|Ω‖ / ε`.
    pub final_ratio: f64,
    pub pass: bool,
    /// `sup_t ‖r(t)‖_{L²}`.
    pub sup_remainder: f64,
    pub steps: usize,
    pub snapshots: Vec<Field2D>,
}

/// Datum regularization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizationOptions {
    /// Analyticity radius; `2 · total radius loss` of the configured `h` when absent.
    pub radius: Option<f64>,
    /// Ramp duration.
    pub tau: f64,
    /// Upper bound on the retained mode index.
    pub max_index: Option<usize>,
}

impl Default for RegularizationOptions {
    fn default() -> Self {
        Self {
            radius: None,
            tau: 0.1,
            max_index: None,
        }
    }
}

/// Extended (and optionally regularized) datum.
#[derive(Debug, Clone)]
pub struct PreparedDatum {
    pub field: Field2D,
    /// Relative extension tail outside `[−L, 2L]`.
    pub tail: f64,
    pub regularization: Option<Regularization>,
}

impl PreparedDatum {
    pub fn ramp_norm(&self) -> f64 {
        self.regularization.as_ref().map_or(0.0, |r| r.force_norm)
    }
}

/// Single vortex with stream function `A exp(−(x − x₀)²/w²) (1 − y²)²`.
///
/// With `w ≤ L/8` and `x₀ = L/2` it is compactly supported in `Ω` to
/// round-off.
pub fn vortex_datum(grid: &Grid, amplitude: f64, center: f64, width: f64) -> Result<Field2D> {
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!("vortex width {width} must be positive")));
    }
    let psi = Field2D::scalar_from_fn(grid, |x, y| {
        let q = 1.0 - y * y;
        amplitude * (-((x - center) / width).powi(2)).exp() * q * q
    });
    velocity_from_stream(&psi)
}

/// Extends `u_star` off `Ω` and, when asked, trims its spectrum.
pub fn prepare_datum(
    u_star: &Field2D,
    config: &ScalingConfig,
    tail_bound: f64,
    regularize: Option<RegularizationOptions>,
) -> Result<PreparedDatum> {
    config.validate()?;
    let ext = extend_initial_data(u_star, tail_bound)?;
    let regularization = match regularize {
        Some(opts) => {
            let radius = match opts.radius {
                Some(r) => r,
                None => 2.0 * design_loss(config, &ProfileGrids::default())?.value,
            };
            Some(low_pass_regularize(&ext.field, radius, config.eta, config.k, opts.tau, opts.max_index)?)
        }
        None => None,
    };
    let field = regularization.as_ref().map_or_else(|| ext.field.clone(), |r| r.field.clone());
    Ok(PreparedDatum {
        field,
        tail: ext.tail,
        regularization,
    })
}

fn design_loss(config: &ScalingConfig, grids: &ProfileGrids) -> Result<RadiusLoss> {
    let h = design_base_flow(config.t_final, config.length, config.m)?;
    let v = solve_boundary_layer(Arc::new(h), *grids)?;
    Ok(total_radius_loss(&v))
}

/// Largest mode index `n` with `ρ₀ ξ_n ≤ 1`, so that the analytic weight
/// stays of order one and cannot amplify round-off in the remainder.
pub fn default_truncation(grid: &Grid, rho0: f64) -> usize {
    let cap = grid.nx() / 2 - 1;
    if !(rho0 > 0.0) {
        return cap;
    }
    let n = (1.0 / (rho0 * grid.dxi())).floor();
    (n as usize).min(cap)
}

/// Integrates the scaled problem from `ε u_star` to `T/ε`.
///
/// `u_star` must already be extended to the band (see [`prepare_datum`]);
/// `options.prior_phantom` carries the regularization ramp into the ledger.
pub fn run_scaled(config: &ScalingConfig, u_star: &Field2D, options: &RunOptions) -> Result<RunOutput> {
    config.validate()?;
    let g = u_star.grid().clone();
    if u_star.components() != 2 {
        return Err(Error::Shape("the datum must be a velocity field".into()));
    }
    if (g.length() - config.length).abs() > 1e-12 * config.length {
        return Err(Error::InvalidParameter(format!(
            "grid length {} differs from the configured L = {}",
            g.length(),
            config.length
        )));
    }
    let limit = config.eps.sqrt() / 8.0;
    if g.dy() > limit {
        return Err(Error::LayerUnderResolved { dy: g.dy(), limit });
    }
    let eps = config.eps;

    let h = design_base_flow(config.t_final, config.length, config.m)?;
    let beta = design_cutoff(config.t_final)?;
    let v = solve_boundary_layer(Arc::new(h.clone()), options.profile)?;
    let radius_loss = total_radius_loss(&v);
    let u1 = TransportProfile::new(u_star, h.clone(), beta)?;
    let bundle = AnsatzBundle {
        h: h.clone(),
        v: v.clone(),
        u1,
        cutoffs: options.cutoffs,
        eps,
    };

    // phantom ledger from samples of f¹ over its support
    let ns = options.force_samples.max(2);
    let (a, b) = (config.t_final / 3.0, 2.0 * config.t_final / 3.0);
    let times: Vec<f64> = (0..ns).map(|i| a + (b - a) * i as f64 / (ns - 1) as f64).collect();
    let traj = bundle.u1.force_trajectory(&times)?;
    let split = split_force(&traj, config.delta, config.k, config.eta)?;
    drop(traj);
    let transport = split.phantom_l1_hk;
    let total = transport + options.prior_phantom;
    let ledger = PhantomLedger {
        k: config.k,
        eta: config.eta,
        transport,
        regularization: options.prior_phantom,
        total,
        residual_l2: split.residual_l2,
    };
    if total > config.eta {
        return Err(Error::BudgetExceeded {
            realized: total,
            eta: config.eta,
        });
    }
    let cut = split.cutoffs;
    drop(split);

    let rho0 = options.rho0.unwrap_or(2.0 * radius_loss.value);
    let truncation = options.truncation.unwrap_or_else(|| default_truncation(&g, rho0));
    let mut radius = RadiusIntegrator::new(rho0, eps, truncation);

    let mut solver = NsSolver::new(&g, eps)?.with_cfl(options.cfl);
    solver.set_velocity(&u_star.scaled(eps), 0.0)?;

    let ablation = options.ablation;
    let applied_force = |s: f64| -> Result<Option<Field2D>> {
        if ablation || s <= a || s >= b {
            return Ok(None);
        }
        let f = bundle.u1.force(s)?;
        Ok(Some(applied(&f, &cut).scaled(eps)))
    };

    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut sup_remainder = 0.0_f64;
    let mut record = |solver: &NsSolver, radius: &mut RadiusIntegrator, index: usize| -> Result<()> {
        let s = solver.time();
        let u = solver.velocity();
        let omega_l2 = l2_omega(&u);
        let row = if ablation {
            let rho = radius.push(s, 0.0, 0.0);
            DiagnosticRow {
                t: s,
                omega_l2,
                r_l2: f64::NAN,
                rho,
                loss: 0.0,
                besov: 0.0,
                sigma: f64::NAN,
            }
        } else {
            let rem = extract_remainder(&u, &bundle, s, Some((radius.rho(), truncation)))?;
            let loss = weighted_grad_norm(&v, s)?;
            let rho = radius.push(s, loss, rem.besov);
            sup_remainder = sup_remainder.max(rem.l2);
            let sigma = if options.residual {
                ansatz_residual(&bundle, s, Some(&cut))?
            } else {
                f64::NAN
            };
            DiagnosticRow {
                t: s,
                omega_l2,
                r_l2: rem.l2,
                rho,
                loss,
                besov: rem.besov,
                sigma,
            }
        };
        rows.push(row);
        if options.snapshot_stride > 0 && index % options.snapshot_stride == 0 {
            snapshots.push(u);
        }
        Ok(())
    };
    record(&solver, &mut radius, 0)?;

    // Each record interval is split into equal steps so that step sizes, and
    // with them the implicit factors, repeat across intervals.
    let n1 = options.records_control.max(1);
    let n2 = options.records_free.max(1);
    let spacing = |idx: usize| {
        if idx < n1 {
            config.t_final / n1 as f64
        } else {
            (config.horizon() - config.t_final) / n2 as f64
        }
    };
    let mut dt = options.dt_max;
    let mut steps = 0usize;
    let h_at = |s: f64| if ablation { 0.0 } else { h.value(s) };
    for idx in 0..n1 + n2 {
        let lim = solver.cfl_limit();
        while dt > lim {
            dt *= 0.5;
        }
        while 2.0 * dt <= options.dt_max && 2.0 * dt <= 0.5 * lim {
            dt *= 2.0;
        }
        let mut left = (spacing(idx) / dt).ceil().max(1.0) as usize;
        let mut step = spacing(idx) / left as f64;
        while left > 0 {
            let lim = solver.cfl_limit();
            while step > lim {
                step *= 0.5;
                left *= 2;
                dt = step;
            }
            if step < 1e-10 * config.horizon() {
                return Err(Error::Cfl { dt: step, limit: lim });
            }
            let s = solver.time();
            let force = applied_force(s + 0.5 * step)?;
            solver.step(step, force.as_ref(), h_at(s + step) - h_at(s))?;
            steps += 1;
            left -= 1;
        }
        record(&solver, &mut radius, idx + 1)?;
    }

    let u = solver.velocity();
    let final_omega_l2 = l2_omega(&u);
    let final_ratio = final_omega_l2 / eps;
    Ok(RunOutput {
        config: *config,
        options: options.clone(),
        grid: g,
        rows,
        radius: radius.finish(),
        radius_loss,
        truncation,
        ledger,
        final_omega_l2,
        final_ratio,
        pass: final_ratio <= config.theta,
        sup_remainder,
        steps,
        snapshots,
    })
}

/// `f − a(x)(1 − b(y)) f`: the control and phantom parts of a force.
fn applied(f: &Field2D, cut: &SplitCutoffs) -> Field2D {
    f.weighted(|x, y| 1.0 - cut.inside_x(x) * (1.0 - cut.vertical(y)))
}

/// [`run_scaled`] with the radius trace returned separately.
pub fn co_integrate(config: &ScalingConfig, u_star: &Field2D, options: &RunOptions) -> Result<(RunOutput, RadiusTrace)> {
    let out = run_scaled(config, u_star, options)?;
    let trace = out.radius.clone();
    Ok((out, trace))
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    version: &'a str,
    config: &'a ScalingConfig,
    options: &'a RunOptions,
    grid: &'a Grid,
    ledger: &'a PhantomLedger,
    radius_loss: &'a RadiusLoss,
    truncation: usize,
    radius: crate::analytic::RadiusSummary,
    final_omega_l2: f64,
    final_ratio: f64,
    pass: bool,
    sup_remainder: f64,
    steps: usize,
    snapshots: Vec<String>,
}

/// Writes `name.json`, `name_diagnostics.csv`, `name_radius.csv` and the
/// snapshots into `dir`.
pub fn write_run(dir: &Path, name: &str, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}_diagnostics.csv")))?);
    writeln!(csv, "t,omega_l2,r_l2,rho,loss,besov,sigma")?;
    for r in &out.rows {
        writeln!(
            csv,
            "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            r.t, r.omega_l2, r.r_l2, r.rho, r.loss, r.besov, r.sigma
        )?;
    }
    csv.flush()?;
    out.radius.write_csv(&dir.join(format!("{name}_radius.csv")))?;
    let mut files = Vec::new();
    for (i, s) in out.snapshots.iter().enumerate() {
        let f = format!("{name}_{i:04}.bin");
        write_binary(s, &dir.join(&f))?;
        files.push(f);
    }
    let m = Manifest {
        name,
        version: env!("CARGO_PKG_VERSION"),
        config: &out.config,
        options: &out.options,
        grid: &out.grid,
        ledger: &out.ledger,
        radius_loss: &out.radius_loss,
        truncation: out.truncation,
        radius: out.radius.summary(),
        final_omega_l2: out.final_omega_l2,
        final_ratio: out.final_ratio,
        pass: out.pass,
        sup_remainder: out.sup_remainder,
        steps: out.steps,
        snapshots: files,
    };
    let json = serde_json::to_string_pretty(&m).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join(format!("{name}.json")), json)?;
    Ok(())
}
