//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! The end-to-end runs (criteria 8–10) share cached pipeline outputs, so the
//! whole file costs a few minutes on one core.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flushlab::baseflow::{design_base_flow, design_cutoff, design_with_targets, BaseFlow, DesignTargets};
use flushlab::blayer::{
    fit_decay_exponent, rescaled_trace_norm, solve_boundary_layer, total_radius_loss, z_moment,
    HalfLineProfile, ProfileGrids,
};
use flushlab::field::{l2_omega, max_divergence};
use flushlab::ns::{prepare_datum, run_scaled, vortex_datum, NsSolver, RunOptions, RunOutput, ScalingConfig};
use flushlab::quad::Rule;
use flushlab::transport::{verify_support, SupportBox, TransportProfile};
use flushlab::{Error, Field2D, Grid};

const T: f64 = 3.0;
const L: f64 = 1.0;

fn report(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ")
}

fn profile(h: BaseFlow) -> HalfLineProfile {
    solve_boundary_layer(Arc::new(h), ProfileGrids::default()).unwrap()
}

fn l2_series(v: &HalfLineProfile) -> Vec<(f64, f64)> {
    v.samples().iter().map(|s| (s.t, s.l2)).collect()
}

#[test]
fn c1_heat_decay_exponents() {
    let window = (10.0 * T, 1e3 * T);
    let p: Vec<f64> = (0..3)
        .map(|m| {
            let v = profile(design_base_flow(T, L, m).unwrap());
            fit_decay_exponent(&l2_series(&v), window).unwrap()
        })
        .collect();
    let steps = [p[1] - p[0], p[2] - p[1]];
    let ok = (p[0] + 1.75).abs() <= 0.1 && steps.iter().all(|d| (d + 1.0).abs() <= 0.15);
    report(1, ok, format!("exponents m=0,1,2: {:.4} {:.4} {:.4}", p[0], p[1], p[2]));
    assert!(ok);
}

#[test]
fn c2_final_layer_norm_is_cubic_in_eps() {
    let v = profile(design_base_flow(T, L, 3).unwrap());
    let eps: Vec<f64> = [-1.0, -1.5, -2.0, -2.5, -3.0].iter().map(|e| 10f64.powf(*e)).collect();
    let norms: Vec<f64> = eps.iter().map(|e| v.l2_norm(T / e).unwrap()).collect();
    let n = eps.len() as f64;
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let ratios: Vec<f64> = eps.iter().zip(&norms).map(|(e, v)| v / e.powi(3)).collect();
    let monotone = ratios.windows(2).all(|w| w[1] <= w[0]);
    let ok = slope >= 3.0 && monotone;
    report(2, ok, format!("slope {slope:.4}, ratios to ε³ {}", sci(&ratios)));
    assert!(ok);
}

#[test]
fn c3_radius_budget_is_finite() {
    let mut ok = true;
    let mut detail = String::new();
    for m in 1..=3 {
        let loss = total_radius_loss(&profile(design_base_flow(T, L, m).unwrap()));
        ok &= !loss.divergent && loss.tail_fraction < 0.01;
        detail += &format!("m={m}: {:.4} (tail {:.2e}) ", loss.value, loss.tail_fraction);
    }
    let unbalanced = design_with_targets(DesignTargets {
        t_final: T,
        length: L,
        m: 0,
        first_integral: 3.0 * L,
        second_integral: 0.0,
    })
    .unwrap();
    let loss = total_radius_loss(&profile(unbalanced));
    ok &= loss.divergent;
    detail += &format!("∫h≠0: divergent={} (exponent {:.3})", loss.divergent, loss.tail_exponent);
    report(3, ok, detail);
    assert!(ok);
}

#[test]
fn c4_moment_transfer_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut worst1, mut worst3) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let t_final = rng.random_range(1.0..5.0);
        let length = rng.random_range(0.5..2.0);
        let h = design_with_targets(DesignTargets {
            t_final,
            length,
            m: rng.random_range(0..=3),
            first_integral: rng.random_range(1.0..4.0) * length,
            second_integral: -rng.random_range(1.0..4.0) * length,
        })
        .unwrap();
        let breaks = h.breaks();
        let hc = h.clone();
        // moments are evaluated directly, the diagnostic table is not needed
        let short = ProfileGrids {
            early_points: 2,
            per_decade: 1,
            t_max_factor: 10.0,
            ..Default::default()
        };
        let v = solve_boundary_layer(Arc::new(h), short).unwrap();
        for frac in [0.25, 0.5, 0.8, 1.0, 2.0] {
            let t = frac * t_final;
            // ∫₀^t h and 6∫₀^t∫₀^s h on the bump cells
            let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > 0.0 && *b < t).collect();
            pts.insert(0, 0.0);
            pts.push(t);
            let m1 = hc.displacement(t);
            let m3 = 6.0 * Rule::on_breaks(&pts, 20).integrate(|s| hc.displacement(s));
            worst1 = worst1.max((z_moment(&v, t, 1).unwrap() - m1).abs());
            worst3 = worst3.max((z_moment(&v, t, 3).unwrap() - m3).abs());
        }
    }
    let ok = worst1 <= 1e-8 && worst3 <= 1e-7;
    report(4, ok, format!("max errors: first {worst1:.2e}, third {worst3:.2e}"));
    assert!(ok);
}

#[test]
fn c5_rescaling_relation() {
    let v = profile(design_base_flow(T, L, 0).unwrap());
    let mut worst = 0.0_f64;
    for eps in [1e-2, 1e-3, 1e-4] {
        for t in [T / 3.0, 2.0 * T / 3.0, T, 3.0 * T] {
            let q = rescaled_trace_norm(&v, t, eps).unwrap() / (eps.powf(0.25) * v.l2_norm(t).unwrap());
            worst = worst.max((q - 1.0).abs());
        }
    }
    let ok = worst <= 0.01;
    report(5, ok, format!("max |ratio − 1| = {worst:.2e}"));
    assert!(ok);
}

// ψ = a(s) cos(ξ(x + 4)) (1 − y²)² with a = 0.6 + 0.4 sin s
struct Manufactured {
    xi: f64,
    eps: f64,
}

impl Manufactured {
    fn ys(y: f64) -> [f64; 4] {
        let q = 1.0 - y * y;
        [q * q, -4.0 * y * q, 12.0 * y * y - 4.0, 24.0 * y]
    }

    fn velocity(&self, g: &Grid, s: f64) -> Field2D {
        let a = 0.6 + 0.4 * s.sin();
        Field2D::vector_from_fn(g, |x, y| {
            let th = self.xi * (x + 4.0);
            let [y0, y1, ..] = Self::ys(y);
            (a * th.cos() * y1, a * self.xi * th.sin() * y0)
        })
    }

    fn force(&self, g: &Grid, s: f64) -> Field2D {
        let (a, da, xi, e) = (0.6 + 0.4 * s.sin(), 0.4 * s.cos(), self.xi, self.eps);
        Field2D::vector_from_fn(g, |x, y| {
            let th = xi * (x + 4.0);
            let (c, sn) = (th.cos(), th.sin());
            let [y0, y1, y2, y3] = Self::ys(y);
            let f1 = da * c * y1 + a * a * xi * c * sn * (y0 * y2 - y1 * y1) - e * a * c * (y3 - xi * xi * y1);
            let f2 = da * xi * sn * y0 + a * a * xi * xi * y0 * y1 - e * a * xi * sn * (y2 - xi * xi * y0);
            (f1, f2)
        })
    }

    fn error(&self, ny: usize, dt: f64, s_end: f64) -> f64 {
        let g = Grid::new(16, ny, -4.0, 6.0, 1.0).unwrap();
        let mut s = NsSolver::new(&g, self.eps).unwrap().with_cfl(10.0);
        s.set_velocity(&self.velocity(&g, 0.0), 0.0).unwrap();
        let n = (s_end / dt).round() as usize;
        for i in 0..n {
            let t = i as f64 * dt;
            s.step(dt, Some(&self.force(&g, t + 0.5 * dt)), 0.0).unwrap();
        }
        s.velocity().max_diff(&self.velocity(&g, s_end))
    }
}

#[test]
fn c6_solver_verification() {
    let mms = Manufactured {
        xi: 2.0 * std::f64::consts::PI / 10.0,
        eps: 0.05,
    };
    let space: Vec<f64> = [16, 32, 64].iter().map(|ny| mms.error(*ny, 2e-3, 0.5)).collect();
    let p_space = (space[1] / space[2]).log2();
    // Richardson differences remove the spatial error floor
    let runs: Vec<f64> = [0.1_f64, 0.05, 0.025, 0.0125]
        .iter()
        .map(|dt| {
            let g = Grid::new(16, 32, -4.0, 6.0, 1.0).unwrap();
            let mut s = NsSolver::new(&g, mms.eps).unwrap().with_cfl(10.0);
            s.set_velocity(&mms.velocity(&g, 0.0), 0.0).unwrap();
            let n = (1.0 / dt).round() as usize;
            for i in 0..n {
                let t = i as f64 * dt;
                s.step(*dt, Some(&mms.force(&g, t + 0.5 * dt)), 0.0).unwrap();
            }
            s.velocity().layer(0)[[16, 3]]
        })
        .collect();
    let d: Vec<f64> = runs.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    let p_time = (d[1] / d[2]).log2();

    let g = Grid::new(64, 32, -4.0, 6.0, 1.0).unwrap();
    let mut s = NsSolver::new(&g, 0.02).unwrap();
    s.set_velocity(&vortex_datum(&g, 1.0, 0.5, 0.5).unwrap(), 0.0).unwrap();
    let mut e = s.energy();
    let mut monotone = true;
    let mut div = 0.0_f64;
    for _ in 0..200 {
        let dt = s.cfl_limit().min(0.05);
        s.step(dt, None, 0.0).unwrap();
        let next = s.energy();
        monotone &= next <= e * (1.0 + 1e-12);
        e = next;
        div = div.max(max_divergence(&s.velocity()).unwrap());
    }
    let ok = p_space >= 1.9 && p_time >= 1.9 && monotone && div <= 1e-8;
    report(
        6,
        ok,
        format!("order space {p_space:.3}, time {p_time:.3}; energy monotone {monotone}; max div {div:.1e}"),
    );
    assert!(ok);
}

#[test]
fn c7_flushing_property() {
    let g = Grid::new(256, 64, -4.0, 6.0, L).unwrap();
    let cfg = ScalingConfig::default();
    let u = vortex_datum(&g, 0.05, 0.5, 0.12).unwrap();
    let d = prepare_datum(&u, &cfg, 1e-6, None).unwrap();
    let h = design_base_flow(T, L, 0).unwrap();
    let u1 = TransportProfile::new(&d.field, h, design_cutoff(T).unwrap()).unwrap();
    let scale = l2_omega(&u);
    let mut worst = 0.0_f64;
    for i in 0..=30 {
        let t = T / 3.0 + (T / 3.0) * i as f64 / 30.0;
        worst = worst.max(l2_omega(&u1.velocity(t).unwrap()) / scale);
    }
    let times: Vec<f64> = (0..=90).map(|i| T * i as f64 / 90.0).collect();
    let traj = u1.force_trajectory(&times).unwrap();
    let bx = SupportBox {
        t0: T / 3.0,
        t1: 2.0 * T / 3.0,
        x0: 2.0 * L,
        x1: 5.0 * L,
        y0: -1.0,
        y1: 1.0,
    };
    let support = verify_support(&traj, &bx, 1e-8);
    let ok = worst <= d.tail.max(1e-12) && support.within_tolerance;
    report(
        7,
        ok,
        format!(
            "sup ‖u¹|Ω‖/‖u_*|Ω‖ on [T/3, 2T/3] {worst:.2e} (tail {:.2e}); f¹ leakage {:.2e}",
            d.tail, support.relative
        ),
    );
    assert!(ok);
}

const EPS: [f64; 3] = [0.2, 0.1, 0.05];

fn pipeline(eps: f64, options: RunOptions) -> RunOutput {
    let g = Grid::new(256, 128, -4.0, 6.0, L).unwrap();
    let cfg = ScalingConfig {
        eps,
        ..Default::default()
    };
    let u = vortex_datum(&g, 0.05, 0.5, 0.12).unwrap();
    let d = prepare_datum(&u, &cfg, 1e-6, None).unwrap();
    run_scaled(&cfg, &d.field, &options).unwrap()
}

fn cached(cell: &'static OnceLock<RunOutput>, eps: f64, options: impl FnOnce() -> RunOptions) -> &'static RunOutput {
    cell.get_or_init(|| pipeline(eps, options()))
}

static MAIN: [OnceLock<RunOutput>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
static ABLATION: [OnceLock<RunOutput>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];

fn main_run(i: usize) -> &'static RunOutput {
    cached(&MAIN[i], EPS[i], RunOptions::default)
}

fn ablation_run(i: usize) -> &'static RunOutput {
    cached(&ABLATION[i], EPS[i], || RunOptions {
        ablation: true,
        ..Default::default()
    })
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

#[test]
fn c8_eps_refinement() {
    let main: Vec<f64> = (0..3).map(|i| main_run(i).final_ratio).collect();
    let ablation: Vec<f64> = (0..3).map(|i| ablation_run(i).final_ratio).collect();
    let ok = strictly_decreasing(&main) && !strictly_decreasing(&ablation);
    report(
        8,
        ok,
        format!("‖u(T/ε)|Ω‖/ε at ε = 0.2, 0.1, 0.05: flushed {}, h ≡ 0 {}", sci(&main), sci(&ablation)),
    );
    assert!(ok);
}

#[test]
fn c9_radius_co_integration() {
    let run = main_run(1);
    let budget = run.radius_loss.value;
    let halved = pipeline(
        0.1,
        RunOptions {
            rho0: Some(0.5 * budget),
            ..Default::default()
        },
    );
    let end = run.config.horizon();
    let full = run.radius.summary();
    let low = halved.radius.summary();
    let ok = full.valid && (run.rows.last().unwrap().t - end).abs() < 1e-9 * end && !low.valid;
    report(
        9,
        ok,
        format!(
            "ρ(0) = {:.3}: valid {} (ρ(T/ε) = {:.3}); ρ(0) = {:.3}: valid {}",
            2.0 * budget,
            full.valid,
            full.rho_final,
            0.5 * budget,
            low.valid
        ),
    );
    assert!(ok);
}

#[test]
fn c10_phantom_ledger() {
    let run = main_run(1);
    let within = run.ledger.total <= run.ledger.eta && run.ledger.k == 2 && run.ledger.eta == 1e-3;
    let g = Grid::new(256, 128, -4.0, 6.0, L).unwrap();
    let cfg = ScalingConfig {
        eps: 0.1,
        eta: 0.1 * run.ledger.total,
        ..Default::default()
    };
    let d = prepare_datum(&vortex_datum(&g, 0.05, 0.5, 0.12).unwrap(), &cfg, 1e-6, None).unwrap();
    let fires = matches!(
        run_scaled(&cfg, &d.field, &RunOptions::default()),
        Err(Error::BudgetExceeded { .. })
    );
    let ok = within && fires;
    report(
        10,
        ok,
        format!(
            "realized {:.3e} ≤ η = {:.0e}; budget error at η = {:.1e}: {fires}",
            run.ledger.total, run.ledger.eta, cfg.eta
        ),
    );
    assert!(ok);
}
