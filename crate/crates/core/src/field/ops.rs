//! Differential operators, div-curl recovery and projections.
//!
//! Tangential derivatives are spectral (the Nyquist bin is dropped by odd
//! operators), wall-normal derivatives use the SBP operator. Divergence-free
//! fields are built as `∇⊥ψ = (Dψ, −∂xψ)` with `ψ = 0` on both walls, which
//! makes `div` vanish identically and the horizontal flux through every
//! section exactly zero in the SBP quadrature.

use ndarray::Array2;
use num_complex::Complex64;

use super::norms::{l2_interval, IntervalSampler};
use super::{Field2D, Grid, Sbp};
use crate::linalg::{bandwidth, weighted_gram, BandedCholesky};
use crate::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub(crate) fn sbp_for(grid: &Grid) -> Sbp {
    Sbp::new(grid.rows(), grid.dy())
}

/// Wavenumber seen by odd (first-derivative) operators: zero in the Nyquist bin.
pub(crate) fn xi_odd(grid: &Grid, k: usize) -> f64 {
    if grid.is_nyquist(k) {
        0.0
    } else {
        grid.wavenumber(k)
    }
}

fn column(a: &Array2<Complex64>, k: usize) -> Vec<Complex64> {
    a.column(k).to_vec()
}

fn set_column(a: &mut Array2<Complex64>, k: usize, v: &[Complex64]) {
    for (j, z) in v.iter().enumerate() {
        a[[j, k]] = *z;
    }
}

/// `∂x` of every component.
pub fn dx(f: &Field2D) -> Field2D {
    let g = f.grid().clone();
    f.map_spectrum(|k, _| I * xi_odd(&g, k))
}

/// Wall-normal SBP derivative of every component.
pub fn dy(f: &Field2D) -> Field2D {
    let op = sbp_for(f.grid());
    let layers = f
        .layers()
        .iter()
        .map(|l| {
            let mut out = Array2::zeros(l.dim());
            let mut col = vec![0.0; l.nrows()];
            let mut d = vec![0.0; l.nrows()];
            for i in 0..l.ncols() {
                for (j, c) in col.iter_mut().enumerate() {
                    *c = l[[j, i]];
                }
                op.apply(&col, &mut d);
                for (j, v) in d.iter().enumerate() {
                    out[[j, i]] = *v;
                }
            }
            out
        })
        .collect();
    Field2D::from_layers_unchecked(f.grid().clone(), layers).with_time(f.time())
}

/// Discrete gradient `(∂xφ, Dφ)` of a scalar.
pub fn gradient(phi: &Field2D) -> Result<Field2D> {
    expect_components(phi, 1)?;
    Field2D::from_components(&dx(phi), &dy(phi)).map(|f| f.with_time(phi.time()))
}

fn expect_components(f: &Field2D, n: usize) -> Result<()> {
    if f.components() != n {
        return Err(Error::Shape(format!(
            "expected {n} component(s), got {}",
            f.components()
        )));
    }
    Ok(())
}

/// `ω = ∂x u₂ − ∂y u₁`.
pub fn curl2d(u: &Field2D) -> Result<Field2D> {
    expect_components(u, 2)?;
    let a = dx(&u.component(1));
    let b = dy(&u.component(0));
    a.sub(&b)
}

/// `div u = ∂x u₁ + ∂y u₂`.
pub fn divergence(u: &Field2D) -> Result<Field2D> {
    expect_components(u, 2)?;
    dx(&u.component(0)).add(&dy(&u.component(1)))
}

/// Largest `|div u|` over the grid.
pub fn max_divergence(u: &Field2D) -> Result<f64> {
    Ok(divergence(u)?.max_abs())
}

/// `u = ∇⊥ψ = (∂yψ, −∂xψ)`.
///
/// The result is flagged divergence-free when `ψ` vanishes on both walls.
pub fn velocity_from_stream(psi: &Field2D) -> Result<Field2D> {
    expect_components(psi, 1)?;
    let u1 = dy(psi);
    let u2 = dx(psi).scaled(-1.0);
    let l = psi.layer(0);
    let rows = l.nrows();
    let scale = psi.max_abs().max(f64::MIN_POSITIVE);
    let walls_zero = l
        .row(0)
        .iter()
        .chain(l.row(rows - 1).iter())
        .all(|v| v.abs() <= 1e-12 * scale);
    Ok(Field2D::from_components(&u1, &u2)?
        .with_time(psi.time())
        .flagged_divergence_free(walls_zero))
}

/// Per-grid matrices shared by the per-mode solves.
pub(crate) struct ModeSystems {
    pub sbp: Sbp,
    /// `Dᵀ H D` (full size).
    pub dthd: Vec<Vec<f64>>,
}

impl ModeSystems {
    pub fn new(grid: &Grid) -> Self {
        let sbp = sbp_for(grid);
        let d = sbp.dense();
        let dthd = weighted_gram(&d, sbp.weights(), &d);
        Self { sbp, dthd }
    }

    /// Factor of `DᵀHD + ξ²H` on the interior rows (Dirichlet walls).
    pub fn dirichlet_factor(&self, xi2: f64) -> Result<BandedCholesky> {
        let n = self.sbp.points();
        let w = self.sbp.weights();
        let a: Vec<Vec<f64>> = (1..n - 1)
            .map(|i| {
                (1..n - 1)
                    .map(|j| self.dthd[i][j] + if i == j { xi2 * w[i] } else { 0.0 })
                    .collect()
            })
            .collect();
        let bw = bandwidth(&a);
        BandedCholesky::from_dense(&a, bw)
    }

    /// `Dᵀ H v` (full length).
    pub fn dt_h(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        let w = self.sbp.weights();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for r in 0..n {
            let hv = v[r] * w[r];
            let (c0, coeffs) = self.sbp.row(r);
            for (k, c) in coeffs.iter().enumerate() {
                out[c0 + k] += hv * *c;
            }
        }
        out
    }
}

/// Solves `(DᵀHD + ξ²H) ψ = rhs` on interior rows with `ψ = 0` on the walls.
fn dirichlet_solve(fac: &BandedCholesky, rhs: &[Complex64]) -> Vec<Complex64> {
    let n = rhs.len();
    let mut inner = rhs[1..n - 1].to_vec();
    fac.solve_complex_in_place(&mut inner);
    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    psi[1..n - 1].copy_from_slice(&inner);
    psi
}

fn stream_spectrum_to_velocity(grid: &Grid, sys: &ModeSystems, psi: &Array2<Complex64>) -> Field2D {
    let (rows, nx) = psi.dim();
    let mut u1 = Array2::zeros((rows, nx));
    let mut u2 = Array2::zeros((rows, nx));
    let mut d = vec![Complex64::new(0.0, 0.0); rows];
    for k in 0..nx {
        let col = column(psi, k);
        sys.sbp.apply(&col, &mut d);
        set_column(&mut u1, k, &d);
        let m = -I * xi_odd(grid, k);
        let v: Vec<Complex64> = col.iter().map(|z| z * m).collect();
        set_column(&mut u2, k, &v);
    }
    Field2D::from_spectrum(grid, vec![u1, u2])
}

/// Recovers the divergence-free, wall-tangent velocity with vorticity `ω`.
///
/// Solves `Δψ = −ω` weakly with `ψ = 0` on both walls and returns `∇⊥ψ`.
/// Because `ψ` vanishes on both walls the tangential mean of `u₁` has zero
/// vertical integral (zero-circulation gauge).
pub fn solve_div_curl(omega: &Field2D) -> Result<Field2D> {
    expect_components(omega, 1)?;
    let grid = omega.grid().clone();
    let sys = ModeSystems::new(&grid);
    let spec = &omega.spectrum()[0];
    let (rows, nx) = spec.dim();
    let w = sys.sbp.weights();
    let mut psi = Array2::zeros((rows, nx));
    for k in 0..nx {
        let xi = xi_odd(&grid, k);
        let fac = sys.dirichlet_factor(xi * xi)?;
        let rhs: Vec<Complex64> = column(spec, k).iter().zip(w).map(|(z, w)| z * *w).collect();
        set_column(&mut psi, k, &dirichlet_solve(&fac, &rhs));
    }
    Ok(stream_spectrum_to_velocity(&grid, &sys, &psi)
        .with_time(omega.time())
        .flagged_divergence_free(true))
}

/// H-orthogonal projection onto divergence-free fields tangent to the walls.
///
/// For `ξ ≠ 0` the field is projected onto `{∇⊥ψ : ψ = 0 on the walls}`. Bins
/// where the discrete `∂x` vanishes (the mean and Nyquist) keep `u₁` and drop
/// `u₂`. Discrete gradients `(∂xφ, Dφ)` are annihilated exactly because `D`
/// satisfies summation by parts.
pub fn leray_project(v: &Field2D) -> Result<Field2D> {
    expect_components(v, 2)?;
    let grid = v.grid().clone();
    let sys = ModeSystems::new(&grid);
    let spec = v.spectrum();
    let (rows, nx) = spec[0].dim();
    let w = sys.sbp.weights();
    let mut u1 = Array2::zeros((rows, nx));
    let mut u2 = Array2::zeros((rows, nx));
    let mut psi = vec![Complex64::new(0.0, 0.0); rows];
    let mut d = vec![Complex64::new(0.0, 0.0); rows];
    for k in 0..nx {
        let xi = xi_odd(&grid, k);
        if xi == 0.0 {
            set_column(&mut u1, k, &column(&spec[0], k));
            continue;
        }
        let fac = sys.dirichlet_factor(xi * xi)?;
        let mut rhs = sys.dt_h(&column(&spec[0], k));
        for (j, z) in column(&spec[1], k).iter().enumerate() {
            rhs[j] += I * xi * w[j] * z;
        }
        psi.copy_from_slice(&dirichlet_solve(&fac, &rhs));
        sys.sbp.apply(&psi, &mut d);
        set_column(&mut u1, k, &d);
        let m = -I * xi;
        let c: Vec<Complex64> = psi.iter().map(|z| z * m).collect();
        set_column(&mut u2, k, &c);
    }
    Ok(Field2D::from_spectrum(&grid, vec![u1, u2])
        .with_time(v.time())
        .flagged_divergence_free(true))
}

/// Stream function of a divergence-free, wall-tangent field.
///
/// Nonzero modes come from `u₂ = −∂xψ`; the tangential mean solves
/// `DΨ = ū₁` in the H-least-squares sense with `Ψ = 0` on the lower wall.
pub fn stream_function(u: &Field2D) -> Result<Field2D> {
    expect_components(u, 2)?;
    let grid = u.grid().clone();
    let sys = ModeSystems::new(&grid);
    let spec = u.spectrum();
    let (rows, nx) = spec[0].dim();
    let mut psi = Array2::zeros((rows, nx));
    for k in 0..nx {
        let xi = xi_odd(&grid, k);
        if xi != 0.0 {
            let c: Vec<Complex64> = column(&spec[1], k).iter().map(|z| I * z / xi).collect();
            set_column(&mut psi, k, &c);
        } else if k == 0 {
            set_column(&mut psi, 0, &mean_stream(&sys, &column(&spec[0], 0))?);
        }
    }
    Ok(Field2D::from_spectrum(&grid, vec![psi]).with_time(u.time()))
}

/// Least-squares `Ψ` with `DΨ ≈ ū`, `Ψ₀ = 0`.
fn mean_stream(sys: &ModeSystems, ubar: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = ubar.len();
    let a: Vec<Vec<f64>> = (1..n)
        .map(|i| (1..n).map(|j| sys.dthd[i][j]).collect())
        .collect();
    let fac = BandedCholesky::from_dense(&a, bandwidth(&a))?;
    let rhs = sys.dt_h(ubar);
    let mut inner = rhs[1..].to_vec();
    fac.solve_complex_in_place(&mut inner);
    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    psi[1..].copy_from_slice(&inner);
    Ok(psi)
}

/// Exact integral over `[a, b]` of the trigonometric interpolant of each row.
pub(crate) fn x_integral_rows(grid: &Grid, spec: &Array2<Complex64>, a: f64, b: f64) -> Vec<f64> {
    let (rows, nx) = spec.dim();
    let x0 = grid.x_min();
    let weights: Vec<Complex64> = (0..nx)
        .map(|k| {
            let xi = grid.wavenumber(k);
            if k == 0 {
                Complex64::new(b - a, 0.0)
            } else if grid.is_nyquist(k) {
                // the Nyquist bin carries cos(ξ(x − x0))
                let s = ((xi * (b - x0)).sin() - (xi * (a - x0)).sin()) / xi;
                Complex64::new(s, 0.0)
            } else {
                ((I * xi * (b - x0)).exp() - (I * xi * (a - x0)).exp()) / (I * xi)
            }
        })
        .collect();
    (0..rows)
        .map(|j| {
            (0..nx)
                .map(|k| spec[[j, k]] * weights[k])
                .sum::<Complex64>()
                .re
        })
        .collect()
}

/// `∫_Ω u·e_x` over `Ω = (0, L) × (−1, 1)`.
pub fn zero_mean(u: &Field2D) -> f64 {
    let g = u.grid();
    let rows = x_integral_rows(g, &u.spectrum()[0], 0.0, g.length());
    sbp_for(g).integrate(&rows)
}

/// Result of [`extend_initial_data`].
#[derive(Debug, Clone)]
pub struct Extension {
    pub field: Field2D,
    pub stream: Field2D,
    /// `‖u_ext‖` outside `[−L, 2L]` relative to `‖u_*‖_{L²(Ω)}`.
    pub tail: f64,
    /// Largest pointwise change of the field at grid points inside `Ω`.
    pub omega_deviation: f64,
}

/// Smooth step: 0 for `s ≤ 0`, 1 for `s ≥ 1`, C^∞ in between.
pub(crate) fn smooth_step(s: f64) -> f64 {
    fn phi(x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            (-1.0 / x).exp()
        }
    }
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = phi(s);
        a / (a + phi(1.0 - s))
    }
}

/// Cutoff equal to 1 on `[0, L]` and supported in `[−L, 2L]`.
pub(crate) fn extension_cutoff(x: f64, length: f64) -> f64 {
    if x < 0.0 {
        smooth_step((x + length) / length)
    } else if x > length {
        smooth_step((2.0 * length - x) / length)
    } else {
        1.0
    }
}

/// Divergence-free extension of `u_*` from `Ω` to the band.
///
/// The stream function of `u_*` is multiplied by a C^∞ cutoff that equals one
/// on `[0, L]` and vanishes outside `[−L, 2L]`; the extension is its
/// perpendicular gradient. Values of `u_*` outside `Ω` are used only through
/// the stream function inside the transition zones.
pub fn extend_initial_data(u_star: &Field2D, tail_bound: f64) -> Result<Extension> {
    expect_components(u_star, 2)?;
    let g = u_star.grid().clone();
    let omega_norm = l2_interval(u_star, 0.0, g.length());
    let mean = zero_mean(u_star);
    let tol = 1e-10 * omega_norm.max(1.0);
    if mean.abs() > tol {
        return Err(Error::NonZeroMean { value: mean, tol });
    }
    let psi = stream_function(u_star)?;
    let length = g.length();
    let psi_ext = psi.weighted(|x, _| extension_cutoff(x, length));
    let field = velocity_from_stream(&psi_ext)?.with_time(u_star.time());

    let mut dev = 0.0_f64;
    for i in 0..g.nx() {
        let x = g.x(i);
        if (0.0..=length).contains(&x) {
            for c in 0..2 {
                for j in 0..g.rows() {
                    dev = dev.max((field.value(c, i, j) - u_star.value(c, i, j)).abs());
                }
            }
        }
    }
    let left = IntervalSampler::new(&g, g.x_min(), -length).l2(&field);
    let right = IntervalSampler::new(&g, 2.0 * length, g.x_max()).l2(&field);
    let tail_abs = (left * left + right * right).sqrt();
    let tail = if omega_norm > 0.0 { tail_abs / omega_norm } else { tail_abs };
    if tail > tail_bound && tail_abs > 0.0 {
        return Err(Error::ResidualTooLarge {
            residual: tail,
            tol: tail_bound,
        });
    }
    Ok(Extension {
        field,
        stream: psi_ext,
        tail,
        omega_deviation: dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(nx: usize, ny: usize) -> Grid {
        Grid::new(nx, ny, -4.0, 6.0, 1.0).unwrap()
    }

    /// Stream function vanishing with its normal derivative on both walls.
    fn vortex_psi(x: f64, y: f64) -> f64 {
        let b = 1.0 - y * y;
        (-(x - 0.5).powi(2) / 0.15).exp() * b * b
    }

    #[test]
    fn linear_shear_has_unit_vorticity() {
        let g = grid(16, 16);
        let u = Field2D::vector_from_fn(&g, |_, y| (-y, 0.0));
        let w = curl2d(&u).unwrap();
        for v in w.layer(0).iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let z = curl2d(&Field2D::zeros(&g, 2)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn curl_converges_at_second_order() {
        // u = (sin(ξx) cos(πy/2)·a(y), ...) with a symbolic curl
        let err = |ny: usize| {
            let g = grid(16, ny);
            let xi = g.wavenumber(1);
            let u = Field2D::vector_from_fn(&g, |x, y| {
                let s = (xi * (x + 4.0)).sin();
                (s * (PI * y).sin(), (xi * (x + 4.0)).cos() * y.powi(3))
            });
            let exact = Field2D::scalar_from_fn(&g, |x, y| {
                -xi * (xi * (x + 4.0)).sin() * y.powi(3)
                    - PI * (xi * (x + 4.0)).sin() * (PI * y).cos()
            });
            curl2d(&u).unwrap().max_diff(&exact)
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        assert!(e1 / e2 > 3.5 && e2 / e3 > 3.5, "{e1} {e2} {e3}");
    }

    #[test]
    fn div_curl_of_zero_is_zero() {
        let g = grid(16, 16);
        let u = solve_div_curl(&Field2D::zeros(&g, 1)).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert!(u.is_divergence_free());
    }

    #[test]
    fn div_curl_round_trip_recovers_manufactured_field() {
        // analytic u₀ = ∇⊥ψ for the vortex stream function
        let err = |ny: usize| {
            let g = grid(64, ny);
            let u0 = Field2D::vector_from_fn(&g, |x, y| {
                let gx = (-(x - 0.5).powi(2) / 0.15).exp();
                let b = 1.0 - y * y;
                (gx * 2.0 * b * (-2.0 * y), gx * 2.0 * (x - 0.5) / 0.15 * b * b)
            });
            let w = curl2d(&u0).unwrap();
            let u = solve_div_curl(&w).unwrap();
            u.max_diff(&u0) / u0.max_abs()
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        assert!(e3 < 1e-2 && e1 / e2 > 3.5 && e2 / e3 > 3.5, "{e1} {e2} {e3}");
    }

    #[test]
    fn discrete_stream_round_trip_is_exact() {
        let g = grid(64, 32);
        // the Nyquist bin of ψ is invisible to ∂x, so drop it up front
        let psi = Field2D::scalar_from_fn(&g, vortex_psi).map_spectrum(|k, _| {
            Complex64::new(if g.is_nyquist(k) { 0.0 } else { 1.0 }, 0.0)
        });
        let u0 = velocity_from_stream(&psi).unwrap();
        let u = solve_div_curl(&curl2d(&u0).unwrap()).unwrap();
        assert!(u.max_diff(&u0) < 1e-12 * u0.max_abs());
        let back = stream_function(&u0).unwrap();
        assert!(back.max_diff(&psi) < 1e-12);
    }

    #[test]
    fn div_curl_output_is_discretely_solenoidal() {
        let g = grid(32, 32);
        let xi = g.wavenumber(1);
        let w = Field2D::scalar_from_fn(&g, |x, y| {
            (xi * (x - g.x_min())).sin() * (PI * (1.0 + y) / 2.0).sin()
        });
        let u = solve_div_curl(&w).unwrap();
        assert!(max_divergence(&u).unwrap() <= 1e-10);
        assert!(zero_mean(&u).abs() < 1e-12);
        // wall tangency
        for i in 0..g.nx() {
            assert!(u.value(1, i, 0).abs() < 1e-12 && u.value(1, i, g.ny()).abs() < 1e-12);
        }
    }

    #[test]
    fn leray_projection_is_idempotent_and_kills_gradients() {
        let g = grid(32, 24);
        let xi = g.wavenumber(1);
        let phi = Field2D::scalar_from_fn(&g, |x, y| {
            (xi * (x - g.x_min())).cos() * (PI * y / 2.0).cos() + 0.3 * y * y
        });
        let grad = gradient(&phi).unwrap();
        let p = leray_project(&grad).unwrap();
        assert!(p.max_abs() <= 1e-10 * grad.max_abs(), "{}", p.max_abs());

        let psi = Field2D::scalar_from_fn(&g, vortex_psi);
        let u = velocity_from_stream(&psi).unwrap();
        let pu = leray_project(&u).unwrap();
        assert!(pu.max_diff(&u) <= 1e-10 * u.max_abs());

        let v = Field2D::vector_from_fn(&g, |x, y| {
            ((3.0 * x).sin() + y * x.cos(), (x * y).cos() - 0.5 * y)
        });
        let p1 = leray_project(&v).unwrap();
        let p2 = leray_project(&p1).unwrap();
        assert!(p1.max_diff(&p2) <= 1e-12 * p1.max_abs().max(1.0));
        assert!(max_divergence(&p1).unwrap() <= 1e-10);
    }

    #[test]
    fn zero_mean_examples() {
        let g = grid(32, 16);
        assert_eq!(zero_mean(&Field2D::zeros(&g, 2)), 0.0);
        let ones = Field2D::vector_from_fn(&g, |_, _| (1.0, 0.0));
        assert!((zero_mean(&ones) - 2.0).abs() < 1e-12);
        // stream function vanishing on ∂Ω
        let psi = Field2D::scalar_from_fn(&g, |x, y| {
            let sx = if (0.0..=1.0).contains(&x) { (PI * x).sin().powi(2) } else { 0.0 };
            sx * (1.0 - y * y) * (2.0 + y)
        });
        let u = velocity_from_stream(&psi).unwrap();
        assert!(zero_mean(&u).abs() < 1e-12);
    }

    #[test]
    fn extension_of_zero_and_of_a_vortex() {
        let g = grid(256, 32);
        let z = extend_initial_data(&Field2D::zeros(&g, 2), 1e-6).unwrap();
        assert_eq!(z.field.max_abs(), 0.0);

        // a vortex concentrated well inside Ω
        let psi = Field2D::scalar_from_fn(&g, |x, y| {
            (-(x - 0.5).powi(2) / 0.03).exp() * (1.0 - y * y).powi(2)
        });
        let u = velocity_from_stream(&psi).unwrap();
        let ext = extend_initial_data(&u, 1e-6).unwrap();
        assert!(ext.field.is_divergence_free());
        assert!(max_divergence(&ext.field).unwrap() < 1e-10);
        assert!(ext.tail <= 1e-6, "tail {}", ext.tail);
        assert!(ext.omega_deviation < 1e-8 * u.max_abs(), "{}", ext.omega_deviation);
    }

    #[test]
    fn poiseuille_datum_has_nonzero_mean() {
        let g = grid(32, 16);
        let u = Field2D::vector_from_fn(&g, |_, y| (1.0 - y * y, 0.0));
        assert!(matches!(
            extend_initial_data(&u, 1e-6),
            Err(Error::NonZeroMean { .. })
        ));
    }
}
