//! Stream-function Galerkin solver for the channel.
//!
//! Each tangential mode `k ≠ 0` carries a stream function `ψ_k` with
//! `ψ = Dψ = 0` on both walls, eliminated through a fixed basis `P`:
//! the free unknowns are `ψ_2 … ψ_{n−3}`, and `ψ_1`, `ψ_{n−2}` follow from
//! the two wall rows of `D`. The velocity `(Dψ, −iξψ)` is then exactly
//! divergence-free and vanishes on the walls. Testing the momentum equation
//! against the same velocities in the `H` inner product removes the pressure:
//!
//! `M ċ = −ε K c + Pᵀ(DᵀH G₁ + iξ H G₂)`,
//! `M = Pᵀ(DᵀHD + ξ²H)P`, `K = Pᵀ((DD)ᵀH(DD) + 2ξ²DᵀHD + ξ⁴H)P`,
//!
//! where `G` is the force minus the advection term. The tangential mean
//! `ū₁` obeys an `H`-weighted heat equation with Dirichlet walls; a uniform
//! pressure gradient enters it as an impulse per step.
//!
//! Time stepping is Crank–Nicolson for viscosity and variable-step
//! Adams–Bashforth for advection (written in skew-symmetric form, 2/3
//! dealiased). The uniform part `U(s)` of the mean flow, accumulated from the
//! impulses, is removed by an integrating factor: modes are carried in the
//! frame moving with `U`, so only `u − U e_x` enters the CFL limit.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

use crate::field::ops::{sbp_for, xi_odd};
use crate::field::{spectral, Field2D, Grid, Sbp};
use crate::linalg::{bandwidth, matmul, weighted_gram, BandedCholesky};
use crate::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Default advective Courant number.
pub const DEFAULT_CFL: f64 = 0.25;

/// Wall basis: `ψ = P c`.
#[derive(Debug, Clone)]
struct WallBasis {
    n: usize,
    /// `ψ_1 = Σ lo[j] c[j]`.
    lo: Vec<(usize, f64)>,
    /// `ψ_{n−2} = Σ hi[j] c[j]`.
    hi: Vec<(usize, f64)>,
}

impl WallBasis {
    fn new(d: &[Vec<f64>]) -> Self {
        let n = d.len();
        let lo = (2..n - 2)
            .filter(|c| d[0][*c] != 0.0)
            .map(|c| (c - 2, -d[0][c] / d[0][1]))
            .collect();
        let hi = (2..n - 2)
            .filter(|c| d[n - 1][*c] != 0.0)
            .map(|c| (c - 2, -d[n - 1][c] / d[n - 1][n - 2]))
            .collect();
        Self { n, lo, hi }
    }

    fn free(&self) -> usize {
        self.n - 4
    }

    fn expand(&self, c: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut psi = vec![ZERO; n];
        psi[2..n - 2].copy_from_slice(c);
        psi[1] = self.lo.iter().map(|(j, a)| c[*j] * *a).sum();
        psi[n - 2] = self.hi.iter().map(|(j, a)| c[*j] * *a).sum();
        psi
    }

    fn restrict(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut c = v[2..n - 2].to_vec();
        for (j, a) in &self.lo {
            c[*j] += v[1] * *a;
        }
        for (j, a) in &self.hi {
            c[*j] += v[n - 2] * *a;
        }
        c
    }

    fn dense(&self) -> Vec<Vec<f64>> {
        let (n, m) = (self.n, self.free());
        let mut p = vec![vec![0.0; m]; n];
        for j in 0..m {
            p[j + 2][j] = 1.0;
        }
        for (j, a) in &self.lo {
            p[1][*j] = *a;
        }
        for (j, a) in &self.hi {
            p[n - 2][*j] = *a;
        }
        p
    }
}

/// Symmetric banded matrix, `v[i(2bw+1) + j + bw − i] = A[i][j]`.
#[derive(Debug, Clone)]
struct Banded {
    n: usize,
    bw: usize,
    v: Vec<f64>,
}

impl Banded {
    fn from_dense(a: &[Vec<f64>], bw: usize) -> Self {
        let n = a.len();
        let w = 2 * bw + 1;
        let mut v = vec![0.0; n * w];
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                v[i * w + j + bw - i] = a[i][j];
            }
        }
        Self { n, bw, v }
    }

    fn row(&self, i: usize) -> (usize, &[f64]) {
        let w = 2 * self.bw + 1;
        let lo = i.saturating_sub(self.bw);
        let hi = (i + self.bw + 1).min(self.n);
        let r = &self.v[i * w..(i + 1) * w];
        (lo, &r[lo + self.bw - i..hi + self.bw - i])
    }

    fn mul(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                let (lo, r) = self.row(i);
                let mut s = ZERO;
                for (a, z) in r.iter().zip(&x[lo..]) {
                    s += z * *a;
                }
                s
            })
            .collect()
    }

    fn combine(parts: &[(&Banded, f64)]) -> Banded {
        let mut out = Banded {
            v: vec![0.0; parts[0].0.v.len()],
            ..*parts[0].0
        };
        for (m, c) in parts {
            debug_assert_eq!(m.bw, out.bw);
            for (o, x) in out.v.iter_mut().zip(&m.v) {
                *o += c * x;
            }
        }
        out
    }

    fn factor(&self) -> Result<BandedCholesky> {
        let w = 2 * self.bw + 1;
        let band = (0..self.n)
            .map(|i| {
                (0..=self.bw)
                    .map(|d| if d <= i { self.v[i * w + self.bw - d] } else { 0.0 })
                    .collect()
            })
            .collect();
        BandedCholesky::from_lower_band(band, self.bw)
    }
}

/// Implicit factors and explicit viscous operators for one step size.
struct Implicit {
    mean: BandedCholesky,
    /// `W − α DᵀHD` on the interior rows.
    mean_rhs: Banded,
    modes: Vec<BandedCholesky>,
    /// Crank–Nicolson right-hand operators.
    rhs: Vec<Banded>,
}

/// Explicit term and CFL limit of the current state.
struct Explicit {
    mean: Vec<f64>,
    modes: Vec<Vec<Complex64>>,
    limit: f64,
}

/// Explicit term of the previous step, with the frame drift at its time.
struct Previous {
    mean: Vec<f64>,
    modes: Vec<Vec<Complex64>>,
    dt: f64,
    drift: f64,
}

/// State and operators of one channel simulation.
pub struct NsSolver {
    grid: Grid,
    eps: f64,
    cfl: f64,
    sbp: Sbp,
    basis: WallBasis,
    gr: Banded,
    hr: Banded,
    kr: Banded,
    /// `(r, H_rr D_rc)` for each column `c`, i.e. the sparse rows of `DᵀH`.
    dth: Vec<Vec<(usize, f64)>>,
    /// Rows of `D`: first column and coefficients.
    drows: Vec<(usize, Vec<f64>)>,
    /// Interior rows of `DᵀHD`.
    g_in: Banded,
    /// `M(ξ_k)` factors for projections.
    mass: Vec<BandedCholesky>,
    /// Highest mode reached by the nonlinear term.
    dealias: usize,
    mean: Vec<f64>,
    modes: Vec<Vec<Complex64>>,
    time: f64,
    frame: f64,
    drift: f64,
    prev: Option<Previous>,
    current: Option<Explicit>,
    factors: HashMap<u64, Arc<Implicit>>,
}

impl std::fmt::Debug for NsSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NsSolver")
            .field("grid", &self.grid)
            .field("eps", &self.eps)
            .field("time", &self.time)
            .finish()
    }
}

fn xi(grid: &Grid, k: usize) -> f64 {
    xi_odd(grid, k)
}

impl NsSolver {
    /// Zero state at time 0 with viscosity `eps`.
    pub fn new(grid: &Grid, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("ε = {eps} must be positive")));
        }
        let sbp = sbp_for(grid);
        let n = sbp.points();
        let w = sbp.weights().to_vec();
        let d = sbp.dense();
        let basis = WallBasis::new(&d);
        let p = basis.dense();
        let ones = vec![1.0; n];
        let g = weighted_gram(&d, &w, &d);
        let dd = matmul(&d, &d);
        let k2 = weighted_gram(&dd, &w, &dd);
        let reduce = |x: &[Vec<f64>]| weighted_gram(&p, &ones, &matmul(x, &p));
        let gr = reduce(&g);
        let kr = reduce(&k2);
        let hr = weighted_gram(&p, &w, &p);
        let bw = bandwidth(&gr).max(bandwidth(&kr)).max(bandwidth(&hr));
        let g_in: Vec<Vec<f64>> = (1..n - 1).map(|i| g[i][1..n - 1].to_vec()).collect();
        let g_in = Banded::from_dense(&g_in, bandwidth(&g_in));
        let (gr, hr, kr) = (
            Banded::from_dense(&gr, bw),
            Banded::from_dense(&hr, bw),
            Banded::from_dense(&kr, bw),
        );
        let drows: Vec<(usize, Vec<f64>)> = (0..n).map(|r| sbp.row(r)).collect();
        let mut dth = vec![Vec::new(); n];
        for (r, (c0, coeffs)) in drows.iter().enumerate() {
            for (i, c) in coeffs.iter().enumerate() {
                dth[c0 + i].push((r, w[r] * c));
            }
        }
        let kmax = grid.nx() / 2;
        let mass = (1..kmax)
            .into_par_iter()
            .map(|k| {
                let x2 = xi(grid, k).powi(2);
                Banded::combine(&[(&gr, 1.0), (&hr, x2)]).factor()
            })
            .collect::<Result<Vec<_>>>()?;
        let m = basis.free();
        Ok(Self {
            grid: grid.clone(),
            eps,
            cfl: DEFAULT_CFL,
            sbp,
            basis,
            gr,
            hr,
            kr,
            dth,
            drows,
            g_in,
            mass,
            dealias: grid.nx() / 3,
            mean: vec![0.0; n - 2],
            modes: vec![vec![ZERO; m]; kmax - 1],
            time: 0.0,
            frame: 0.0,
            drift: 0.0,
            prev: None,
            current: None,
            factors: HashMap::new(),
        })
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self.current = None;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Velocity of the uniform frame, the sum of all mean impulses so far.
    pub fn frame_speed(&self) -> f64 {
        self.frame
    }

    /// Replaces the state by the Galerkin projection of `u` and restarts the
    /// multistep history.
    pub fn set_velocity(&mut self, u: &Field2D, t: f64) -> Result<()> {
        if u.components() != 2 || !u.grid().same_shape(&self.grid) {
            return Err(Error::Shape("initial state must be a velocity on the solver grid".into()));
        }
        let spec = u.spectrum();
        let n = self.basis.n;
        self.mean = (1..n - 1).map(|j| spec[0][[j, 0]].re).collect();
        let g = &self.grid;
        let new: Vec<Vec<Complex64>> = (1..g.nx() / 2)
            .into_par_iter()
            .map(|k| {
                let a: Vec<Complex64> = spec[0].column(k).to_vec();
                let b: Vec<Complex64> = spec[1].column(k).to_vec();
                let mut c = self.project(k, &a, &b);
                self.mass[k - 1].solve_complex_in_place(&mut c);
                c
            })
            .collect();
        self.modes = new;
        self.time = t;
        self.frame = 0.0;
        self.drift = 0.0;
        self.prev = None;
        self.current = None;
        Ok(())
    }

    /// `Pᵀ(DᵀH a + iξ H b)`.
    fn project(&self, k: usize, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let w = self.sbp.weights();
        let x = xi(&self.grid, k);
        let v: Vec<Complex64> = self
            .dth
            .iter()
            .enumerate()
            .map(|(c, col)| {
                let mut s = I * x * w[c] * b[c];
                for (r, d) in col {
                    s += a[*r] * *d;
                }
                s
            })
            .collect();
        self.basis.restrict(&v)
    }

    /// `D` applied along `y` to a flat `(n, nx)` array.
    fn dy(&self, f: &[f64]) -> Vec<f64> {
        let nx = self.grid.nx();
        let mut out = vec![0.0; f.len()];
        for (r, (c0, coeffs)) in self.drows.iter().enumerate() {
            let o = &mut out[r * nx..(r + 1) * nx];
            for (i, c) in coeffs.iter().enumerate() {
                let src = &f[(c0 + i) * nx..(c0 + i + 1) * nx];
                for (a, b) in o.iter_mut().zip(src) {
                    *a += c * b;
                }
            }
        }
        out
    }

    /// Mode-by-mode `(ψ, Dψ)`, with the mean profile in place of `Dψ` at `k = 0`.
    fn columns(&self) -> Vec<(Vec<Complex64>, Vec<Complex64>)> {
        let n = self.basis.n;
        let mut col0 = vec![ZERO; n];
        for (j, v) in self.mean.iter().enumerate() {
            col0[j + 1] = Complex64::new(*v, 0.0);
        }
        let mut cols = vec![(vec![ZERO; n], col0)];
        cols.par_extend(self.modes.par_iter().map(|c| {
            let psi = self.basis.expand(c);
            let mut dpsi = vec![ZERO; n];
            self.sbp.apply(&psi, &mut dpsi);
            (psi, dpsi)
        }));
        cols
    }

    /// Flat buffer holding `a + i b` for two real fields given by their
    /// non-negative modes `k ↦ (a_k, b_k)`.
    fn pack(&self, cols: &[(Vec<Complex64>, Vec<Complex64>)]) -> Vec<Complex64> {
        let (n, nx) = (self.basis.n, self.grid.nx());
        let mut buf = vec![ZERO; n * nx];
        for (k, (a, b)) in cols.iter().enumerate() {
            for j in 0..n {
                buf[j * nx + k] = a[j] + I * b[j];
                if k > 0 {
                    buf[j * nx + nx - k] = a[j].conj() + I * b[j].conj();
                }
            }
        }
        buf
    }

    /// Current velocity field.
    pub fn velocity(&self) -> Field2D {
        let (n, nx) = (self.basis.n, self.grid.nx());
        let mut s = vec![Array2::<Complex64>::zeros((n, nx)); 2];
        for (k, (psi, dpsi)) in self.columns().iter().enumerate() {
            let x = xi(&self.grid, k);
            for j in 0..n {
                let (a, b) = (dpsi[j], -I * x * psi[j]);
                s[0][[j, k]] = a;
                s[1][[j, k]] = b;
                if k > 0 {
                    s[0][[j, nx - k]] = a.conj();
                    s[1][[j, nx - k]] = b.conj();
                }
            }
        }
        Field2D::from_spectrum(&self.grid, s)
            .with_time(self.time)
            .flagged_divergence_free(true)
    }

    /// `‖u‖²_{L²}` of the band in the Galerkin inner product.
    pub fn energy(&self) -> f64 {
        let n = self.basis.n;
        let w = self.sbp.weights();
        let mean: f64 = self.mean.iter().zip(&w[1..n - 1]).map(|(u, w)| u * u * w).sum();
        let modes: f64 = self
            .modes
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let x2 = xi(&self.grid, idx + 1).powi(2);
                let mc = self.gr.mul(c);
                let hc = self.hr.mul(c);
                c.iter()
                    .zip(mc.iter().zip(&hc))
                    .map(|(ci, (m, h))| (ci.conj() * (m + h * x2)).re)
                    .sum::<f64>()
            })
            .sum();
        self.grid.period() * (mean + 2.0 * modes)
    }

    fn explicit(&self) -> Explicit {
        let g = &self.grid;
        let (n, nx) = (self.basis.n, g.nx());
        let cols = self.columns();
        let mut vel = Vec::with_capacity(cols.len());
        let mut dx = Vec::with_capacity(cols.len());
        for (k, (psi, dpsi)) in cols.iter().enumerate() {
            let x = xi(g, k);
            vel.push((dpsi.clone(), psi.iter().map(|p| -I * x * p).collect::<Vec<_>>()));
            dx.push((
                dpsi.iter().map(|p| I * x * p).collect::<Vec<_>>(),
                psi.iter().map(|p| x * x * p).collect::<Vec<_>>(),
            ));
        }
        let mut bufs = [self.pack(&vel), self.pack(&dx)];
        bufs.par_iter_mut().for_each(|b| spectral::inverse_flat(b, nx));
        let u1: Vec<f64> = bufs[0].iter().map(|z| z.re).collect();
        let u2: Vec<f64> = bufs[0].iter().map(|z| z.im).collect();
        let u1y = self.dy(&u1);
        let u2y = self.dy(&u2);
        let q1: Vec<f64> = u2.iter().zip(&u1).map(|(a, b)| a * b).collect();
        let q2: Vec<f64> = u2.iter().map(|a| a * a).collect();
        let dq1 = self.dy(&q1);
        let dq2 = self.dy(&q2);

        let mut top1 = 0.0_f64;
        let mut top2 = 0.0_f64;
        // adv + D(u₂u) packed in r, ũ₁u packed in p
        let mut r = vec![ZERO; n * nx];
        let mut p = vec![ZERO; n * nx];
        for m in 0..n * nx {
            let a1 = u1[m] - self.frame;
            top1 = top1.max(a1.abs());
            top2 = top2.max(u2[m].abs());
            let r1 = a1 * bufs[1][m].re + u2[m] * u1y[m] + dq1[m];
            let r2 = a1 * bufs[1][m].im + u2[m] * u2y[m] + dq2[m];
            r[m] = Complex64::new(r1, r2);
            p[m] = Complex64::new(a1 * u1[m], a1 * u2[m]);
        }
        let mut hat = [r, p];
        hat.par_iter_mut().for_each(|b| spectral::forward_flat(b, nx));
        let w = self.sbp.weights();
        let limit_of = |v: f64, h: f64| if v > 0.0 { h / v } else { f64::INFINITY };
        let limit = self.cfl * limit_of(top1, g.dx()).min(limit_of(top2, g.dy()));
        let unpack = |b: &[Complex64], j: usize, k: usize| -> (Complex64, Complex64) {
            let z = b[j * nx + k];
            let zc = b[j * nx + (nx - k) % nx].conj();
            (0.5 * (z + zc), -0.5 * I * (z - zc))
        };
        // ½(adv + ∂x(ũ₁u) + D(u₂u)) in column k
        let nonlinear = |k: usize| -> (Vec<Complex64>, Vec<Complex64>) {
            let x = xi(g, k);
            let mut n1 = vec![ZERO; n];
            let mut n2 = vec![ZERO; n];
            for j in 0..n {
                let (r1, r2) = unpack(&hat[0], j, k);
                let (p1, p2) = unpack(&hat[1], j, k);
                n1[j] = 0.5 * (r1 + I * x * p1);
                n2[j] = 0.5 * (r2 + I * x * p2);
            }
            (n1, n2)
        };
        let (m0, _) = nonlinear(0);
        let mean = (1..n - 1).map(|j| -w[j] * m0[j].re).collect();
        let modes = (1..nx / 2)
            .into_par_iter()
            .map(|k| {
                if k > self.dealias {
                    return vec![ZERO; self.basis.free()];
                }
                let (a, b) = nonlinear(k);
                self.project(k, &a, &b).into_iter().map(|z| -z).collect()
            })
            .collect();
        Explicit { mean, modes, limit }
    }

    fn ensure_explicit(&mut self) {
        if self.current.is_none() {
            self.current = Some(self.explicit());
        }
    }

    /// Largest step the advective CFL condition allows for the current state.
    pub fn cfl_limit(&mut self) -> f64 {
        self.ensure_explicit();
        self.current.as_ref().map_or(f64::INFINITY, |e| e.limit)
    }

    fn implicit(&mut self, dt: f64) -> Result<Arc<Implicit>> {
        if let Some(f) = self.factors.get(&dt.to_bits()) {
            return Ok(f.clone());
        }
        let alpha = 0.5 * dt * self.eps;
        let w = self.sbp.weights();
        let width = 2 * self.g_in.bw + 1;
        let mut lhs = self.g_in.clone();
        let mut rhs0 = self.g_in.clone();
        for (i, (a, b)) in lhs.v.chunks_mut(width).zip(rhs0.v.chunks_mut(width)).enumerate() {
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                *x *= alpha;
                *y *= -alpha;
            }
            a[width / 2] += w[i + 1];
            b[width / 2] += w[i + 1];
        }
        let mean = lhs.factor()?;
        let ops: Vec<(BandedCholesky, Banded)> = (1..self.grid.nx() / 2)
            .into_par_iter()
            .map(|k| {
                let x2 = xi(&self.grid, k).powi(2);
                let a = Banded::combine(&[
                    (&self.gr, 1.0 + 2.0 * alpha * x2),
                    (&self.hr, x2 + alpha * x2 * x2),
                    (&self.kr, alpha),
                ]);
                let b = Banded::combine(&[
                    (&self.gr, 1.0 - 2.0 * alpha * x2),
                    (&self.hr, x2 - alpha * x2 * x2),
                    (&self.kr, -alpha),
                ]);
                Ok((a.factor()?, b))
            })
            .collect::<Result<Vec<_>>>()?;
        if self.factors.len() >= 16 {
            self.factors.clear();
        }
        let (modes, rhs) = ops.into_iter().unzip();
        let f = Arc::new(Implicit {
            mean,
            mean_rhs: rhs0,
            modes,
            rhs,
        });
        self.factors.insert(dt.to_bits(), f.clone());
        Ok(f)
    }

    /// Advances by `dt`.
    ///
    /// `force` is sampled at the midpoint of the step by the caller; its
    /// gradient part and the mean of its second component are absorbed by
    /// the pressure. `impulse` is the time integral over the step of a
    /// uniform pressure-gradient acceleration along `e_x`.
    pub fn step(&mut self, dt: f64, force: Option<&Field2D>, impulse: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        self.ensure_explicit();
        let cur = self.current.take().expect("explicit term");
        if dt > cur.limit * (1.0 + 1e-12) {
            let limit = cur.limit;
            self.current = Some(cur);
            return Err(Error::Cfl { dt, limit });
        }
        if let Some(f) = force {
            if f.components() != 2 || !f.grid().same_shape(&self.grid) {
                return Err(Error::Shape("force must be a velocity-shaped field on the solver grid".into()));
            }
        }
        let fac = self.implicit(dt)?;
        let new_frame = self.frame + impulse;
        let new_drift = self.drift + 0.5 * dt * (self.frame + new_frame);
        let mid_drift = self.drift + 0.5 * dt * (0.75 * self.frame + 0.25 * new_frame);
        let (w1, w0, prev) = match &self.prev {
            Some(p) => {
                let om = dt / p.dt;
                (1.0 + 0.5 * om, -0.5 * om, Some(p))
            }
            None => (1.0, 0.0, None),
        };
        let n = self.basis.n;
        let w = self.sbp.weights();
        let fspec = force.map(|f| f.spectrum());

        // mean mode
        let bu = fac
            .mean_rhs
            .mul(&self.mean.iter().map(|v| Complex64::new(*v, 0.0)).collect::<Vec<_>>());
        let mut rhs: Vec<f64> = (0..n - 2)
            .map(|i| {
                let wi = w[i + 1];
                let mut r = bu[i].re + dt * w1 * cur.mean[i] + impulse * wi;
                if let Some(p) = prev {
                    r += dt * w0 * p.mean[i];
                }
                if let Some(s) = fspec {
                    r += dt * wi * s[0][[i + 1, 0]].re;
                }
                r
            })
            .collect();
        fac.mean.solve_in_place(&mut rhs);

        let g = &self.grid;
        let new_modes: Vec<Vec<Complex64>> = self
            .modes
            .par_iter()
            .enumerate()
            .map(|(idx, c)| {
                let k = idx + 1;
                let x = xi(g, k);
                let phase = |d: f64| Complex64::from_polar(1.0, -x * (new_drift - d));
                let a_now = phase(self.drift);
                let mut r: Vec<Complex64> = fac.rhs[idx]
                    .mul(c)
                    .into_iter()
                    .zip(&cur.modes[idx])
                    .map(|(b, e)| a_now * (b + e * (dt * w1)))
                    .collect();
                if let Some(p) = prev {
                    let a_prev = phase(p.drift) * (dt * w0);
                    for (ri, e) in r.iter_mut().zip(&p.modes[idx]) {
                        *ri += a_prev * e;
                    }
                }
                if let Some(s) = fspec {
                    let a: Vec<Complex64> = s[0].column(k).to_vec();
                    let b: Vec<Complex64> = s[1].column(k).to_vec();
                    let a_mid = phase(mid_drift) * dt;
                    for (ri, e) in r.iter_mut().zip(self.project(k, &a, &b)) {
                        *ri += a_mid * e;
                    }
                }
                fac.modes[idx].solve_complex_in_place(&mut r);
                r
            })
            .collect();

        let finite = rhs.iter().all(|v| v.is_finite())
            && new_modes.iter().all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        if !finite {
            return Err(Error::NotFinite(self.time + dt));
        }
        self.prev = Some(Previous {
            mean: cur.mean,
            modes: cur.modes,
            dt,
            drift: self.drift,
        });
        self.mean = rhs;
        self.modes = new_modes;
        self.frame = new_frame;
        self.drift = new_drift;
        self.time += dt;
        Ok(())
    }
}

/// One step from `state` with a freshly started multistep history.
///
/// The first step of a CNAB2 run is Crank–Nicolson/forward Euler; use
/// [`NsSolver`] directly for second-order time accuracy over many steps.
pub fn step_ns(state: &Field2D, dt: f64, eps: f64, force: &Field2D) -> Result<Field2D> {
    let mut s = NsSolver::new(state.grid(), eps)?;
    s.set_velocity(state, state.time())?;
    s.step(dt, Some(force), 0.0)?;
    Ok(s.velocity())
}
