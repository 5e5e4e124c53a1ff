//! Gauss–Legendre rules, composite rules and adaptive Gauss–Kronrod.

use crate::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            if n == 1 {
                dp = 1.0;
            }
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        x[0] = 0.0;
        w[0] = 2.0;
    }
    (x, w)
}

/// A fixed rule: nodes with weights.
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// `n`-point Gauss–Legendre on `[a, b]`.
    pub fn gauss(a: f64, b: f64, n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        Self {
            nodes: x.iter().map(|x| c + h * x).collect(),
            weights: w.iter().map(|w| h * w).collect(),
        }
    }

    /// Composite Gauss–Legendre with `panels` equal panels of `order` points.
    pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut r = Self::default();
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                r.nodes.push(lo + 0.5 * h * (xi + 1.0));
                r.weights.push(0.5 * h * wi);
            }
        }
        r
    }

    /// Composite rule on explicit panel breakpoints.
    pub fn on_breaks(breaks: &[f64], order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let mut r = Self::default();
        for p in breaks.windows(2) {
            let (lo, h) = (p[0], p[1] - p[0]);
            for (xi, wi) in x.iter().zip(&w) {
                r.nodes.push(lo + 0.5 * h * (xi + 1.0));
                r.weights.push(0.5 * h * wi);
            }
        }
        r
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    pub fn append(&mut self, other: Rule) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<const N: usize>(f: &impl Fn(f64) -> [f64; N], a: f64, b: f64) -> ([f64; N], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc.map(|v| v * WGK[7]);
    let mut g = fc.map(|v| v * WG[3]);
    for i in 0..7 {
        let dx = h * XGK[i];
        let (l, r) = (f(c - dx), f(c + dx));
        for n in 0..N {
            let s = l[n] + r[n];
            k[n] += WGK[i] * s;
            if i % 2 == 1 {
                g[n] += WG[i / 2] * s;
            }
        }
    }
    let err = (0..N).map(|n| ((k[n] - g[n]) * h).abs()).fold(0.0, f64::max);
    (k.map(|v| v * h), err)
}

/// Adaptive Gauss–Kronrod (7/15) with absolute tolerance `tol`.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    Ok(adaptive_n(|x| [f(x)], a, b, tol)?[0])
}

/// [`adaptive`] for several integrands sharing their nodes; the error
/// estimate is the largest over the components.
pub fn adaptive_n<const N: usize>(f: impl Fn(f64) -> [f64; N], a: f64, b: f64, tol: f64) -> Result<[f64; N]> {
    let mut total = [0.0; N];
    if a == b {
        return Ok(total);
    }
    let mut stack = vec![(a, b, 0usize)];
    let span = (b - a).abs();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        let local_tol = tol * ((hi - lo).abs() / span).max(1e-6);
        let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if err <= local_tol || err <= 1e-15 * scale {
            for (t, x) in total.iter_mut().zip(v) {
                *t += x;
            }
        } else if depth >= 40 {
            return Err(Error::Quadrature(format!(
                "no convergence on [{lo}, {hi}] (error estimate {err:.2e})"
            )));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    if !total.iter().all(|t| t.is_finite()) {
        return Err(Error::Quadrature("non-finite integrand".into()));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_are_exact_for_polynomials() {
        for n in 1..12 {
            let r = Rule::gauss(-1.0, 2.0, n);
            for p in 0..2 * n {
                let exact = (2f64.powi(p as i32 + 1) - (-1f64).powi(p as i32 + 1)) / (p + 1) as f64;
                let v = r.integrate(|x| x.powi(p as i32));
                assert!((v - exact).abs() < 1e-12 * exact.abs().max(1.0), "n={n} p={p}");
            }
        }
    }

    #[test]
    fn adaptive_handles_peaks() {
        let v = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 * (1.0 / 1e-2_f64).atan() / 1e-2;
        assert!((v - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn composite_matches_closed_form() {
        let r = Rule::composite(0.0, 3.0, 7, 8);
        assert!((r.integrate(f64::exp) - (3f64.exp() - 1.0)).abs() < 1e-13);
    }
}
