//! Flushing profile `h(t)` and cutoff `β(t)`.
//!
//! `h` is a combination of C^∞ bumps placed on `(0, T/3)` and `(2T/3, T)`.
//! The coefficients are the minimum-ℓ² solution of the linear constraints
//! `∫₀^{T/3} h = 3L`, `∫_{2T/3}^T h = −3L` and `∫₀^T t^k h = 0` for
//! `k = 1..=m`, so `h` vanishes identically on `[T/3, 2T/3]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use crate::quad::Rule;
use crate::{Error, Result};

/// Largest number of bumps per interval tried before giving up.
const MAX_BUMPS: usize = 48;
/// Sub-panels per bump cell of the design quadrature.
const DESIGN_SUB: usize = 6;
const DESIGN_ORDER: usize = 20;

/// Reference bump `exp(−1/(1 − r²))` on `(−1, 1)`.
pub fn reference_bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

fn reference_bump_dr(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - r * r;
        -2.0 * r / (q * q) * (-1.0 / q).exp()
    }
}

const TABLE_CELLS: usize = 4096;

/// `Φ(r_i)` on a uniform table of `[−1, 1]`, each cell integrated with a
/// 24-point Gauss rule.
fn primitive_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 2.0 / TABLE_CELLS as f64;
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(TABLE_CELLS + 1);
        out.push(0.0);
        for i in 0..TABLE_CELLS {
            let a = -1.0 + i as f64 * h;
            acc += Rule::gauss(a, a + h, 24).integrate(reference_bump);
            out.push(acc);
        }
        out
    })
}

/// `Φ(r) = ∫_{−1}^{r} exp(−1/(1 − s²)) ds` by cubic Hermite interpolation of
/// the table (the derivative is the bump itself).
fn reference_primitive(r: f64) -> f64 {
    let table = primitive_table();
    if r <= -1.0 {
        return 0.0;
    }
    if r >= 1.0 {
        return table[TABLE_CELLS];
    }
    let h = 2.0 / TABLE_CELLS as f64;
    let i = (((r + 1.0) / h) as usize).min(TABLE_CELLS - 1);
    let a = -1.0 + i as f64 * h;
    let s = (r - a) / h;
    let (p0, p1) = (table[i], table[i + 1]);
    let (m0, m1) = (reference_bump(a) * h, reference_bump(a + h) * h);
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * p0
        + (s3 - 2.0 * s2 + s) * m0
        + (-2.0 * s3 + 3.0 * s2) * p1
        + (s3 - s2) * m1
}

fn reference_mass() -> f64 {
    primitive_table()[TABLE_CELLS]
}

/// A scaled bump supported in `(center − half_width, center + half_width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub half_width: f64,
}

impl Bump {
    pub fn value(&self, t: f64) -> f64 {
        reference_bump((t - self.center) / self.half_width)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        reference_bump_dr((t - self.center) / self.half_width) / self.half_width
    }

    /// `∫_{−∞}^{t}` of the bump.
    pub fn primitive(&self, t: f64) -> f64 {
        self.half_width * reference_primitive((t - self.center) / self.half_width)
    }

    pub fn mass(&self) -> f64 {
        self.half_width * reference_mass()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }
}

/// `count` overlapping bumps on `(a, b)`, each covering two of `count + 1`
/// equal cells.
pub fn bump_basis(a: f64, b: f64, count: usize) -> Vec<Bump> {
    assert!(count >= 1 && a < b);
    let cell = (b - a) / (count + 1) as f64;
    (0..count)
        .map(|i| Bump {
            center: a + (i + 1) as f64 * cell,
            half_width: cell,
        })
        .collect()
}

/// Cell breakpoints of [`bump_basis`].
fn basis_breaks(a: f64, b: f64, count: usize) -> Vec<f64> {
    let cell = (b - a) / (count + 1) as f64;
    (0..=count + 1).map(|i| a + i as f64 * cell).collect()
}

/// Target integrals of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignTargets {
    pub t_final: f64,
    pub length: f64,
    /// Number of vanishing moments `∫ t^k h`, `k = 1..=m`.
    pub m: usize,
    pub first_integral: f64,
    pub second_integral: f64,
}

/// Residuals of the constraint system, re-evaluated after the solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    pub first_integral: f64,
    pub second_integral: f64,
    /// `∫ t^k h` for `k = 1..=m`.
    pub moments: Vec<f64>,
}

/// The designed flushing profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseFlow {
    pub targets: DesignTargets,
    pub bumps: Vec<Bump>,
    pub coefficients: Vec<f64>,
    pub residuals: ConstraintResiduals,
    #[serde(skip)]
    rule: Rule,
    #[serde(skip)]
    rule_values: Vec<f64>,
}

impl BaseFlow {
    pub fn t_final(&self) -> f64 {
        self.targets.t_final
    }

    pub fn length(&self) -> f64 {
        self.targets.length
    }

    pub fn m(&self) -> usize {
        self.targets.m
    }

    pub fn value(&self, t: f64) -> f64 {
        self.bumps
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| c * b.value(t))
            .sum()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.bumps
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| c * b.derivative(t))
            .sum()
    }

    /// Displacement `X(t) = ∫₀^t h`.
    pub fn displacement(&self, t: f64) -> f64 {
        self.bumps
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| {
                let (lo, hi) = b.support();
                if t <= lo {
                    0.0
                } else if t >= hi {
                    c * b.mass()
                } else {
                    c * b.primitive(t)
                }
            })
            .sum()
    }

    /// Composite Gauss rule used for the design; its discrete t-moments of
    /// `h` vanish to round-off.
    pub fn design_rule(&self) -> &Rule {
        &self.rule
    }

    /// `h` at the nodes of [`design_rule`](Self::design_rule).
    pub fn design_values(&self) -> &[f64] {
        &self.rule_values
    }

    pub fn max_abs(&self) -> f64 {
        self.rule_values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Panel breakpoints (all bump cells), sorted.
    pub fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .bumps
            .iter()
            .flat_map(|b| [b.support().0, b.center, b.support().1])
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        b
    }

    /// Writes `(t, h(t))` at `samples + 1` equispaced times on `[0, T]`.
    pub fn write_csv(&self, path: &Path, samples: usize) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,h")?;
        let tf = self.t_final();
        for i in 0..=samples {
            let t = tf * i as f64 / samples as f64;
            writeln!(w, "{:e},{:e}", t, self.value(t))?;
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// `∫₀^T t^k h dt` with the design quadrature.
pub fn t_moment(h: &BaseFlow, k: u32) -> f64 {
    t_moment_on(h, k, 0.0, h.t_final())
}

/// `∫_a^b t^k h dt`; `[a, b]` should be a union of bump cells.
pub fn t_moment_on(h: &BaseFlow, k: u32, a: f64, b: f64) -> f64 {
    h.rule
        .nodes
        .iter()
        .zip(&h.rule.weights)
        .zip(&h.rule_values)
        .filter(|((t, _), _)| **t >= a && **t <= b)
        .map(|((t, w), v)| w * v * t.powi(k as i32))
        .sum()
}

/// Designs `h` for horizon `T`, length `L` and `m` extra vanishing moments.
pub fn design_base_flow(t_final: f64, length: f64, m: usize) -> Result<BaseFlow> {
    design_with_targets(DesignTargets {
        t_final,
        length,
        m,
        first_integral: 3.0 * length,
        second_integral: -3.0 * length,
    })
}

/// Designs `h` for arbitrary interval integrals.
pub fn design_with_targets(targets: DesignTargets) -> Result<BaseFlow> {
    let DesignTargets { t_final, length, m, .. } = targets;
    if !(t_final > 0.0) || !(length > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "T = {t_final} and L = {length} must be positive"
        )));
    }
    let mut count = m + 3;
    loop {
        match try_design(targets, (count, 3 * count)) {
            Ok(b) => return Ok(b),
            Err(e) if count >= MAX_BUMPS => {
                return Err(Error::Infeasible(format!(
                    "{e} (basis enlarged to {count} + {} bumps)", 3 * count
                )))
            }
            Err(_) => count = (count * 3 / 2).min(MAX_BUMPS),
        }
    }
}

fn design_rule(t_final: f64, counts: (usize, usize), sub: usize, order: usize) -> Rule {
    let third = t_final / 3.0;
    let mut rule = Rule::default();
    for (a, b, count) in [(0.0, third, counts.0), (2.0 * third, t_final, counts.1)] {
        let breaks = basis_breaks(a, b, count);
        let fine: Vec<f64> = breaks
            .windows(2)
            .flat_map(|w| (0..sub).map(move |s| w[0] + (w[1] - w[0]) * s as f64 / sub as f64))
            .chain(std::iter::once(b))
            .collect();
        rule.append(Rule::on_breaks(&fine, order));
    }
    rule
}

pub(crate) fn try_design(targets: DesignTargets, counts: (usize, usize)) -> Result<BaseFlow> {
    let count = counts.0;
    let DesignTargets {
        t_final, m, first_integral, second_integral, ..
    } = targets;
    let third = t_final / 3.0;
    let mut bumps = bump_basis(0.0, third, count);
    // a denser basis on the return interval: with equal counts the
    // minimum-norm design is odd about T/2 and every even central moment
    // vanishes for free, which skips a decay order
    bumps.extend(bump_basis(2.0 * third, t_final, counts.1));
    let rule = design_rule(t_final, counts, DESIGN_SUB, DESIGN_ORDER);
    let nb = bumps.len();
    let rows = 2 + m;

    // moments in the scaled variable t/T keep the system well conditioned
    let values: Vec<Vec<f64>> = bumps
        .iter()
        .map(|b| rule.nodes.iter().map(|t| b.value(*t)).collect())
        .collect();
    let mut a = DMatrix::zeros(rows, nb);
    for (i, b) in bumps.iter().enumerate() {
        if i < count {
            a[(0, i)] = b.mass();
        } else {
            a[(1, i)] = b.mass();
        }
        for k in 1..=m {
            a[(1 + k, i)] = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .zip(&values[i])
                .map(|((t, w), v)| w * v * (t / t_final).powi(k as i32))
                .sum();
        }
    }
    let mut d = DVector::zeros(rows);
    d[0] = first_integral;
    d[1] = second_integral;

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-12 * smax).count();
    if rank < rows {
        return Err(Error::Infeasible(format!(
            "constraint matrix has rank {rank} < {rows}"
        )));
    }
    let solve = |rhs: &DVector<f64>| {
        svd.solve(rhs, 1e-14 * smax)
            .map_err(|e| Error::Infeasible(e.to_string()))
    };
    let mut coeffs = solve(&d)?;
    // one step of iterative refinement pushes the moment residuals to round-off
    let r0 = &d - &a * &coeffs;
    coeffs += solve(&r0)?;
    let res = &a * &coeffs - &d;
    let scale = d.amax().max(1.0);
    if res.amax() > 1e-11 * scale {
        return Err(Error::Infeasible(format!("residual {:.2e}", res.amax())));
    }
    let coefficients: Vec<f64> = coeffs.iter().copied().collect();
    let rule_values: Vec<f64> = (0..rule.len())
        .map(|q| coefficients.iter().zip(&values).map(|(c, v)| c * v[q]).sum())
        .collect();
    let mut flow = BaseFlow {
        targets,
        bumps,
        coefficients,
        residuals: ConstraintResiduals::default(),
        rule,
        rule_values,
    };
    flow.residuals = ConstraintResiduals {
        first_integral: t_moment_on(&flow, 0, 0.0, third) - first_integral,
        second_integral: t_moment_on(&flow, 0, 2.0 * third, t_final) - second_integral,
        moments: (1..=m as u32).map(|k| t_moment(&flow, k)).collect(),
    };
    Ok(flow)
}

/// Independent check of a design: the constraints re-evaluated with a rule
/// ten times finer than the design rule.
pub fn verify_constraints(h: &BaseFlow) -> ConstraintResiduals {
    let tf = h.t_final();
    let first = h.bumps.iter().filter(|b| b.center < 0.5 * tf).count();
    let rule = design_rule(tf, (first, h.bumps.len() - first), DESIGN_SUB * 10, DESIGN_ORDER - 4);
    let third = tf / 3.0;
    let integral = |a: f64, b: f64, k: i32| -> f64 {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .filter(|(t, _)| **t >= a && **t <= b)
            .map(|(t, w)| w * h.value(*t) * t.powi(k))
            .sum()
    };
    ConstraintResiduals {
        first_integral: integral(0.0, third, 0) - h.targets.first_integral,
        second_integral: integral(2.0 * third, tf, 0) - h.targets.second_integral,
        moments: (1..=h.m() as i32).map(|k| integral(0.0, tf, k)).collect(),
    }
}

/// `β(t)`: 1 before `T/3`, 0 after `2T/3`, C^∞ and monotone in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub t_final: f64,
}

fn phi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

fn phi_prime(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp() / (x * x)
    }
}

impl Cutoff {
    fn local(&self, t: f64) -> f64 {
        (t - self.t_final / 3.0) / (self.t_final / 3.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = self.local(t);
        if s <= 0.0 {
            1.0
        } else if s >= 1.0 {
            0.0
        } else {
            let (a, b) = (phi(s), phi(1.0 - s));
            b / (a + b)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = self.local(t);
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        let (a, b) = (phi(s), phi(1.0 - s));
        let (da, db) = (phi_prime(s), -phi_prime(1.0 - s));
        let ds = 3.0 / self.t_final;
        (db * (a + b) - b * (da + db)) / ((a + b) * (a + b)) * ds
    }
}

pub fn design_cutoff(t_final: f64) -> Result<Cutoff> {
    if !(t_final > 0.0) {
        return Err(Error::InvalidParameter(format!("T = {t_final} must be positive")));
    }
    Ok(Cutoff { t_final })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_bump_is_positive_and_flat() {
        let b = bump_basis(0.0, 1.0, 1);
        assert_eq!(b.len(), 1);
        let b = b[0];
        assert!(b.value(0.3) > 0.0 && b.value(0.999) > 0.0);
        assert_eq!(b.value(0.0), 0.0);
        assert_eq!(b.value(1.2), 0.0);
        assert_eq!(b.derivative(0.0), 0.0);
        assert!(b.derivative(1e-4).abs() < 1e-300);
        assert!(b.derivative(1.0 - 1e-4).abs() < 1e-300);
        let mass = adaptive_mass(&b);
        assert!(mass > 0.0 && (mass - b.mass()).abs() < 1e-12);
    }

    fn adaptive_mass(b: &Bump) -> f64 {
        let (lo, hi) = b.support();
        crate::quad::adaptive(|t| b.value(t), lo, hi, 1e-14).unwrap()
    }

    #[test]
    fn designed_flow_integrals() {
        let h = design_base_flow(3.0, 1.0, 0).unwrap();
        assert!((t_moment_on(&h, 0, 0.0, 1.0) - 3.0).abs() < 1e-12);
        assert!((t_moment_on(&h, 0, 2.0, 3.0) + 3.0).abs() < 1e-12);
        assert!(t_moment(&h, 0).abs() < 1e-10);
        for t in [1.0, 1.2, 1.5, 1.99, 2.0] {
            assert_eq!(h.value(t), 0.0);
        }
        let h1 = design_base_flow(3.0, 1.0, 1).unwrap();
        assert!(t_moment(&h1, 1).abs() < 1e-10);
    }

    #[test]
    fn displacement_checkpoints() {
        let h = design_base_flow(3.0, 1.0, 3).unwrap();
        assert!((h.displacement(1.0) - 3.0).abs() < 1e-8);
        assert!((h.displacement(1.5) - 3.0).abs() < 1e-8);
        assert!((h.displacement(2.0) - 3.0).abs() < 1e-8);
        assert!(h.displacement(3.0).abs() < 1e-8);
        // displacement agrees with direct quadrature of h
        let direct = crate::quad::adaptive(|t| h.value(t), 0.0, 0.7, 1e-13).unwrap();
        let d = h.displacement(0.7);
        assert!((d - direct).abs() < 1e-10, "{d} {direct}");
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = design_base_flow(3.0, 1.0, 2).unwrap();
        for t in [0.2, 0.55, 2.3, 2.8] {
            let e = 1e-4;
            let fd = (8.0 * (h.value(t + e) - h.value(t - e)) - (h.value(t + 2.0 * e) - h.value(t - 2.0 * e)))
                / (12.0 * e);
            assert!((fd - h.derivative(t)).abs() < 1e-6 * h.max_abs().max(1.0));
        }
    }

    #[test]
    fn cutoff_examples() {
        let b = design_cutoff(3.0).unwrap();
        assert_eq!(b.value(0.0), 1.0);
        assert_eq!(b.value(3.0), 0.0);
        assert!(b.value(1.5) > 0.0 && b.value(1.5) < 1.0);
        assert_eq!(b.derivative(0.5), 0.0);
        assert_eq!(b.derivative(2.5), 0.0);
        let total = crate::quad::adaptive(|t| b.derivative(t), 1.0, 2.0, 1e-13).unwrap();
        assert!((total + 1.0).abs() < 1e-11);
        let e = 1e-6;
        let fd = (b.value(1.3 + e) - b.value(1.3 - e)) / (2.0 * e);
        assert!((fd - b.derivative(1.3)).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn constraints_hold_under_independent_quadrature(
            t_final in 0.5f64..10.0, length in 0.2f64..3.0, m in 0usize..5,
        ) {
            let h = design_base_flow(t_final, length, m).unwrap();
            let r = verify_constraints(&h);
            let scale = 3.0 * length;
            prop_assert!(r.first_integral.abs() < 1e-10 * scale);
            prop_assert!(r.second_integral.abs() < 1e-10 * scale);
            for (k, v) in r.moments.iter().enumerate() {
                let tk = t_final.powi(k as i32 + 1);
                prop_assert!(v.abs() < 1e-10 * scale * tk, "k={} {}", k + 1, v);
            }
        }

        #[test]
        fn cutoff_is_monotone(t in 0.0f64..3.0) {
            let b = Cutoff { t_final: 3.0 };
            prop_assert!(b.derivative(t) <= 0.0);
            prop_assert!((0.0..=1.0).contains(&b.value(t)));
        }
    }
}
