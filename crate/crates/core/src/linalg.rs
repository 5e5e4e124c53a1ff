//! Banded symmetric positive-definite solves used by the per-mode systems.

use num_complex::Complex64;

use crate::{Error, Result};

/// Banded Cholesky factor of a symmetric positive-definite matrix.
///
/// Storage is the lower band: `band[i][d] = A[i][i − d]` for `d ≤ bw`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    band: Vec<Vec<f64>>,
}

impl BandedCholesky {
    /// Factors a dense symmetric matrix, reading only its lower band.
    pub fn from_dense(a: &[Vec<f64>], bw: usize) -> Result<Self> {
        let n = a.len();
        let mut band = vec![vec![0.0; bw + 1]; n];
        for i in 0..n {
            for d in 0..=bw.min(i) {
                band[i][d] = a[i][i - d];
            }
        }
        Self::factor(n, bw, band)
    }

    /// Factors from the lower band, `band[i][d] = A[i][i − d]`.
    pub fn from_lower_band(band: Vec<Vec<f64>>, bw: usize) -> Result<Self> {
        let n = band.len();
        Self::factor(n, bw, band)
    }

    fn factor(n: usize, bw: usize, mut band: Vec<Vec<f64>>) -> Result<Self> {
        for i in 0..n {
            for d in (0..=bw.min(i)).rev() {
                let j = i - d;
                let mut s = band[i][d];
                // sum over k < j within both bands
                let kmin = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for k in kmin..j {
                    s -= band[i][i - k] * band[j][j - k];
                }
                if d == 0 {
                    if !(s > 0.0) {
                        return Err(Error::Singular(format!(
                            "matrix not positive definite at row {i} (pivot {s:e})"
                        )));
                    }
                    band[i][0] = s.sqrt();
                } else {
                    band[i][d] = s / band[j][0];
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[i][i - k] * b[k];
            }
            b[i] = s / self.band[i][0];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.band[k][k - i] * b[k];
            }
            b[i] = s / self.band[i][0];
        }
    }

    pub fn solve_complex_in_place(&self, b: &mut [Complex64]) {
        let mut re: Vec<f64> = b.iter().map(|z| z.re).collect();
        let mut im: Vec<f64> = b.iter().map(|z| z.im).collect();
        self.solve_in_place(&mut re);
        self.solve_in_place(&mut im);
        for (z, (r, i)) in b.iter_mut().zip(re.into_iter().zip(im)) {
            *z = Complex64::new(r, i);
        }
    }
}

/// Dense helper: `C = Aᵀ diag(w) B` for row-major matrices.
pub fn weighted_gram(a: &[Vec<f64>], w: &[f64], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let ca = a[0].len();
    let cb = b[0].len();
    let mut c = vec![vec![0.0; cb]; ca];
    for r in 0..n {
        for i in 0..ca {
            let ai = a[r][i];
            if ai == 0.0 {
                continue;
            }
            let f = ai * w[r];
            for j in 0..cb {
                c[i][j] += f * b[r][j];
            }
        }
    }
    c
}

/// Dense matrix product.
pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for (k, aik) in a[i].iter().enumerate() {
            if *aik == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// Half bandwidth of a dense matrix (largest `|i − j|` with a nonzero entry).
pub fn bandwidth(a: &[Vec<f64>]) -> usize {
    let mut bw = 0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if *v != 0.0 {
                bw = bw.max(i.abs_diff(j));
            }
        }
    }
    bw
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_pentadiagonal() {
        let n = 30;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 6.0;
            if i + 1 < n {
                a[i][i + 1] = -2.0;
                a[i + 1][i] = -2.0;
            }
            if i + 2 < n {
                a[i][i + 2] = 0.5;
                a[i + 2][i] = 0.5;
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let mut b: Vec<f64> = a.iter().map(|r| r.iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
        let f = BandedCholesky::from_dense(&a, bandwidth(&a)).unwrap();
        f.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(BandedCholesky::from_dense(&a, 1).is_err());
    }
}
