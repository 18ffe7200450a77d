//! Banded LU factorization with partial pivoting (LAPACK gbtrf layout) and
//! band matrix-vector products. The discrete operators here couple nodes at
//! most one grid line apart, so bandwidths stay near the smaller grid
//! dimension and a desk-scale direct solve is cheap.

use crate::error::{Error, Result};

/// General band matrix, kl sub- and ku super-diagonals. Column-major band
/// storage with kl extra rows for pivoting fill-in:
/// entry (i, j) lives at `ab[j * ldab + kl + ku + i - j]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, ab: vec![0.0; ldab * n] }
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        (i + self.ku >= j) && (j + self.kl >= i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        self.ab[j * self.ldab + self.kl + self.ku + i - j] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) && i < self.n && j < self.n {
            self.ab[j * self.ldab + self.kl + self.ku + i - j]
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let xv = x[j];
            if xv == 0.0 {
                continue;
            }
            for i in lo..=hi {
                y[i] += self.get(i, j) * xv;
            }
        }
        y
    }

    /// A^T A as a band matrix of bandwidth kl + ku.
    pub fn normal_matrix(&self) -> BandMatrix {
        let w = self.kl + self.ku;
        let mut out = BandMatrix::zeros(self.n, w, w);
        for i in 0..self.n {
            let jlo = i.saturating_sub(w);
            let jhi = (i + w).min(self.n - 1);
            for j in jlo..=jhi {
                // sum over rows k where both columns i and j have entries
                let klo = i.saturating_sub(self.ku).max(j.saturating_sub(self.ku));
                let khi = ((i + self.kl).min(j + self.kl)).min(self.n - 1);
                let mut acc = 0.0;
                for k in klo..=khi {
                    acc += self.get(k, i) * self.get(k, j);
                }
                if acc != 0.0 {
                    out.add(i, j, acc);
                }
            }
        }
        out
    }

    /// A^T b.
    pub fn transpose_matvec(&self, b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let mut acc = 0.0;
            for i in lo..=hi {
                acc += self.get(i, j) * b[i];
            }
            y[j] = acc;
        }
        y
    }

    /// Entries in coordinate form (row, col, value), skipping exact zeros.
    pub fn coo_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                let v = self.get(i, j);
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// LU factorization with partial pivoting; consumes a copy of the matrix.
    pub fn factor(&self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let ldab = self.ldab;
        let mut ab = self.ab.clone();
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let base = j * ldab + kl + ku;
            let mut jp = 0usize;
            let mut best = ab[base].abs();
            for i in 1..=km {
                let v = ab[base + i].abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            let piv = ab[base + jp];
            if piv == 0.0 || !piv.is_finite() {
                return Err(Error::SolveFailed(format!(
                    "zero or non-finite pivot at column {j}"
                )));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for k in j..=ju {
                    let i1 = k * ldab + kl + ku + (j + jp) - k;
                    let i2 = k * ldab + kl + ku + j - k;
                    ab.swap(i1, i2);
                }
            }
            if km > 0 {
                let piv = ab[base];
                for i in 1..=km {
                    ab[base + i] /= piv;
                }
                for k in j + 1..=ju {
                    let col_base = k * ldab + kl + ku + j - k;
                    let f = ab[col_base];
                    if f != 0.0 {
                        for i in 1..=km {
                            ab[col_base + i] -= f * ab[base + i];
                        }
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, ldab, ab, ipiv })
    }
}

/// Factored form; upper bandwidth grows to kl + ku from pivoting.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut b = rhs.to_vec();
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        // forward elimination with the recorded row interchanges
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(p, j);
            }
            let km = kl.min(n - 1 - j);
            let base = j * ldab + kl + ku;
            let bj = b[j];
            if bj != 0.0 {
                for i in 1..=km {
                    b[j + i] -= self.ab[base + i] * bj;
                }
            }
        }
        // back substitution against U, bandwidth kl + ku
        let w = kl + ku;
        for j in (0..n).rev() {
            let diag = self.ab[j * ldab + kl + ku];
            b[j] /= diag;
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(w);
                for i in lo..j {
                    b[i] -= self.ab[j * ldab + kl + ku + i - j] * bj;
                }
            }
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Dense Gaussian elimination with partial pivoting; the oracle.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for r in k + 1..n {
                let f = m[r][k] / m[k][k];
                for c in k..n {
                    m[r][c] -= f * m[k][c];
                }
                x[r] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            for c in k + 1..n {
                x[k] -= m[k][c] * x[c];
            }
            x[k] /= m[k][k];
        }
        x
    }

    #[test]
    fn band_lu_matches_dense_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let n = rng.gen_range(5..40);
            let kl = rng.gen_range(1..4.min(n));
            let ku = rng.gen_range(1..4.min(n));
            let mut band = BandMatrix::zeros(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if band.in_band(i, j) {
                        let v: f64 = rng.gen_range(-1.0..1.0);
                        let v = if i == j { v + 4.0 } else { v };
                        band.add(i, j, v);
                        dense[i][j] = v;
                    }
                }
            }
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lu = band.factor().unwrap();
            let x = lu.solve(&rhs);
            let x_ref = dense_solve(&dense, &rhs);
            for i in 0..n {
                assert!(
                    (x[i] - x_ref[i]).abs() < 1e-9,
                    "trial {trial}, entry {i}: {} vs {}",
                    x[i],
                    x_ref[i]
                );
            }
        }
    }

    #[test]
    fn band_lu_handles_indefinite_with_pivoting() {
        // strongly indefinite band system that needs row interchanges
        let n = 30;
        let mut band = BandMatrix::zeros(n, 2, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for i in 0..n {
            for j in 0..n {
                if band.in_band(i, j) {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    let diag_small = if i == j { 1e-8 } else { 1.0 };
                    band.add(i, j, sign * diag_small * rng.gen_range(0.5..1.5));
                }
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let rhs = band.matvec(&x_true);
        let x = band.factor().unwrap().solve(&rhs);
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-6, "entry {i}");
        }
    }

    #[test]
    fn normal_matrix_least_squares() {
        // singular square system solved through the normal equations
        let n = 12;
        let mut band = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            band.add(i, i, 2.0);
            if i > 0 {
                band.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                band.add(i, i + 1, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let rhs = band.matvec(&x_true);
        let normal = band.normal_matrix();
        let atb = band.transpose_matvec(&rhs);
        let x = normal.factor().unwrap().solve(&atb);
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn singular_matrix_reports_failure() {
        let mut band = BandMatrix::zeros(5, 1, 1);
        for i in 0..5 {
            if i != 2 {
                band.add(i, i, 1.0);
            }
        }
        // column 2 identically zero
        assert!(band.factor().is_err());
    }
}
