use super::{DenseMatrix, MatError, Result, PIVOT_TOL};

/// Real square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Row `i` stores columns `i - kl ..= i + ku`; positions that fall outside
/// the matrix are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    band: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            band: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        m.band.iter_mut().for_each(|x| *x = 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.band[i * self.width() + j + self.kl - i]
        } else {
            0.0
        }
    }

    /// Sets an entry; writing a nonzero outside the band is an error.
    pub fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(MatError::NonFinite);
        }
        if self.in_band(i, j) {
            let w = self.width();
            self.band[i * w + j + self.kl - i] = v;
            Ok(())
        } else if v == 0.0 && i < self.n && j < self.n {
            Ok(())
        } else {
            Err(MatError::Dimension(format!(
                "entry ({i},{j}) outside band (kl={}, ku={})",
                self.kl, self.ku
            )))
        }
    }

    pub fn from_dense(a: &DenseMatrix<f64>, kl: usize, ku: usize) -> Result<Self> {
        if !a.is_square() {
            return Err(MatError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let mut m = Self::zeros(a.rows(), kl, ku);
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                m.set(i, j, a[(i, j)])?;
            }
        }
        Ok(m)
    }

    pub fn to_dense(&self) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(MatError::Dimension(format!(
                "vector of length {} for dimension {}",
                x.len(),
                self.n
            )));
        }
        Ok((0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect())
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Returns `I - s * self`.
    pub fn identity_minus_scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.band.iter_mut().for_each(|x| *x *= -s);
        let w = self.width();
        for i in 0..self.n {
            out.band[i * w + self.kl] += 1.0;
        }
        out
    }

    /// LU factorization with partial pivoting restricted to the band. The
    /// upper factor gains up to `kl` extra super-diagonals of fill.
    pub fn lu(&self) -> Result<BandedLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let uw = 2 * kl + ku + 1;
        let tol = PIVOT_TOL * self.norm_inf();
        // Row i keeps columns i - kl ..= i + kl + ku at offset j + kl - i.
        let mut u = vec![0.0; n * uw];
        for i in 0..n {
            for j in self.row_range(i) {
                u[i * uw + j + kl - i] = self.get(i, j);
            }
        }
        let idx = |i: usize, j: usize| i * uw + j + kl - i;
        let mut lower = vec![0.0; n * kl];
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut pmag = u[idx(k, k)].abs();
            for i in k + 1..=last_row {
                let m = u[idx(i, k)].abs();
                if m > pmag {
                    p = i;
                    pmag = m;
                }
            }
            if pmag <= tol || pmag == 0.0 {
                return Err(MatError::Singular {
                    column: k,
                    pivot: pmag,
                    tol,
                });
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    u.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = u[idx(k, k)];
            for i in k + 1..=last_row {
                let l = u[idx(i, k)] / pivot;
                lower[k * kl + (i - k - 1)] = l;
                u[idx(i, k)] = 0.0;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let v = l * u[idx(k, j)];
                        u[idx(i, j)] -= v;
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            upper: u,
            lower,
            piv,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.lu()?.solve(b)
    }
}

/// Band LU factors: unit lower multipliers per elimination step, the
/// interchanges applied in sequence, and the widened upper factor.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    upper: Vec<f64>,
    lower: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        if x.len() != n {
            return Err(MatError::Dimension(format!(
                "right-hand side of length {} for dimension {n}",
                x.len()
            )));
        }
        let uw = 2 * kl + ku + 1;
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                    x[i] -= self.lower[k * kl + (i - k - 1)] * xk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..=(i + kl + ku).min(n - 1) {
                acc -= self.upper[i * uw + j + kl - i] * x[j];
            }
            x[i] = acc / self.upper[i * uw + kl];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_band_returns_rhs() {
        let m = BandedMatrix::zeros(5, 1, 1).identity_minus_scaled(0.0);
        let b = [1.0, -2.0, 3.0, 0.5, 9.0];
        assert_eq!(m.solve(&b).unwrap(), b.to_vec());
    }

    #[test]
    fn laplacian_matches_dense() {
        let n = 10;
        let mut m = BandedMatrix::zeros(n, 1, 1);
        for i in 0..n {
            m.set(i, i, 2.0).unwrap();
            if i > 0 {
                m.set(i, i - 1, -1.0).unwrap();
            }
            if i + 1 < n {
                m.set(i, i + 1, -1.0).unwrap();
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let xb = m.solve(&b).unwrap();
        let xd = m.to_dense().solve(&b).unwrap();
        for (a, d) in xb.iter().zip(&xd) {
            assert!((a - d).abs() <= 1e-12 * d.abs().max(1.0));
        }
    }

    #[test]
    fn pivoting_nonsymmetric_band_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, kl, ku) = (40, 3, 2);
        let mut m = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                // weak diagonal forces row interchanges
                let v: f64 = rng.gen_range(-1.0..1.0);
                m.set(i, j, if i == j { 0.01 * v } else { v }).unwrap();
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xb = m.solve(&b).unwrap();
        let xd = m.to_dense().solve(&b).unwrap();
        let scale = xd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, d) in xb.iter().zip(&xd) {
            assert!((a - d).abs() <= 1e-10 * scale);
        }
        let r = m.mat_vec(&xb).unwrap();
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() <= 1e-10 * (m.norm_inf() * scale + 1.0));
        }
    }

    #[test]
    fn singular_band_rejected() {
        let m = BandedMatrix::zeros(3, 1, 1);
        assert!(matches!(m.lu(), Err(MatError::Singular { .. })));
    }

    #[test]
    fn out_of_band_write_rejected() {
        let mut m = BandedMatrix::zeros(4, 1, 0);
        assert!(m.set(0, 2, 1.0).is_err());
        assert!(m.set(0, 2, 0.0).is_ok());
        assert_eq!(m.get(0, 3), 0.0);
    }
}
