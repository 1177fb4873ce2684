use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use super::{MatError, Polynomial, Result, MAX_CHAR_POLY_DIM, PIVOT_TOL};

/// Field scalars the dense kernels operate on (`f64` and `Complex64`).
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn to_complex(self) -> Complex64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn to_complex(self) -> Complex64 {
        self
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MatError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(MatError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(MatError::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), ncols, rows.concat())
    }

    pub fn diagonal(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    /// Assembles a block matrix; every block in a block-row must share a row
    /// count and every block in a block-column a column count.
    pub fn from_blocks(blocks: &[Vec<&DenseMatrix<T>>]) -> Result<Self> {
        let nbr = blocks.len();
        let nbc = blocks.first().map_or(0, Vec::len);
        if blocks.iter().any(|r| r.len() != nbc) {
            return Err(MatError::Dimension("ragged block rows".into()));
        }
        let heights: Vec<usize> = blocks.iter().map(|r| r[0].rows).collect();
        let widths: Vec<usize> = (0..nbc).map(|j| blocks[0][j].cols).collect();
        for (bi, row) in blocks.iter().enumerate() {
            for (bj, b) in row.iter().enumerate() {
                if b.rows != heights[bi] || b.cols != widths[bj] {
                    return Err(MatError::Dimension(format!(
                        "block ({bi},{bj}) is {}x{}, expected {}x{}",
                        b.rows, b.cols, heights[bi], widths[bj]
                    )));
                }
            }
        }
        let rows: usize = heights.iter().sum();
        let cols: usize = widths.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for bi in 0..nbr {
            let mut c0 = 0;
            for bj in 0..nbc {
                let b = blocks[bi][bj];
                for i in 0..b.rows {
                    for j in 0..b.cols {
                        out[(r0 + i, c0 + j)] = b[(i, j)];
                    }
                }
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn to_complex(&self) -> DenseMatrix<Complex64> {
        self.map(Scalar::to_complex)
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(MatError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let v = a * rhs[(k, j)];
                    out[(i, j)] += v;
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(MatError::Dimension(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(MatError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.modulus()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).fold(T::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn is_lower_triangular(&self, strict: bool) -> bool {
        (0..self.rows).all(|i| {
            (0..self.cols)
                .filter(|&j| if strict { j >= i } else { j > i })
                .all(|j| self[(i, j)] == T::zero())
        })
    }

    fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(MatError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    /// LU factorization with partial pivoting. Fails when a pivot falls below
    /// `PIVOT_TOL * ||A||_inf`.
    pub fn lu(&self) -> Result<Lu<T>> {
        self.require_square()?;
        let n = self.rows;
        let tol = PIVOT_TOL * self.norm_inf();
        let (factors, perm, sign, small) = eliminate(self.clone());
        if let Some((column, pivot)) = small.filter(|_| n > 0) {
            if pivot <= tol || pivot == 0.0 {
                return Err(MatError::Singular { column, pivot, tol });
            }
        }
        Ok(Lu {
            factors,
            perm,
            sign,
        })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        self.lu()?.solve(b)
    }

    pub fn inverse(&self) -> Result<Self> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = lu.solve(&e)?;
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }

    /// Determinant as the signed product of the LU pivots. Never fails on a
    /// square input; a singular matrix yields zero.
    pub fn determinant(&self) -> Result<T> {
        self.require_square()?;
        if self.rows == 0 {
            return Ok(T::one());
        }
        if self.is_lower_triangular(false) || self.transpose().is_lower_triangular(false) {
            return Ok((0..self.rows).fold(T::one(), |acc, i| acc * self[(i, i)]));
        }
        let (factors, _, sign, _) = eliminate(self.clone());
        let mut det = if sign < 0 { -T::one() } else { T::one() };
        for i in 0..self.rows {
            det = det * factors[(i, i)];
        }
        Ok(det)
    }

    /// Monic characteristic polynomial `det(wI - M)` by the Faddeev-LeVerrier
    /// recurrence.
    pub fn char_poly(&self) -> Result<Polynomial> {
        self.require_square()?;
        let n = self.rows;
        if n > MAX_CHAR_POLY_DIM {
            return Err(MatError::TooLarge {
                dim: n,
                max: MAX_CHAR_POLY_DIM,
            });
        }
        let m = self.to_complex();
        Ok(Polynomial::new(faddeev_leverrier(m.data(), n)))
    }
}

/// Faddeev-LeVerrier on a row-major complex `n x n` buffer. Returns ascending
/// coefficients with a unit leading term.
pub(crate) fn faddeev_leverrier(m: &[Complex64], n: usize) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut coeffs = vec![zero; n + 1];
    coeffs[n] = Complex64::new(1.0, 0.0);
    if n == 0 {
        return coeffs;
    }
    // mk holds M_k; am = M * M_k
    let mut mk = vec![zero; n * n];
    let mut am = vec![zero; n * n];
    for k in 1..=n {
        // M_k = M * M_{k-1} + c_{n-k+1} I, with M_0 = 0
        if k == 1 {
            mk.iter_mut().for_each(|x| *x = zero);
        } else {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = zero;
                    for l in 0..n {
                        acc += m[i * n + l] * mk[l * n + j];
                    }
                    am[i * n + j] = acc;
                }
            }
            mk.copy_from_slice(&am);
        }
        for i in 0..n {
            mk[i * n + i] += coeffs[n - k + 1];
        }
        // c_{n-k} = -tr(M M_k) / k
        let mut tr = zero;
        for i in 0..n {
            for l in 0..n {
                tr += m[i * n + l] * mk[l * n + i];
            }
        }
        coeffs[n - k] = -tr / k as f64;
    }
    coeffs
}

/// Gaussian elimination with partial pivoting in place. Returns the packed
/// factors, the row permutation, the permutation sign, and the smallest pivot
/// magnitude with its column.
fn eliminate<T: Scalar>(mut a: DenseMatrix<T>) -> (DenseMatrix<T>, Vec<usize>, i32, Option<(usize, f64)>) {
    let n = a.rows;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1;
    let mut smallest: Option<(usize, f64)> = None;
    for k in 0..n {
        let (p, pmag) = (k..n)
            .map(|i| (i, a[(i, k)].modulus()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if smallest.map_or(true, |(_, s)| pmag < s) {
            smallest = Some((k, pmag));
        }
        if p != k {
            for j in 0..n {
                a.data.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = a[(k, k)];
        if pivot == T::zero() {
            continue;
        }
        for i in k + 1..n {
            let l = a[(i, k)] / pivot;
            a[(i, k)] = l;
            if l == T::zero() {
                continue;
            }
            for j in k + 1..n {
                let v = l * a[(k, j)];
                a[(i, j)] -= v;
            }
        }
    }
    (a, perm, sign, smallest)
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Packed LU factors with the row permutation.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    factors: DenseMatrix<T>,
    perm: Vec<usize>,
    sign: i32,
}

impl<T: Scalar> Lu<T> {
    pub fn dim(&self) -> usize {
        self.factors.rows
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        if b.len() != n {
            return Err(MatError::Dimension(format!(
                "right-hand side of length {} for dimension {n}",
                b.len()
            )));
        }
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    fn solve_in_place(&self, x: &mut [T]) {
        let n = self.dim();
        let f = &self.factors;
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= f[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= f[(i, j)] * x[j];
            }
            x[i] = acc / f[(i, i)];
        }
    }

    pub fn determinant(&self) -> T {
        let mut det = if self.sign < 0 { -T::one() } else { T::one() };
        for i in 0..self.dim() {
            det = det * self.factors[(i, i)];
        }
        det
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix<Complex64> {
        DenseMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    /// Cofactor expansion along the first row.
    fn cofactor_det(m: &DenseMatrix<Complex64>) -> Complex64 {
        let n = m.rows();
        if n == 1 {
            return m[(0, 0)];
        }
        let mut det = c(0.0, 0.0);
        for j in 0..n {
            let minor = DenseMatrix::from_fn(n - 1, n - 1, |r, s| {
                m[(r + 1, if s < j { s } else { s + 1 })]
            });
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            det += m[(0, j)] * cofactor_det(&minor) * sign;
        }
        det
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let i = DenseMatrix::<Complex64>::identity(4);
        let b = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0), c(7.0, -1.0)];
        assert_eq!(i.solve(&b).unwrap(), b);
    }

    #[test]
    fn diagonal_solve() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let x = a.solve(&[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
    }

    #[test]
    fn solve_matches_cramer_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_complex(&mut rng, 6);
        let b: Vec<Complex64> = (0..6).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let x = a.solve(&b).unwrap();
        let det = cofactor_det(&a);
        for k in 0..6 {
            let ak = DenseMatrix::from_fn(6, 6, |i, j| if j == k { b[i] } else { a[(i, j)] });
            let xk = cofactor_det(&ak) / det;
            assert!((xk - x[k]).norm() <= 1e-10 * (1.0 + xk.norm()), "component {k}");
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(a.lu(), Err(MatError::Singular { .. })));
        assert_eq!(a.determinant().unwrap(), 0.0);
    }

    #[test]
    fn determinant_small_cases() {
        for n in 1..6 {
            let i = DenseMatrix::<Complex64>::identity(n);
            assert_eq!(i.determinant().unwrap(), c(1.0, 0.0));
        }
        let rot = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        assert!((rot.determinant().unwrap() - 1.0).abs() < 1e-15);
        let tri = DenseMatrix::from_rows(&[vec![2.0, 0.0, 0.0], vec![5.0, -3.0, 0.0], vec![1.0, 9.0, 0.5]]).unwrap();
        assert_eq!(tri.determinant().unwrap(), -3.0);
    }

    #[test]
    fn determinant_matches_cofactor_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = random_complex(&mut rng, 5);
            let d = a.determinant().unwrap();
            let r = cofactor_det(&a);
            assert!((d - r).norm() <= 1e-11 * r.norm());
        }
    }

    #[test]
    fn char_poly_small_cases() {
        let z = DenseMatrix::<f64>::zeros(2, 2).char_poly().unwrap();
        assert_eq!(z.coeffs(), &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)][..]);
        let d = DenseMatrix::diagonal(&[2.0, 3.0]).char_poly().unwrap();
        let want = [6.0, -5.0, 1.0];
        for (got, w) in d.coeffs().iter().zip(want) {
            assert!((got - w).norm() < 1e-14);
        }
    }

    #[test]
    fn char_poly_matches_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_complex(&mut rng, 6);
        let p = m.char_poly().unwrap();
        for _ in 0..10 {
            let w = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let wi = DenseMatrix::<Complex64>::identity(6).scale(w);
            let det = wi.try_sub(&m).unwrap().determinant().unwrap();
            assert!((p.eval(w) - det).norm() <= 1e-9 * det.norm());
        }
    }

    #[test]
    fn char_poly_rejects_large() {
        let m = DenseMatrix::<f64>::identity(17);
        assert!(matches!(m.char_poly(), Err(MatError::TooLarge { .. })));
    }

    #[test]
    fn blocks_assemble() {
        let a = DenseMatrix::<f64>::identity(2);
        let b = DenseMatrix::<f64>::zeros(2, 1);
        let c1 = DenseMatrix::from_rows(&[vec![5.0, 6.0]]).unwrap();
        let d = DenseMatrix::from_rows(&[vec![7.0]]).unwrap();
        let m = DenseMatrix::from_blocks(&[vec![&a, &b], vec![&c1, &d]]).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![5.0, 6.0, 7.0]]);
        assert!(DenseMatrix::from_blocks(&[vec![&a, &c1]]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(DenseMatrix::new(1, 1, vec![f64::NAN]), Err(MatError::NonFinite)));
    }
}
