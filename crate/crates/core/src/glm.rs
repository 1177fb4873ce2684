//! General linear method tableaux.
//!
//! A tableau carries `(c, A, U, B, V)` together with the q-vectors that
//! describe each external quantity as a combination of scaled solution
//! derivatives, `y_i ≈ Σ_k q_{ik} h^k y^(k)`. Order and stage order are checked
//! through the corresponding residual vectors, which must vanish.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matkit::{DenseMatrix, MatError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("inconsistent tableau: {0}")]
    Shape(String),
    #[error("{what} index k={k} outside 0..={max}")]
    OrderOutOfRange { what: &'static str, k: usize, max: usize },
    #[error("abscissae must be distinct (c[{0}] = c[{1}])")]
    RepeatedAbscissae(usize, usize),
    #[error(transparent)]
    Matrix(#[from] MatError),
}

pub type Result<T> = std::result::Result<T, GlmError>;

/// A general linear method with `s` stages and `r` external quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableauDoc", into = "TableauDoc")]
pub struct GlmTableau {
    pub c: Vec<f64>,
    pub a: DenseMatrix<f64>,
    pub u: DenseMatrix<f64>,
    pub b: DenseMatrix<f64>,
    pub v: DenseMatrix<f64>,
    /// `q_0 ..= q_p`, each of length `r`.
    pub qvecs: Vec<Vec<f64>>,
    pub p: usize,
    pub q: usize,
}

impl GlmTableau {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        c: Vec<f64>,
        a: DenseMatrix<f64>,
        u: DenseMatrix<f64>,
        b: DenseMatrix<f64>,
        v: DenseMatrix<f64>,
        qvecs: Vec<Vec<f64>>,
        p: usize,
        q: usize,
    ) -> Result<Self> {
        let tab = Self {
            c,
            a,
            u,
            b,
            v,
            qvecs,
            p,
            q,
        };
        tab.validate()?;
        Ok(tab)
    }

    pub fn s(&self) -> usize {
        self.c.len()
    }

    pub fn r(&self) -> usize {
        self.v.rows()
    }

    fn validate(&self) -> Result<()> {
        let (s, r) = (self.s(), self.r());
        let shape = |m: &DenseMatrix<f64>, rows, cols, name: &str| {
            if m.rows() != rows || m.cols() != cols {
                Err(GlmError::Shape(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.rows(),
                    m.cols()
                )))
            } else {
                Ok(())
            }
        };
        if s == 0 || r == 0 {
            return Err(GlmError::Shape("empty tableau".into()));
        }
        shape(&self.a, s, s, "A")?;
        shape(&self.u, s, r, "U")?;
        shape(&self.b, r, s, "B")?;
        shape(&self.v, r, r, "V")?;
        if self.qvecs.len() != self.p + 1 {
            return Err(GlmError::Shape(format!(
                "{} q-vectors for order {}",
                self.qvecs.len(),
                self.p
            )));
        }
        if let Some(bad) = self.qvecs.iter().position(|q| q.len() != r) {
            return Err(GlmError::Shape(format!("q_{bad} has wrong length")));
        }
        if self.q + 1 < self.p || self.q > self.p {
            return Err(GlmError::Shape(format!(
                "stage order {} incompatible with order {}",
                self.q, self.p
            )));
        }
        if self.c.iter().any(|x| !x.is_finite()) || self.qvecs.iter().flatten().any(|x| !x.is_finite()) {
            return Err(MatError::NonFinite.into());
        }
        Ok(())
    }

    /// `c^k - k A c^{k-1} - k! U q_k`.
    pub fn stage_order_residual(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.q {
            return Err(GlmError::OrderOutOfRange {
                what: "stage order",
                k,
                max: self.q,
            });
        }
        let ck = pow_vec(&self.c, k);
        let uq = self.u.mat_vec(&self.qvecs[k])?;
        let kf = factorial(k);
        let mut res: Vec<f64> = ck.iter().zip(&uq).map(|(x, y)| x - kf * y).collect();
        if k > 0 {
            let ac = self.a.mat_vec(&pow_vec(&self.c, k - 1))?;
            res.iter_mut().zip(&ac).for_each(|(x, y)| *x -= k as f64 * y);
        }
        Ok(res)
    }

    /// `Σ_{l=0}^k (k!/l!) q_{k-l} - k B c^{k-1} - k! V q_k`.
    pub fn order_residual(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.p {
            return Err(GlmError::OrderOutOfRange {
                what: "order",
                k,
                max: self.p,
            });
        }
        let r = self.r();
        let mut res = vec![0.0; r];
        for l in 0..=k {
            let w = factorial(k) / factorial(l);
            res.iter_mut()
                .zip(&self.qvecs[k - l])
                .for_each(|(x, q)| *x += w * q);
        }
        if k > 0 {
            let bc = self.b.mat_vec(&pow_vec(&self.c, k - 1))?;
            res.iter_mut().zip(&bc).for_each(|(x, y)| *x -= k as f64 * y);
        }
        let vq = self.v.mat_vec(&self.qvecs[k])?;
        let kf = factorial(k);
        res.iter_mut().zip(&vq).for_each(|(x, y)| *x -= kf * y);
        Ok(res)
    }

    /// Max-norm residuals: stage order for `k = 0..=q`, then order for
    /// `k = 0..=p`.
    pub fn residual_report(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let stage = (0..=self.q)
            .map(|k| self.stage_order_residual(k).map(|r| max_abs(&r)))
            .collect::<Result<Vec<_>>>()?;
        let order = (0..=self.p)
            .map(|k| self.order_residual(k).map(|r| max_abs(&r)))
            .collect::<Result<Vec<_>>>()?;
        Ok((stage, order))
    }

    /// Largest residual over all order and stage-order conditions.
    pub fn max_residual(&self) -> Result<f64> {
        let (s, o) = self.residual_report()?;
        Ok(s.into_iter().chain(o).fold(0.0, f64::max))
    }

    /// `S(z) = V + z B (I - zA)^{-1} U`.
    pub fn stability_matrix(&self, z: Complex64) -> Result<DenseMatrix<Complex64>> {
        let s = self.s();
        let a = self.a.to_complex();
        let resolvent = DenseMatrix::identity(s).try_sub(&a.scale(z))?;
        let lu = resolvent.lu()?;
        let u = self.u.to_complex();
        let mut x = DenseMatrix::zeros(s, self.r());
        for j in 0..self.r() {
            let col = lu.solve(&u.column(j))?;
            for i in 0..s {
                x[(i, j)] = col[i];
            }
        }
        let bx = self.b.to_complex().matmul(&x)?.scale(z);
        Ok(self.v.to_complex().try_add(&bx)?)
    }

    /// Limit of `S(z)` as `z → ∞`: `V - B A^{-1} U`.
    pub fn stiff_limit_matrix(&self) -> Result<DenseMatrix<f64>> {
        let ainv_u = self.a.inverse()?.matmul(&self.u)?;
        Ok(self.v.try_sub(&self.b.matmul(&ainv_u)?)?)
    }
}

/// `B = B0 - A B1 - V B2 + V A` for `r = s` and distinct abscissae, with the
/// Lagrange-type integrals evaluated exactly from monomial expansions.
pub fn build_b(a: &DenseMatrix<f64>, v: &DenseMatrix<f64>, c: &[f64]) -> Result<DenseMatrix<f64>> {
    let s = c.len();
    if a.rows() != s || a.cols() != s || v.rows() != s || v.cols() != s {
        return Err(GlmError::Shape("construction of B needs r = s and square A, V".into()));
    }
    for i in 0..s {
        for j in i + 1..s {
            if c[i] == c[j] {
                return Err(GlmError::RepeatedAbscissae(i, j));
            }
        }
    }
    let mut b0 = DenseMatrix::zeros(s, s);
    let mut b1 = DenseMatrix::zeros(s, s);
    let mut b2 = DenseMatrix::zeros(s, s);
    for j in 0..s {
        let phi = node_polynomial(c, j);
        let integral = antiderivative(&phi);
        let den = horner(&phi, c[j]);
        for i in 0..s {
            b0[(i, j)] = horner(&integral, 1.0 + c[i]) / den;
            b1[(i, j)] = horner(&phi, 1.0 + c[i]) / den;
            b2[(i, j)] = horner(&integral, c[i]) / den;
        }
    }
    let out = b0
        .try_sub(&a.matmul(&b1)?)?
        .try_sub(&v.matmul(&b2)?)?
        .try_add(&v.matmul(a)?)?;
    Ok(out)
}

/// Ascending coefficients of `Π_{k≠j} (x - c_k)`.
fn node_polynomial(c: &[f64], j: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for (k, &ck) in c.iter().enumerate() {
        if k == j {
            continue;
        }
        let mut next = vec![0.0; p.len() + 1];
        for (d, &pd) in p.iter().enumerate() {
            next[d + 1] += pd;
            next[d] -= ck * pd;
        }
        p = next;
    }
    p
}

/// Antiderivative vanishing at zero.
fn antiderivative(p: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(p.iter().enumerate().map(|(d, &x)| x / (d + 1) as f64))
        .collect()
}

fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Elementwise power with `x^0 = 1` for every entry.
pub fn pow_vec(x: &[f64], k: usize) -> Vec<f64> {
    x.iter().map(|v| v.powi(k as i32)).collect()
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableauDoc {
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "U")]
    u: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
    qvecs: Vec<Vec<f64>>,
    p: usize,
    q: usize,
    r: usize,
    s: usize,
}

impl TryFrom<TableauDoc> for GlmTableau {
    type Error = GlmError;

    fn try_from(d: TableauDoc) -> Result<Self> {
        let m = |rows: &[Vec<f64>], name: &str, nr: usize, nc: usize| -> Result<DenseMatrix<f64>> {
            if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
                return Err(GlmError::Shape(format!("{name} must be {nr}x{nc}")));
            }
            Ok(DenseMatrix::new(nr, nc, rows.concat())?)
        };
        if d.c.len() != d.s {
            return Err(GlmError::Shape(format!("c has {} entries, s = {}", d.c.len(), d.s)));
        }
        let (s, r) = (d.s, d.r);
        GlmTableau::new(
            d.c,
            m(&d.a, "A", s, s)?,
            m(&d.u, "U", s, r)?,
            m(&d.b, "B", r, s)?,
            m(&d.v, "V", r, r)?,
            d.qvecs,
            d.p,
            d.q,
        )
    }
}

impl From<GlmTableau> for TableauDoc {
    fn from(t: GlmTableau) -> Self {
        Self {
            s: t.s(),
            r: t.r(),
            c: t.c,
            a: t.a.to_rows(),
            u: t.u.to_rows(),
            b: t.b.to_rows(),
            v: t.v.to_rows(),
            qvecs: t.qvecs,
            p: t.p,
            q: t.q,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn theta(th: f64) -> GlmTableau {
        GlmTableau::new(
            vec![th],
            m(&[&[th]]),
            m(&[&[1.0]]),
            m(&[&[1.0]]),
            m(&[&[1.0]]),
            vec![vec![1.0], vec![0.0]],
            1,
            1,
        )
        .unwrap()
    }

    fn dimsim2(l: f64) -> GlmTableau {
        let d = 2.0 * l + 1.0;
        GlmTableau::new(
            vec![0.0, 1.0],
            m(&[&[l, 0.0], &[2.0 / d, l]]),
            DenseMatrix::identity(2),
            m(&[
                &[(8.0 * l.powi(3) + 12.0 * l * l - 2.0 * l + 5.0) / (4.0 * d), (1.0 - 4.0 * l * l) / 4.0],
                &[
                    (8.0 * l.powi(3) + 20.0 * l * l - 2.0 * l + 3.0) / (4.0 * d),
                    (-8.0 * l.powi(3) - 12.0 * l * l + 10.0 * l - 1.0) / (4.0 * d),
                ],
            ]),
            m(&[&[0.5 + l, 0.5 - l], &[0.5 + l, 0.5 - l]]),
            vec![vec![1.0, 1.0], vec![-l, (-2.0 * l * l + l - 1.0) / d], vec![0.0, (1.0 - 2.0 * l) / 2.0]],
            2,
            2,
        )
        .unwrap()
    }

    #[test]
    fn theta_residuals_vanish() {
        let t = theta(0.75);
        for k in 0..=1 {
            assert_eq!(max_abs(&t.stage_order_residual(k).unwrap()), 0.0);
            assert_eq!(max_abs(&t.order_residual(k).unwrap()), 0.0);
        }
        assert!(t.order_residual(2).is_err());
    }

    #[test]
    fn zeroth_stage_residual_is_e_minus_uq0() {
        let t = dimsim2(0.3);
        let r = t.stage_order_residual(0).unwrap();
        let uq = t.u.mat_vec(&t.qvecs[0]).unwrap();
        for (ri, ui) in r.iter().zip(uq) {
            assert_eq!(*ri, 1.0 - ui);
        }
    }

    #[test]
    fn two_stage_residuals_vanish() {
        let t = dimsim2(0.3);
        assert!(t.max_residual().unwrap() <= 1e-12);
    }

    #[test]
    fn stability_matrix_at_zero_is_v() {
        let t = dimsim2(0.3);
        let s = t.stability_matrix(Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(s, t.v.to_complex());
    }

    #[test]
    fn theta_stability_function() {
        for z in [-0.5, -3.0, -100.0] {
            let s = theta(1.0).stability_matrix(Complex64::new(z, 0.0)).unwrap();
            assert!((s[(0, 0)].re - 1.0 / (1.0 - z)).abs() < 1e-15);
            let th = 0.6;
            let s = theta(th).stability_matrix(Complex64::new(z, 0.0)).unwrap();
            let want = (1.0 + (1.0 - th) * z) / (1.0 - th * z);
            assert!((s[(0, 0)].re - want).abs() < 1e-14);
        }
    }

    #[test]
    fn stability_matrix_singular_resolvent() {
        let t = theta(0.5);
        assert!(t.stability_matrix(Complex64::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn build_b_reproduces_two_stage_closed_form() {
        for l in [0.25, 0.3, (2.0 - 2f64.sqrt()) / 2.0] {
            let t = dimsim2(l);
            let b = build_b(&t.a, &t.v, &t.c).unwrap();
            assert!(b.try_sub(&t.b).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn build_b_single_stage() {
        for th in [0.0, 0.5, 1.0] {
            let t = theta(th);
            let b = build_b(&t.a, &t.v, &t.c).unwrap();
            assert!((b[(0, 0)] - 1.0).abs() < 1e-15);
        }
    }

    /// Gauss-Legendre quadrature of the Lagrange-type integrals, as an
    /// independent evaluation of the same formula.
    fn build_b_quadrature(a: &DenseMatrix<f64>, v: &DenseMatrix<f64>, c: &[f64]) -> DenseMatrix<f64> {
        let x = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
        let w = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
        let s = c.len();
        let phi = |j: usize, t: f64| (0..s).filter(|&k| k != j).map(|k| t - c[k]).product::<f64>();
        let integ = |j: usize, up: f64| -> f64 {
            x.iter().zip(&w).map(|(xi, wi)| wi * phi(j, 0.5 * up * (xi + 1.0))).sum::<f64>() * 0.5 * up
        };
        let b0 = DenseMatrix::from_fn(s, s, |i, j| integ(j, 1.0 + c[i]) / phi(j, c[j]));
        let b1 = DenseMatrix::from_fn(s, s, |i, j| phi(j, 1.0 + c[i]) / phi(j, c[j]));
        let b2 = DenseMatrix::from_fn(s, s, |i, j| integ(j, c[i]) / phi(j, c[j]));
        b0.try_sub(&a.matmul(&b1).unwrap())
            .unwrap()
            .try_sub(&v.matmul(&b2).unwrap())
            .unwrap()
            .try_add(&v.matmul(a).unwrap())
            .unwrap()
    }

    #[test]
    fn build_b_agrees_with_quadrature() {
        let c = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let a = DenseMatrix::from_fn(4, 4, |i, j| if j <= i { 0.3 + 0.1 * (i + 2 * j) as f64 } else { 0.0 });
        let v = DenseMatrix::from_fn(4, 4, |_, j| [0.4, 0.3, 0.2, 0.1][j]);
        let exact = build_b(&a, &v, &c).unwrap();
        let quad = build_b_quadrature(&a, &v, &c);
        assert!(exact.try_sub(&quad).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn build_b_rejects_repeated_abscissae() {
        let a = DenseMatrix::identity(2);
        assert!(matches!(build_b(&a, &a, &[0.5, 0.5]), Err(GlmError::RepeatedAbscissae(0, 1))));
    }

    #[test]
    fn json_round_trip() {
        let t = dimsim2(0.3);
        let text = serde_json::to_string(&t).unwrap();
        assert!(text.contains("\"qvecs\"") && text.contains("\"A\""));
        let back: GlmTableau = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn json_rejects_unknown_and_inconsistent() {
        let t = dimsim2(0.3);
        let mut v: serde_json::Value = serde_json::to_value(&t).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<GlmTableau>(v).is_err());
        let mut v: serde_json::Value = serde_json::to_value(&t).unwrap();
        v["s"] = serde_json::json!(3);
        assert!(serde_json::from_value::<GlmTableau>(v).is_err());
    }
}
