//! Extrapolated stage derivatives and IMEX scheme assembly.
//!
//! The non-stiff stage derivatives of step `n+1` are predicted from the
//! previous step's stages and the already computed stages of the current step,
//!
//! ```text
//! f(Y_j^[n+1]) ≈ Σ_k α_jk f(Y_k^[n]) + Σ_{k<j} β_jk f(Y_k^[n+1]),
//! ```
//!
//! with `β` free and `α` fixed by exactness on polynomials of degree `< p`.
//! Substituting into the base method gives the scheme matrices
//! `Ā = Aα, A* = Aβ, B̄ = Bα, B* = Bβ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalogue::{CatalogueError, MethodFamily};
use crate::glm::{factorial, GlmError, GlmTableau};
use crate::matkit::{DenseMatrix, MatError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtrapError {
    #[error("beta must be strictly lower triangular ({0})")]
    NotStrictlyLower(String),
    #[error("expected {expected} beta entries, got {got}")]
    BetaLength { expected: usize, got: usize },
    #[error("extrapolation order {p} exceeds stage count {s}")]
    OrderTooHigh { p: usize, s: usize },
    #[error("interpolation condition violated: residual {0:e}")]
    Invariant(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Catalogue(#[from] CatalogueError),
}

pub type Result<T> = std::result::Result<T, ExtrapError>;

/// Tolerance on the interpolation conditions accepted at assembly.
pub const INTERPOLATION_TOL: f64 = 1e-12;

/// Extrapolation matrices with the order they are exact for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapCoeffs {
    #[serde(with = "rows")]
    pub alpha: DenseMatrix<f64>,
    #[serde(with = "rows")]
    pub beta: DenseMatrix<f64>,
    pub order: usize,
}

/// Strictly lower triangular `s x s` matrix from its entries ordered
/// `β21, β31, β32, β41, ...`.
pub fn beta_matrix(s: usize, entries: &[f64]) -> Result<DenseMatrix<f64>> {
    let expected = s * (s.saturating_sub(1)) / 2;
    if entries.len() != expected {
        return Err(ExtrapError::BetaLength {
            expected,
            got: entries.len(),
        });
    }
    let mut b = DenseMatrix::zeros(s, s);
    let mut it = entries.iter();
    for j in 1..s {
        for k in 0..j {
            b[(j, k)] = *it.next().expect("length checked");
        }
    }
    Ok(b)
}

/// Inverse of [`beta_matrix`].
pub fn beta_entries(beta: &DenseMatrix<f64>) -> Vec<f64> {
    let s = beta.rows();
    let mut out = Vec::with_capacity(s * s.saturating_sub(1) / 2);
    for j in 1..s {
        for k in 0..j {
            out.push(beta[(j, k)]);
        }
    }
    out
}

/// Solves for `α` row by row from
/// `Σ_k α_jk (c_k - 1)^l = c_j^l - Σ_{k<j} β_jk c_k^l`, `l = 0..p`.
///
/// For `p < s` the row systems are underdetermined and the minimum-norm
/// solution is returned.
pub fn solve_alpha(beta: &DenseMatrix<f64>, c: &[f64], p: usize) -> Result<DenseMatrix<f64>> {
    let s = c.len();
    if beta.rows() != s || beta.cols() != s {
        return Err(ExtrapError::Dimension(format!(
            "beta is {}x{} for {s} abscissae",
            beta.rows(),
            beta.cols()
        )));
    }
    if !beta.is_lower_triangular(true) {
        return Err(ExtrapError::NotStrictlyLower("nonzero on or above the diagonal".into()));
    }
    if p > s {
        return Err(ExtrapError::OrderTooHigh { p, s });
    }
    // Shifted Vandermonde: vm[l][k] = (c_k - 1)^l.
    let vm = DenseMatrix::from_fn(p, s, |l, k| (c[k] - 1.0).powi(l as i32));
    let system = if p == s {
        vm.lu()?
    } else {
        vm.matmul(&vm.transpose())?.lu()?
    };
    let mut alpha = DenseMatrix::zeros(s, s);
    for j in 0..s {
        let rhs: Vec<f64> = (0..p)
            .map(|l| {
                let e = l as i32;
                c[j].powi(e) - (0..j).map(|k| beta[(j, k)] * c[k].powi(e)).sum::<f64>()
            })
            .collect();
        let row = if p == s {
            system.solve(&rhs)?
        } else {
            vm.transpose().mat_vec(&system.solve(&rhs)?)?
        };
        for k in 0..s {
            alpha[(j, k)] = row[k];
        }
    }
    Ok(alpha)
}

impl ExtrapCoeffs {
    /// `α` derived from `β` at order `p`.
    pub fn from_beta(beta: DenseMatrix<f64>, c: &[f64], p: usize) -> Result<Self> {
        let alpha = solve_alpha(&beta, c, p)?;
        Ok(Self {
            alpha,
            beta,
            order: p,
        })
    }

    /// Largest violation of `α (c - e)^l + β c^l = c^l`, `l = 0..p`.
    pub fn interpolation_residual(&self, c: &[f64]) -> f64 {
        let s = c.len();
        let mut worst: f64 = 0.0;
        for l in 0..self.order {
            let e = l as i32;
            for j in 0..s {
                let lhs: f64 = (0..s)
                    .map(|k| self.alpha[(j, k)] * (c[k] - 1.0).powi(e) + self.beta[(j, k)] * c[k].powi(e))
                    .sum();
                worst = worst.max((lhs - c[j].powi(e)).abs());
            }
        }
        worst
    }
}

/// IMEX scheme built from a base method and extrapolation coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImexScheme {
    pub base: GlmTableau,
    pub coeffs: ExtrapCoeffs,
    #[serde(with = "rows")]
    pub abar: DenseMatrix<f64>,
    #[serde(with = "rows")]
    pub astar: DenseMatrix<f64>,
    #[serde(with = "rows")]
    pub bbar: DenseMatrix<f64>,
    #[serde(with = "rows")]
    pub bstar: DenseMatrix<f64>,
}

impl ImexScheme {
    pub fn assemble(base: GlmTableau, coeffs: ExtrapCoeffs) -> Result<Self> {
        let s = base.s();
        if coeffs.alpha.rows() != s || coeffs.alpha.cols() != s || coeffs.beta.rows() != s || coeffs.beta.cols() != s {
            return Err(ExtrapError::Dimension(format!("coefficients must be {s}x{s}")));
        }
        if !coeffs.beta.is_lower_triangular(true) {
            return Err(ExtrapError::NotStrictlyLower("beta".into()));
        }
        let res = coeffs.interpolation_residual(&base.c);
        if !(res <= INTERPOLATION_TOL) {
            return Err(ExtrapError::Invariant(res));
        }
        let abar = base.a.matmul(&coeffs.alpha)?;
        let astar = base.a.matmul(&coeffs.beta)?;
        let bbar = base.b.matmul(&coeffs.alpha)?;
        let bstar = base.b.matmul(&coeffs.beta)?;
        Ok(Self {
            base,
            coeffs,
            abar,
            astar,
            bbar,
            bstar,
        })
    }

    /// Scheme of order `p` for a base tableau and `β` entries.
    pub fn from_beta(base: GlmTableau, beta: &[f64]) -> Result<Self> {
        let b = beta_matrix(base.s(), beta)?;
        let coeffs = ExtrapCoeffs::from_beta(b, &base.c, base.p)?;
        Self::assemble(base, coeffs)
    }

    pub fn for_family(family: &MethodFamily, beta: &[f64]) -> Result<Self> {
        Self::from_beta(family.tableau()?, beta)
    }

    pub fn s(&self) -> usize {
        self.base.s()
    }

    pub fn r(&self) -> usize {
        self.base.r()
    }

    pub fn beta_entries(&self) -> Vec<f64> {
        beta_entries(&self.coeffs.beta)
    }

    /// The explicit part written as one GLM spanning two consecutive steps:
    /// stages `[Y^[n]; Y^[n+1]]`, externals `[h f(Y^[n]) history; y^[n]]`.
    pub fn explicit_two_step(&self) -> Result<GlmTableau> {
        let (s, r) = (self.s(), self.r());
        let base = &self.base;
        let zs = DenseMatrix::<f64>::zeros(s, s);
        let a = DenseMatrix::from_blocks(&[vec![&zs, &zs], vec![&self.abar, &self.astar]])?;
        let zsr = DenseMatrix::zeros(s, r);
        let zrs = DenseMatrix::zeros(r, s);
        let is = DenseMatrix::identity(s);
        let u = DenseMatrix::from_blocks(&[vec![&is, &zsr], vec![&zrs, &base.u]])?;
        let b = DenseMatrix::from_blocks(&[vec![&self.abar, &self.astar], vec![&self.bbar, &self.bstar]])?;
        let v = DenseMatrix::from_blocks(&[vec![&zs, &base.u], vec![&zrs, &base.v]])?;
        let cm1: Vec<f64> = base.c.iter().map(|x| x - 1.0).collect();
        let c: Vec<f64> = cm1.iter().chain(&base.c).copied().collect();
        let qvecs = base
            .qvecs
            .iter()
            .enumerate()
            .map(|(i, qi)| {
                let head: Vec<f64> = if i == 0 {
                    vec![1.0; s]
                } else {
                    cm1.iter().map(|x| x.powi(i as i32) / factorial(i)).collect()
                };
                head.into_iter().chain(qi.iter().copied()).collect()
            })
            .collect();
        Ok(GlmTableau::new(c, a, u, b, v, qvecs, base.p, base.q)?)
    }
}

/// Serialize matrices as nested row arrays.
pub(crate) mod rows {
    use crate::matkit::DenseMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DenseMatrix<f64>, ser: S) -> Result<S::Ok, S::Error> {
        m.to_rows().serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DenseMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        DenseMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
