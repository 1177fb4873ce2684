//! Concrete diagonally implicit base methods.
//!
//! The two higher-order methods are specified by 8-digit decimal tables. At
//! that precision the order conditions hold only to about `1e-7`, so the
//! constructors restore them: the strictly lower part of `A` and the row `v`
//! of `V = e v^T` are nudged (by a few units in the last printed digit) until
//! the stiff-limit matrix is nilpotent and `Σ v = 1`, then the q-vectors are
//! taken from the stage-order conditions and `B` from the Lagrange-integral
//! construction.

use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glm::{build_b, factorial, pow_vec, GlmError, GlmTableau};
use crate::matkit::{Complex64, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogueError {
    #[error("parameter {name} = {value} outside admissible range {range}")]
    Parameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("unknown method family '{0}'")]
    UnknownFamily(String),
    #[error(transparent)]
    Glm(#[from] GlmError),
}

pub type Result<T> = std::result::Result<T, CatalogueError>;

/// One of the supported base methods with its free parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum MethodFamily {
    Theta { theta: f64 },
    Dimsim2 { lambda: f64 },
    Dimsim3,
    Dimsim4,
}

/// Linear-stability classification of a base method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StabilityTags {
    pub a_stable: bool,
    pub l_stable: bool,
}

impl MethodFamily {
    /// Parses a family name with an optional parameter (θ or λ).
    pub fn from_name(name: &str, param: Option<f64>) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "theta" => Ok(Self::Theta {
                theta: param.unwrap_or(1.0),
            }),
            "dimsim2" => Ok(Self::Dimsim2 {
                lambda: param.unwrap_or(DIMSIM2_L_STABLE_LAMBDA),
            }),
            "dimsim3" => Ok(Self::Dimsim3),
            "dimsim4" => Ok(Self::Dimsim4),
            other => Err(CatalogueError::UnknownFamily(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Theta { .. } => "theta",
            Self::Dimsim2 { .. } => "dimsim2",
            Self::Dimsim3 => "dimsim3",
            Self::Dimsim4 => "dimsim4",
        }
    }

    /// The free scalar parameter, if the family has one.
    pub fn parameter(&self) -> Option<f64> {
        match *self {
            Self::Theta { theta } => Some(theta),
            Self::Dimsim2 { lambda } => Some(lambda),
            _ => None,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Self::Theta { .. } => 1,
            Self::Dimsim2 { .. } => 2,
            Self::Dimsim3 => 3,
            Self::Dimsim4 => 4,
        }
    }

    pub fn stages(&self) -> usize {
        self.order()
    }

    /// Number of free extrapolation parameters `s(s-1)/2`.
    pub fn beta_len(&self) -> usize {
        let s = self.stages();
        s * (s - 1) / 2
    }

    pub fn tableau(&self) -> Result<GlmTableau> {
        match *self {
            Self::Theta { theta } => theta_method(theta),
            Self::Dimsim2 { lambda } => dimsim2(lambda),
            Self::Dimsim3 => Ok(dimsim3()),
            Self::Dimsim4 => Ok(dimsim4()),
        }
    }

    pub fn tags(&self) -> StabilityTags {
        match *self {
            Self::Theta { theta } => StabilityTags {
                a_stable: (0.5..=1.0).contains(&theta),
                l_stable: theta > 0.5 && theta <= 1.0,
            },
            Self::Dimsim2 { lambda } => StabilityTags {
                a_stable: lambda >= 0.25,
                l_stable: [(2.0 - SQRT_2) / 2.0, (2.0 + SQRT_2) / 2.0]
                    .iter()
                    .any(|r| (lambda - r).abs() <= 1e-8),
            },
            Self::Dimsim3 | Self::Dimsim4 => StabilityTags {
                a_stable: true,
                l_stable: true,
            },
        }
    }
}

/// The smaller L-stable diagonal value of the two-stage method.
pub const DIMSIM2_L_STABLE_LAMBDA: f64 = (2.0 - SQRT_2) / 2.0;

fn mat(rows: &[&[f64]]) -> DenseMatrix<f64> {
    DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        .expect("static table is rectangular")
}

/// The implicit θ-method: `c = θ`, `[A U; B V] = [θ 1; 1 1]`.
pub fn theta_method(theta: f64) -> Result<GlmTableau> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(CatalogueError::Parameter {
            name: "theta",
            value: theta,
            range: "[0, 1]",
        });
    }
    Ok(GlmTableau::new(
        vec![theta],
        mat(&[&[theta]]),
        mat(&[&[1.0]]),
        mat(&[&[1.0]]),
        mat(&[&[1.0]]),
        vec![vec![1.0], vec![0.0]],
        1,
        1,
    )?)
}

/// Two-stage DIMSIM with `c = [0, 1]`, order and stage order 2, as a rational
/// function of the diagonal value λ.
pub fn dimsim2(lambda: f64) -> Result<GlmTableau> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(CatalogueError::Parameter {
            name: "lambda",
            value: lambda,
            range: "(0, inf)",
        });
    }
    let l = lambda;
    let d = 1.0 + 2.0 * l;
    let (l2, l3) = (l * l, l * l * l);
    Ok(GlmTableau::new(
        vec![0.0, 1.0],
        mat(&[&[l, 0.0], &[2.0 / d, l]]),
        DenseMatrix::identity(2),
        mat(&[
            &[(8.0 * l3 + 12.0 * l2 - 2.0 * l + 5.0) / (4.0 * d), (1.0 - 4.0 * l2) / 4.0],
            &[
                (8.0 * l3 + 20.0 * l2 - 2.0 * l + 3.0) / (4.0 * d),
                (-8.0 * l3 - 12.0 * l2 + 10.0 * l - 1.0) / (4.0 * d),
            ],
        ]),
        mat(&[&[0.5 + l, 0.5 - l], &[0.5 + l, 0.5 - l]]),
        vec![
            vec![1.0, 1.0],
            vec![-l, (-2.0 * l2 + l - 1.0) / d],
            vec![0.0, (1.0 - 2.0 * l) / 2.0],
        ],
        2,
        2,
    )?)
}

/// Decimal tables of the three- and four-stage methods.
struct PrintedDimsim {
    lambda_seed: f64,
    /// Ascending coefficients of the polynomial whose root is λ.
    lambda_poly: &'static [f64],
    c: &'static [f64],
    /// Strictly lower part of `A`, row by row.
    a_lower: &'static [f64],
    v: &'static [f64],
    /// `q_1 ..= q_p` (`q_0 = e`).
    q: &'static [&'static [f64]],
}

const DIMSIM3_TABLE: PrintedDimsim = PrintedDimsim {
    lambda_seed: 0.43586652,
    lambda_poly: &[-1.0 / 6.0, 1.5, -3.0, 1.0],
    c: &[0.0, 0.5, 1.0],
    a_lower: &[0.25051488, -1.2115943, 1.0012746],
    v: &[0.55209096, 0.73485666, -0.28694762],
    q: &[
        &[-0.43586652, -0.18638140, 0.77445315],
        &[0.0, -0.092933261, -0.43650382],
        &[0.0, -0.033649982, -0.17642592],
    ],
};

const DIMSIM4_TABLE: PrintedDimsim = PrintedDimsim {
    lambda_seed: 0.57281606,
    lambda_poly: &[1.0 / 24.0, -2.0 / 3.0, 3.0, -4.0, 1.0],
    c: &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
    a_lower: &[0.15022075, 0.59515808, -0.26632807, 1.7717286, -1.64234444, 0.39147320],
    v: &[15.615037, -46.967269, 41.290082, -8.9378502],
    q: &[
        &[-0.57281606, -0.38970348, -0.23497940, -0.093673420],
        &[0.0, -0.13538313, -0.070879128, 0.21364995],
        &[0.0, -0.025650275, -0.063113738, -0.11549405],
        &[0.0, -0.0030214983, -0.018412760, -0.062996758],
    ],
};

/// Newton iteration on a real polynomial from a nearby seed.
pub fn refine_root(coeffs: &[f64], seed: f64) -> f64 {
    let eval = |x: f64| {
        coeffs.iter().rev().fold((0.0, 0.0), |(p, dp), &c| (p * x + c, dp * x + p))
    };
    let mut x = seed;
    for _ in 0..50 {
        let (p, dp) = eval(x);
        if dp == 0.0 {
            break;
        }
        let next = x - p / dp;
        if next == x {
            break;
        }
        x = next;
    }
    x
}

fn lower_from(s: usize, lambda: f64, entries: &[f64]) -> DenseMatrix<f64> {
    let mut a = DenseMatrix::diagonal(&vec![lambda; s]);
    let mut it = entries.iter();
    for i in 1..s {
        for j in 0..i {
            a[(i, j)] = *it.next().expect("entry count matches s(s-1)/2");
        }
    }
    a
}

fn rank_one_v(v: &[f64]) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(v.len(), v.len(), |_, j| v[j])
}

/// The decimal tables taken literally (λ refined, `B` constructed).
pub fn printed_dimsim(order: usize) -> Result<GlmTableau> {
    let t = match order {
        3 => &DIMSIM3_TABLE,
        4 => &DIMSIM4_TABLE,
        _ => {
            return Err(CatalogueError::Parameter {
                name: "order",
                value: order as f64,
                range: "{3, 4}",
            })
        }
    };
    let s = t.c.len();
    let lambda = refine_root(t.lambda_poly, t.lambda_seed);
    let a = lower_from(s, lambda, t.a_lower);
    let v = rank_one_v(t.v);
    let b = build_b(&a, &v, t.c)?;
    let mut qvecs = vec![vec![1.0; s]];
    qvecs.extend(t.q.iter().map(|q| q.to_vec()));
    Ok(GlmTableau::new(
        t.c.to_vec(),
        a,
        DenseMatrix::identity(s),
        b,
        v,
        qvecs,
        s,
        s,
    )?)
}

/// Stiff-limit characteristic coefficients and the row-sum defect, the
/// quantities driven to zero by the coefficient polish.
fn polish_residual(c: &[f64], lambda: f64, x: &[f64]) -> Option<Vec<f64>> {
    let s = c.len();
    let nl = s * (s - 1) / 2;
    let a = lower_from(s, lambda, &x[..nl]);
    let v = rank_one_v(&x[nl..]);
    let b = build_b(&a, &v, c).ok()?;
    let limit = v.try_sub(&b.matmul(&a.inverse().ok()?).ok()?).ok()?;
    let cp = limit.char_poly().ok()?;
    let mut r: Vec<f64> = cp.coeffs()[..s].iter().map(|z: &Complex64| z.re).collect();
    r.push(x[nl..].iter().sum::<f64>() - 1.0);
    Some(r)
}

/// Minimum-norm Gauss-Newton correction of the free coefficients.
fn polish(c: &[f64], lambda: f64, x0: &[f64]) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let Some(mut r) = polish_residual(c, lambda, &x) else {
        return x;
    };
    let norm = |v: &[f64]| v.iter().map(|e| e.abs()).fold(0.0, f64::max);
    for _ in 0..60 {
        if norm(&r) <= 1e-14 {
            break;
        }
        let m = r.len();
        let mut jac = DenseMatrix::zeros(m, n);
        let mut ok = true;
        for k in 0..n {
            let hk = 1e-7 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += hk;
            xm[k] -= hk;
            match (polish_residual(c, lambda, &xp), polish_residual(c, lambda, &xm)) {
                (Some(rp), Some(rm)) => {
                    for i in 0..m {
                        jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * hk);
                    }
                }
                _ => ok = false,
            }
        }
        if !ok {
            break;
        }
        let jjt = jac.matmul(&jac.transpose()).expect("conformant");
        let Ok(y) = jjt.solve(&r) else { break };
        let dx = jac.transpose().mat_vec(&y).expect("conformant");
        let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - d).collect();
        match polish_residual(c, lambda, &cand) {
            Some(rc) if norm(&rc) < norm(&r) => {
                x = cand;
                r = rc;
            }
            _ => break,
        }
    }
    x
}

fn restored_dimsim(t: &PrintedDimsim) -> GlmTableau {
    let s = t.c.len();
    let lambda = refine_root(t.lambda_poly, t.lambda_seed);
    let x0: Vec<f64> = t.a_lower.iter().chain(t.v).copied().collect();
    let x = polish(t.c, lambda, &x0);
    let nl = s * (s - 1) / 2;
    let a = lower_from(s, lambda, &x[..nl]);
    let v = rank_one_v(&x[nl..]);
    let b = build_b(&a, &v, t.c).expect("abscissae are distinct");
    // q_k = (c^k - k A c^{k-1}) / k! makes every stage-order residual vanish.
    let mut qvecs = vec![vec![1.0; s]];
    for k in 1..=s {
        let ac = a.mat_vec(&pow_vec(t.c, k - 1)).expect("conformant");
        qvecs.push(
            pow_vec(t.c, k)
                .iter()
                .zip(&ac)
                .map(|(ck, acv)| (ck - k as f64 * acv) / factorial(k))
                .collect(),
        );
    }
    GlmTableau::new(t.c.to_vec(), a, DenseMatrix::identity(s), b, v, qvecs, s, s)
        .expect("consistent dimensions")
}

/// Three-stage DIMSIM with `c = [0, 1/2, 1]`, order and stage order 3.
pub fn dimsim3() -> GlmTableau {
    static CELL: OnceLock<GlmTableau> = OnceLock::new();
    CELL.get_or_init(|| restored_dimsim(&DIMSIM3_TABLE)).clone()
}

/// Four-stage DIMSIM with `c = [0, 1/3, 2/3, 1]`, order and stage order 4.
pub fn dimsim4() -> GlmTableau {
    static CELL: OnceLock<GlmTableau> = OnceLock::new();
    CELL.get_or_init(|| restored_dimsim(&DIMSIM4_TABLE)).clone()
}

/// A named extrapolation-parameter set together with the region area it is
/// reported to attain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnownOptimum {
    pub label: &'static str,
    pub family: MethodFamily,
    /// Sector half-angle, or `None` for the explicit-part region.
    pub alpha: Option<f64>,
    pub beta: &'static [f64],
    pub area: f64,
}

/// Reference parameter sets and areas for the catalogued methods.
pub fn known_optima() -> Vec<KnownOptimum> {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    let d2 = MethodFamily::Dimsim2 {
        lambda: DIMSIM2_L_STABLE_LAMBDA,
    };
    let d3 = MethodFamily::Dimsim3;
    let d4 = MethodFamily::Dimsim4;
    const D3_EXPLICIT: &[f64] = &[1.13, 1.45, -0.158];
    const D4_EXPLICIT: &[f64] = &[0.0625, -0.355, 0.272, -2.84, 3.49, -1.06];
    vec![
        KnownOptimum { label: "dimsim2 explicit", family: d2, alpha: None, beta: &[4.56], area: 7.15 },
        KnownOptimum { label: "dimsim2 right angle", family: d2, alpha: Some(FRAC_PI_2), beta: &[4.64], area: 5.75 },
        KnownOptimum {
            label: "dimsim2 joint right angle",
            family: MethodFamily::Dimsim2 { lambda: 0.29 },
            alpha: Some(FRAC_PI_2),
            beta: &[4.59],
            area: 5.83,
        },
        KnownOptimum { label: "dimsim3 explicit", family: d3, alpha: None, beta: D3_EXPLICIT, area: 3.54 },
        KnownOptimum { label: "dimsim3 explicit-optimal, right angle", family: d3, alpha: Some(FRAC_PI_2), beta: D3_EXPLICIT, area: 0.39 },
        KnownOptimum { label: "dimsim3 explicit-optimal, quarter angle", family: d3, alpha: Some(FRAC_PI_4), beta: D3_EXPLICIT, area: 1.91 },
        KnownOptimum { label: "dimsim3 right angle", family: d3, alpha: Some(FRAC_PI_2), beta: &[1.39, -0.146, 1.24], area: 0.50 },
        KnownOptimum { label: "dimsim3 quarter angle", family: d3, alpha: Some(FRAC_PI_4), beta: &[1.25, 1.62, 0.00555], area: 2.80 },
        KnownOptimum { label: "dimsim4 explicit", family: d4, alpha: None, beta: D4_EXPLICIT, area: 2.82 },
        KnownOptimum { label: "dimsim4 explicit-optimal, quarter angle", family: d4, alpha: Some(FRAC_PI_4), beta: D4_EXPLICIT, area: 0.32 },
        KnownOptimum { label: "dimsim4 explicit-optimal, right angle", family: d4, alpha: Some(FRAC_PI_2), beta: D4_EXPLICIT, area: 0.0069 },
        KnownOptimum {
            label: "dimsim4 right angle",
            family: d4,
            alpha: Some(FRAC_PI_2),
            beta: &[-0.00516, -0.939, 1.18, -1.71, 2.07, 0.32],
            area: 0.16,
        },
        KnownOptimum {
            label: "dimsim4 quarter angle",
            family: d4,
            alpha: Some(FRAC_PI_4),
            beta: &[0.0964, -0.278, 0.464, -1.63, 2.73, -0.678],
            area: 0.65,
        },
    ]
}

/// Extrapolation parameters maximizing the right-angle region for each
/// order (empty for the one-stage method).
pub fn right_angle_beta(family: &MethodFamily) -> Vec<f64> {
    match family {
        MethodFamily::Theta { .. } => vec![],
        MethodFamily::Dimsim2 { .. } => vec![4.64],
        MethodFamily::Dimsim3 => vec![1.39, -0.146, 1.24],
        MethodFamily::Dimsim4 => vec![-0.00516, -0.939, 1.18, -1.71, 2.07, 0.32],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_tableau_entries() {
        let t = theta_method(1.0).unwrap();
        for m in [&t.a, &t.u, &t.b, &t.v] {
            assert_eq!(m.data(), &[1.0]);
        }
        assert_eq!(theta_method(0.5).unwrap().a.data(), &[0.5]);
        assert!(theta_method(1.5).is_err());
        assert!(theta_method(-0.1).is_err());
    }

    #[test]
    fn theta_tags() {
        let tags = |th| MethodFamily::Theta { theta: th }.tags();
        assert!(tags(0.5).a_stable && !tags(0.5).l_stable);
        assert!(tags(0.75).a_stable && tags(0.75).l_stable);
        assert!(!tags(0.4).a_stable);
    }

    #[test]
    fn dimsim2_entries() {
        let l = DIMSIM2_L_STABLE_LAMBDA;
        let t = dimsim2(l).unwrap();
        assert!((t.a[(1, 0)] - 1.2612039).abs() < 1e-7);
        assert_eq!(t.qvecs[2], vec![0.0, (1.0 - 2.0 * l) / 2.0]);
        assert!(dimsim2(0.0).is_err());
        assert!(dimsim2(-0.5).is_err());
    }

    #[test]
    fn dimsim2_tags() {
        assert!(MethodFamily::Dimsim2 { lambda: 0.25 }.tags().a_stable);
        assert!(!MethodFamily::Dimsim2 { lambda: 0.2 }.tags().a_stable);
        assert!(MethodFamily::Dimsim2 { lambda: DIMSIM2_L_STABLE_LAMBDA }.tags().l_stable);
        assert!(!MethodFamily::Dimsim2 { lambda: 0.3 }.tags().l_stable);
    }

    #[test]
    fn lambda_refinement() {
        let l3 = refine_root(DIMSIM3_TABLE.lambda_poly, DIMSIM3_TABLE.lambda_seed);
        let phi3 = l3.powi(3) - 3.0 * l3 * l3 + 1.5 * l3 - 1.0 / 6.0;
        assert!(phi3.abs() <= 1e-14 && (l3 - 0.43586652).abs() < 1e-8);
        let l4 = refine_root(DIMSIM4_TABLE.lambda_poly, DIMSIM4_TABLE.lambda_seed);
        let phi4 = l4.powi(4) - 4.0 * l4.powi(3) + 3.0 * l4 * l4 - 2.0 / 3.0 * l4 + 1.0 / 24.0;
        assert!(phi4.abs() <= 1e-14 && (l4 - 0.57281606).abs() < 1e-8);
    }

    #[test]
    fn restored_tables_stay_at_printed_digits() {
        let t3 = dimsim3();
        assert!((t3.a[(2, 0)] + 1.2115943).abs() < 1e-7);
        let v3 = t3.v.row(0);
        for (got, want) in v3.iter().zip([0.55209096, 0.73485666, -0.28694762]) {
            assert!((got - want).abs() < 1e-7);
        }
        let t4 = dimsim4();
        assert!((t4.a[(3, 0)] - 1.7717286).abs() < 1e-7);
        assert!((t4.v[(0, 0)] - 15.615037).abs() < 1e-6);
        for (got, want) in t4.qvecs[4].iter().zip([0.0, -0.0030214983, -0.018412760, -0.062996758]) {
            assert!((got - want).abs() < 1e-7);
        }
        for (k, q) in DIMSIM4_TABLE.q.iter().enumerate() {
            for (got, want) in t4.qvecs[k + 1].iter().zip(q.iter()) {
                assert!((got - want).abs() < 1e-7, "q_{}", k + 1);
            }
        }
    }

    #[test]
    fn residuals_vanish() {
        for t in [dimsim3(), dimsim4()] {
            assert!(t.max_residual().unwrap() <= 1e-12);
        }
    }

    #[test]
    fn literal_tables_miss_by_printed_precision() {
        let r3 = printed_dimsim(3).unwrap().max_residual().unwrap();
        let r4 = printed_dimsim(4).unwrap().max_residual().unwrap();
        assert!(r3 > 1e-9 && r3 < 1e-6);
        assert!(r4 > 1e-8 && r4 < 1e-5);
    }

    #[test]
    fn stiff_limit_nilpotent() {
        for t in [dimsim3(), dimsim4()] {
            let s = t.s();
            let m = t.stiff_limit_matrix().unwrap();
            let mut p = m.clone();
            for _ in 1..s {
                p = p.matmul(&m).unwrap();
            }
            assert!(p.max_abs() <= 1e-9, "max |S^s| = {}", p.max_abs());
        }
    }

    #[test]
    fn family_round_trip() {
        for f in [
            MethodFamily::Theta { theta: 0.75 },
            MethodFamily::Dimsim2 { lambda: 0.3 },
            MethodFamily::Dimsim3,
            MethodFamily::Dimsim4,
        ] {
            let back = MethodFamily::from_name(f.name(), f.parameter()).unwrap();
            assert_eq!(back, f);
            assert_eq!(f.tableau().unwrap().p, f.order());
        }
        assert!(MethodFamily::from_name("rk4", None).is_err());
    }

    #[test]
    fn known_optima_have_matching_dimensions() {
        for k in known_optima() {
            assert_eq!(k.beta.len(), k.family.beta_len(), "{}", k.label);
        }
    }
}
