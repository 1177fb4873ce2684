//! Invariant checks shared by the property suite and the acceptance run.
//! Every function returns a worst-case deviation (or a count of violations)
//! and leaves the threshold to the caller.

#![allow(dead_code)]

use imexglm::catalogue::{right_angle_beta, MethodFamily, DIMSIM2_L_STABLE_LAMBDA};
use imexglm::integrate::{step, StepperState};
use imexglm::matkit::fd_weights;
use imexglm::problems::{linear_split, ShallowWater};
use imexglm::stability::{in_s_alpha_y, region_area, ScanSettings, CELL_SECTOR, CELL_UNSTABLE};
use imexglm::{Complex64, DenseMatrix, ImexScheme};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Every catalogued base method, with the parameter values the order suite
/// covers.
pub fn base_families() -> Vec<MethodFamily> {
    let mut out: Vec<MethodFamily> = [0.5, 2.0 / 3.0, 0.75, 1.0]
        .iter()
        .map(|&theta| MethodFamily::Theta { theta })
        .collect();
    out.extend(
        [0.25, DIMSIM2_L_STABLE_LAMBDA, 0.3]
            .iter()
            .map(|&lambda| MethodFamily::Dimsim2 { lambda }),
    );
    out.push(MethodFamily::Dimsim3);
    out.push(MethodFamily::Dimsim4);
    out
}

/// One scheme per order with the right-angle extrapolation parameters.
pub fn right_angle_schemes() -> Vec<(String, ImexScheme)> {
    [
        MethodFamily::Theta { theta: 1.0 },
        MethodFamily::Dimsim2 {
            lambda: DIMSIM2_L_STABLE_LAMBDA,
        },
        MethodFamily::Dimsim3,
        MethodFamily::Dimsim4,
    ]
    .iter()
    .map(|f| {
        let scheme = ImexScheme::for_family(f, &right_angle_beta(f)).unwrap();
        (f.name().to_string(), scheme)
    })
    .collect()
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `|det(AB) - det(A) det(B)|` relative to `|det(A) det(B)|`, floored so
/// nearly singular draws do not turn rounding into a failure.
pub fn det_product_gap(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    let ab = a.matmul(b).unwrap();
    let (da, db, dab) = (a.determinant().unwrap(), b.determinant().unwrap(), ab.determinant().unwrap());
    (dab - da * db).abs() / (da * db).abs().max(1e-3)
}

/// Worst `‖(M - λI) v‖ / max(1, ‖M‖)` over the roots `λ` of the
/// characteristic polynomial, `v` from two sweeps of inverse iteration.
pub fn eigen_residual(m: &DenseMatrix<f64>) -> f64 {
    let n = m.rows();
    let mc = m.to_complex();
    let scale = m.norm_inf().max(1.0);
    let roots = m.char_poly().unwrap().roots().unwrap();
    let mut worst: f64 = 0.0;
    for lam in roots {
        let shift = lam + c(1e-9 * (1.0 + lam.norm()), 0.0);
        let shifted = DenseMatrix::from_fn(n, n, |i, j| mc[(i, j)] - if i == j { shift } else { c(0.0, 0.0) });
        let mut v: Vec<Complex64> = (0..n).map(|i| c(1.0, 0.1 * i as f64)).collect();
        for _ in 0..2 {
            v = shifted.solve(&v).unwrap();
            let norm = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
            v.iter_mut().for_each(|x| *x /= norm);
        }
        let mv = mc.mat_vec(&v).unwrap();
        let r = mv.iter().zip(&v).map(|(a, b)| (a - lam * b).norm()).fold(0.0, f64::max);
        worst = worst.max(r / scale);
    }
    worst
}

/// Worst error of the `k`-th derivative weights on the monomials `x^m`,
/// `m < nodes.len()`, relative to the size of the weighted sum.
pub fn fd_exactness_gap(nodes: &[f64], k: usize) -> f64 {
    let w = fd_weights(nodes, k).unwrap();
    let mut worst: f64 = 0.0;
    for m in 0..nodes.len() {
        let terms: Vec<f64> = w.iter().zip(nodes).map(|(wi, x)| wi * x.powi(m as i32)).collect();
        let got: f64 = terms.iter().sum();
        let exact = if m == k { (1..=k).map(|i| i as f64).product() } else { 0.0 };
        let scale = terms.iter().map(|t| t.abs()).sum::<f64>().max(1.0);
        worst = worst.max((got - exact).abs() / scale);
    }
    worst
}

/// `(row-sum gap, polynomial gap)` of the extrapolation coefficients: the
/// first is `max |αe + βe - e|`, the second the worst violation of
/// `Σ α_jk φ(c_k - 1) + Σ β_jk φ(c_k) = φ(c_j)` over the given polynomials
/// (ascending coefficients, degree below the order).
pub fn alpha_gaps(scheme: &ImexScheme, polys: &[Vec<f64>]) -> (f64, f64) {
    let (alpha, beta, cs) = (&scheme.coeffs.alpha, &scheme.coeffs.beta, &scheme.base.c);
    let s = cs.len();
    let eval = |p: &[f64], x: f64| p.iter().rev().fold(0.0, |acc, a| acc * x + a);
    let mut rows: f64 = 0.0;
    let mut poly: f64 = 0.0;
    for j in 0..s {
        let sum: f64 = (0..s).map(|k| alpha[(j, k)] + beta[(j, k)]).sum();
        rows = rows.max((sum - 1.0).abs());
        for p in polys {
            let lhs: f64 = (0..s).map(|k| alpha[(j, k)] * eval(p, cs[k] - 1.0) + beta[(j, k)] * eval(p, cs[k])).sum();
            poly = poly.max((lhs - eval(p, cs[j])).abs());
        }
    }
    (rows, poly)
}

/// `M(z0, z1)` assembled with a dense inverse from the scheme matrices:
/// `X = (I - z0 A* - z1 A)^{-1} [z0 Ā | U]`, bottom rows
/// `[z0 B̄ | V] + (z0 B* + z1 B) X`.
pub fn imex_matrix_oracle(scheme: &ImexScheme, z0: Complex64, z1: Complex64) -> DenseMatrix<Complex64> {
    let (s, r) = (scheme.s(), scheme.r());
    let cm = |m: &DenseMatrix<f64>| m.to_complex();
    let k = DenseMatrix::identity(s)
        .try_sub(&cm(&scheme.astar).scale(z0))
        .unwrap()
        .try_sub(&cm(&scheme.base.a).scale(z1))
        .unwrap();
    let kinv = k.inverse().unwrap();
    let top_rhs = DenseMatrix::from_fn(s, s + r, |i, j| {
        if j < s {
            z0 * scheme.abar[(i, j)]
        } else {
            c(scheme.base.u[(i, j - s)], 0.0)
        }
    });
    let x = kinv.matmul(&top_rhs).unwrap();
    let g = cm(&scheme.bstar).scale(z0).try_add(&cm(&scheme.base.b).scale(z1)).unwrap();
    let gx = g.matmul(&x).unwrap();
    DenseMatrix::from_fn(s + r, s + r, |i, j| {
        if i < s {
            x[(i, j)]
        } else if j < s {
            z0 * scheme.bbar[(i - s, j)] + gx[(i - s, j)]
        } else {
            c(scheme.base.v[(i - s, j - s)], 0.0) + gx[(i - s, j)]
        }
    })
}

/// Worst relative difference, over `n` steps, between the integrator on
/// `y' = λ0 y + λ1 y` (`h = 1`, so `z = λ`) and products with the oracle
/// matrix, from a fixed non-trivial initial vector. Each difference is
/// measured against the largest state seen so far, so decaying solutions
/// still count without charging them for rounding made at larger scales.
pub fn step_matrix_gap(scheme: &ImexScheme, z0: Complex64, z1: Complex64, n: usize) -> f64 {
    let prob = linear_split(z0, z1, c(1.0, 0.0)).as_complex();
    let (s, r) = (scheme.s(), scheme.r());
    let m = imex_matrix_oracle(scheme, z0, z1);
    let mut v: Vec<Complex64> = (0..s + r).map(|i| c(1.0 - 0.1 * i as f64, 0.05 * i as f64)).collect();
    let mut st = StepperState::new(
        &prob,
        scheme,
        0.0,
        1.0,
        v[s..].iter().map(|z| prob.pack(*z)).collect(),
        v[..s].iter().map(|z| prob.pack(*z)).collect(),
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    let mut peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    for _ in 0..n {
        step(scheme, &mut st, &prob).unwrap();
        v = m.mat_vec(&v).unwrap();
        let got: Vec<Complex64> = st.stages.iter().chain(&st.external).map(|y| prob.unpack(y)).collect();
        peak = v.iter().map(|x| x.norm()).fold(peak, f64::max);
        worst = worst.max(max_abs_diff(&got, &v) / peak);
    }
    worst
}

/// Raster cells in `S_α` that fail some `S_{α,y}` test or are missing from
/// `S_E`.
pub fn containment_violations(scheme: &ImexScheme, alpha: f64, scan: &ScanSettings) -> usize {
    let res = region_area(scheme, Some(alpha), scan).unwrap();
    let explicit = region_area(scheme, None, scan).unwrap();
    let r = &res.raster;
    let mut bad = 0;
    for iy in 0..r.ny {
        for ix in 0..r.nx {
            if r.get(ix, iy) != CELL_SECTOR {
                continue;
            }
            if explicit.raster.get(ix, iy) == CELL_UNSTABLE {
                bad += 1;
                continue;
            }
            let z0 = r.centre(ix, iy);
            if !scan.y_values().iter().all(|&y| in_s_alpha_y(scheme, z0, alpha, y).unwrap()) {
                bad += 1;
            }
        }
    }
    bad
}

/// Shrinks `z0` towards the origin until `(z0, z1)` is strictly stable.
pub fn stable_pair(scheme: &ImexScheme, mut z0: Complex64, z1: Complex64) -> Option<(Complex64, Complex64)> {
    for _ in 0..30 {
        if imexglm::stability::is_stable(scheme, z0, z1).ok()?.stable {
            return Some((z0, z1));
        }
        z0 *= 0.6;
    }
    None
}

/// Relative drift of the discrete mass between the first and last state.
pub fn relative_mass_drift(swe: &ShallowWater, first: &[f64], last: &[f64]) -> f64 {
    let m0 = swe.mass(first);
    ((swe.mass(last) - m0) / m0).abs()
}

/// Worst `|J e_k - (F(u + ε e_k) - F(u)) / ε|` over the given columns.
pub fn jacobian_column_gap(swe: &ShallowWater, u: &[f64], cols: &[usize]) -> f64 {
    let jac = swe.jacobian_fd(u).unwrap();
    let base = swe.tendency(u).unwrap();
    let mut worst: f64 = 0.0;
    for &col in cols {
        let eps = 1e-7 * u[col].abs().max(1.0);
        let mut pert = u.to_vec();
        pert[col] += eps;
        let probe = swe.tendency(&pert).unwrap();
        for r in 0..u.len() {
            worst = worst.max(((probe[r] - base[r]) / eps - jac.get(r, col)).abs());
        }
    }
    worst
}
