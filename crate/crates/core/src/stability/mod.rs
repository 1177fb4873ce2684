//! Linear stability of IMEX schemes on the split test equation
//! `y' = λ0 y + λ1 y`, with `z0 = hλ0` treated explicitly and `z1 = hλ1`
//! implicitly.
//!
//! One step maps `[Y^[n]; y^[n]]` to `M(z0, z1) [Y^[n]; y^[n]]`. A point `z0`
//! belongs to the explicit region `S_E` when `M(z0, 0)` has spectral radius
//! below one, and to `S_α` when this holds for every `z1` in the sector of
//! half-angle `α` about the negative real axis. By the maximum principle only
//! the sector edges `z1 = -|y|/tan α + iy` need checking, plus the limit
//! `z1 → ∞`.

mod optim;

pub use optim::{nelder_mead, NelderMeadOptions, NelderMeadResult};

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalogue::MethodFamily;
use crate::extrap::{ExtrapError, ImexScheme};
use crate::matkit::{faddeev_leverrier, Complex64, DenseMatrix, MatError, Polynomial};
use crate::workers;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("I - z0 A* - z1 A is singular at z1 = {z1}")]
    SingularResolvent { z1: Complex64 },
    #[error("ray at angle {psi} is still stable at radius {rho_max}; enlarge the search interval")]
    NoSignChange { psi: f64, rho_max: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error(transparent)]
    Extrap(#[from] ExtrapError),
}

pub type Result<T> = std::result::Result<T, StabilityError>;

/// Modulus margin below one required to call a point stable.
pub const STABLE_MARGIN: f64 = 1e-12;

/// Edge point of the sector for parameter `y`: `z1 = -|y|/tan α + iy`.
pub fn sector_z1(alpha: f64, y: f64) -> Complex64 {
    let re = if (alpha - FRAC_PI_2).abs() < 1e-15 {
        0.0
    } else {
        -y.abs() / alpha.tan()
    };
    Complex64::new(re, y)
}

/// Flattened complex copies of the scheme matrices for repeated evaluation.
#[derive(Debug, Clone)]
pub struct StabilityKernel {
    s: usize,
    r: usize,
    a: Vec<Complex64>,
    abar: Vec<Complex64>,
    astar: Vec<Complex64>,
    b: Vec<Complex64>,
    bbar: Vec<Complex64>,
    bstar: Vec<Complex64>,
    u: Vec<Complex64>,
    v: Vec<Complex64>,
    stiff_limit_radius: f64,
}

fn flat(m: &DenseMatrix<f64>) -> Vec<Complex64> {
    m.data().iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

impl StabilityKernel {
    pub fn new(scheme: &ImexScheme) -> Result<Self> {
        let base = &scheme.base;
        if !base.a.is_lower_triangular(false) {
            return Err(StabilityError::Invalid("A must be lower triangular".into()));
        }
        let limit = stiff_limit_matrix(scheme)?;
        let stiff_limit_radius = if limit.max_abs() == 0.0 {
            0.0
        } else {
            limit.char_poly()?.max_root_modulus()?
        };
        Ok(Self {
            s: base.s(),
            r: base.r(),
            a: flat(&base.a),
            abar: flat(&scheme.abar),
            astar: flat(&scheme.astar),
            b: flat(&base.b),
            bbar: flat(&scheme.bbar),
            bstar: flat(&scheme.bstar),
            u: flat(&base.u),
            v: flat(&base.v),
            stiff_limit_radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.s + self.r
    }

    /// Spectral radius of `M` in the limit `z1 → ∞`.
    pub fn stiff_limit_radius(&self) -> f64 {
        self.stiff_limit_radius
    }

    /// Row-major `M(z0, z1)`.
    pub fn matrix(&self, z0: Complex64, z1: Complex64) -> Result<Vec<Complex64>> {
        let (s, r) = (self.s, self.r);
        let n = s + r;
        let one = Complex64::new(1.0, 0.0);
        // K = I - z0 A* - z1 A is lower triangular; solve K X = [z0 Ā | U].
        let mut k = vec![Complex64::new(0.0, 0.0); s * s];
        for i in 0..s {
            for j in 0..=i {
                let id = if i == j { one } else { Complex64::new(0.0, 0.0) };
                k[i * s + j] = id - z0 * self.astar[i * s + j] - z1 * self.a[i * s + j];
            }
            let d = k[i * s + i];
            if d.norm() <= 1e-14 * (1.0 + z1.norm()) {
                return Err(StabilityError::SingularResolvent { z1 });
            }
        }
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        // top block rows: X = K^{-1} [z0 Ā | U]
        for col in 0..n {
            for i in 0..s {
                let mut acc = if col < s {
                    z0 * self.abar[i * s + col]
                } else {
                    self.u[i * r + (col - s)]
                };
                for j in 0..i {
                    acc -= k[i * s + j] * m[j * n + col];
                }
                m[i * n + col] = acc / k[i * s + i];
            }
        }
        // bottom block rows: [z0 B̄ | V] + G X with G = z0 B* + z1 B
        for i in 0..r {
            let g: Vec<Complex64> = (0..s)
                .map(|j| z0 * self.bstar[i * s + j] + z1 * self.b[i * s + j])
                .collect();
            for col in 0..n {
                let mut acc = if col < s {
                    z0 * self.bbar[i * s + col]
                } else {
                    self.v[i * r + (col - s)]
                };
                for j in 0..s {
                    acc += g[j] * m[j * n + col];
                }
                m[(s + i) * n + col] = acc;
            }
        }
        Ok(m)
    }

    /// Monic `det(wI - M(z0, z1))`.
    pub fn poly(&self, z0: Complex64, z1: Complex64) -> Result<Polynomial> {
        let m = self.matrix(z0, z1)?;
        Ok(Polynomial::new(faddeev_leverrier(&m, self.dim())))
    }

    /// Largest root modulus of the stability polynomial.
    pub fn max_modulus(&self, z0: Complex64, z1: Complex64) -> Result<f64> {
        Ok(self.poly(z0, z1)?.max_root_modulus()?)
    }

    /// Root condition with margin via the Schur-Cohn test; a singular
    /// resolvent counts as unstable.
    fn is_inside(&self, z0: Complex64, z1: Complex64) -> bool {
        self.poly(z0, z1)
            .map_or(false, |p| p.roots_inside(1.0 - STABLE_MARGIN))
    }

    /// Modulus with a singular resolvent mapped to `+inf`.
    fn modulus_or_inf(&self, z0: Complex64, z1: Complex64) -> f64 {
        self.max_modulus(z0, z1).unwrap_or(f64::INFINITY)
    }

    /// `det(wL - R)`, where `M = L^{-1} R` and `det L` does not depend on
    /// `z0`; as a function of `z0` this is a polynomial of degree `≤ s + r`.
    fn pencil_det(&self, w: Complex64, z0: Complex64, z1: Complex64) -> Result<Complex64> {
        let (s, r) = (self.s, self.r);
        let n = s + r;
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let mut m = DenseMatrix::<Complex64>::zeros(n, n);
        for i in 0..s {
            for j in 0..s {
                let kij = if i == j { one } else { zero } - z0 * self.astar[i * s + j] - z1 * self.a[i * s + j];
                m[(i, j)] = w * kij - z0 * self.abar[i * s + j];
            }
            for j in 0..r {
                m[(i, s + j)] = -self.u[i * r + j];
            }
        }
        for i in 0..r {
            for j in 0..s {
                let gij = z0 * self.bstar[i * s + j] + z1 * self.b[i * s + j];
                m[(s + i, j)] = -w * gij - z0 * self.bbar[i * s + j];
            }
            for j in 0..r {
                let id = if i == j { w } else { zero };
                m[(s + i, s + j)] = id - self.v[i * r + j];
            }
        }
        Ok(m.determinant()?)
    }
}

/// `M(z0, z1)` as a dense matrix.
pub fn imex_stability_matrix(scheme: &ImexScheme, z0: Complex64, z1: Complex64) -> Result<DenseMatrix<Complex64>> {
    let k = StabilityKernel::new(scheme)?;
    let n = k.dim();
    Ok(DenseMatrix::new(n, n, k.matrix(z0, z1)?)?)
}

/// Limit of `M(z0, z1)` as `z1 → ∞`: zero except for the lower-right block
/// `V - B A^{-1} U`, independent of `z0`.
pub fn stiff_limit_matrix(scheme: &ImexScheme) -> Result<DenseMatrix<f64>> {
    let (s, r) = (scheme.s(), scheme.r());
    let inner = scheme.base.stiff_limit_matrix().map_err(|e| match e {
        crate::glm::GlmError::Matrix(m) => StabilityError::Matrix(m),
        other => StabilityError::Invalid(other.to_string()),
    })?;
    let mut m = DenseMatrix::zeros(s + r, s + r);
    for i in 0..r {
        for j in 0..r {
            m[(s + i, s + j)] = inner[(i, j)];
        }
    }
    Ok(m)
}

/// Monic characteristic polynomial of `M(z0, z1)` in `w`.
pub fn imex_stability_poly(scheme: &ImexScheme, z0: Complex64, z1: Complex64) -> Result<Polynomial> {
    StabilityKernel::new(scheme)?.poly(z0, z1)
}

/// Outcome of a pointwise stability test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub stable: bool,
    pub max_modulus: f64,
    /// The implicit resolvent was singular; reported as unstable.
    pub singular: bool,
}

/// Strict root condition `max |w_i| < 1` (with [`STABLE_MARGIN`]).
pub fn is_stable(scheme: &ImexScheme, z0: Complex64, z1: Complex64) -> Result<Verdict> {
    let k = StabilityKernel::new(scheme)?;
    Ok(match k.max_modulus(z0, z1) {
        Ok(m) => Verdict {
            stable: m < 1.0 - STABLE_MARGIN,
            max_modulus: m,
            singular: false,
        },
        Err(StabilityError::SingularResolvent { .. }) => Verdict {
            stable: false,
            max_modulus: f64::INFINITY,
            singular: true,
        },
        Err(e) => return Err(e),
    })
}

/// Boundary-locus cloud: for each `w = e^{iθ}` with `θ` sampled over
/// `[0, 2kπ)`, all roots `z0` of `det(wI - M(z0, z1)) = 0` at the fixed
/// sector point `z1`. The polynomial in `z0` is recovered by interpolation at
/// Chebyshev nodes on `[-5, 5]`.
pub fn boundary_locus(
    scheme: &ImexScheme,
    alpha: f64,
    y: f64,
    theta_samples: usize,
    k: usize,
) -> Result<Vec<Complex64>> {
    if theta_samples < 64 || k == 0 {
        return Err(StabilityError::Invalid(
            "boundary locus needs at least 64 samples and k >= 1".into(),
        ));
    }
    let kernel = StabilityKernel::new(scheme)?;
    let z1 = sector_z1(alpha, y);
    let n = kernel.dim();
    const SCALE: f64 = 5.0;
    let nodes: Vec<f64> = (0..=n)
        .map(|j| ((j as f64 + 0.5) * PI / (n + 1) as f64).cos())
        .collect();
    let vander = DenseMatrix::from_fn(n + 1, n + 1, |i, j| Complex64::new(nodes[i].powi(j as i32), 0.0));
    let vlu = vander.lu()?;
    let thetas: Vec<f64> = (0..theta_samples)
        .map(|j| 2.0 * PI * k as f64 * j as f64 / theta_samples as f64)
        .collect();
    let clouds: Vec<Result<Vec<Complex64>>> = workers::pool().install(|| {
        thetas
            .par_iter()
            .map(|&th| {
                let w = Complex64::from_polar(1.0, th);
                let vals = nodes
                    .iter()
                    .map(|&t| kernel.pencil_det(w, Complex64::new(SCALE * t, 0.0), z1))
                    .collect::<Result<Vec<_>>>()?;
                let mut coeffs = vlu.solve(&vals)?;
                let big = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
                while coeffs.len() > 1 && coeffs.last().unwrap().norm() <= 1e-10 * big {
                    coeffs.pop();
                }
                let p = Polynomial::new(coeffs);
                if p.degree() == 0 {
                    return Ok(vec![]);
                }
                Ok(p.roots()?.into_iter().map(|t| t * SCALE).collect())
            })
            .collect()
    });
    let mut out = Vec::new();
    for c in clouds {
        out.extend(c?);
    }
    Ok(out)
}

/// Search settings for the bisection along rays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RayOptions {
    /// Far end of the search interval in `|z0|`.
    pub rho_max: f64,
    /// Accept a point once `| max|w_i| - 1 | ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RayOptions {
    fn default() -> Self {
        Self {
            rho_max: 50.0,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// A boundary crossing on the ray `z0 = ρ e^{iψ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayHit {
    pub psi: f64,
    pub rho: f64,
    pub z0: Complex64,
    pub max_modulus: f64,
}

fn bisect_ray(kernel: &StabilityKernel, psi: f64, z1: Complex64, opts: &RayOptions) -> Result<RayHit> {
    let dir = Complex64::from_polar(1.0, psi);
    let g = |rho: f64| kernel.modulus_or_inf(dir * rho, z1);
    let far = g(opts.rho_max);
    if far < 1.0 {
        return Err(StabilityError::NoSignChange {
            psi,
            rho_max: opts.rho_max,
        });
    }
    let origin = g(0.0);
    if origin > 1.0 + opts.tol {
        // No stable segment on this ray; an origin on the level itself still
        // bisects outwards.
        return Ok(RayHit {
            psi,
            rho: 0.0,
            z0: Complex64::new(0.0, 0.0),
            max_modulus: origin,
        });
    }
    let (mut lo, mut hi) = (0.0, opts.rho_max);
    let mut best = (opts.rho_max, far);
    for _ in 0..opts.max_iter {
        let mid = 0.5 * (lo + hi);
        let m = g(mid);
        if (m - 1.0).abs() < (best.1 - 1.0).abs() {
            best = (mid, m);
        }
        if (m - 1.0).abs() <= opts.tol {
            best = (mid, m);
            break;
        }
        if m < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(RayHit {
        psi,
        rho: best.0,
        z0: dir * best.0,
        max_modulus: best.1,
    })
}

/// Crossing of `∂S_{α,y}` on the ray at angle `ψ ∈ (π/2, 3π/2)`.
pub fn ray_intersection(scheme: &ImexScheme, psi: f64, alpha: f64, y: f64, opts: &RayOptions) -> Result<RayHit> {
    let kernel = StabilityKernel::new(scheme)?;
    bisect_ray(&kernel, psi, sector_z1(alpha, y), opts)
}

/// The ray function `x0 = f(m, α, y)`: real part of the crossing on the ray
/// `y0 = m x0`, `x0 ∈ [x_far, 0]`.
pub fn ray_function(scheme: &ImexScheme, m: f64, alpha: f64, y: f64, x_far: f64, tol: f64) -> Result<f64> {
    let psi = PI + m.atan();
    let opts = RayOptions {
        rho_max: x_far.abs() / psi.cos().abs(),
        tol,
        ..RayOptions::default()
    };
    Ok(ray_intersection(scheme, psi, alpha, y, &opts)?.z0.re)
}

/// Settings for the `S_α` boundary search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryOptions {
    pub ray: RayOptions,
    /// Seed grid for the worst sector parameter on each ray.
    pub y_min: f64,
    pub y_max: f64,
    pub y_step: f64,
    /// Add far sector points `±y_max·1.5^k`.
    pub tail: bool,
    /// Golden-section tolerance in `y`.
    pub y_tol: f64,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        Self {
            ray: RayOptions::default(),
            y_min: -8.0,
            y_max: 8.0,
            y_step: 0.25,
            tail: true,
            y_tol: 1e-7,
        }
    }
}

/// One point of `∂S_α` with the sector parameter that determines it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub psi: f64,
    pub z0: Complex64,
    pub y: f64,
    pub max_modulus: f64,
}

fn grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || max < min {
        return vec![];
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| min + k as f64 * step).collect()
}

fn tail_values(y_max: f64) -> Vec<f64> {
    let base = y_max.abs().max(1.0);
    (1..=24)
        .flat_map(|k| {
            let v = base * 1.5f64.powi(k);
            [-v, v]
        })
        .collect()
}

/// Golden-section search for a minimum of a unimodal function on `[a, b]`.
fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `∂S_α` (or `∂S_E` when `alpha` is `None`) along rays at the given angles:
/// per ray, the crossing closest to the origin over all sector parameters.
pub fn s_alpha_boundary(
    scheme: &ImexScheme,
    alpha: Option<f64>,
    psis: &[f64],
    opts: &BoundaryOptions,
) -> Result<Vec<BoundaryPoint>> {
    let kernel = StabilityKernel::new(scheme)?;
    let Some(alpha) = alpha else {
        return workers::pool().install(|| {
            psis.par_iter()
                .map(|&psi| {
                    let hit = bisect_ray(&kernel, psi, Complex64::new(0.0, 0.0), &opts.ray)?;
                    Ok(BoundaryPoint {
                        psi,
                        z0: hit.z0,
                        y: 0.0,
                        max_modulus: hit.max_modulus,
                    })
                })
                .collect()
        });
    };
    if kernel.stiff_limit_radius() >= 1.0 - STABLE_MARGIN {
        return Ok(psis
            .iter()
            .map(|&psi| BoundaryPoint {
                psi,
                z0: Complex64::new(0.0, 0.0),
                y: f64::INFINITY,
                max_modulus: kernel.stiff_limit_radius(),
            })
            .collect());
    }
    let mut ys = grid(opts.y_min, opts.y_max, opts.y_step);
    if opts.tail {
        ys.extend(tail_values(opts.y_max));
    }
    workers::pool().install(|| {
        psis.par_iter()
            .map(|&psi| {
                // A ray that stays stable out to rho_max for this y does not bound the minimum.
                let rho_at = |y: f64| match bisect_ray(&kernel, psi, sector_z1(alpha, y), &opts.ray) {
                    Err(StabilityError::NoSignChange { .. }) => {
                        let z0 = Complex64::from_polar(opts.ray.rho_max, psi);
                        Ok(RayHit {
                            psi,
                            rho: opts.ray.rho_max,
                            z0,
                            max_modulus: kernel.modulus_or_inf(z0, sector_z1(alpha, y)),
                        })
                    }
                    other => other,
                };
                let mut best: Option<(f64, RayHit)> = None;
                for &y in &ys {
                    let hit = rho_at(y)?;
                    if best.map_or(true, |(_, b)| hit.rho < b.rho) {
                        best = Some((y, hit));
                    }
                }
                let (y0, mut hit) = best.ok_or_else(|| StabilityError::Invalid("empty y grid".into()))?;
                let mut y_best = y0;
                if y0.abs() <= opts.y_max && opts.y_step > 0.0 {
                    let (y, rho) = golden_min(
                        |y| rho_at(y).map_or(f64::INFINITY, |h| h.rho),
                        y0 - opts.y_step,
                        y0 + opts.y_step,
                        opts.y_tol,
                    );
                    if rho < hit.rho {
                        hit = rho_at(y)?;
                        y_best = y;
                    }
                }
                Ok(BoundaryPoint {
                    psi,
                    z0: hit.z0,
                    y: y_best,
                    max_modulus: hit.max_modulus,
                })
            })
            .collect()
    })
}

/// Uniformly spaced ray angles strictly inside `(π/2, 3π/2)`.
pub fn ray_angles(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| FRAC_PI_2 + PI * (k as f64 + 0.5) / count as f64)
        .collect()
}

/// Raster and sector-sampling settings for area computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSettings {
    /// `[x_min, x_max, y_min, y_max]` of the `z0` rectangle.
    pub rect: [f64; 4],
    /// Cell size.
    pub delta: f64,
    /// Sector parameters `y_min, y_min + y_step, ..., y_max`.
    pub y_min: f64,
    pub y_max: f64,
    pub y_step: f64,
    /// Golden-section search next to the worst grid value of `y`. Costs a
    /// root solve per sector point.
    pub refine: bool,
    /// Far sector points `±y_max·1.5^k`, `k = 1..=24`.
    pub tail: bool,
    /// Check the `z1 → ∞` limit matrix.
    pub stiff_limit: bool,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            rect: [-6.0, 1.0, -4.0, 4.0],
            delta: 0.02,
            y_min: -8.0,
            y_max: 8.0,
            y_step: 0.05,
            refine: false,
            tail: true,
            stiff_limit: true,
        }
    }
}

impl ScanSettings {
    /// The sector sampling used for the published region figures:
    /// `y = -2.0, -1.8, ..., 2.0` and nothing else.
    pub fn figure_grid() -> Self {
        Self {
            y_min: -2.0,
            y_max: 2.0,
            y_step: 0.2,
            refine: false,
            tail: false,
            ..Self::default()
        }
    }

    /// Cheaper settings for objective evaluations inside a search.
    pub fn coarse() -> Self {
        Self {
            delta: 0.05,
            y_step: 0.1,
            refine: false,
            ..Self::default()
        }
    }

    pub fn y_values(&self) -> Vec<f64> {
        let mut ys = grid(self.y_min, self.y_max, self.y_step);
        if self.tail {
            ys.extend(tail_values(self.y_max));
        }
        ys
    }

    fn validate(&self) -> Result<()> {
        let [x0, x1, y0, y1] = self.rect;
        if !(self.delta > 0.0) || !(x1 > x0) || !(y1 > y0) {
            return Err(StabilityError::Invalid("scan rectangle and cell size must be positive".into()));
        }
        if !(self.y_step > 0.0) || self.y_max < self.y_min {
            return Err(StabilityError::Invalid("y grid must have a positive step".into()));
        }
        Ok(())
    }
}

/// Cell classification codes in a [`Raster`].
pub const CELL_UNSTABLE: u8 = 0;
pub const CELL_EXPLICIT: u8 = 1;
pub const CELL_SECTOR: u8 = 2;

/// Cell-centre classification over the scan rectangle, row-major from the
/// bottom row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Raster {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub y_min: f64,
    pub delta: f64,
    /// [`CELL_UNSTABLE`], [`CELL_EXPLICIT`] (in `S_E` only) or
    /// [`CELL_SECTOR`] (in `S_α` too).
    pub cells: Vec<u8>,
}

impl Raster {
    pub fn centre(&self, ix: usize, iy: usize) -> Complex64 {
        Complex64::new(
            self.x_min + (ix as f64 + 0.5) * self.delta,
            self.y_min + (iy as f64 + 0.5) * self.delta,
        )
    }

    pub fn get(&self, ix: usize, iy: usize) -> u8 {
        self.cells[iy * self.nx + ix]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionResult {
    /// Sector half-angle; `None` for the explicit region only.
    pub alpha: Option<f64>,
    /// Area of `S_α` (or of `S_E` when `alpha` is `None`).
    pub area: f64,
    pub explicit_area: f64,
    pub raster: Raster,
    pub settings: ScanSettings,
}

/// Classifies one `z0` for a prepared list of sector points. Returns
/// `(in S_E, in S_α)`.
fn classify(
    kernel: &StabilityKernel,
    z0: Complex64,
    sector: Option<(&[Complex64], f64, &[f64])>,
    settings: &ScanSettings,
    hint: &mut usize,
) -> (bool, bool) {
    let stable = |z1: Complex64| kernel.is_inside(z0, z1);
    if !stable(Complex64::new(0.0, 0.0)) {
        return (false, false);
    }
    let Some((z1s, alpha, ys)) = sector else {
        return (true, false);
    };
    if z1s.is_empty() {
        return (true, true);
    }
    // The sector point that failed for the previous cell usually fails first.
    let start = (*hint).min(z1s.len() - 1);
    if !stable(z1s[start]) {
        return (true, false);
    }
    for (i, &z1) in z1s.iter().enumerate() {
        if i != start && !stable(z1) {
            *hint = i;
            return (true, false);
        }
    }
    if settings.refine {
        let (worst, _) = ys
            .iter()
            .enumerate()
            .filter(|(_, y)| y.abs() <= settings.y_max)
            .map(|(i, &y)| (i, kernel.modulus_or_inf(z0, sector_z1(alpha, y))))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let y = ys[worst];
        let (_, neg) = golden_min(
            |t| -kernel.modulus_or_inf(z0, sector_z1(alpha, t)),
            y - settings.y_step,
            y + settings.y_step,
            1e-6,
        );
        if !(-neg < 1.0 - STABLE_MARGIN) {
            return (true, false);
        }
    }
    (true, true)
}

/// Cell-counting area of `S_α` (or `S_E` when `alpha` is `None`).
pub fn region_area(scheme: &ImexScheme, alpha: Option<f64>, settings: &ScanSettings) -> Result<RegionResult> {
    settings.validate()?;
    if let Some(a) = alpha {
        if !(a > 0.0 && a <= FRAC_PI_2 + 1e-15) {
            return Err(StabilityError::Invalid(format!("sector angle {a} outside (0, π/2]")));
        }
    }
    let kernel = StabilityKernel::new(scheme)?;
    let [x_min, x_max, y_min, y_max] = settings.rect;
    let nx = ((x_max - x_min) / settings.delta).round() as usize;
    let ny = ((y_max - y_min) / settings.delta).round() as usize;
    let ys = settings.y_values();
    let z1s: Vec<Complex64> = alpha.map_or_else(Vec::new, |a| ys.iter().map(|&y| sector_z1(a, y)).collect());
    let limit_ok = !settings.stiff_limit || kernel.stiff_limit_radius() < 1.0 - STABLE_MARGIN;
    let raster_x = |ix: usize| x_min + (ix as f64 + 0.5) * settings.delta;
    let raster_y = |iy: usize| y_min + (iy as f64 + 0.5) * settings.delta;

    let rows: Vec<Vec<u8>> = workers::pool().install(|| {
        (0..ny)
            .into_par_iter()
            .map(|iy| {
                let mut hint = 0usize;
                (0..nx)
                    .map(|ix| {
                        let z0 = Complex64::new(raster_x(ix), raster_y(iy));
                        let sector = alpha.map(|a| (z1s.as_slice(), a, ys.as_slice()));
                        let (e, s) = classify(&kernel, z0, sector, settings, &mut hint);
                        match (e, s && limit_ok) {
                            (true, true) => CELL_SECTOR,
                            (true, false) => CELL_EXPLICIT,
                            _ => CELL_UNSTABLE,
                        }
                    })
                    .collect()
            })
            .collect()
    });
    let cells: Vec<u8> = rows.concat();
    let cell_area = settings.delta * settings.delta;
    let explicit = cells.iter().filter(|&&c| c != CELL_UNSTABLE).count();
    let sector = cells.iter().filter(|&&c| c == CELL_SECTOR).count();
    let explicit_area = explicit as f64 * cell_area;
    Ok(RegionResult {
        alpha,
        area: if alpha.is_some() { sector as f64 * cell_area } else { explicit_area },
        explicit_area,
        raster: Raster {
            nx,
            ny,
            x_min,
            y_min,
            delta: settings.delta,
            cells,
        },
        settings: settings.clone(),
    })
}

/// Whether `z0` lies in `S_{α,y}` for the single sector point `y`.
pub fn in_s_alpha_y(scheme: &ImexScheme, z0: Complex64, alpha: f64, y: f64) -> Result<bool> {
    Ok(is_stable(scheme, z0, sector_z1(alpha, y))?.stable)
}

/// What to optimize: the region of a method family for a sector angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeTarget {
    pub family: MethodFamily,
    /// `None` maximizes the explicit region.
    pub alpha: Option<f64>,
    /// Also vary the family's scalar parameter (θ or λ), placed first in the
    /// search vector.
    pub vary_parameter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeResult {
    pub family: MethodFamily,
    pub beta: Vec<f64>,
    pub area: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub budget_exhausted: bool,
}

impl OptimizeTarget {
    fn split(&self, x: &[f64]) -> Option<(MethodFamily, Vec<f64>)> {
        if !self.vary_parameter {
            return Some((self.family, x.to_vec()));
        }
        let (p, beta) = x.split_first()?;
        let family = match self.family {
            MethodFamily::Theta { .. } => MethodFamily::Theta { theta: *p },
            MethodFamily::Dimsim2 { .. } => MethodFamily::Dimsim2 { lambda: *p },
            _ => return None,
        };
        Some((family, beta.to_vec()))
    }
}

/// Nelder-Mead search for the extrapolation parameters (and optionally the
/// family parameter) maximizing the region area under `scan`.
pub fn optimize_beta(
    target: &OptimizeTarget,
    x0: &[f64],
    scan: &ScanSettings,
    opts: &NelderMeadOptions,
) -> Result<OptimizeResult> {
    let expected = target.family.beta_len() + usize::from(target.vary_parameter);
    if x0.len() != expected {
        return Err(StabilityError::Invalid(format!(
            "starting point has {} entries, expected {expected}",
            x0.len()
        )));
    }
    if target.vary_parameter && target.family.parameter().is_none() {
        return Err(StabilityError::Invalid(format!("{} has no free parameter", target.family.name())));
    }
    let objective = |x: &[f64]| -> f64 {
        let Some((family, beta)) = target.split(x) else {
            return f64::INFINITY;
        };
        let Ok(scheme) = ImexScheme::for_family(&family, &beta) else {
            return f64::INFINITY;
        };
        region_area(&scheme, target.alpha, scan).map_or(f64::INFINITY, |r| -r.area)
    };
    let res = nelder_mead(objective, x0, opts);
    let (family, beta) = target
        .split(&res.x)
        .ok_or_else(|| StabilityError::Invalid("bad search vector".into()))?;
    Ok(OptimizeResult {
        family,
        beta,
        area: -res.value,
        evaluations: res.evaluations,
        converged: res.converged,
        budget_exhausted: res.budget_exhausted,
    })
}
