//! Test problems: Prothero-Robinson, the split linear test equation, and
//! the two-dimensional shallow-water equations.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::integrate::{Frozen, IntegrateError, IvpProblem, Jacobian, Result};
use crate::matkit::{BandedMatrix, Complex64, DenseMatrix};

/// `y' = μ (y - φ(t)) + φ'(t)` with `φ = sin`, exact solution `y = φ`.
///
/// By default the stiff part is `g = μ (y - φ)` and the forcing `φ'` is
/// explicit; [`ProtheroRobinson::forcing_in_g`] moves the forcing into `g`.
#[derive(Debug, Clone)]
pub struct ProtheroRobinson {
    pub mu: f64,
    pub t0: f64,
    pub tf: f64,
    pub forcing_in_g: bool,
    jac: Arc<Jacobian>,
}

pub fn prothero_robinson(mu: f64, t0: f64, tf: f64) -> Result<ProtheroRobinson> {
    if !(mu < 0.0) || !mu.is_finite() {
        return Err(IntegrateError::Invalid(format!("stiffness parameter {mu} must be negative")));
    }
    if !(tf > t0) {
        return Err(IntegrateError::Invalid("empty time interval".into()));
    }
    Ok(ProtheroRobinson {
        mu,
        t0,
        tf,
        forcing_in_g: false,
        jac: Arc::new(Jacobian::Dense(DenseMatrix::diagonal(&[mu]))),
    })
}

impl ProtheroRobinson {
    pub fn forcing_in_g(mut self, yes: bool) -> Self {
        self.forcing_in_g = yes;
        self
    }

    fn phi(k: usize, t: f64) -> f64 {
        (t + k as f64 * FRAC_PI_2).sin()
    }
}

impl IvpProblem for ProtheroRobinson {
    fn dim(&self) -> usize {
        1
    }

    fn span(&self) -> (f64, f64) {
        (self.t0, self.tf)
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![Self::phi(0, self.t0)]
    }

    fn f(&self, t: f64, _y: &[f64], _: &Frozen) -> Result<Vec<f64>> {
        Ok(vec![if self.forcing_in_g { 0.0 } else { Self::phi(1, t) }])
    }

    fn g(&self, t: f64, y: &[f64], _: &Frozen) -> Result<Vec<f64>> {
        let forcing = if self.forcing_in_g { Self::phi(1, t) } else { 0.0 };
        Ok(vec![self.mu * (y[0] - Self::phi(0, t)) + forcing])
    }

    fn g_jacobian(&self, _t: f64, _y: &[f64], _: &Frozen) -> Result<Arc<Jacobian>> {
        Ok(self.jac.clone())
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        Some(vec![Self::phi(0, t)])
    }

    fn derivative(&self, k: usize, t: f64) -> Option<Vec<f64>> {
        Some(vec![Self::phi(k, t)])
    }
}

/// `y' = λ0 y + λ1 y` with `λ0 y` explicit and `λ1 y` implicit. Complex
/// data is carried as a real pair `(Re y, Im y)`.
#[derive(Debug, Clone)]
pub struct LinearSplit {
    pub lambda0: Complex64,
    pub lambda1: Complex64,
    pub y0: Complex64,
    pub t0: f64,
    pub tf: f64,
    complex: bool,
    jac: Arc<Jacobian>,
}

fn real_block(z: Complex64, complex: bool) -> DenseMatrix<f64> {
    if complex {
        DenseMatrix::from_rows(&[vec![z.re, -z.im], vec![z.im, z.re]]).expect("2x2")
    } else {
        DenseMatrix::diagonal(&[z.re])
    }
}

/// Split linear test problem on `[0, 1]`; see [`LinearSplit::with_span`].
pub fn linear_split(lambda0: Complex64, lambda1: Complex64, y0: Complex64) -> LinearSplit {
    let complex = lambda0.im != 0.0 || lambda1.im != 0.0 || y0.im != 0.0;
    LinearSplit {
        lambda0,
        lambda1,
        y0,
        t0: 0.0,
        tf: 1.0,
        complex,
        jac: Arc::new(Jacobian::Dense(real_block(lambda1, complex))),
    }
}

impl LinearSplit {
    pub fn with_span(mut self, t0: f64, tf: f64) -> Self {
        self.t0 = t0;
        self.tf = tf;
        self
    }

    /// Forces the two-component real representation.
    pub fn as_complex(mut self) -> Self {
        self.complex = true;
        self.jac = Arc::new(Jacobian::Dense(real_block(self.lambda1, true)));
        self
    }

    pub fn pack(&self, z: Complex64) -> Vec<f64> {
        if self.complex {
            vec![z.re, z.im]
        } else {
            vec![z.re]
        }
    }

    pub fn unpack(&self, v: &[f64]) -> Complex64 {
        Complex64::new(v[0], if self.complex { v[1] } else { 0.0 })
    }

    fn apply(&self, lambda: Complex64, y: &[f64]) -> Vec<f64> {
        self.pack(lambda * self.unpack(y))
    }
}

impl IvpProblem for LinearSplit {
    fn dim(&self) -> usize {
        if self.complex {
            2
        } else {
            1
        }
    }

    fn span(&self) -> (f64, f64) {
        (self.t0, self.tf)
    }

    fn initial_state(&self) -> Vec<f64> {
        self.pack(self.y0)
    }

    fn f(&self, _t: f64, y: &[f64], _: &Frozen) -> Result<Vec<f64>> {
        Ok(self.apply(self.lambda0, y))
    }

    fn g(&self, _t: f64, y: &[f64], _: &Frozen) -> Result<Vec<f64>> {
        Ok(self.apply(self.lambda1, y))
    }

    fn g_jacobian(&self, _t: f64, _y: &[f64], _: &Frozen) -> Result<Arc<Jacobian>> {
        Ok(self.jac.clone())
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        self.derivative(0, t)
    }

    fn derivative(&self, k: usize, t: f64) -> Option<Vec<f64>> {
        let lam = self.lambda0 + self.lambda1;
        Some(self.pack(lam.powu(k as u32) * (lam * (t - self.t0)).exp() * self.y0))
    }
}

/// Node-centred grid on `[-3, 3]²` with `(nx + 1) × (ny + 1)` nodes; the
/// state stores `(h, uh, vh)` per node, `x` fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweGrid {
    pub nx: usize,
    pub ny: usize,
    pub g_grav: f64,
    /// Time step of the predictor half of the two-step flux; `0` gives the
    /// centred semi-discretization.
    #[serde(default)]
    pub predictor_dt: f64,
}

pub const SWE_DOMAIN: (f64, f64) = (-3.0, 3.0);
/// Centre of the initial Gaussian height bump.
pub const SWE_BUMP: (f64, f64) = (1.0 / 3.0, 2.0 / 3.0);

impl SweGrid {
    pub fn dx(&self) -> f64 {
        (SWE_DOMAIN.1 - SWE_DOMAIN.0) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (SWE_DOMAIN.1 - SWE_DOMAIN.0) / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        SWE_DOMAIN.0 + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        SWE_DOMAIN.0 + j as f64 * self.dy()
    }

    pub fn nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn state_len(&self) -> usize {
        3 * self.nodes()
    }

    pub fn index(&self, i: usize, j: usize, comp: usize) -> usize {
        3 * (j * (self.nx + 1) + i) + comp
    }

    /// Half-bandwidth of the 9-point stencil in state ordering.
    pub fn bandwidth(&self) -> usize {
        3 * (self.nx + 2) + 2
    }

    /// State at node `(i, j)` with reflective ghost nodes for
    /// `i ∈ [-1, nx + 1]`, `j ∈ [-1, ny + 1]`: the ghost mirrors the first
    /// interior node with the normal momentum negated.
    fn node(&self, u: &[f64], i: isize, j: isize) -> [f64; 3] {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let (mut si, mut sj) = (1.0, 1.0);
        let ii = if i < 0 {
            si = -1.0;
            -i
        } else if i > nx {
            si = -1.0;
            2 * nx - i
        } else {
            i
        };
        let jj = if j < 0 {
            sj = -1.0;
            -j
        } else if j > ny {
            sj = -1.0;
            2 * ny - j
        } else {
            j
        };
        let k = self.index(ii as usize, jj as usize, 0);
        [u[k], si * u[k + 1], sj * u[k + 2]]
    }
}

fn flux_x(s: &[f64; 3], g: f64) -> [f64; 3] {
    let [h, uh, vh] = *s;
    [uh, uh * uh / h + 0.5 * g * h * h, uh * vh / h]
}

fn flux_y(s: &[f64; 3], g: f64) -> [f64; 3] {
    let [h, uh, vh] = *s;
    [vh, uh * vh / h, vh * vh / h + 0.5 * g * h * h]
}

/// Shallow-water equations on `[-3, 3]²` with reflective walls,
/// semi-discretized by a two-step (Richtmyer-type) Lax-Wendroff flux:
/// states at the cell corners are predicted from the four surrounding
/// nodes, and each node's tendency is the divergence of the corner fluxes.
#[derive(Debug, Clone)]
pub struct ShallowWater {
    pub grid: SweGrid,
    pub t0: f64,
    pub tf: f64,
    zero_jac: Arc<Jacobian>,
}

/// Shallow-water problem on `[0, 10]` with the Gaussian initial bump.
pub fn shallow_water(nx: usize, ny: usize, g_grav: f64) -> Result<ShallowWater> {
    if nx < 8 || ny < 8 {
        return Err(IntegrateError::Invalid("grid needs at least 8 cells per direction".into()));
    }
    if !(g_grav > 0.0) {
        return Err(IntegrateError::Invalid("gravity must be positive".into()));
    }
    ShallowWater::new(SweGrid {
        nx,
        ny,
        g_grav,
        predictor_dt: 0.0,
    })
}

impl ShallowWater {
    pub fn new(grid: SweGrid) -> Result<Self> {
        if grid.nx < 8 || grid.ny < 8 || !(grid.g_grav > 0.0) || !(grid.predictor_dt >= 0.0) {
            return Err(IntegrateError::Invalid(format!("bad shallow-water grid {grid:?}")));
        }
        let n = grid.state_len();
        Ok(Self {
            grid,
            t0: 0.0,
            tf: 10.0,
            zero_jac: Arc::new(Jacobian::Banded(BandedMatrix::zeros(n, 0, 0))),
        })
    }

    pub fn with_span(mut self, t0: f64, tf: f64) -> Self {
        self.t0 = t0;
        self.tf = tf;
        self
    }

    /// Initial layer thickness `1 + exp(-|(x, y) - c|²)`.
    pub fn initial_height(x: f64, y: f64) -> f64 {
        1.0 + (-((x - SWE_BUMP.0).powi(2) + (y - SWE_BUMP.1).powi(2))).exp()
    }

    /// State sampled from a function of `(x, y)` returning `(h, uh, vh)`.
    pub fn state_from(&self, f: impl Fn(f64, f64) -> [f64; 3]) -> Vec<f64> {
        let g = &self.grid;
        let mut u = vec![0.0; g.state_len()];
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let v = f(g.x(i), g.y(j));
                let k = g.index(i, j, 0);
                u[k..k + 3].copy_from_slice(&v);
            }
        }
        u
    }

    /// Total mass `∫ h` by the trapezoidal rule on the nodes.
    pub fn mass(&self, u: &[f64]) -> f64 {
        let g = &self.grid;
        let mut total = 0.0;
        for j in 0..=g.ny {
            let wy = if j == 0 || j == g.ny { 0.5 } else { 1.0 };
            for i in 0..=g.nx {
                let wx = if i == 0 || i == g.nx { 0.5 } else { 1.0 };
                total += wx * wy * u[g.index(i, j, 0)];
            }
        }
        total * g.dx() * g.dy()
    }

    /// Semi-discrete right-hand side `F(U)`.
    pub fn tendency(&self, u: &[f64]) -> Result<Vec<f64>> {
        let g = &self.grid;
        if u.len() != g.state_len() {
            return Err(IntegrateError::Invalid(format!(
                "state has length {}, expected {}",
                u.len(),
                g.state_len()
            )));
        }
        let (dx, dy, grav, tau) = (g.dx(), g.dy(), g.g_grav, g.predictor_dt);
        let (cx, cy) = (g.nx + 2, g.ny + 2);
        // Corner (i + 1/2, j + 1/2) for i ∈ [-1, nx], j ∈ [-1, ny] at
        // index (j + 1) * cx + (i + 1).
        let mut fx = vec![[0.0; 3]; cx * cy];
        let mut gy = vec![[0.0; 3]; cx * cy];
        for cj in 0..cy {
            for ci in 0..cx {
                let (i, j) = (ci as isize - 1, cj as isize - 1);
                let a = g.node(u, i, j);
                let b = g.node(u, i + 1, j);
                let c = g.node(u, i, j + 1);
                let d = g.node(u, i + 1, j + 1);
                let mut s = [0.0; 3];
                for k in 0..3 {
                    s[k] = 0.25 * (a[k] + b[k] + c[k] + d[k]);
                }
                if tau > 0.0 {
                    for n in [&a, &b, &c, &d] {
                        if !(n[0] > 0.0) {
                            return Err(thickness_error(n[0]));
                        }
                    }
                    let (fa, fb, fc, fd) = (flux_x(&a, grav), flux_x(&b, grav), flux_x(&c, grav), flux_x(&d, grav));
                    let (ga, gb, gc, gd) = (flux_y(&a, grav), flux_y(&b, grav), flux_y(&c, grav), flux_y(&d, grav));
                    for k in 0..3 {
                        let div = (fb[k] + fd[k] - fa[k] - fc[k]) / (2.0 * dx) + (gc[k] + gd[k] - ga[k] - gb[k]) / (2.0 * dy);
                        s[k] -= 0.5 * tau * div;
                    }
                }
                if !(s[0] > 0.0) {
                    return Err(thickness_error(s[0]));
                }
                fx[cj * cx + ci] = flux_x(&s, grav);
                gy[cj * cx + ci] = flux_y(&s, grav);
            }
        }
        let mut out = vec![0.0; u.len()];
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                // corners around node (i, j): (i ± 1/2, j ± 1/2)
                let ne = (j + 1) * cx + (i + 1);
                let nw = (j + 1) * cx + i;
                let se = j * cx + (i + 1);
                let sw = j * cx + i;
                let k0 = g.index(i, j, 0);
                for k in 0..3 {
                    let ddx = (fx[ne][k] + fx[se][k] - fx[nw][k] - fx[sw][k]) / (2.0 * dx);
                    let ddy = (gy[ne][k] + gy[nw][k] - gy[se][k] - gy[sw][k]) / (2.0 * dy);
                    out[k0 + k] = -(ddx + ddy);
                }
            }
        }
        Ok(out)
    }

    /// Jacobian of [`ShallowWater::tendency`] by forward differences, one
    /// tendency evaluation per column group. Columns are grouped by node
    /// residues modulo 3 in each direction and by component, so no two
    /// columns of a group share a row of the 9-point stencil.
    pub fn jacobian_fd(&self, u: &[f64]) -> Result<BandedMatrix> {
        let g = &self.grid;
        let base = self.tendency(u)?;
        let bw = g.bandwidth();
        let mut jac = BandedMatrix::zeros(g.state_len(), bw, bw);
        let eps: Vec<f64> = u.iter().map(|v| 1e-7 * v.abs().max(1.0)).collect();
        for ri in 0..3 {
            for rj in 0..3 {
                for comp in 0..3 {
                    let mut pert = u.to_vec();
                    let cols: Vec<(usize, usize)> = (0..=g.ny)
                        .filter(|j| j % 3 == rj)
                        .flat_map(|j| (0..=g.nx).filter(move |i| i % 3 == ri).map(move |i| (i, j)))
                        .collect();
                    for &(i, j) in &cols {
                        let k = g.index(i, j, comp);
                        pert[k] += eps[k];
                    }
                    let shifted = self.tendency(&pert)?;
                    for &(i, j) in &cols {
                        let col = g.index(i, j, comp);
                        for nj in j.saturating_sub(1)..=(j + 1).min(g.ny) {
                            for ni in i.saturating_sub(1)..=(i + 1).min(g.nx) {
                                for rc in 0..3 {
                                    let row = g.index(ni, nj, rc);
                                    let v = (shifted[row] - base[row]) / eps[col];
                                    if v != 0.0 {
                                        jac.set(row, col, v)?;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(jac)
    }

    /// CSV snapshot with columns `x,y,h,uh,vh`.
    pub fn snapshot_csv(&self, u: &[f64]) -> String {
        let g = &self.grid;
        let mut out = String::from("x,y,h,uh,vh\n");
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let k = g.index(i, j, 0);
                out.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    g.x(i),
                    g.y(j),
                    u[k],
                    u[k + 1],
                    u[k + 2]
                ));
            }
        }
        out
    }
}

fn thickness_error(h: f64) -> IntegrateError {
    IntegrateError::Problem(format!("nonpositive layer thickness {h}"))
}

/// Unsplit form: everything explicit, `g = 0`.
impl IvpProblem for ShallowWater {
    fn dim(&self) -> usize {
        self.grid.state_len()
    }

    fn span(&self) -> (f64, f64) {
        (self.t0, self.tf)
    }

    fn initial_state(&self) -> Vec<f64> {
        self.state_from(|x, y| [Self::initial_height(x, y), 0.0, 0.0])
    }

    fn f(&self, _t: f64, y: &[f64], _: &Frozen) -> Result<Vec<f64>> {
        self.tendency(y)
    }

    fn g(&self, _t: f64, y: &[f64], _: &Frozen) -> Result<Vec<f64>> {
        Ok(vec![0.0; y.len()])
    }

    fn g_jacobian(&self, _t: f64, _y: &[f64], _: &Frozen) -> Result<Arc<Jacobian>> {
        Ok(self.zero_jac.clone())
    }
}

/// Shallow water split as `g(U) = J U`, `f(U) = F(U) - J U` with `J` the
/// finite-difference Jacobian at the entry state of each step.
#[derive(Debug, Clone)]
pub struct SweSplit {
    pub swe: ShallowWater,
}

pub fn swe_split(problem: ShallowWater) -> SweSplit {
    SweSplit { swe: problem }
}

impl SweSplit {
    fn jacobian<'a>(frozen: &'a Frozen) -> Result<&'a Arc<Jacobian>> {
        frozen
            .jacobian
            .as_ref()
            .ok_or_else(|| IntegrateError::Invalid("split problem used without a frozen Jacobian".into()))
    }
}

impl IvpProblem for SweSplit {
    fn dim(&self) -> usize {
        self.swe.dim()
    }

    fn span(&self) -> (f64, f64) {
        self.swe.span()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.swe.initial_state()
    }

    fn freeze(&self, _t: f64, y: &[f64]) -> Result<Frozen> {
        Ok(Frozen {
            jacobian: Some(Arc::new(Jacobian::Banded(self.swe.jacobian_fd(y)?))),
        })
    }

    fn refreezes(&self) -> bool {
        true
    }

    fn f(&self, _t: f64, y: &[f64], frozen: &Frozen) -> Result<Vec<f64>> {
        let mut out = self.swe.tendency(y)?;
        for (o, v) in out.iter_mut().zip(Self::jacobian(frozen)?.mat_vec(y)?) {
            *o -= v;
        }
        Ok(out)
    }

    fn g(&self, _t: f64, y: &[f64], frozen: &Frozen) -> Result<Vec<f64>> {
        Self::jacobian(frozen)?.mat_vec(y)
    }

    fn g_jacobian(&self, _t: f64, _y: &[f64], frozen: &Frozen) -> Result<Arc<Jacobian>> {
        Ok(Self::jacobian(frozen)?.clone())
    }

    /// `F` itself, without computing a Jacobian.
    fn rhs(&self, _t: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.swe.tendency(y)
    }
}
