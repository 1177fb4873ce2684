//! Fixed-step time integration with IMEX schemes.
//!
//! One step from `t_n` to `t_n + h` computes the stages
//!
//! ```text
//! Y_i = h Σ_j Ā_ij f(Y_j^[n]) + h Σ_{j<i} A*_ij f(Y_j) + h Σ_{j≤i} A_ij g(Y_j) + Σ_j U_ij y_j^[n]
//! ```
//!
//! and the external vectors
//! `y^[n+1] = h B̄ f(Y^[n]) + h B* f(Y) + h B g(Y) + V y^[n]`.
//! The previous step's stage values and their `f` evaluations are part of
//! the state.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::catalogue::{right_angle_beta, MethodFamily};
use crate::extrap::{ExtrapError, ImexScheme};
use crate::glm::GlmTableau;
use crate::matkit::{fd_weights, BandedLu, BandedMatrix, DenseMatrix, Lu, MatError};
use crate::workers;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("problem evaluation failed: {0}")]
    Problem(String),
    #[error("stage iteration did not converge after {iterations} iterations (update {update:e})")]
    NoConvergence { iterations: usize, update: f64 },
    #[error("starting procedure: {0}")]
    Start(String),
    #[error("step size {h} does not divide the interval [{t0}, {tf}]")]
    StepMismatch { h: f64, t0: f64, tf: f64 },
    #[error("reference solution: {0}")]
    Reference(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error(transparent)]
    Extrap(#[from] ExtrapError),
}

pub type Result<T> = std::result::Result<T, IntegrateError>;

/// Linearization of the stiff part, either dense or banded.
#[derive(Debug, Clone, PartialEq)]
pub enum Jacobian {
    Dense(DenseMatrix<f64>),
    Banded(BandedMatrix),
}

impl Jacobian {
    pub fn dim(&self) -> usize {
        match self {
            Jacobian::Dense(m) => m.rows(),
            Jacobian::Banded(b) => b.dim(),
        }
    }

    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Jacobian::Dense(m) => m.mat_vec(x)?,
            Jacobian::Banded(b) => b.mat_vec(x)?,
        })
    }

    pub fn to_dense(&self) -> DenseMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m.clone(),
            Jacobian::Banded(b) => b.to_dense(),
        }
    }

    /// Factors `I - s J`.
    fn factor_shifted(&self, s: f64) -> Result<Factor> {
        Ok(match self {
            Jacobian::Dense(m) => {
                let n = m.rows();
                let shifted = DenseMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - s * m[(i, j)]);
                Factor::Dense(shifted.lu()?)
            }
            Jacobian::Banded(b) => Factor::Banded(b.identity_minus_scaled(s).lu()?),
        })
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Dense(Lu<f64>),
    Banded(BandedLu),
}

impl Factor {
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Factor::Dense(lu) => lu.solve(b)?,
            Factor::Banded(lu) => lu.solve(b)?,
        })
    }
}

/// Data held fixed over one step, such as a Jacobian evaluated at the
/// step's entry state.
#[derive(Debug, Clone, Default)]
pub struct Frozen {
    pub jacobian: Option<Arc<Jacobian>>,
}

/// Structure of the stiff part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GKind {
    /// `g(t, y) = J y + g(t, 0)` with `J` fixed over a step.
    Affine,
    Nonlinear,
}

/// A split initial-value problem `y' = f(t, y) + g(t, y)` with `f` treated
/// explicitly and `g` implicitly.
pub trait IvpProblem: Send + Sync {
    fn dim(&self) -> usize;

    /// `(t0, tf)`.
    fn span(&self) -> (f64, f64);

    fn initial_state(&self) -> Vec<f64>;

    /// Called once per step with the step's entry state.
    fn freeze(&self, _t: f64, _y: &[f64]) -> Result<Frozen> {
        Ok(Frozen::default())
    }

    /// Whether [`IvpProblem::freeze`] returns different data from step to
    /// step; `f` then depends on the frozen data and the previous stage
    /// values are re-evaluated after each freeze.
    fn refreezes(&self) -> bool {
        false
    }

    fn f(&self, t: f64, y: &[f64], frozen: &Frozen) -> Result<Vec<f64>>;

    fn g(&self, t: f64, y: &[f64], frozen: &Frozen) -> Result<Vec<f64>>;

    fn g_kind(&self) -> GKind {
        GKind::Affine
    }

    /// `∂g/∂y`; called at the step's entry state and kept for the step.
    fn g_jacobian(&self, t: f64, y: &[f64], frozen: &Frozen) -> Result<Arc<Jacobian>>;

    fn exact(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }

    /// `d^k y / dt^k` along the exact solution.
    fn derivative(&self, _k: usize, _t: f64) -> Option<Vec<f64>> {
        None
    }

    /// Unsplit right-hand side `f + g`.
    fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let frozen = self.freeze(t, y)?;
        let mut out = self.f(t, y, &frozen)?;
        for (o, v) in out.iter_mut().zip(self.g(t, y, &frozen)?) {
            *o += v;
        }
        Ok(out)
    }
}

/// Relative tolerance of the stage iteration.
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    if a != 0.0 {
        for (o, v) in out.iter_mut().zip(x) {
            *o += a * v;
        }
    }
}

/// Solver for `Y - h a g(t, Y) = rhs` with a cached factorization of
/// `I - h a J`.
#[derive(Debug, Clone, Default)]
pub struct StageSolver {
    jacobian: Option<Arc<Jacobian>>,
    factor: Option<(u64, Factor)>,
    /// Number of factorizations computed so far.
    pub factorizations: usize,
}

impl StageSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs the Jacobian for the coming step; the cached factorization
    /// survives only if it is the same matrix.
    pub fn set_jacobian(&mut self, j: Arc<Jacobian>) {
        if !self.jacobian.as_ref().is_some_and(|old| Arc::ptr_eq(old, &j)) {
            self.jacobian = Some(j);
            self.factor = None;
        }
    }

    fn factor(&mut self, ha: f64) -> Result<&Factor> {
        let key = ha.to_bits();
        if self.factor.as_ref().map_or(true, |(k, _)| *k != key) {
            let j = self
                .jacobian
                .as_ref()
                .ok_or_else(|| IntegrateError::Invalid("no Jacobian installed".into()))?;
            self.factor = Some((key, j.factor_shifted(ha)?));
            self.factorizations += 1;
        }
        Ok(&self.factor.as_ref().expect("factor just set").1)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        &mut self,
        problem: &dyn IvpProblem,
        frozen: &Frozen,
        t: f64,
        a_ii: f64,
        h: f64,
        rhs: &[f64],
        guess: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let ha = h * a_ii;
        if ha == 0.0 {
            return Ok(rhs.to_vec());
        }
        match problem.g_kind() {
            GKind::Affine => {
                let g0 = problem.g(t, &vec![0.0; rhs.len()], frozen)?;
                let mut b = rhs.to_vec();
                axpy(&mut b, ha, &g0);
                self.factor(ha)?.solve(&b)
            }
            GKind::Nonlinear => {
                let mut y = guess.map_or_else(|| rhs.to_vec(), <[f64]>::to_vec);
                let mut update = f64::INFINITY;
                for _ in 0..NEWTON_MAX_ITER {
                    let g = problem.g(t, &y, frozen)?;
                    let resid: Vec<f64> = y
                        .iter()
                        .zip(&g)
                        .zip(rhs)
                        .map(|((yi, gi), ri)| yi - ha * gi - ri)
                        .collect();
                    let delta = self.factor(ha)?.solve(&resid)?;
                    for (yi, di) in y.iter_mut().zip(&delta) {
                        *yi -= di;
                    }
                    if y.iter().any(|v| !v.is_finite()) {
                        break;
                    }
                    update = max_abs(&delta);
                    if update <= NEWTON_TOL * max_abs(&y).max(1.0) {
                        return Ok(y);
                    }
                }
                Err(IntegrateError::NoConvergence {
                    iterations: NEWTON_MAX_ITER,
                    update,
                })
            }
        }
    }
}

/// Solves one implicit stage equation `Y - h a_ii g(t, Y) = rhs` with the
/// Jacobian of `g` at `guess` (or `rhs`).
pub fn implicit_stage_solve(
    problem: &dyn IvpProblem,
    t: f64,
    a_ii: f64,
    h: f64,
    rhs: &[f64],
    guess: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if a_ii < 0.0 {
        return Err(IntegrateError::Invalid("diagonal coefficient must be nonnegative".into()));
    }
    let at = guess.unwrap_or(rhs);
    let frozen = problem.freeze(t, at)?;
    let mut solver = StageSolver::new();
    solver.set_jacobian(problem.g_jacobian(t, at, &frozen)?);
    solver.solve(problem, &frozen, t, a_ii, h, rhs, guess)
}

/// Weights `w` with `Σ_i w_i y_i^[n] = y(t_n) + O(h^p)`, i.e.
/// `wᵀ q_0 = 1` and `wᵀ q_k = 0` for `k = 1..p`, so that the read-off
/// error matches the global error order. `None` if the q-vectors admit no
/// such combination.
pub fn solution_weights(tableau: &GlmTableau) -> Option<Vec<f64>> {
    let r = tableau.r();
    let m = tableau.p.max(1).min(tableau.qvecs.len());
    // Normal equations of the consistent system Qᵀ w = e_1 (m × r).
    let qt = DenseMatrix::from_fn(m, r, |k, i| tableau.qvecs[k][i]);
    let rhs: Vec<f64> = (0..m).map(|k| f64::from(u8::from(k == 0))).collect();
    let w = if m >= r {
        let ata = qt.transpose().matmul(&qt).ok()?;
        ata.solve(&qt.transpose().mat_vec(&rhs).ok()?).ok()?
    } else {
        let aat = qt.matmul(&qt.transpose()).ok()?;
        qt.transpose().mat_vec(&aat.solve(&rhs).ok()?).ok()?
    };
    let resid = qt.mat_vec(&w).ok()?;
    let err = resid.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (err <= 1e-10).then_some(w)
}

/// Integrator state after step `n`.
#[derive(Debug, Clone)]
pub struct StepperState {
    pub n: usize,
    /// Time `t_n` of the external vectors.
    pub t: f64,
    pub h: f64,
    /// Start time; `t_n = t_start + n h`.
    pub t_start: f64,
    /// `y^[n]`, `r` blocks.
    pub external: Vec<Vec<f64>>,
    /// `Y^[n]`, the stages of the step that ended at `t_n`, `s` blocks.
    pub stages: Vec<Vec<f64>>,
    /// `f(Y^[n])`.
    pub stage_f: Vec<Vec<f64>>,
    frozen: Frozen,
    solver: StageSolver,
    readoff: Readoff,
}

/// How the solution at `t_n` is recovered from the stored values.
#[derive(Debug, Clone)]
enum Readoff {
    /// Stage with abscissa 1 lands on `t_n`.
    Stage(usize),
    Weights(Vec<f64>),
    First,
}

impl Readoff {
    fn for_tableau(tableau: &GlmTableau) -> Self {
        if let Some(i) = tableau.c.iter().position(|&c| (c - 1.0).abs() <= 1e-14) {
            return Readoff::Stage(i);
        }
        solution_weights(tableau).map_or(Readoff::First, Readoff::Weights)
    }
}

impl StepperState {
    /// State from explicit external and previous-stage values at time `t`.
    pub fn new(
        problem: &dyn IvpProblem,
        scheme: &ImexScheme,
        t: f64,
        h: f64,
        external: Vec<Vec<f64>>,
        stages: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(IntegrateError::Invalid(format!("step size {h} must be positive")));
        }
        let d = problem.dim();
        if external.len() != scheme.r()
            || stages.len() != scheme.s()
            || external.iter().chain(&stages).any(|v| v.len() != d)
        {
            return Err(IntegrateError::Invalid("block counts or sizes do not match the scheme".into()));
        }
        let readoff = Readoff::for_tableau(&scheme.base);
        let mut state = Self {
            n: 0,
            t,
            h,
            t_start: t,
            external,
            stages,
            stage_f: vec![],
            frozen: Frozen::default(),
            solver: StageSolver::new(),
            readoff,
        };
        state.frozen = problem.freeze(t, &state.solution())?;
        state.refresh_stage_f(problem, scheme)?;
        Ok(state)
    }

    fn refresh_stage_f(&mut self, problem: &dyn IvpProblem, scheme: &ImexScheme) -> Result<()> {
        let c = &scheme.base.c;
        self.stage_f = self
            .stages
            .iter()
            .zip(c)
            .map(|(y, ci)| problem.f(self.t + (ci - 1.0) * self.h, y, &self.frozen))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Approximation of `y(t_n)`: the stage with abscissa 1 when there is
    /// one, else a combination of the external vectors, else the first
    /// external block.
    pub fn solution(&self) -> Vec<f64> {
        match &self.readoff {
            Readoff::Stage(i) => self.stages[*i].clone(),
            Readoff::Weights(w) => {
                let mut out = vec![0.0; self.external[0].len()];
                for (wi, yi) in w.iter().zip(&self.external) {
                    axpy(&mut out, *wi, yi);
                }
                out
            }
            Readoff::First => self.external[0].clone(),
        }
    }

    pub fn factorizations(&self) -> usize {
        self.solver.factorizations
    }
}

/// `Σ_k q_k h^k y^(k)(t)` for each external block, from derivative values
/// `derivs[k] = y^(k)(t)`.
fn expansion(tableau: &GlmTableau, h: f64, derivs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = derivs[0].len();
    (0..tableau.r())
        .map(|i| {
            let mut out = vec![0.0; d];
            for (k, dk) in derivs.iter().enumerate() {
                axpy(&mut out, tableau.qvecs[k][i] * h.powi(k as i32), dk);
            }
            out
        })
        .collect()
}

/// The external vectors the method should carry at time `t` along the
/// exact solution, when the problem knows its derivatives.
pub fn exact_external(problem: &dyn IvpProblem, tableau: &GlmTableau, h: f64, t: f64) -> Option<Vec<Vec<f64>>> {
    let derivs = (0..=tableau.p).map(|k| problem.derivative(k, t)).collect::<Option<Vec<_>>>()?;
    Some(expansion(tableau, h, &derivs))
}

/// Fine-step classical Runge-Kutta values of the unsplit problem at the
/// given times (any order, all ≥ t0). Used only over a few steps at the
/// start; not suitable for stiff problems.
pub fn bootstrap_values(problem: &dyn IvpProblem, times: &[f64], max_substep: f64) -> Result<Vec<Vec<f64>>> {
    let (t0, _) = problem.span();
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = vec![vec![]; times.len()];
    let (mut t, mut y) = (t0, problem.initial_state());
    for idx in order {
        let target = times[idx];
        if target < t0 - 1e-14 * t0.abs().max(1.0) {
            return Err(IntegrateError::Start(format!("time {target} precedes the initial time")));
        }
        let span = target - t;
        let n = (span / max_substep).ceil().max(0.0) as usize;
        let dt = if n > 0 { span / n as f64 } else { 0.0 };
        for _ in 0..n {
            let k1 = problem.rhs(t, &y)?;
            let k2 = problem.rhs(t + 0.5 * dt, &shifted(&y, 0.5 * dt, &k1))?;
            let k3 = problem.rhs(t + 0.5 * dt, &shifted(&y, 0.5 * dt, &k2))?;
            let k4 = problem.rhs(t + dt, &shifted(&y, dt, &k3))?;
            for i in 0..y.len() {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += dt;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::Start(
                "bootstrap integration diverged; the problem needs a derivative oracle".into(),
            ));
        }
        t = target;
        out[idx] = y.clone();
    }
    Ok(out)
}

fn shifted(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect()
}

/// Starting-procedure settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StartOptions {
    /// Use the problem's derivative oracle when it has one.
    pub use_oracle: bool,
    /// Runge-Kutta substeps per step `h` for the reference start window.
    pub substeps_per_step: usize,
}

impl Default for StartOptions {
    fn default() -> Self {
        Self {
            use_oracle: true,
            substeps_per_step: 128,
        }
    }
}

/// Starting values for stepping with step size `h`.
///
/// With a derivative oracle, stepping begins at `t0` with
/// `y^[0] = Σ_k q_k h^k y^(k)(t0)` and exact previous stages at
/// `t0 + (c_k - 1) h`. Otherwise it begins at `t1 = t0 + h`: the stages are
/// reference values at `t0 + c_k h`, and the derivatives in the expansion of
/// `y^[1]` are finite differences on the nodes `t1 + j h/2`,
/// `j = -2, ..., 2p - 2`.
pub fn start(problem: &dyn IvpProblem, scheme: &ImexScheme, h: f64) -> Result<StepperState> {
    start_with(problem, scheme, h, &StartOptions::default())
}

pub fn start_with(problem: &dyn IvpProblem, scheme: &ImexScheme, h: f64, opts: &StartOptions) -> Result<StepperState> {
    if !(h > 0.0) {
        return Err(IntegrateError::Invalid(format!("step size {h} must be positive")));
    }
    let tab = &scheme.base;
    let (t0, _) = problem.span();
    if opts.use_oracle {
        if let Some(external) = exact_external(problem, tab, h, t0) {
            let stages = tab
                .c
                .iter()
                .map(|ci| problem.exact(t0 + (ci - 1.0) * h))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| IntegrateError::Start("derivative oracle without exact solution".into()))?;
            return StepperState::new(problem, scheme, t0, h, external, stages);
        }
    }
    if tab.c.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
        return Err(IntegrateError::Start("reference start needs abscissae in [0, 1]".into()));
    }
    let p = tab.p;
    let t1 = t0 + h;
    let offsets: Vec<f64> = (-2..=(2 * p as i64 - 2)).map(|j| j as f64 * h / 2.0).collect();
    let mut times: Vec<f64> = tab.c.iter().map(|c| t0 + c * h).collect();
    times.extend(offsets.iter().map(|o| t1 + o));
    let values = bootstrap_values(problem, &times, h / opts.substeps_per_step.max(1) as f64)?;
    let (stages, stencil) = values.split_at(tab.s());
    let mut derivs = Vec::with_capacity(p + 1);
    for k in 0..=p {
        let w = fd_weights(&offsets, k)?;
        let mut dk = vec![0.0; problem.dim()];
        for (wj, yj) in w.iter().zip(stencil) {
            axpy(&mut dk, *wj, yj);
        }
        derivs.push(dk);
    }
    let external = expansion(tab, h, &derivs);
    StepperState::new(problem, scheme, t1, h, external, stages.to_vec())
}

/// Advances the state by one step.
pub fn step(scheme: &ImexScheme, state: &mut StepperState, problem: &dyn IvpProblem) -> Result<()> {
    let tab = &scheme.base;
    let (s, r) = (tab.s(), tab.r());
    let (t, h) = (state.t, state.h);
    if state.n > 0 && problem.refreezes() {
        state.frozen = problem.freeze(t, &state.solution())?;
        state.refresh_stage_f(problem, scheme)?;
    }
    let entry = state.solution();
    state
        .solver
        .set_jacobian(problem.g_jacobian(t, &entry, &state.frozen)?);

    let d = problem.dim();
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut fs: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut gs: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let ti = t + tab.c[i] * h;
        let mut rhs = vec![0.0; d];
        for j in 0..s {
            axpy(&mut rhs, h * scheme.abar[(i, j)], &state.stage_f[j]);
        }
        for j in 0..i {
            axpy(&mut rhs, h * scheme.astar[(i, j)], &fs[j]);
            axpy(&mut rhs, h * tab.a[(i, j)], &gs[j]);
        }
        for j in 0..r {
            axpy(&mut rhs, tab.u[(i, j)], &state.external[j]);
        }
        let guess = if i > 0 { Some(stages[i - 1].as_slice()) } else { None };
        let yi = state
            .solver
            .solve(problem, &state.frozen, ti, tab.a[(i, i)], h, &rhs, guess)?;
        gs.push(problem.g(ti, &yi, &state.frozen)?);
        fs.push(problem.f(ti, &yi, &state.frozen)?);
        stages.push(yi);
    }
    let mut external = vec![vec![0.0; d]; r];
    for (i, out) in external.iter_mut().enumerate() {
        for j in 0..s {
            axpy(out, h * scheme.bbar[(i, j)], &state.stage_f[j]);
            axpy(out, h * scheme.bstar[(i, j)], &fs[j]);
            axpy(out, h * tab.b[(i, j)], &gs[j]);
        }
        for j in 0..r {
            axpy(out, tab.v[(i, j)], &state.external[j]);
        }
    }
    if external.iter().flatten().any(|v| !v.is_finite()) {
        return Err(IntegrateError::Problem(format!("non-finite solution at t = {}", t + h)));
    }
    state.external = external;
    state.stages = stages;
    state.stage_f = fs;
    state.n += 1;
    state.t = state.t_start + state.n as f64 * h;
    Ok(())
}

/// One entry of the optional per-step trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    /// Euclidean norm of the stacked external vectors.
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrationResult {
    pub t: f64,
    pub steps: usize,
    /// `y^[N]`.
    pub external: Vec<Vec<f64>>,
    /// Read-off approximation of `y(t_f)`.
    pub solution: Vec<f64>,
    pub trace: Option<Vec<TraceRow>>,
}

/// Number of steps of size `h` in `[t_start, tf]`; `h` must divide the
/// interval up to rounding.
pub fn step_count(t_start: f64, tf: f64, h: f64) -> Result<usize> {
    let n = (tf - t_start) / h;
    let rounded = n.round();
    if !(h > 0.0) || rounded < 0.0 || (n - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(IntegrateError::StepMismatch { h, t0: t_start, tf });
    }
    Ok(rounded as usize)
}

/// Runs a started state to the end of the problem's interval.
pub fn run_to_end(
    scheme: &ImexScheme,
    mut state: StepperState,
    problem: &dyn IvpProblem,
    trace: bool,
) -> Result<IntegrationResult> {
    let (_, tf) = problem.span();
    let n = step_count(state.t, tf, state.h)?;
    let mut rows = trace.then(Vec::new);
    for _ in 0..n {
        step(scheme, &mut state, problem)?;
        if let Some(rows) = rows.as_mut() {
            let norm = state.external.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
            rows.push(TraceRow {
                step: state.n,
                t: state.t,
                norm,
            });
        }
    }
    Ok(IntegrationResult {
        t: state.t,
        steps: state.n,
        solution: state.solution(),
        external: state.external,
        trace: rows,
    })
}

/// Starts and integrates over the whole interval with fixed step `h`.
pub fn integrate(problem: &dyn IvpProblem, scheme: &ImexScheme, h: f64, trace: bool) -> Result<IntegrationResult> {
    let state = start(problem, scheme, h)?;
    run_to_end(scheme, state, problem, trace)
}

/// The scheme used for reference solutions: fourth-order DIMSIM with the
/// right-angle extrapolation parameters.
pub fn reference_scheme() -> Result<ImexScheme> {
    let family = MethodFamily::Dimsim4;
    Ok(ImexScheme::for_family(&family, &right_angle_beta(&family))?)
}

/// Reference values at the requested times from a fixed-step fourth-order
/// run with step `h_ref`. Times before the run's first step come from the
/// starting procedure's bootstrap; the rest must lie on the step lattice.
pub fn reference_solve(problem: &dyn IvpProblem, t_grid: &[f64], h_ref: f64) -> Result<Vec<Vec<f64>>> {
    let scheme = reference_scheme()?;
    let (t0, tf) = problem.span();
    let mut state = start(problem, &scheme, h_ref)?;
    let mut order: Vec<usize> = (0..t_grid.len()).collect();
    order.sort_by(|&a, &b| t_grid[a].total_cmp(&t_grid[b]));
    let mut out = vec![vec![]; t_grid.len()];
    for idx in order {
        let t = t_grid[idx];
        if t < t0 - 1e-12 || t > tf + 1e-9 * tf.abs().max(1.0) {
            return Err(IntegrateError::Reference(format!("time {t} outside [{t0}, {tf}]")));
        }
        if t < state.t_start - 1e-12 * t.abs().max(1.0) {
            out[idx] = bootstrap_values(problem, &[t], h_ref / 128.0)?.remove(0);
            continue;
        }
        let n = step_count(state.t, t, h_ref).map_err(|_| {
            IntegrateError::Reference(format!("time {t} is not on the reference step lattice"))
        })?;
        for _ in 0..n {
            step(&scheme, &mut state, problem)?;
        }
        out[idx] = state.solution();
    }
    Ok(out)
}

/// Reference value at `tf` with a self-convergence check: the runs at
/// `h_ref` and `h_ref/2` must differ by at most `tol`.
pub fn checked_reference(problem: &dyn IvpProblem, h_ref: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    let (_, tf) = problem.span();
    let runs: Vec<Result<Vec<f64>>> = workers::pool().install(|| {
        [h_ref, h_ref / 2.0]
            .par_iter()
            .map(|&h| Ok(reference_solve(problem, &[tf], h)?.remove(0)))
            .collect()
    });
    let mut runs = runs.into_iter();
    let coarse = runs.next().expect("two runs")?;
    let fine = runs.next().expect("two runs")?;
    let diff = l2(&coarse, &fine);
    if !(diff <= tol) {
        return Err(IntegrateError::Reference(format!(
            "halving h_ref changed the reference by {diff:e} > {tol:e}"
        )));
    }
    Ok((fine, diff))
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// How errors are measured in a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorMeasure {
    /// `max_i ‖y_i^[N] - Σ_k q_ik h^k y^(k)(t_f)‖_∞` from the derivative
    /// oracle.
    Expansion,
    /// Euclidean distance of the read-off solution from a reference state.
    Terminal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub scheme: String,
    pub h: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log h`, per scheme.
    pub slopes: Vec<(String, f64)>,
}

impl ConvergenceTable {
    pub fn slope(&self, scheme: &str) -> Option<f64> {
        self.slopes.iter().find(|(s, _)| s == scheme).map(|(_, v)| *v)
    }

    /// CSV with columns `scheme,h,error,slope`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,h,error,slope\n");
        for row in &self.rows {
            let slope = self.slope(&row.scheme).unwrap_or(f64::NAN);
            out.push_str(&format!("{},{:.16e},{:.16e},{:.16e}\n", row.scheme, row.h, row.error, slope));
        }
        out
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Error of one run under the given measure.
pub fn run_error(problem: &dyn IvpProblem, scheme: &ImexScheme, h: f64, measure: &ErrorMeasure) -> Result<f64> {
    let res = integrate(problem, scheme, h, false)?;
    match measure {
        ErrorMeasure::Expansion => {
            let target = exact_external(problem, &scheme.base, h, res.t)
                .ok_or_else(|| IntegrateError::Invalid("expansion norm needs a derivative oracle".into()))?;
            Ok(res
                .external
                .iter()
                .zip(&target)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max))
        }
        ErrorMeasure::Terminal(reference) => Ok(l2(&res.solution, reference)),
    }
}

/// Errors for every `(scheme, h)` pair and per-scheme observed orders.
/// Runs are independent and evaluated on the worker pool.
pub fn convergence_study(
    problem: &dyn IvpProblem,
    schemes: &[(String, ImexScheme)],
    hs: &[f64],
    measure: &ErrorMeasure,
) -> Result<ConvergenceTable> {
    if hs.len() < 2 {
        return Err(IntegrateError::Invalid("need at least two step sizes".into()));
    }
    for w in hs.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(IntegrateError::Invalid("step sizes must halve successively".into()));
        }
    }
    let jobs: Vec<(usize, f64)> = (0..schemes.len()).flat_map(|i| hs.iter().map(move |&h| (i, h))).collect();
    let errors: Vec<Result<f64>> = workers::pool().install(|| {
        jobs.par_iter()
            .map(|&(i, h)| run_error(problem, &schemes[i].1, h, measure))
            .collect()
    });
    let mut rows = Vec::with_capacity(jobs.len());
    for (&(i, h), e) in jobs.iter().zip(errors) {
        rows.push(ConvergenceRow {
            scheme: schemes[i].0.clone(),
            h,
            error: e?,
        });
    }
    let slopes = schemes
        .iter()
        .map(|(name, _)| {
            let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| &r.scheme == name).map(|r| (r.h, r.error)).unzip();
            (name.clone(), loglog_slope(&x, &y))
        })
        .collect();
    Ok(ConvergenceTable { rows, slopes })
}
