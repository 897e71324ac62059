//! The unmodified 3-block ADMM.
//!
//! One sweep updates `x1`, then `x2` (using the new `x1`), then `x3`, then
//! the multiplier:
//!
//! ```text
//! x1 <- argmin f1(x1) + (g/2) ||A1 x1 + A2 x2 + x3 - b - lambda/g||^2
//! x2 <- argmin f2(x2) + (g/2) ||A1 x1 + A2 x2 + x3 - b - lambda/g||^2
//! x3 <- (lambda - g (A1 x1 + A2 x2 - b)) / (g + 1)          (f3 = 0.5||.||^2)
//! lambda <- lambda - g (A1 x1 + A2 x2 + x3 - b)
//! ```
//!
//! For a quadratic `f3` the `x3` step solves `(Q + g I) x3 = lambda - g s - q`.
//! No proximal terms, no relaxation of the dual step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::diagnostics::CertificateReport;
use crate::error::{Error, Result};
use crate::problem::{BlockMap, KktResidual, MapKind, RlsdProblem, StronglyConvexSmooth, F3};
use crate::regularizers::Regularizer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gamma: f64,
    pub max_iter: usize,
    pub tol_kkt: f64,
    pub inner: InnerConfig,
    pub record_trace: bool,
    /// Keep every iterate in the trace; the potential-based certificates need them.
    pub store_iterates: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            tol: 1e-10,
            max_iter: 2000,
        }
    }
}

impl SolverConfig {
    pub fn new(gamma: f64) -> Self {
        SolverConfig {
            gamma,
            max_iter: 10_000,
            tol_kkt: 1e-8,
            inner: InnerConfig::default(),
            record_trace: false,
            store_iterates: false,
        }
    }

    pub fn with_trace(mut self, store_iterates: bool) -> Self {
        self.record_trace = true;
        self.store_iterates = store_iterates;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.gamma) {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !positive(self.tol_kkt) || !positive(self.inner.tol) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_iter == 0 || self.inner.max_iter == 0 {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub k: usize,
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
    pub x3: DVector<f64>,
    pub lambda: DVector<f64>,
    /// `A1 x1 + A2 x2 + x3 - b`
    pub residual: DVector<f64>,
}

impl IterateState {
    /// `x1 = x2 = 0` (projected onto their boxes), `x3 = argmin f3`,
    /// `lambda = 0`. For both `f3` families this makes `grad f3(x3) = lambda`
    /// hold from the first iterate on.
    pub fn initial(p: &RlsdProblem) -> Result<Self> {
        let x1 = p.block1().initial_point()?;
        let x2 = p.block2().initial_point()?;
        let x3 = p.f3().minimizer(p.dim())?;
        let lambda = DVector::zeros(p.dim());
        let residual = p.residual(&x1, &x2, &x3)?;
        Ok(IterateState {
            k: 0,
            x1,
            x2,
            x3,
            lambda,
            residual,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIterations,
    NumericalFailure,
}

/// Per-iteration scalars. `d_*` are the step norms `||A1 dx1||`,
/// `||A2 dx2||`, `||dx3||` and `||d lambda||` into iterate `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub objective: f64,
    pub lagrangian: f64,
    pub primal_residual: f64,
    pub kkt_max: f64,
    pub d_x1: f64,
    pub d_x2: f64,
    pub d_x3: f64,
    pub d_lambda: f64,
}

impl TraceRecord {
    pub fn step_norms_sq(&self) -> f64 {
        self.d_x1 * self.d_x1 + self.d_x2 * self.d_x2 + self.d_x3 * self.d_x3
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// Empty unless the run stored iterates; otherwise `iterates[k]` is `w^k`.
    pub iterates: Vec<IterateState>,
}

impl Trace {
    pub fn has_iterates(&self) -> bool {
        !self.iterates.is_empty() && self.iterates.len() == self.records.len()
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub state: IterateState,
    pub status: Status,
    pub iterations: usize,
    pub kkt: KktResidual,
    pub objective: f64,
    pub trace: Option<Trace>,
    pub failure: Option<String>,
    pub certificate: Option<CertificateReport>,
}

/// `x3 = (lambda - gamma * s) / (gamma + 1)` with `s = A1 x1 + A2 x2 - b`.
pub fn update_x3_closed_form(lambda: &DVector<f64>, s: &DVector<f64>, gamma: f64) -> DVector<f64> {
    (lambda - s * gamma) / (gamma + 1.0)
}

/// Factorization of `Q + gamma I`, reused across sweeps.
pub struct X3Factor(Cholesky<f64, Dyn>);

impl X3Factor {
    pub fn new(f3: &StronglyConvexSmooth, gamma: f64) -> Result<Self> {
        let n = f3.dim();
        let m = f3.q_matrix() + DMatrix::identity(n, n) * gamma;
        Cholesky::new(m)
            .map(X3Factor)
            .ok_or_else(|| Error::Numerical("Cholesky factorization of Q + gamma I failed".into()))
    }
}

/// Solves `(Q + gamma I) x3 = lambda - gamma s - q`.
pub fn update_x3_general(
    f3: &StronglyConvexSmooth,
    lambda: &DVector<f64>,
    s: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    let factor = X3Factor::new(f3, gamma)?;
    Ok(update_x3_factored(f3, &factor, lambda, s, gamma))
}

fn update_x3_factored(
    f3: &StronglyConvexSmooth,
    factor: &X3Factor,
    lambda: &DVector<f64>,
    s: &DVector<f64>,
    gamma: f64,
) -> DVector<f64> {
    let rhs = lambda - s * gamma - f3.q_vector();
    factor.0.solve(&rhs)
}

/// Minimizes `f(x) + (gamma/2) ||A x + others||^2` over the regularizer's box.
///
/// With `A^T A = c I` the square completes and the answer is
/// `prox_{f/(gamma c)}(-A^T others / c)`. Other maps run an accelerated
/// proximal gradient loop, warm-started at `warm`, until the prox-gradient
/// gap drops below `inner.tol`.
pub fn update_block(
    map: &BlockMap,
    reg: Option<&Regularizer>,
    others: &DVector<f64>,
    gamma: f64,
    inner: &InnerConfig,
    warm: &DVector<f64>,
) -> Result<DVector<f64>> {
    let reg = match reg {
        None => return Ok(DVector::zeros(0)),
        Some(r) if !map.is_empty() => r,
        Some(_) => return Ok(DVector::zeros(0)),
    };
    let target = map.apply_transpose(others)?;
    match (map.orthogonal_scale(), map.kind()) {
        (Some(c), _) => reg.prox(&(target / -c), 1.0 / (gamma * c)),
        (None, MapKind::EntryMask { mask, .. }) if reg.is_separable() => {
            masked_separable(mask, reg, &target, gamma, warm)
        }
        _ => accelerated_prox_gradient(map, reg, others, gamma, inner, warm),
    }
}

/// Entry mask with a coordinatewise regularizer: observed coordinates take
/// the scalar prox, unobserved ones minimize `f` alone. Where that minimizer
/// is not unique (no weight) the warm start is kept, projected.
fn masked_separable(
    mask: &[bool],
    reg: &Regularizer,
    target: &DVector<f64>,
    gamma: f64,
    warm: &DVector<f64>,
) -> Result<DVector<f64>> {
    let observed = reg.prox(&-target, 1.0 / gamma)?;
    let free = if reg.weight() > 0.0 {
        reg.prox(&DVector::zeros(target.len()), 1.0)?
    } else {
        reg.prox(warm, 1.0)?
    };
    Ok(DVector::from_fn(target.len(), |i, _| {
        if mask[i] {
            observed[i]
        } else {
            free[i]
        }
    }))
}

fn accelerated_prox_gradient(
    map: &BlockMap,
    reg: &Regularizer,
    others: &DVector<f64>,
    gamma: f64,
    inner: &InnerConfig,
    warm: &DVector<f64>,
) -> Result<DVector<f64>> {
    let step = 1.0 / (gamma * map.spectral_norm_sq());
    let grad = |y: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(map.apply_transpose(&(map.apply(y)? + others))? * gamma)
    };
    let mut x = reg.prox(warm, step)?;
    let mut y = x.clone();
    let mut theta = 1.0_f64;
    let mut gap = f64::INFINITY;
    for _ in 0..inner.max_iter {
        let x_next = reg.prox(&(&y - grad(&y)? * step), step)?;
        // The gap at x_next is at most twice the gradient-mapping norm at y.
        gap = 2.0 * (&x_next - &y).norm();
        if gap <= inner.tol {
            return Ok(x_next);
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let moving_back = (&y - &x_next).dot(&(&x_next - &x)) > 0.0;
        if moving_back {
            theta = 1.0;
            y = x_next.clone();
        } else {
            y = &x_next + (&x_next - &x) * ((theta - 1.0) / theta_next);
            theta = theta_next;
        }
        x = x_next;
    }
    Err(Error::InnerSolve {
        iterations: inner.max_iter,
        gap,
    })
}

/// A solver bound to one problem and configuration.
pub struct Admm<'a> {
    problem: &'a RlsdProblem,
    cfg: SolverConfig,
    x3_factor: Option<X3Factor>,
}

impl<'a> Admm<'a> {
    pub fn new(problem: &'a RlsdProblem, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let x3_factor = match problem.f3() {
            F3::Canonical => None,
            F3::Quadratic(q) => Some(X3Factor::new(q, cfg.gamma)?),
        };
        Ok(Admm {
            problem,
            cfg,
            x3_factor,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// One Gauss-Seidel sweep followed by the multiplier update.
    pub fn step(&self, state: &IterateState) -> Result<IterateState> {
        let p = self.problem;
        let g = self.cfg.gamma;
        let (b1, b2) = (p.block1(), p.block2());
        let shift = &state.x3 - p.b() - &state.lambda / g;

        let a2x2_old = b2.map().apply(&state.x2)?;
        let others1 = &a2x2_old + &shift;
        let x1 = update_block(b1.map(), b1.regularizer(), &others1, g, &self.cfg.inner, &state.x1)?;
        let a1x1 = b1.map().apply(&x1)?;

        let others2 = &a1x1 + &shift;
        let x2 = update_block(b2.map(), b2.regularizer(), &others2, g, &self.cfg.inner, &state.x2)?;
        let a2x2 = b2.map().apply(&x2)?;

        let s = &a1x1 + &a2x2 - p.b();
        let x3 = match (p.f3(), &self.x3_factor) {
            (F3::Quadratic(q), Some(f)) => update_x3_factored(q, f, &state.lambda, &s, g),
            _ => update_x3_closed_form(&state.lambda, &s, g),
        };
        let residual = s + &x3;
        let lambda = &state.lambda - &residual * g;
        if !lambda.iter().chain(x1.iter()).chain(x2.iter()).all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite iterate at k = {}", state.k + 1)));
        }
        Ok(IterateState {
            k: state.k + 1,
            x1,
            x2,
            x3,
            lambda,
            residual,
        })
    }

    fn record(&self, state: &IterateState, prev: Option<&IterateState>, kkt: &KktResidual) -> Result<TraceRecord> {
        let p = self.problem;
        let objective = p.objective(&state.x1, &state.x2, &state.x3)?;
        let lagrangian = objective - state.lambda.dot(&state.residual)
            + 0.5 * self.cfg.gamma * state.residual.norm_squared();
        let (d_x1, d_x2, d_x3, d_lambda) = match prev {
            None => (0.0, 0.0, 0.0, 0.0),
            Some(prev) => (
                p.block1().map().apply(&(&state.x1 - &prev.x1))?.norm(),
                p.block2().map().apply(&(&state.x2 - &prev.x2))?.norm(),
                (&state.x3 - &prev.x3).norm(),
                (&state.lambda - &prev.lambda).norm(),
            ),
        };
        Ok(TraceRecord {
            k: state.k,
            objective,
            lagrangian,
            primal_residual: state.residual.norm(),
            kkt_max: kkt.max,
            d_x1,
            d_x2,
            d_x3,
            d_lambda,
        })
    }

    fn kkt(&self, s: &IterateState) -> Result<KktResidual> {
        self.problem.kkt_residual(&s.x1, &s.x2, &s.x3, &s.lambda)
    }

    /// Runs until the KKT residual reaches `tol_kkt` or `max_iter` sweeps.
    pub fn solve(&self) -> Result<SolveResult> {
        self.run(self.cfg.max_iter, true)
    }

    /// Runs exactly `iterations` sweeps (or until a numerical failure),
    /// ignoring the stopping rule. Used to replay a recorded run.
    pub fn run_for(&self, iterations: usize) -> Result<SolveResult> {
        self.run(iterations, false)
    }

    fn run(&self, iterations: usize, stop_on_tol: bool) -> Result<SolveResult> {
        let mut state = IterateState::initial(self.problem)?;
        let mut kkt = self.kkt(&state)?;
        let mut trace = self.cfg.record_trace.then(Trace::default);
        if let Some(t) = trace.as_mut() {
            t.records.push(self.record(&state, None, &kkt)?);
            if self.cfg.store_iterates {
                t.iterates.push(state.clone());
            }
        }
        let mut status = Status::MaxIterations;
        let mut failure = None;
        for _ in 0..iterations {
            let next = match self.step(&state) {
                Ok(s) => s,
                Err(e @ (Error::InnerSolve { .. } | Error::Numerical(_))) => {
                    status = Status::NumericalFailure;
                    failure = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            };
            kkt = self.kkt(&next)?;
            if let Some(t) = trace.as_mut() {
                t.records.push(self.record(&next, Some(&state), &kkt)?);
                if self.cfg.store_iterates {
                    t.iterates.push(next.clone());
                }
            }
            state = next;
            if stop_on_tol && kkt.max <= self.cfg.tol_kkt {
                status = Status::Converged;
                break;
            }
        }
        if status == Status::MaxIterations && kkt.max <= self.cfg.tol_kkt {
            status = Status::Converged;
        }
        let objective = self.problem.objective(&state.x1, &state.x2, &state.x3)?;
        Ok(SolveResult {
            iterations: state.k,
            state,
            status,
            kkt,
            objective,
            trace,
            failure,
            certificate: None,
        })
    }
}

pub fn solve(p: &RlsdProblem, cfg: &SolverConfig) -> Result<SolveResult> {
    Admm::new(p, cfg.clone())?.solve()
}

pub fn step(p: &RlsdProblem, cfg: &SolverConfig, state: &IterateState) -> Result<IterateState> {
    Admm::new(p, cfg.clone())?.step(state)
}
