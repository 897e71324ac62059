//! Runtime certificates for the convergence proofs.
//!
//! Each checker evaluates, on a recorded run, a quantity the analysis shows
//! to be monotone or bounded, and reports the worst excess over the bound
//! together with the iteration at which it happened. A violation between
//! iterates `k` and `k+1` is reported at `k+1`, so a single corrupted entry
//! is flagged at its own index.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gamma::{canonical_theorem_coverage, CanonicalTheorem, GammaRangeParams};
use crate::problem::{RlsdProblem, F3};
use crate::solver::{Admm, IterateState, SolverConfig, Trace, TraceRecord};

/// Relative slack for monotonicity and bound checks.
pub const SLACK: f64 = 1e-9;
/// Tolerance of the canonical `x3 = lambda` identity, relative to `1 + ||lambda||`.
pub const IDENTITY_TOL: f64 = 1e-10;
/// A reference point must reach this KKT residual to be accepted.
pub const REFERENCE_KKT_TOL: f64 = 1e-11;
/// Target KKT residual of the reference run.
pub const REFERENCE_KKT_TARGET: f64 = 1e-12;
pub const REFERENCE_MAX_ITER: usize = 200_000;
/// Sweeps without improvement after which the reference run stops.
pub const REFERENCE_STALL: usize = 500;
/// Penalty levels tried by the reference run.
pub const REFERENCE_STAGES: usize = 3;
/// Weight of the `x3` step term in the canonical small-gamma potential.
pub const CANONICAL_LOW_EPSILON: f64 = 3.0;

/// `min{gamma/2, (gamma + sigma)/2 - L^2/gamma}`; positive exactly when the
/// augmented Lagrangian descent bound is informative.
pub fn decrease_margin(gamma: f64, sigma: f64, lipschitz: f64) -> f64 {
    (gamma / 2.0).min((gamma + sigma) / 2.0 - lipschitz * lipschitz / gamma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Canonical `f3`, `gamma > 1`.
    High,
    /// Canonical `f3`, `gamma in (sqrt(2) - 1, 1]`.
    Mid,
    /// Canonical `f3`, `gamma in (0, 1/2]`.
    Low,
    /// Quadratic `f3`, `gamma > (sqrt(s^2 + 8 L^2) - s)/2`.
    ExtendedHigh,
    /// Quadratic `f3`, `gamma` in one of the two bounded admissible intervals.
    ExtendedRange,
    Uncertified,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The inequality or identity being monitored.
    pub anchor: String,
    pub pass: bool,
    /// Largest excess over the bound before slack; zero when never exceeded.
    pub worst_violation: f64,
    /// First failing iteration, or the iteration of the worst excess.
    pub at_iteration: Option<usize>,
}

/// Accumulates per-iteration excesses for one check.
struct Tally {
    worst: f64,
    worst_at: Option<usize>,
    first_fail: Option<usize>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            worst: 0.0,
            worst_at: None,
            first_fail: None,
        }
    }

    fn observe(&mut self, k: usize, excess: f64, slack: f64) {
        let excess = if excess.is_nan() { f64::INFINITY } else { excess.max(0.0) };
        if excess > self.worst {
            self.worst = excess;
            self.worst_at = Some(k);
        }
        if excess > slack && self.first_fail.is_none() {
            self.first_fail = Some(k);
        }
    }

    fn finish(self, name: &str, anchor: &str) -> Check {
        Check {
            name: name.into(),
            anchor: anchor.into(),
            pass: self.first_fail.is_none(),
            worst_violation: self.worst,
            at_iteration: self.first_fail.or(self.worst_at),
        }
    }
}

pub const CHECK_DESCENT: &str = "lagrangian_descent";
pub const CHECK_LOWER_BOUND: &str = "lagrangian_lower_bound";
pub const CHECK_SUMMABLE: &str = "step_norms_summable";
pub const CHECK_MID: &str = "potential_nonincreasing";
pub const CHECK_LOW: &str = "potential_with_x3_step_nonincreasing";
pub const CHECK_X3_LAMBDA: &str = "x3_equals_lambda";
pub const CHECK_GRADIENT: &str = "gradient_f3_equals_lambda";
pub const CHECK_LIPSCHITZ: &str = "lambda_step_lipschitz";
pub const CHECK_REPLAY: &str = "trace_replay_consistency";

fn require_records(trace: &Trace) -> Result<&[TraceRecord]> {
    if trace.records.is_empty() {
        return Err(Error::InvalidInput("trace has no records".into()));
    }
    Ok(&trace.records)
}

fn require_iterates<'a>(trace: &'a Trace, what: &str) -> Result<&'a [IterateState]> {
    if !trace.has_iterates() {
        return Err(Error::InvalidInput(format!(
            "the {what} check needs the stored iterates of the run"
        )));
    }
    Ok(&trace.iterates)
}

/// Lower bound `L*` of the augmented Lagrangian along the iterates.
pub fn lagrangian_lower_bound(p: &RlsdProblem) -> f64 {
    p.regularizer_lower_bound() + p.f3().lower_bound()
}

/// Descent, lower-bound and summability checks valid above the high-gamma
/// threshold. Only the scalar trace columns are used.
pub fn check_high_gamma(trace: &Trace, p: &RlsdProblem, gamma: f64) -> Result<Vec<Check>> {
    let recs = require_records(trace)?;
    let m = decrease_margin(gamma, p.f3().sigma(), p.f3().lipschitz());
    if !(m > 0.0) {
        return Err(Error::NotApplicable(format!(
            "descent margin {m} is not positive at gamma = {gamma}"
        )));
    }
    let l0 = recs[0].lagrangian;
    let slack = SLACK * (1.0 + l0.abs());
    let l_star = lagrangian_lower_bound(p);

    let mut descent = Tally::new();
    for w in recs.windows(2) {
        let drop = w[0].lagrangian - w[1].lagrangian;
        descent.observe(w[1].k, m * w[1].step_norms_sq() - drop, slack);
    }

    let mut lower = Tally::new();
    for r in recs {
        lower.observe(r.k, l_star - r.lagrangian, slack);
    }

    // sum_k M ||steps||^2 <= L0 - L*; each transition may lose `slack`.
    let mut summable = Tally::new();
    let mut acc = 0.0;
    for (i, r) in recs.iter().enumerate().skip(1) {
        acc += r.step_norms_sq();
        let budget = (l0 - l_star + i as f64 * slack) / m;
        summable.observe(r.k, acc - budget, 0.0);
    }

    Ok(vec![
        descent.finish(
            CHECK_DESCENT,
            "L(w^k) - L(w^k+1) >= M (|A1 dx1|^2 + |A2 dx2|^2 + |dx3|^2)",
        ),
        lower.finish(CHECK_LOWER_BOUND, "L(w^k) >= f1* + f2* + f3*"),
        summable.finish(CHECK_SUMMABLE, "sum_k |steps|^2 <= (L(w^0) - L*)/M"),
    ])
}

/// A high-accuracy primal-dual point used as the centre of the potentials.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
    pub x3: DVector<f64>,
    pub lambda: DVector<f64>,
    pub provenance: String,
    pub kkt_max: f64,
}

#[derive(Serialize, Deserialize)]
struct ReferenceRepr {
    x1: Vec<f64>,
    x2: Vec<f64>,
    x3: Vec<f64>,
    lambda: Vec<f64>,
    provenance: String,
    kkt_max: f64,
}

impl Serialize for ReferenceSolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ReferenceRepr {
            x1: self.x1.as_slice().to_vec(),
            x2: self.x2.as_slice().to_vec(),
            x3: self.x3.as_slice().to_vec(),
            lambda: self.lambda.as_slice().to_vec(),
            provenance: self.provenance.clone(),
            kkt_max: self.kkt_max,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReferenceSolution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ReferenceRepr::deserialize(d)?;
        Ok(ReferenceSolution {
            x1: DVector::from_vec(r.x1),
            x2: DVector::from_vec(r.x2),
            x3: DVector::from_vec(r.x3),
            lambda: DVector::from_vec(r.lambda),
            provenance: r.provenance,
            kkt_max: r.kkt_max,
        })
    }
}

impl ReferenceSolution {
    /// Checks dimensions against `p` and that the point is accurate enough.
    pub fn validate(&self, p: &RlsdProblem) -> Result<()> {
        let dims = [
            ("reference x1", p.block1().dim(), self.x1.len()),
            ("reference x2", p.block2().dim(), self.x2.len()),
            ("reference x3", p.dim(), self.x3.len()),
            ("reference lambda", p.dim(), self.lambda.len()),
        ];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(Error::dims(what, expected, got));
            }
        }
        let kkt = p.kkt_residual(&self.x1, &self.x2, &self.x3, &self.lambda)?;
        if !(kkt.max <= REFERENCE_KKT_TOL) {
            return Err(Error::InvalidInput(format!(
                "reference KKT residual {:e} exceeds {REFERENCE_KKT_TOL:e}",
                kkt.max
            )));
        }
        Ok(())
    }
}

/// Penalty used for the reference run: 2 for the canonical `f3`, and at
/// least twice the high-gamma threshold otherwise.
pub fn reference_gamma(p: &RlsdProblem) -> f64 {
    match p.f3() {
        F3::Canonical => 2.0,
        F3::Quadratic(q) => {
            let (s, l) = (q.sigma(), q.lipschitz());
            let threshold = ((s * s + 8.0 * l * l).sqrt() - s) / 2.0;
            (2.0 * threshold).max(2.0)
        }
    }
}

/// Long run at [`reference_gamma`] until the KKT residual reaches `1e-12`.
///
/// Rounding in the multiplier update grows with `gamma`, so on data of large
/// magnitude the residual can stall above the target. After
/// [`REFERENCE_STALL`] sweeps without improvement the run continues from its
/// best iterate at a quarter of the penalty, up to [`REFERENCE_STAGES`]
/// times. The best iterate is accepted if it is below `1e-11`.
pub fn compute_reference(p: &RlsdProblem) -> Result<ReferenceSolution> {
    let gamma0 = reference_gamma(p);
    let kkt = |s: &IterateState| p.kkt_residual(&s.x1, &s.x2, &s.x3, &s.lambda).map(|r| r.max);
    let mut state = IterateState::initial(p)?;
    let mut best = (kkt(&state)?, state.clone());
    let mut total = 0;
    let mut gammas = Vec::new();
    for stage in 0..REFERENCE_STAGES {
        if best.0 <= REFERENCE_KKT_TARGET || total >= REFERENCE_MAX_ITER {
            break;
        }
        let gamma = gamma0 / 4f64.powi(stage as i32);
        gammas.push(gamma);
        let mut cfg = SolverConfig::new(gamma);
        cfg.inner.tol = 1e-13;
        cfg.inner.max_iter = 20_000;
        let admm = Admm::new(p, cfg)?;
        state = best.1.clone();
        let mut since_best = 0;
        while best.0 > REFERENCE_KKT_TARGET && total < REFERENCE_MAX_ITER {
            state = admm.step(&state)?;
            total += 1;
            let r = kkt(&state)?;
            if r < best.0 {
                best = (r, state.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= REFERENCE_STALL {
                    break;
                }
            }
        }
    }
    let (kkt_max, s) = best;
    if !(kkt_max <= REFERENCE_KKT_TOL) {
        return Err(Error::Numerical(format!(
            "reference run stalled at KKT residual {kkt_max:e} after {total} iterations"
        )));
    }
    let gammas: Vec<String> = gammas.iter().map(|g| g.to_string()).collect();
    Ok(ReferenceSolution {
        provenance: format!(
            "ADMM at gamma = {}, best of {total} iterations, target KKT {REFERENCE_KKT_TARGET:e}",
            gammas.join(" then ")
        ),
        x1: s.x1,
        x2: s.x2,
        x3: s.x3,
        lambda: s.lambda,
        kkt_max,
    })
}

/// `(1/2g)||lambda - lambda*||^2 + (g/2)||A2 x2 - A2 x2*||^2 + (g/2)||x3 - x3*||^2`.
pub fn lyapunov_mid(
    p: &RlsdProblem,
    state: &IterateState,
    reference: &ReferenceSolution,
    gamma: f64,
) -> Result<f64> {
    let a2 = p.block2().map().apply(&(&state.x2 - &reference.x2))?;
    Ok((&state.lambda - &reference.lambda).norm_squared() / (2.0 * gamma)
        + 0.5 * gamma * a2.norm_squared()
        + 0.5 * gamma * (&state.x3 - &reference.x3).norm_squared())
}

/// [`lyapunov_mid`] plus `(g eps/2)||x3^k - x3^(k-1)||^2`.
pub fn lyapunov_low(
    p: &RlsdProblem,
    state: &IterateState,
    prev: &IterateState,
    reference: &ReferenceSolution,
    gamma: f64,
    epsilon: f64,
) -> Result<f64> {
    Ok(lyapunov_mid(p, state, reference, gamma)?
        + 0.5 * gamma * epsilon * (&state.x3 - &prev.x3).norm_squared())
}

fn nonincreasing(values: &[(usize, f64)], name: &str, anchor: &str) -> Check {
    let mut t = Tally::new();
    for w in values.windows(2) {
        let slack = SLACK * (1.0 + w[0].1.abs());
        t.observe(w[1].0, w[1].1 - w[0].1, slack);
    }
    t.finish(name, anchor)
}

pub fn check_lyapunov_mid(
    trace: &Trace,
    p: &RlsdProblem,
    reference: &ReferenceSolution,
    gamma: f64,
) -> Result<Check> {
    let its = require_iterates(trace, CHECK_MID)?;
    let values = its
        .iter()
        .map(|s| Ok((s.k, lyapunov_mid(p, s, reference, gamma)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(nonincreasing(
        &values,
        CHECK_MID,
        "|l-l*|^2/(2g) + g/2 |A2x2-A2x2*|^2 + g/2 |x3-x3*|^2 non-increasing",
    ))
}

/// Evaluated from `k = 1`, where the previous `x3` exists.
pub fn check_lyapunov_low(
    trace: &Trace,
    p: &RlsdProblem,
    reference: &ReferenceSolution,
    gamma: f64,
    epsilon: f64,
) -> Result<Check> {
    let its = require_iterates(trace, CHECK_LOW)?;
    let values = its
        .windows(2)
        .map(|w| Ok((w[1].k, lyapunov_low(p, &w[1], &w[0], reference, gamma, epsilon)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut c = nonincreasing(
        &values,
        CHECK_LOW,
        "mid potential + g eps/2 |x3^k - x3^(k-1)|^2 non-increasing",
    );
    c.anchor = format!("{} (eps = {epsilon})", c.anchor);
    Ok(c)
}

/// Worst `||x3^k - lambda^k|| / (1 + ||lambda^k||)` over `k >= 1`.
pub fn check_identity_x3_lambda(trace: &Trace, p: &RlsdProblem) -> Result<Check> {
    if !p.f3().is_canonical() {
        return Err(Error::NotApplicable(
            "x3 = lambda only holds for f3 = 0.5||x||^2".into(),
        ));
    }
    let its = require_iterates(trace, CHECK_X3_LAMBDA)?;
    let mut t = Tally::new();
    for s in its.iter().filter(|s| s.k >= 1) {
        let dev = (&s.x3 - &s.lambda).norm() / (1.0 + s.lambda.norm());
        t.observe(s.k, dev, IDENTITY_TOL);
    }
    Ok(t.finish(CHECK_X3_LAMBDA, "x3^k = lambda^k for k >= 1"))
}

/// `||grad f3(x3^k) - lambda^k|| <= 1e-9 (1 + ||lambda^k||)` for `k >= 1`.
pub fn check_gradient_identity(trace: &Trace, p: &RlsdProblem) -> Result<Check> {
    let its = require_iterates(trace, CHECK_GRADIENT)?;
    let mut t = Tally::new();
    for s in its.iter().filter(|s| s.k >= 1) {
        let dev = (p.f3().gradient(&s.x3) - &s.lambda).norm();
        t.observe(s.k, dev, SLACK * (1.0 + s.lambda.norm()));
    }
    Ok(t.finish(CHECK_GRADIENT, "grad f3(x3^k) = lambda^k"))
}

/// `||d lambda|| <= L ||d x3|| + 1e-9` on every transition.
pub fn check_lambda_lipschitz(trace: &Trace, p: &RlsdProblem) -> Result<Check> {
    let recs = require_records(trace)?;
    let l = p.f3().lipschitz();
    let mut t = Tally::new();
    for r in recs.iter().skip(1) {
        t.observe(r.k, r.d_lambda - l * r.d_x3, SLACK);
    }
    Ok(t.finish(CHECK_LIPSCHITZ, "|lambda^k+1 - lambda^k| <= L |x3^k+1 - x3^k|"))
}

/// Compares recorded scalars with a replay of the same run.
pub fn check_trace_consistency(recorded: &[TraceRecord], replay: &[TraceRecord]) -> Check {
    let mut t = Tally::new();
    if recorded.len() != replay.len() {
        t.observe(recorded.len().min(replay.len()), f64::INFINITY, 0.0);
    }
    for (a, b) in recorded.iter().zip(replay) {
        let pairs = [
            (a.objective, b.objective),
            (a.lagrangian, b.lagrangian),
            (a.primal_residual, b.primal_residual),
            (a.kkt_max, b.kkt_max),
            (a.d_x1, b.d_x1),
            (a.d_x2, b.d_x2),
            (a.d_x3, b.d_x3),
            (a.d_lambda, b.d_lambda),
        ];
        let dev = pairs
            .iter()
            .map(|(x, y)| (x - y).abs() / (1.0 + y.abs()))
            .fold(if a.k == b.k { 0.0 } else { f64::INFINITY }, f64::max);
        t.observe(b.k, dev, SLACK);
    }
    t.finish(CHECK_REPLAY, "recorded trace matches a deterministic replay")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyOptions {
    pub eta1: f64,
    pub eta2: f64,
    /// Overrides the weight of the `x3` step term for a quadratic `f3`.
    pub epsilon: Option<f64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            eta1: 3.0,
            eta2: 4.0,
            epsilon: None,
        }
    }
}

/// Weight of the `x3` step term for a quadratic `f3`. Prefers
/// `2 e2/(e2 - 2) + 1`; when that breaks `g eps < s + s^2/(2g)` it takes the
/// midpoint of the admissible interval instead.
pub fn low_epsilon(sigma: f64, gamma: f64, eta2: f64) -> f64 {
    let lower = 2.0 * eta2 / (eta2 - 2.0);
    let upper = (sigma + sigma * sigma / (2.0 * gamma)) / gamma;
    let default = lower + 1.0;
    if default < upper {
        default
    } else {
        0.5 * (lower + upper)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub converged: bool,
    pub iterations: usize,
    pub final_kkt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub provenance: String,
    pub kkt_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateReport {
    #[serde(serialize_with = "ser_regimes")]
    pub regime: Vec<Regime>,
    pub gamma: f64,
    pub checks: Vec<Check>,
    pub reference: Option<ReferenceInfo>,
    pub empirical: EmpiricalSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn ser_regimes<S: Serializer>(r: &[Regime], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&regime_label(r))
}

pub fn regime_label(r: &[Regime]) -> String {
    r.iter().map(Regime::to_string).collect::<Vec<_>>().join("+")
}

impl CertificateReport {
    pub fn regime_label(&self) -> String {
        regime_label(&self.regime)
    }

    pub fn is_certified(&self) -> bool {
        !self.regime.contains(&Regime::Uncertified)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Regimes whose certificates apply at `gamma`. Problems whose maps are not
/// injective are always uncertified.
pub fn select_regimes(p: &RlsdProblem, gamma: f64, opts: &CertifyOptions) -> Result<Vec<Regime>> {
    if !p.satisfies_rank_assumption() {
        return Ok(vec![Regime::Uncertified]);
    }
    let mut out = Vec::new();
    match p.f3() {
        F3::Canonical => {
            for t in canonical_theorem_coverage(gamma)? {
                out.push(match t {
                    CanonicalTheorem::HighGamma => Regime::High,
                    CanonicalTheorem::MidGamma => Regime::Mid,
                    CanonicalTheorem::LowGamma => Regime::Low,
                });
            }
        }
        F3::Quadratic(q) => {
            let params = GammaRangeParams::new(q.sigma(), q.lipschitz(), opts.eta1, opts.eta2)?;
            if params.in_high(gamma) {
                out.push(Regime::ExtendedHigh);
            }
            if params.in_mid(gamma) || params.in_low(gamma) {
                out.push(Regime::ExtendedRange);
            }
        }
    }
    if out.is_empty() {
        out.push(Regime::Uncertified);
    }
    Ok(out)
}

/// Selects the regimes for `cfg.gamma` and runs their checks, plus the
/// identities that hold for every `gamma`. Potentials need `reference`.
pub fn certify(
    trace: &Trace,
    p: &RlsdProblem,
    cfg: &SolverConfig,
    reference: Option<&ReferenceSolution>,
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    let gamma = cfg.gamma;
    let recs = require_records(trace)?;
    let regime = select_regimes(p, gamma, opts)?;

    let needs_reference = match p.f3() {
        F3::Canonical => regime.iter().any(|r| matches!(r, Regime::Mid | Regime::Low)),
        F3::Quadratic(_) => regime.contains(&Regime::ExtendedRange),
    };
    let reference = match (needs_reference, reference) {
        (true, None) => return Err(Error::MissingReference(regime_label(&regime))),
        (true, Some(r)) => {
            r.validate(p)?;
            Some(r)
        }
        (false, _) => None,
    };

    let mut checks = Vec::new();
    if regime.contains(&Regime::High) || regime.contains(&Regime::ExtendedHigh) {
        checks.extend(check_high_gamma(trace, p, gamma)?);
    }
    if let Some(r) = reference {
        match p.f3() {
            F3::Canonical => {
                if regime.contains(&Regime::Mid) {
                    checks.push(check_lyapunov_mid(trace, p, r, gamma)?);
                }
                if regime.contains(&Regime::Low) {
                    checks.push(check_lyapunov_low(trace, p, r, gamma, CANONICAL_LOW_EPSILON)?);
                }
            }
            F3::Quadratic(q) => {
                let params = GammaRangeParams::new(q.sigma(), q.lipschitz(), opts.eta1, opts.eta2)?;
                if params.in_mid(gamma) {
                    checks.push(check_lyapunov_mid(trace, p, r, gamma)?);
                }
                if params.in_low(gamma) {
                    let eps = opts
                        .epsilon
                        .unwrap_or_else(|| low_epsilon(q.sigma(), gamma, opts.eta2));
                    checks.push(check_lyapunov_low(trace, p, r, gamma, eps)?);
                }
            }
        }
    }
    if trace.has_iterates() {
        match p.f3() {
            F3::Canonical => checks.push(check_identity_x3_lambda(trace, p)?),
            F3::Quadratic(_) => checks.push(check_gradient_identity(trace, p)?),
        }
    }
    if !p.f3().is_canonical() {
        checks.push(check_lambda_lipschitz(trace, p)?);
    }

    let last = recs.last().expect("records are non-empty");
    let note = if !p.satisfies_rank_assumption() {
        Some("a block map is not injective; no convergence certificate applies".into())
    } else if regime.contains(&Regime::Uncertified) {
        Some(format!("gamma = {gamma} lies outside every certified range"))
    } else {
        None
    };
    Ok(CertificateReport {
        regime,
        gamma,
        checks,
        reference: reference.map(|r| ReferenceInfo {
            provenance: r.provenance.clone(),
            kkt_max: r.kkt_max,
        }),
        empirical: EmpiricalSummary {
            converged: last.kkt_max <= cfg.tol_kkt,
            iterations: last.k,
            final_kkt: last.kkt_max,
        },
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Block, BlockMap, StronglyConvexSmooth};
    use crate::regularizers::Regularizer;
    use crate::solver::Status;
    use nalgebra::DMatrix;

    fn lasso_1d() -> RlsdProblem {
        let b1 = Block::new(BlockMap::identity(1).unwrap(), Regularizer::l1(1.0).unwrap()).unwrap();
        RlsdProblem::new(b1, Block::empty(1), DVector::from_vec(vec![3.0]), F3::Canonical).unwrap()
    }

    fn small_pair(f3: F3) -> RlsdProblem {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.0, 1.0, 1.0, -1.0]);
        let b1 = Block::new(BlockMap::dense(a).unwrap(), Regularizer::l1(0.3).unwrap()).unwrap();
        let b2 = Block::new(BlockMap::identity(3).unwrap(), Regularizer::l1(0.2).unwrap()).unwrap();
        RlsdProblem::new(b1, b2, DVector::from_vec(vec![2.0, -1.0, 0.5]), f3).unwrap()
    }

    fn traced(p: &RlsdProblem, gamma: f64) -> (SolverConfig, Trace) {
        let cfg = SolverConfig::new(gamma).with_trace(true);
        let res = Admm::new(p, cfg.clone()).unwrap().solve().unwrap();
        assert_eq!(res.status, Status::Converged);
        (cfg, res.trace.unwrap())
    }

    #[test]
    fn margin_examples() {
        assert_eq!(decrease_margin(2.0, 1.0, 1.0), 1.0);
        assert!((decrease_margin(1.1, 1.0, 1.0) - (1.05 - 1.0 / 1.1)).abs() < 1e-15);
        assert!((decrease_margin(1.1, 1.0, 1.0) - 0.140909090909).abs() < 1e-9);
        assert_eq!(decrease_margin(1.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn constant_trace_passes_with_zero_margins() {
        let p = lasso_1d();
        let rec = TraceRecord {
            k: 0,
            objective: 2.5,
            lagrangian: 2.5,
            primal_residual: 0.0,
            kkt_max: 0.0,
            d_x1: 0.0,
            d_x2: 0.0,
            d_x3: 0.0,
            d_lambda: 0.0,
        };
        let records = (0..5).map(|k| TraceRecord { k, ..rec }).collect();
        let trace = Trace {
            records,
            iterates: vec![],
        };
        for c in check_high_gamma(&trace, &p, 2.0).unwrap() {
            assert!(c.pass, "{c:?}");
            assert_eq!(c.worst_violation, 0.0);
        }
    }

    #[test]
    fn potentials_at_reference() {
        let p = lasso_1d();
        let r = compute_reference(&p).unwrap();
        assert!((r.x1[0] - 2.0).abs() < 1e-11);
        let mut s = IterateState::initial(&p).unwrap();
        s.x1 = r.x1.clone();
        s.x2 = r.x2.clone();
        s.x3 = r.x3.clone();
        s.lambda = r.lambda.clone();
        assert_eq!(lyapunov_mid(&p, &s, &r, 0.8).unwrap(), 0.0);
        assert_eq!(lyapunov_low(&p, &s, &s, &r, 0.4, 3.0).unwrap(), 0.0);

        let mut shifted = s.clone();
        shifted.lambda[0] += 0.5;
        assert!((lyapunov_mid(&p, &shifted, &r, 0.8).unwrap() - 0.25 / 1.6).abs() < 1e-15);

        let mut moved = s.clone();
        moved.x3[0] += 1.0;
        let low = lyapunov_low(&p, &s, &moved, &r, 0.4, 3.0).unwrap();
        assert!((low - 0.6).abs() < 1e-12);
    }

    #[test]
    fn certify_regimes_on_small_problem() {
        let p = small_pair(F3::Canonical);
        let r = compute_reference(&p).unwrap();
        let opts = CertifyOptions::default();
        for (gamma, label) in [(2.0, "High"), (0.8, "Mid"), (0.45, "Mid+Low"), (0.3, "Low")] {
            let (cfg, trace) = traced(&p, gamma);
            let rep = certify(&trace, &p, &cfg, Some(&r), &opts).unwrap();
            assert_eq!(rep.regime_label(), label);
            assert!(rep.all_pass(), "gamma {gamma}: {:?}", rep.checks);
            assert!(rep.empirical.converged);
        }
    }

    #[test]
    fn missing_reference() {
        let p = small_pair(F3::Canonical);
        let (cfg, trace) = traced(&p, 0.8);
        let err = certify(&trace, &p, &cfg, None, &CertifyOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingReference(_)));
    }

    #[test]
    fn quadratic_dispatch() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0]));
        let f3 = StronglyConvexSmooth::new(q, DVector::from_vec(vec![0.1, 0.0, -0.2]), Some(1.0), Some(1.0))
            .unwrap();
        let p = small_pair(F3::Quadratic(f3));
        let opts = CertifyOptions::default();
        assert_eq!(select_regimes(&p, 2.0, &opts).unwrap(), vec![Regime::ExtendedHigh]);
        assert_eq!(select_regimes(&p, 0.3, &opts).unwrap(), vec![Regime::ExtendedRange]);
        assert_eq!(select_regimes(&p, 0.6, &opts).unwrap(), vec![Regime::Uncertified]);
        let (cfg, trace) = traced(&p, 0.6);
        let rep = certify(&trace, &p, &cfg, None, &opts).unwrap();
        assert!(!rep.is_certified());
        assert!(rep.empirical.converged);
        assert!(rep.all_pass());
    }

    #[test]
    fn epsilon_choice() {
        assert_eq!(low_epsilon(1.0, 0.3, 4.0), 5.0);
        // near the top of the small interval the default is too large
        let e = low_epsilon(1.0, 0.49, 4.0);
        assert!(e > 4.0 && 0.49 * e < 1.0 + 1.0 / 0.98);
    }

    #[test]
    fn reference_json_roundtrip() {
        let p = lasso_1d();
        let r = compute_reference(&p).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: ReferenceSolution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        back.validate(&p).unwrap();
    }

    #[test]
    fn replay_consistency() {
        let p = small_pair(F3::Canonical);
        let (_, trace) = traced(&p, 2.0);
        assert!(check_trace_consistency(&trace.records, &trace.records).pass);
        let mut bad = trace.records.clone();
        bad[3].objective += 1e-3;
        let c = check_trace_consistency(&bad, &trace.records);
        assert!(!c.pass);
        assert_eq!(c.at_iteration, Some(3));
    }
}
