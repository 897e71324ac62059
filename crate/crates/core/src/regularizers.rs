//! Catalog of block regularizers with exact proximal maps.
//!
//! Every regularizer is a weighted function `f` together with an optional
//! coordinate box `X`. The catalog is closed: each supported combination
//! has an exact prox, and combinations without one are rejected when the
//! regularizer is built.
//!
//! Matrix-valued blocks (nuclear norm) are stored as column-major flattened
//! vectors, the same layout `nalgebra` uses internally.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when deciding whether a point lies in a box.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const SVD_MAX_ITER: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    L1,
    Nuclear,
    Zero,
    SquaredL2,
}

/// One side of a box: either the same bound for every coordinate or one
/// bound per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

impl Bound {
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        match self {
            Bound::Uniform(v) => *v,
            Bound::PerCoordinate(v) => v[j],
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            Bound::Uniform(_) => None,
            Bound::PerCoordinate(v) => Some(v.len()),
        }
    }

    fn all(&self, pred: impl Fn(f64) -> bool) -> bool {
        match self {
            Bound::Uniform(v) => pred(*v),
            Bound::PerCoordinate(v) => v.iter().all(|x| pred(*x)),
        }
    }
}

/// Coordinatewise box `lo <= x <= hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr")]
pub struct BoxSet {
    lo: Bound,
    hi: Bound,
}

#[derive(Deserialize)]
struct BoxRepr {
    lo: Bound,
    hi: Bound,
}

impl TryFrom<BoxRepr> for BoxSet {
    type Error = Error;
    fn try_from(r: BoxRepr) -> Result<Self> {
        BoxSet::new(r.lo, r.hi)
    }
}

impl BoxSet {
    pub fn new(lo: Bound, hi: Bound) -> Result<Self> {
        if let (Some(a), Some(b)) = (lo.len(), hi.len()) {
            if a != b {
                return Err(Error::dims("box bounds", a, b));
            }
        }
        if lo.all(f64::is_nan) || hi.all(f64::is_nan) {
            return Err(Error::InvalidInput("box bounds must not be NaN".into()));
        }
        let n = lo.len().or(hi.len()).unwrap_or(1);
        for j in 0..n {
            let (l, h) = (lo.at(j), hi.at(j));
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::InvalidInput(format!(
                    "box requires lo <= hi, coordinate {j} has lo = {l}, hi = {h}"
                )));
            }
        }
        Ok(BoxSet { lo, hi })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        BoxSet::new(Bound::Uniform(lo), Bound::Uniform(hi))
    }

    pub fn lo(&self) -> &Bound {
        &self.lo
    }

    pub fn hi(&self) -> &Bound {
        &self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.all(f64::is_finite) && self.hi.all(f64::is_finite)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        for b in [&self.lo, &self.hi] {
            if let Some(len) = b.len() {
                if len != n {
                    return Err(Error::dims("box bounds", n, len));
                }
            }
        }
        Ok(())
    }

    /// Largest amount by which `x` leaves the box.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, &v)| (self.lo.at(j) - v).max(v - self.hi.at(j)).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v.len())?;
        check_finite(v)?;
        Ok(DVector::from_fn(v.len(), |j, _| {
            v[j].max(self.lo.at(j)).min(self.hi.at(j))
        }))
    }
}

fn check_finite(v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("non-finite entry in prox argument".into()))
    }
}

fn check_step(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("prox step must be positive, got {tau}")))
    }
}

/// Soft thresholding: `sign(v) * max(|v| - tau, 0)` per coordinate.
pub fn prox_l1(v: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    check_step(tau)?;
    check_finite(v)?;
    Ok(v.map(|x| soft_threshold(x, tau)))
}

#[inline]
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Singular value thresholding: shrinks every singular value of `v` by `tau`.
pub fn prox_nuclear(v: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    check_step(tau)?;
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry in prox argument".into()));
    }
    let svd = svd(v)?;
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("SVD did not return singular vectors".into())),
    };
    let mut shrunk = u;
    for (j, s) in svd.singular_values.iter().enumerate() {
        let keep = (s - tau).max(0.0);
        shrunk.column_mut(j).scale_mut(keep);
    }
    Ok(shrunk * vt)
}

fn svd(v: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(v.clone(), true, true, f64::EPSILON, SVD_MAX_ITER).ok_or_else(|| {
        Error::Numerical(format!(
            "SVD of a {}x{} matrix did not converge (Frobenius norm {:e}, max |entry| {:e})",
            v.nrows(),
            v.ncols(),
            v.norm(),
            v.amax()
        ))
    })
}

/// Sum of singular values.
pub fn nuclear_norm(v: &DMatrix<f64>) -> Result<f64> {
    let s = nalgebra::SVD::try_new_unordered(v.clone(), false, false, f64::EPSILON, SVD_MAX_ITER)
        .map(|svd| svd.singular_values);
    s.map(|s| s.sum()).ok_or_else(|| {
        Error::Numerical(format!(
            "singular values of a {}x{} matrix did not converge",
            v.nrows(),
            v.ncols()
        ))
    })
}

/// Coordinatewise clamp of `v` into `[lo, hi]`.
pub fn project_box(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> Result<DVector<f64>> {
    if lo.len() != v.len() {
        return Err(Error::dims("box lower bound", v.len(), lo.len()));
    }
    if hi.len() != v.len() {
        return Err(Error::dims("box upper bound", v.len(), hi.len()));
    }
    let set = BoxSet::new(
        Bound::PerCoordinate(lo.as_slice().to_vec()),
        Bound::PerCoordinate(hi.as_slice().to_vec()),
    )?;
    set.project(v)
}

/// A regularizer `beta * f` restricted to an optional box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegularizerRepr", into = "RegularizerRepr")]
pub struct Regularizer {
    kind: RegularizerKind,
    weight: f64,
    box_set: Option<BoxSet>,
    shape: Option<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RegularizerRepr {
    kind: RegularizerKind,
    #[serde(default)]
    beta: f64,
    #[serde(rename = "box", default)]
    box_set: Option<BoxSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<[usize; 2]>,
}

impl TryFrom<RegularizerRepr> for Regularizer {
    type Error = Error;
    fn try_from(r: RegularizerRepr) -> Result<Self> {
        Regularizer::new(r.kind, r.beta, r.box_set, r.shape.map(|[m, n]| (m, n)))
    }
}

impl From<Regularizer> for RegularizerRepr {
    fn from(r: Regularizer) -> Self {
        RegularizerRepr {
            kind: r.kind,
            beta: r.weight,
            box_set: r.box_set,
            shape: r.shape.map(|(m, n)| [m, n]),
        }
    }
}

impl Regularizer {
    /// Validates the combination and the coercivity structure: a norm with
    /// positive weight, a squared norm with positive weight, or a bounded box.
    pub fn new(
        kind: RegularizerKind,
        weight: f64,
        box_set: Option<BoxSet>,
        shape: Option<(usize, usize)>,
    ) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "regularizer weight must be finite and nonnegative, got {weight}"
            )));
        }
        let bounded_box = box_set.as_ref().is_some_and(BoxSet::is_bounded);
        match kind {
            RegularizerKind::L1 | RegularizerKind::Nuclear if box_set.is_some() => {
                return Err(Error::Unsupported(format!(
                    "{kind:?} regularizer combined with a box has no closed-form prox"
                )));
            }
            RegularizerKind::L1 | RegularizerKind::Nuclear if weight == 0.0 => {
                return Err(Error::InvalidInput(format!(
                    "{kind:?} regularizer needs a positive weight to be coercive"
                )));
            }
            RegularizerKind::Zero if !bounded_box => {
                return Err(Error::InvalidInput(
                    "zero regularizer is only coercive on a bounded box".into(),
                ));
            }
            RegularizerKind::SquaredL2 if weight == 0.0 && !bounded_box => {
                return Err(Error::InvalidInput(
                    "squared_l2 regularizer needs a positive weight or a bounded box".into(),
                ));
            }
            _ => {}
        }
        match (kind, shape) {
            (RegularizerKind::Nuclear, None) => {
                return Err(Error::InvalidInput(
                    "nuclear regularizer needs a matrix shape".into(),
                ))
            }
            (RegularizerKind::Nuclear, Some((m, n))) if m == 0 || n == 0 => {
                return Err(Error::InvalidInput("nuclear shape must be nonzero".into()))
            }
            _ => {}
        }
        let shape = if kind == RegularizerKind::Nuclear { shape } else { None };
        Ok(Regularizer {
            kind,
            weight,
            box_set,
            shape,
        })
    }

    pub fn l1(beta: f64) -> Result<Self> {
        Regularizer::new(RegularizerKind::L1, beta, None, None)
    }

    pub fn nuclear(beta: f64, rows: usize, cols: usize) -> Result<Self> {
        Regularizer::new(RegularizerKind::Nuclear, beta, None, Some((rows, cols)))
    }

    pub fn zero_on_box(set: BoxSet) -> Result<Self> {
        Regularizer::new(RegularizerKind::Zero, 0.0, Some(set), None)
    }

    pub fn squared_l2(beta: f64) -> Result<Self> {
        Regularizer::new(RegularizerKind::SquaredL2, beta, None, None)
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn box_set(&self) -> Option<&BoxSet> {
        self.box_set.as_ref()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    /// Checks that the regularizer can act on vectors of length `n`.
    pub fn check_dim(&self, n: usize) -> Result<()> {
        if let Some((m, c)) = self.shape {
            if m * c != n {
                return Err(Error::dims("nuclear regularizer shape", n, m * c));
            }
        }
        if let Some(b) = &self.box_set {
            b.check_dim(n)?;
        }
        Ok(())
    }

    /// Whether `f` and its box act on each coordinate separately.
    pub fn is_separable(&self) -> bool {
        self.kind != RegularizerKind::Nuclear
    }

    /// Finite lower bound of `f` over its constraint set. Every catalog
    /// member is nonnegative, so the bound is zero.
    pub fn lower_bound(&self) -> f64 {
        0.0
    }

    pub fn box_violation(&self, x: &DVector<f64>) -> f64 {
        self.box_set.as_ref().map_or(0.0, |b| b.violation(x))
    }

    /// `f(x)`; errors if `x` leaves the box by more than [`FEASIBILITY_TOL`].
    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        let violation = self.box_violation(x);
        if violation > FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                block: "regularizer box".into(),
                violation,
            });
        }
        Ok(match self.kind {
            RegularizerKind::L1 => self.weight * x.lp_norm(1),
            RegularizerKind::Nuclear => self.weight * nuclear_norm(&self.as_matrix(x))?,
            RegularizerKind::Zero => 0.0,
            RegularizerKind::SquaredL2 => 0.5 * self.weight * x.norm_squared(),
        })
    }

    /// `argmin_z tau * f(z) + 0.5 * ||z - v||^2` over the box.
    pub fn prox(&self, v: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        check_step(tau)?;
        self.check_dim(v.len())?;
        match self.kind {
            RegularizerKind::L1 => prox_l1(v, tau * self.weight),
            RegularizerKind::Nuclear => {
                let z = prox_nuclear(&self.as_matrix(v), tau * self.weight)?;
                Ok(DVector::from_column_slice(z.as_slice()))
            }
            RegularizerKind::Zero => match &self.box_set {
                Some(b) => b.project(v),
                None => {
                    check_finite(v)?;
                    Ok(v.clone())
                }
            },
            RegularizerKind::SquaredL2 => {
                check_finite(v)?;
                let scaled = v / (1.0 + tau * self.weight);
                match &self.box_set {
                    Some(b) => b.project(&scaled),
                    None => Ok(scaled),
                }
            }
        }
    }

    fn as_matrix(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let (m, n) = self.shape.unwrap_or((v.len(), 1));
        DMatrix::from_column_slice(m, n, v.as_slice())
    }
}
