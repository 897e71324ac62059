//! Penalty-parameter ranges.
//!
//! For a quadratic-like `f3` that is `sigma`-strongly convex with an
//! `L`-Lipschitz gradient, convergence is certified for `gamma` in the union
//!
//! ```text
//! (0, min{4 s/e2, s(e2-2)/(4 e2) + sqrt(s^2 (e2-2)^2/(16 e2^2) + s^2 (e2-2)/(4 e2))})
//!   U (sqrt(s^2 + 2 L^2/(e1-2)) - s, 4 s/e1]
//!   U ((sqrt(s^2 + 8 L^2) - s)/2, +inf)
//! ```
//!
//! with free parameters `e1, e2 > 2`. For `f3 = 0.5||x||^2` every `gamma > 0`
//! is covered by one of three theorems.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Interval {
    pub fn open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_open: true,
            hi_open: true,
        }
    }

    pub fn open_closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_open: true,
            hi_open: hi.is_infinite(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_open { x > self.lo } else { x >= self.lo };
        let below = if self.hi_open { x < self.hi } else { x <= self.hi };
        above && below
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(untagged)]
        enum Hi {
            Finite(f64),
            Inf(&'static str),
        }
        #[derive(Serialize)]
        struct Repr {
            lo: f64,
            hi: Hi,
            lo_open: bool,
            hi_open: bool,
        }
        let hi = if self.hi.is_infinite() {
            Hi::Inf("inf")
        } else {
            Hi::Finite(self.hi)
        };
        Repr {
            lo: self.lo,
            hi,
            lo_open: self.lo_open,
            hi_open: self.hi_open,
        }
        .serialize(s)
    }
}

/// Sorted, pairwise disjoint, nonempty intervals.
#[derive(Clone, Debug, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct IntervalUnion {
    intervals: Vec<Interval>,
}

impl IntervalUnion {
    /// Drops empty intervals, sorts, and merges pieces that overlap or touch
    /// at a point one of them contains.
    pub fn from_intervals(mut pieces: Vec<Interval>) -> Self {
        pieces.retain(|i| !i.is_empty());
        pieces.sort_by(|a, b| {
            a.lo.total_cmp(&b.lo)
                .then_with(|| b.lo_open.cmp(&a.lo_open).reverse())
        });
        let mut out: Vec<Interval> = Vec::with_capacity(pieces.len());
        for next in pieces {
            if let Some(cur) = out.last_mut() {
                let joins = next.lo < cur.hi || (next.lo == cur.hi && !(next.lo_open && cur.hi_open));
                if joins {
                    if next.lo == cur.lo {
                        cur.lo_open &= next.lo_open;
                    }
                    if next.hi > cur.hi {
                        cur.hi = next.hi;
                        cur.hi_open = next.hi_open;
                    } else if next.hi == cur.hi {
                        cur.hi_open &= next.hi_open;
                    }
                    continue;
                }
            }
            out.push(next);
        }
        IntervalUnion { intervals: out }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(x))
    }

    /// Display with endpoints rounded to four decimals, e.g.
    /// `(0,0.5)∪(0.7321,+inf)`.
    pub fn display(&self) -> String {
        self.to_string()
    }
}

fn fmt_endpoint(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "+inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

impl fmt::Display for IntervalUnion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return write!(f, "∅");
        }
        let parts: Vec<String> = self
            .intervals
            .iter()
            .map(|i| {
                format!(
                    "{}{},{}{}",
                    if i.lo_open { '(' } else { '[' },
                    fmt_endpoint(i.lo),
                    fmt_endpoint(i.hi),
                    if i.hi_open { ')' } else { ']' }
                )
            })
            .collect();
        write!(f, "{}", parts.join("∪"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRangeParams {
    pub sigma: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl GammaRangeParams {
    pub fn new(sigma: f64, lipschitz: f64, eta1: f64, eta2: f64) -> Result<Self> {
        let p = GammaRangeParams {
            sigma,
            lipschitz,
            eta1,
            eta2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz >= self.sigma) {
            return Err(Error::InvalidInput(format!(
                "L must be finite and at least sigma, got L = {} with sigma = {}",
                self.lipschitz, self.sigma
            )));
        }
        if !(self.eta1 > 2.0 && self.eta1.is_finite()) {
            return Err(Error::InvalidInput(format!("eta1 must exceed 2, got {}", self.eta1)));
        }
        if !(self.eta2 > 2.0 && self.eta2.is_finite()) {
            return Err(Error::InvalidInput(format!("eta2 must exceed 2, got {}", self.eta2)));
        }
        Ok(())
    }

    /// Upper end of the small-gamma interval `(0, .)`.
    pub fn low_upper(&self) -> f64 {
        let (s, e) = (self.sigma, self.eta2);
        let a = s * (e - 2.0) / (4.0 * e);
        let root = a + (a * a + s * s * (e - 2.0) / (4.0 * e)).sqrt();
        (4.0 * s / e).min(root)
    }

    /// Endpoints `(lo, hi]` of the middle interval; empty when `lo >= hi`.
    pub fn mid_bounds(&self) -> (f64, f64) {
        let (s, l, e) = (self.sigma, self.lipschitz, self.eta1);
        ((s * s + 2.0 * l * l / (e - 2.0)).sqrt() - s, 4.0 * s / e)
    }

    /// Left end of the unbounded interval `(., +inf)`.
    pub fn high_lower(&self) -> f64 {
        let (s, l) = (self.sigma, self.lipschitz);
        ((s * s + 8.0 * l * l).sqrt() - s) / 2.0
    }

    pub fn in_low(&self, gamma: f64) -> bool {
        gamma > 0.0 && gamma < self.low_upper()
    }

    pub fn in_mid(&self, gamma: f64) -> bool {
        let (lo, hi) = self.mid_bounds();
        gamma > lo && gamma <= hi
    }

    pub fn in_high(&self, gamma: f64) -> bool {
        gamma > self.high_lower()
    }
}

pub fn admissible_gamma_range(params: &GammaRangeParams) -> Result<IntervalUnion> {
    params.validate()?;
    let (mid_lo, mid_hi) = params.mid_bounds();
    Ok(IntervalUnion::from_intervals(vec![
        Interval::open(0.0, params.low_upper()),
        Interval::open_closed(mid_lo, mid_hi),
        Interval::open(params.high_lower(), f64::INFINITY),
    ]))
}

pub fn contains(range: &IntervalUnion, gamma: f64) -> bool {
    range.contains(gamma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CanonicalTheorem {
    /// `gamma in (1, +inf)`: augmented Lagrangian descent.
    HighGamma,
    /// `gamma in (sqrt(2) - 1, 1]`: distance-to-solution potential.
    MidGamma,
    /// `gamma in (0, 1/2]`: potential with an extra `x3` step term.
    LowGamma,
}

pub const MID_GAMMA_LOWER: f64 = std::f64::consts::SQRT_2 - 1.0;

/// Which of the three `f3 = 0.5||.||^2` theorems cover `gamma`.
pub fn canonical_theorem_coverage(gamma: f64) -> Result<BTreeSet<CanonicalTheorem>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let mut set = BTreeSet::new();
    if gamma > 1.0 {
        set.insert(CanonicalTheorem::HighGamma);
    }
    if gamma > MID_GAMMA_LOWER && gamma <= 1.0 {
        set.insert(CanonicalTheorem::MidGamma);
    }
    if gamma <= 0.5 {
        set.insert(CanonicalTheorem::LowGamma);
    }
    Ok(set)
}
