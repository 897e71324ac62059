//! Seeded synthetic instances.
//!
//! All randomness comes from ChaCha20 seeded with the 64-bit seed through
//! `seed_from_u64`. Uniforms take the top 53 bits of a `u64` draw; normals
//! use the cosine branch of Box-Muller with `u1` in `(0, 1]`. Both are easy
//! to reproduce in other languages.
//!
//! Matrices are flattened column-major.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Block, BlockMap, RlsdProblem, F3};
use crate::regularizers::{BoxSet, Regularizer};

/// Pixel range of the background model.
pub const PIXEL_MAX: f64 = 255.0;
/// Sparse entries are drawn uniformly from `[-SPARSE_MAGNITUDE, SPARSE_MAGNITUDE]`.
pub const SPARSE_MAGNITUDE: f64 = 5.0;

pub struct Rng(ChaCha20Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha20Rng::seed_from_u64(seed))
    }

    /// Independent stream for the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        r.set_stream(stream);
        Rng(r)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// `k` distinct indices of `0..n` by a partial Fisher-Yates shuffle, in
    /// draw order.
    pub fn choose(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k.min(n) {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k.min(n));
        idx
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.normal())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Spcp,
    Background,
    CompressivePcp,
    Lasso,
}

/// Instance description. Matrix families use `m x n`; the Lasso uses an
/// `n x p` design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub family: Family,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub rank: usize,
    pub sparsity: f64,
    pub noise: f64,
    /// Nuclear-norm weight; defaults to 0.25.
    pub beta1: Option<f64>,
    /// Sparse-term weight; defaults to `0.25/sqrt(max(m, n))`.
    pub beta2: Option<f64>,
    /// L1 weight of the Lasso (default 0.1) and of the background
    /// foreground term (default 1).
    pub beta: Option<f64>,
    /// Observed fraction of the compressive mask.
    pub density: f64,
    /// Orthonormalize the Lasso design columns.
    pub orthonormal: bool,
    pub seed: u64,
}

impl BenchSpec {
    pub fn new(family: Family) -> Self {
        BenchSpec {
            family,
            m: 30,
            n: 30,
            p: 20,
            rank: 2,
            sparsity: 0.05,
            noise: 1e-3,
            beta1: None,
            beta2: None,
            beta: None,
            density: 0.5,
            orthonormal: true,
            seed: 0,
        }
    }

    pub fn spcp(m: usize, n: usize, seed: u64) -> Self {
        BenchSpec {
            m,
            n,
            seed,
            ..Self::new(Family::Spcp)
        }
    }

    pub fn background(m: usize, n: usize, seed: u64) -> Self {
        BenchSpec {
            m,
            n,
            seed,
            sparsity: 0.1,
            ..Self::new(Family::Background)
        }
    }

    pub fn cpcp(m: usize, n: usize, density: f64, seed: u64) -> Self {
        BenchSpec {
            m,
            n,
            density,
            seed,
            ..Self::new(Family::CompressivePcp)
        }
    }

    pub fn lasso(n: usize, p: usize, seed: u64) -> Self {
        BenchSpec {
            n,
            p,
            seed,
            sparsity: 0.2,
            ..Self::new(Family::Lasso)
        }
    }

    pub fn beta1(&self) -> f64 {
        self.beta1.unwrap_or(0.25)
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
            .unwrap_or_else(|| 0.25 / (self.m.max(self.n) as f64).sqrt())
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(match self.family {
            Family::Background => 1.0,
            _ => 0.1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        let (rows, cols) = match self.family {
            Family::Lasso => (self.n, self.p),
            _ => (self.m, self.n),
        };
        if rows == 0 || cols == 0 {
            return bad(format!("dimensions must be at least 1, got {rows}x{cols}"));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return bad(format!("sparsity must lie in [0, 1], got {}", self.sparsity));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise level must be nonnegative, got {}", self.noise));
        }
        for (name, w) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta", self.beta)] {
            if let Some(w) = w {
                if !(w > 0.0 && w.is_finite()) {
                    return bad(format!("{name} must be positive, got {w}"));
                }
            }
        }
        match self.family {
            Family::Spcp | Family::CompressivePcp if self.rank > rows.min(cols) => {
                return bad(format!("rank {} exceeds min({rows}, {cols})", self.rank));
            }
            Family::CompressivePcp if !(self.density > 0.0 && self.density <= 1.0) => {
                return bad(format!("mask density must lie in (0, 1], got {}", self.density));
            }
            Family::Lasso if self.p > self.n => {
                return bad(format!(
                    "design with {} columns and {} rows cannot have full column rank",
                    self.p, self.n
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Ground truth of a generated instance; vectors are column-major.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low_rank: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub spec: BenchSpec,
    pub truth: Truth,
}

pub struct Generated {
    pub problem: RlsdProblem,
    pub truth: Truth,
}

pub fn generate(spec: &BenchSpec) -> Result<Generated> {
    match spec.family {
        Family::Spcp => gen_spcp(spec),
        Family::Background => gen_background(spec),
        Family::CompressivePcp => gen_cpcp(spec),
        Family::Lasso => gen_lasso(spec),
    }
}

fn wrong_family(spec: &BenchSpec, want: Family) -> Result<()> {
    if spec.family != want {
        return Err(Error::InvalidInput(format!(
            "expected a {want:?} spec, got {:?}",
            spec.family
        )));
    }
    spec.validate()
}

/// `(L0, S0, M)` flattened, with `M = L0 + S0 + noise`.
fn low_rank_plus_sparse(spec: &BenchSpec) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let (m, n, r) = (spec.m, spec.n, spec.rank);
    let mut rng = Rng::new(spec.seed);
    let u = rng.normal_matrix(m, r);
    let v = rng.normal_matrix(n, r);
    let l0 = &u * v.transpose();
    let mut s0 = DVector::zeros(m * n);
    let k = (spec.sparsity * (m * n) as f64).round() as usize;
    for idx in rng.choose(m * n, k) {
        s0[idx] = rng.uniform_in(-SPARSE_MAGNITUDE, SPARSE_MAGNITUDE);
    }
    let l0 = DVector::from_column_slice(l0.as_slice());
    let noise = DVector::from_fn(m * n, |_, _| spec.noise * rng.normal());
    let mat = &l0 + &s0 + noise;
    (l0, s0, mat)
}

/// Nuclear plus L1 split of `M` with identity maps and the canonical fit.
pub fn gen_spcp(spec: &BenchSpec) -> Result<Generated> {
    wrong_family(spec, Family::Spcp)?;
    let (m, n) = (spec.m, spec.n);
    let (l0, s0, b) = low_rank_plus_sparse(spec);
    let block1 = Block::new(BlockMap::identity(m * n)?, Regularizer::nuclear(spec.beta1(), m, n)?)?;
    let block2 = Block::new(BlockMap::identity(m * n)?, Regularizer::l1(spec.beta2())?)?;
    Ok(Generated {
        problem: RlsdProblem::new(block1, block2, b, F3::Canonical)?,
        truth: Truth {
            low_rank: Some(l0.as_slice().to_vec()),
            sparse: Some(s0.as_slice().to_vec()),
            ..Truth::default()
        },
    })
}

/// Static background `u e^T` in a pixel box plus a sparse foreground.
/// Foreground pixels are replaced by fresh uniform pixel values.
pub fn gen_background(spec: &BenchSpec) -> Result<Generated> {
    wrong_family(spec, Family::Background)?;
    let (m, n) = (spec.m, spec.n);
    let mut rng = Rng::new(spec.seed);
    let u0 = DVector::from_fn(m, |_, _| rng.uniform_in(0.0, PIXEL_MAX));
    let mut s0 = DVector::zeros(m * n);
    let k = (spec.sparsity * (m * n) as f64).round() as usize;
    for idx in rng.choose(m * n, k) {
        s0[idx] = rng.uniform_in(0.0, PIXEL_MAX) - u0[idx % m];
    }
    let map1 = BlockMap::rank_one_column(m, n)?;
    let noise = DVector::from_fn(m * n, |_, _| spec.noise * rng.normal());
    let b = map1.apply(&u0)? + &s0 + noise;
    let block1 = Block::new(map1, Regularizer::zero_on_box(BoxSet::uniform(0.0, PIXEL_MAX)?)?)?;
    let block2 = Block::new(BlockMap::identity(m * n)?, Regularizer::l1(spec.beta())?)?;
    Ok(Generated {
        problem: RlsdProblem::new(block1, block2, b, F3::Canonical)?,
        truth: Truth {
            background: Some(u0.as_slice().to_vec()),
            sparse: Some(s0.as_slice().to_vec()),
            ..Truth::default()
        },
    })
}

/// The SPCP data observed through an entry mask. The data stream matches
/// [`gen_spcp`] for the same seed; the mask comes from a second stream.
pub fn gen_cpcp(spec: &BenchSpec) -> Result<Generated> {
    wrong_family(spec, Family::CompressivePcp)?;
    let (m, n) = (spec.m, spec.n);
    let (l0, s0, mat) = low_rank_plus_sparse(spec);
    let mut rng = Rng::with_stream(spec.seed, 1);
    let mask: Vec<bool> = (0..m * n).map(|_| rng.uniform() < spec.density).collect();
    let observed = mask.iter().filter(|&&o| o).count();
    if observed == 0 {
        return Err(Error::InvalidInput(format!(
            "mask of density {} observed no entries",
            spec.density
        )));
    }
    let map = BlockMap::from_mask(m, n, mask)?;
    let b = map.apply(&mat)?;
    let block1 = Block::new(map.clone(), Regularizer::nuclear(spec.beta1(), m, n)?)?;
    let block2 = Block::new(map, Regularizer::l1(spec.beta2())?)?;
    Ok(Generated {
        problem: RlsdProblem::new(block1, block2, b, F3::Canonical)?,
        truth: Truth {
            low_rank: Some(l0.as_slice().to_vec()),
            sparse: Some(s0.as_slice().to_vec()),
            observed: Some(observed),
            ..Truth::default()
        },
    })
}

/// `n x p` Gaussian design, orthonormalized unless `spec.orthonormal` is
/// false (then scaled by `1/sqrt(n)`), with a sparse `x0`.
pub fn gen_lasso(spec: &BenchSpec) -> Result<Generated> {
    wrong_family(spec, Family::Lasso)?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = Rng::new(spec.seed);
    let g = rng.normal_matrix(n, p);
    let a = if spec.orthonormal {
        g.qr().q()
    } else {
        g / (n as f64).sqrt()
    };
    let mut x0 = DVector::zeros(p);
    let k = ((spec.sparsity * p as f64).round() as usize).max(1);
    for idx in rng.choose(p, k) {
        x0[idx] = rng.uniform_in(-SPARSE_MAGNITUDE, SPARSE_MAGNITUDE);
    }
    let noise = DVector::from_fn(n, |_, _| spec.noise * rng.normal());
    let b = &a * &x0 + noise;
    let block1 = Block::new(BlockMap::dense(a)?, Regularizer::l1(spec.beta())?)?;
    Ok(Generated {
        problem: RlsdProblem::new(block1, Block::empty(n), b, F3::Canonical)?,
        truth: Truth {
            x0: Some(x0.as_slice().to_vec()),
            ..Truth::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::MapKind;

    #[test]
    fn uniform_and_normal_ranges() {
        let mut r = Rng::new(3);
        for _ in 0..1000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(r.normal().is_finite());
            assert!(r.below(7) < 7);
        }
        let mut idx = r.choose(10, 10);
        idx.sort();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn normal_moments() {
        let mut r = Rng::new(11);
        let xs: Vec<f64> = (0..20000).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.03);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn streams_differ() {
        let a = Rng::new(5).uniform();
        let b = Rng::with_stream(5, 1).uniform();
        assert_ne!(a, b);
    }

    #[test]
    fn spcp_zero_data() {
        let spec = BenchSpec {
            rank: 0,
            sparsity: 0.0,
            noise: 0.0,
            ..BenchSpec::spcp(6, 5, 1)
        };
        let g = gen_spcp(&spec).unwrap();
        assert!(g.problem.b().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spcp_sparse_count() {
        let spec = BenchSpec::spcp(10, 10, 2);
        let g = gen_spcp(&spec).unwrap();
        let s = g.truth.sparse.unwrap();
        assert_eq!(s.iter().filter(|&&v| v != 0.0).count(), 5);
        assert!(s.iter().all(|v| v.abs() <= SPARSE_MAGNITUDE));
    }

    #[test]
    fn background_structure() {
        let g = gen_background(&BenchSpec::background(20, 15, 4)).unwrap();
        assert!(matches!(g.problem.block1().map().kind(), MapKind::RankOneColumn { .. }));
        let u = g.truth.background.unwrap();
        assert!(u.iter().all(|v| (0.0..=PIXEL_MAX).contains(v)));
    }

    #[test]
    fn cpcp_full_mask_matches_spcp_data() {
        let spcp = gen_spcp(&BenchSpec::spcp(6, 4, 9)).unwrap();
        let cpcp = gen_cpcp(&BenchSpec::cpcp(6, 4, 1.0, 9)).unwrap();
        assert_eq!(spcp.problem.b(), cpcp.problem.b());
        assert_eq!(cpcp.truth.observed, Some(24));
    }

    #[test]
    fn cpcp_rejects_zero_density() {
        assert!(gen_cpcp(&BenchSpec::cpcp(6, 4, 0.0, 9)).is_err());
    }

    #[test]
    fn lasso_design_is_orthonormal() {
        let g = gen_lasso(&BenchSpec::lasso(50, 20, 1)).unwrap();
        let c = g.problem.block1().map().orthogonal_scale().unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        let raw = gen_lasso(&BenchSpec {
            orthonormal: false,
            ..BenchSpec::lasso(50, 20, 1)
        })
        .unwrap();
        assert!(raw.problem.block1().map().orthogonal_scale().is_none());
        assert!(gen_lasso(&BenchSpec::lasso(10, 20, 1)).is_err());
    }

    #[test]
    fn invalid_specs() {
        let mut s = BenchSpec::spcp(5, 5, 0);
        s.rank = 6;
        assert!(s.validate().is_err());
        s.rank = 1;
        s.sparsity = 1.5;
        assert!(s.validate().is_err());
        s.sparsity = 0.1;
        s.beta1 = Some(0.0);
        assert!(s.validate().is_err());
        s.beta1 = None;
        s.m = 0;
        assert!(s.validate().is_err());
    }
}
