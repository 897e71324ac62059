//! Problem container: `min f1(x1) + f2(x2) + f3(x3)` subject to
//! `A1 x1 + A2 x2 + x3 = b`, `x1 in X1`, `x2 in X2`.
//!
//! All matrix blocks live in flattened (column-major) vector spaces. The
//! structured [`BlockMap`] kinds keep the common decompositions cheap: identity
//! maps for SPCP, `u -> u e^T` for background extraction, and an entry mask
//! for compressive measurements.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::regularizers::Regularizer;

/// Smallest singular value accepted for a dense block.
pub const RANK_TOL: f64 = 1e-10;
/// Tolerance for detecting `A^T A = c I` on dense blocks.
pub const ORTHOGONAL_TOL: f64 = 1e-8;
/// Tolerance on the extreme eigenvalues of a quadratic `f3`.
pub const CURVATURE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum MapKind {
    Dense(DMatrix<f64>),
    Identity { dim: usize },
    /// `u in R^rows  ->  vec(u e^T)` with `e` the all-ones vector of length `cols`.
    RankOneColumn { rows: usize, cols: usize },
    /// Keeps the entries of a `rows x cols` matrix whose (column-major)
    /// flat index is marked, zeroes the rest.
    EntryMask {
        rows: usize,
        cols: usize,
        mask: Vec<bool>,
    },
    Empty { output_dim: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockMap {
    kind: MapKind,
    orthogonal_scale: Option<f64>,
    spectral_norm_sq: f64,
}

impl BlockMap {
    pub fn dense(a: DMatrix<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput("dense block map must be non-empty".into()));
        }
        if !a.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("dense block map has non-finite entries".into()));
        }
        if m < n {
            return Err(Error::InvalidInput(format!(
                "dense block map is {m}x{n} and cannot have full column rank"
            )));
        }
        let s = nalgebra::SVD::try_new_unordered(a.clone(), false, false, f64::EPSILON, 10_000)
            .map(|svd| svd.singular_values)
            .ok_or_else(|| Error::Numerical("singular values of dense block did not converge".into()))?;
        let s_min = s.min();
        let s_max = s.max();
        if s_min <= RANK_TOL {
            return Err(Error::InvalidInput(format!(
                "dense block map is not of full column rank (smallest singular value {s_min:e})"
            )));
        }
        let gram = a.transpose() * &a;
        let c = gram.trace() / n as f64;
        let off = (&gram - DMatrix::identity(n, n) * c).amax();
        let orthogonal_scale = (off <= ORTHOGONAL_TOL * c.max(1.0)).then_some(c);
        Ok(BlockMap {
            kind: MapKind::Dense(a),
            orthogonal_scale,
            spectral_norm_sq: s_max * s_max,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("identity map needs a positive dimension".into()));
        }
        Ok(BlockMap {
            kind: MapKind::Identity { dim },
            orthogonal_scale: Some(1.0),
            spectral_norm_sq: 1.0,
        })
    }

    pub fn rank_one_column(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("rank-one column map needs positive dimensions".into()));
        }
        Ok(BlockMap {
            kind: MapKind::RankOneColumn { rows, cols },
            orthogonal_scale: Some(cols as f64),
            spectral_norm_sq: cols as f64,
        })
    }

    /// `entries` are `(row, col)` pairs, zero-based.
    pub fn entry_mask(rows: usize, cols: usize, entries: &[(usize, usize)]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("entry mask needs positive dimensions".into()));
        }
        let mut mask = vec![false; rows * cols];
        for &(i, j) in entries {
            if i >= rows || j >= cols {
                return Err(Error::InvalidInput(format!(
                    "mask entry ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            mask[i + j * rows] = true;
        }
        BlockMap::from_mask(rows, cols, mask)
    }

    pub fn from_mask(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != rows * cols {
            return Err(Error::dims("entry mask", rows * cols, mask.len()));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidInput("entry mask selects no entries".into()));
        }
        let full = mask.iter().all(|&m| m);
        Ok(BlockMap {
            kind: MapKind::EntryMask { rows, cols, mask },
            orthogonal_scale: full.then_some(1.0),
            spectral_norm_sq: 1.0,
        })
    }

    pub fn empty(output_dim: usize) -> Self {
        BlockMap {
            kind: MapKind::Empty { output_dim },
            orthogonal_scale: None,
            spectral_norm_sq: 0.0,
        }
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.kind, MapKind::Empty { .. })
    }

    /// `c` with `A^T A = c I`, when the map has that structure.
    pub fn orthogonal_scale(&self) -> Option<f64> {
        self.orthogonal_scale
    }

    /// `||A||_2^2`, the Lipschitz constant of `x -> A^T A x`.
    pub fn spectral_norm_sq(&self) -> f64 {
        self.spectral_norm_sq
    }

    /// Whether `A` is injective. An entry mask only is when it keeps every entry.
    pub fn has_full_column_rank(&self) -> bool {
        match &self.kind {
            MapKind::EntryMask { mask, .. } => mask.iter().all(|&m| m),
            MapKind::Empty { .. } => false,
            _ => true,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            MapKind::Dense(a) => a.ncols(),
            MapKind::Identity { dim } => *dim,
            MapKind::RankOneColumn { rows, .. } => *rows,
            MapKind::EntryMask { rows, cols, .. } => rows * cols,
            MapKind::Empty { .. } => 0,
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.kind {
            MapKind::Dense(a) => a.nrows(),
            MapKind::Identity { dim } => *dim,
            MapKind::RankOneColumn { rows, cols } => rows * cols,
            MapKind::EntryMask { rows, cols, .. } => rows * cols,
            MapKind::Empty { output_dim } => *output_dim,
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("block map input", self.input_dim(), x.len()));
        }
        Ok(match &self.kind {
            MapKind::Dense(a) => a * x,
            MapKind::Identity { .. } => x.clone(),
            MapKind::RankOneColumn { rows, cols } => {
                DVector::from_fn(rows * cols, |idx, _| x[idx % rows])
            }
            MapKind::EntryMask { mask, .. } => {
                DVector::from_fn(mask.len(), |i, _| if mask[i] { x[i] } else { 0.0 })
            }
            MapKind::Empty { output_dim } => DVector::zeros(*output_dim),
        })
    }

    pub fn apply_transpose(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.output_dim() {
            return Err(Error::dims("block map adjoint input", self.output_dim(), y.len()));
        }
        Ok(match &self.kind {
            MapKind::Dense(a) => a.tr_mul(y),
            MapKind::Identity { .. } => y.clone(),
            MapKind::RankOneColumn { rows, cols } => {
                let mut u = DVector::zeros(*rows);
                for j in 0..*cols {
                    u += y.rows(j * rows, *rows);
                }
                u
            }
            MapKind::EntryMask { mask, .. } => {
                DVector::from_fn(mask.len(), |i, _| if mask[i] { y[i] } else { 0.0 })
            }
            MapKind::Empty { .. } => DVector::zeros(0),
        })
    }
}

/// A quadratic `f3(x) = 0.5 x^T Q x + q^T x` with `sigma I <= Q <= L I`.
#[derive(Clone, Debug)]
pub struct StronglyConvexSmooth {
    q_matrix: DMatrix<f64>,
    q_vector: DVector<f64>,
    sigma: f64,
    lipschitz: f64,
    lower_bound: f64,
}

impl StronglyConvexSmooth {
    /// `sigma` and `lipschitz` default to the extreme eigenvalues of `Q`;
    /// when given they must bracket the spectrum.
    pub fn new(
        q_matrix: DMatrix<f64>,
        q_vector: DVector<f64>,
        sigma: Option<f64>,
        lipschitz: Option<f64>,
    ) -> Result<Self> {
        let n = q_vector.len();
        if q_matrix.shape() != (n, n) {
            return Err(Error::dims("quadratic f3 matrix", n, q_matrix.nrows()));
        }
        if !q_matrix.iter().chain(q_vector.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("quadratic f3 has non-finite entries".into()));
        }
        let asym = (&q_matrix - q_matrix.transpose()).amax();
        if asym > 1e-12 * q_matrix.amax().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "quadratic f3 matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let eig = SymmetricEigen::new(q_matrix.clone()).eigenvalues;
        let (e_min, e_max) = (eig.min(), eig.max());
        let sigma = sigma.unwrap_or(e_min);
        let lipschitz = lipschitz.unwrap_or(e_max);
        if !(sigma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "f3 must be strongly convex, got sigma = {sigma}"
            )));
        }
        if sigma > lipschitz {
            return Err(Error::InvalidInput(format!(
                "strong convexity modulus {sigma} exceeds Lipschitz constant {lipschitz}"
            )));
        }
        if e_min < sigma - CURVATURE_TOL || e_max > lipschitz + CURVATURE_TOL {
            return Err(Error::InvalidInput(format!(
                "eigenvalues of Q lie in [{e_min}, {e_max}], outside [{sigma}, {lipschitz}]"
            )));
        }
        let chol = Cholesky::new(q_matrix.clone())
            .ok_or_else(|| Error::Numerical("Cholesky factorization of Q failed".into()))?;
        let lower_bound = -0.5 * q_vector.dot(&chol.solve(&q_vector));
        Ok(StronglyConvexSmooth {
            q_matrix,
            q_vector,
            sigma,
            lipschitz,
            lower_bound,
        })
    }

    pub fn q_matrix(&self) -> &DMatrix<f64> {
        &self.q_matrix
    }

    pub fn q_vector(&self) -> &DVector<f64> {
        &self.q_vector
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `min f3 = -0.5 q^T Q^{-1} q`.
    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn dim(&self) -> usize {
        self.q_vector.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q_matrix * x)) + self.q_vector.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q_matrix * x + &self.q_vector
    }

    /// Unconstrained minimizer `-Q^{-1} q`.
    pub fn minimizer(&self) -> Result<DVector<f64>> {
        let chol = Cholesky::new(self.q_matrix.clone())
            .ok_or_else(|| Error::Numerical("Cholesky factorization of Q failed".into()))?;
        Ok(-chol.solve(&self.q_vector))
    }
}

#[derive(Clone, Debug)]
pub enum F3 {
    /// `0.5 ||x3||^2`.
    Canonical,
    Quadratic(StronglyConvexSmooth),
}

impl F3 {
    pub fn is_canonical(&self) -> bool {
        matches!(self, F3::Canonical)
    }

    pub fn sigma(&self) -> f64 {
        match self {
            F3::Canonical => 1.0,
            F3::Quadratic(q) => q.sigma(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            F3::Canonical => 1.0,
            F3::Quadratic(q) => q.lipschitz(),
        }
    }

    pub fn lower_bound(&self) -> f64 {
        match self {
            F3::Canonical => 0.0,
            F3::Quadratic(q) => q.lower_bound(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            F3::Canonical => 0.5 * x.norm_squared(),
            F3::Quadratic(q) => q.value(x),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            F3::Canonical => x.clone(),
            F3::Quadratic(q) => q.gradient(x),
        }
    }

    pub fn minimizer(&self, dim: usize) -> Result<DVector<f64>> {
        match self {
            F3::Canonical => Ok(DVector::zeros(dim)),
            F3::Quadratic(q) => q.minimizer(),
        }
    }
}

/// One block `(A_i, f_i, X_i)`. Empty blocks carry no regularizer.
#[derive(Clone, Debug)]
pub struct Block {
    map: BlockMap,
    reg: Option<Regularizer>,
}

impl Block {
    pub fn new(map: BlockMap, reg: Regularizer) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::InvalidInput(
                "an empty block map takes no regularizer, use Block::empty".into(),
            ));
        }
        reg.check_dim(map.input_dim())?;
        Ok(Block {
            map,
            reg: Some(reg),
        })
    }

    pub fn empty(output_dim: usize) -> Self {
        Block {
            map: BlockMap::empty(output_dim),
            reg: None,
        }
    }

    pub fn map(&self) -> &BlockMap {
        &self.map
    }

    pub fn regularizer(&self) -> Option<&Regularizer> {
        self.reg.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.map.input_dim()
    }

    pub fn lower_bound(&self) -> f64 {
        self.reg.as_ref().map_or(0.0, Regularizer::lower_bound)
    }

    pub fn value(&self, x: &DVector<f64>, label: &str) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dims(label, self.dim(), x.len()));
        }
        match &self.reg {
            None => Ok(0.0),
            Some(r) => r.value(x).map_err(|e| match e {
                Error::Infeasible { violation, .. } => Error::Infeasible {
                    block: label.to_string(),
                    violation,
                },
                other => other,
            }),
        }
    }

    /// Feasible starting point: the projection of zero onto the box.
    pub fn initial_point(&self) -> Result<DVector<f64>> {
        let zero = DVector::zeros(self.dim());
        match self.reg.as_ref().and_then(Regularizer::box_set) {
            Some(b) => b.project(&zero),
            None => Ok(zero),
        }
    }
}

/// Violation of the optimality system, component by component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KktResidual {
    pub stationarity1: f64,
    pub stationarity2: f64,
    pub dual3: f64,
    pub primal: f64,
    pub max: f64,
}

#[derive(Clone, Debug)]
pub struct RlsdProblem {
    block1: Block,
    block2: Block,
    b: DVector<f64>,
    f3: F3,
}

impl RlsdProblem {
    pub fn new(block1: Block, block2: Block, b: DVector<f64>, f3: F3) -> Result<Self> {
        let p = b.len();
        if p == 0 {
            return Err(Error::InvalidInput("data vector b is empty".into()));
        }
        if !b.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("data vector b has non-finite entries".into()));
        }
        for (name, blk) in [("block1", &block1), ("block2", &block2)] {
            if blk.map.output_dim() != p {
                return Err(Error::dims(format!("{name} output"), p, blk.map.output_dim()));
            }
        }
        if block1.map.is_empty() && block2.map.is_empty() {
            return Err(Error::InvalidInput("at most one block may be empty".into()));
        }
        if let F3::Quadratic(q) = &f3 {
            if q.dim() != p {
                return Err(Error::dims("quadratic f3", p, q.dim()));
            }
        }
        Ok(RlsdProblem { block1, block2, b, f3 })
    }

    pub fn block1(&self) -> &Block {
        &self.block1
    }

    pub fn block2(&self) -> &Block {
        &self.block2
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn f3(&self) -> &F3 {
        &self.f3
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Whether both non-empty blocks are injective, as the convergence
    /// theory requires.
    pub fn satisfies_rank_assumption(&self) -> bool {
        [&self.block1, &self.block2]
            .iter()
            .all(|b| b.map.is_empty() || b.map.has_full_column_rank())
    }

    /// `f1* + f2*`.
    pub fn regularizer_lower_bound(&self) -> f64 {
        self.block1.lower_bound() + self.block2.lower_bound()
    }

    fn check_x3(&self, v: &DVector<f64>, what: &str) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::dims(what, self.dim(), v.len()));
        }
        Ok(())
    }

    /// `A1 x1 + A2 x2 + x3 - b`.
    pub fn residual(
        &self,
        x1: &DVector<f64>,
        x2: &DVector<f64>,
        x3: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_x3(x3, "x3")?;
        let a1 = self.block1.map.apply(x1)?;
        let a2 = self.block2.map.apply(x2)?;
        Ok(a1 + a2 + x3 - &self.b)
    }

    pub fn objective(&self, x1: &DVector<f64>, x2: &DVector<f64>, x3: &DVector<f64>) -> Result<f64> {
        self.check_x3(x3, "x3")?;
        Ok(self.block1.value(x1, "block1")? + self.block2.value(x2, "block2")? + self.f3.value(x3))
    }

    pub fn constraint_violation(
        &self,
        x1: &DVector<f64>,
        x2: &DVector<f64>,
        x3: &DVector<f64>,
    ) -> Result<f64> {
        Ok(self.residual(x1, x2, x3)?.norm())
    }

    /// `f1 + f2 + f3 - <lambda, r> + (gamma/2) ||r||^2`.
    pub fn augmented_lagrangian(
        &self,
        x1: &DVector<f64>,
        x2: &DVector<f64>,
        x3: &DVector<f64>,
        lambda: &DVector<f64>,
        gamma: f64,
    ) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
        }
        self.check_x3(lambda, "lambda")?;
        let r = self.residual(x1, x2, x3)?;
        let f = self.objective(x1, x2, x3)?;
        Ok(f - lambda.dot(&r) + 0.5 * gamma * r.norm_squared())
    }

    /// Stationarity of block `i` is the unit-step prox fixed-point gap
    /// `||x_i - prox_{f_i}(x_i + A_i^T lambda)||`.
    pub fn kkt_residual(
        &self,
        x1: &DVector<f64>,
        x2: &DVector<f64>,
        x3: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Result<KktResidual> {
        self.check_x3(lambda, "lambda")?;
        let stationarity1 = block_gap(&self.block1, x1, lambda)?;
        let stationarity2 = block_gap(&self.block2, x2, lambda)?;
        let dual3 = (self.f3.gradient(x3) - lambda).norm();
        let primal = self.constraint_violation(x1, x2, x3)?;
        let max = stationarity1.max(stationarity2).max(dual3).max(primal);
        Ok(KktResidual {
            stationarity1,
            stationarity2,
            dual3,
            primal,
            max,
        })
    }
}

fn block_gap(block: &Block, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64> {
    if x.len() != block.dim() {
        return Err(Error::dims("block iterate", block.dim(), x.len()));
    }
    match &block.reg {
        None => Ok(0.0),
        Some(r) => {
            let shifted = x + block.map.apply_transpose(lambda)?;
            Ok((x - r.prox(&shifted, 1.0)?).norm())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::BoxSet;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn lasso_1d() -> RlsdProblem {
        let b1 = Block::new(
            BlockMap::dense(DMatrix::from_element(1, 1, 1.0)).unwrap(),
            Regularizer::l1(1.0).unwrap(),
        )
        .unwrap();
        RlsdProblem::new(b1, Block::empty(1), dv(&[3.0]), F3::Canonical).unwrap()
    }

    #[test]
    fn map_structure_flags() {
        assert_eq!(BlockMap::identity(4).unwrap().orthogonal_scale(), Some(1.0));
        assert_eq!(BlockMap::rank_one_column(3, 5).unwrap().orthogonal_scale(), Some(5.0));
        let mask = BlockMap::entry_mask(2, 2, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(mask.orthogonal_scale(), None);
        let full = BlockMap::entry_mask(1, 2, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(full.orthogonal_scale(), Some(1.0));
        assert!(!mask.has_full_column_rank());
        assert!(BlockMap::entry_mask(2, 2, &[]).is_err());
        assert!(BlockMap::entry_mask(2, 2, &[(2, 0)]).is_err());

        let q = DMatrix::from_row_slice(3, 2, &[0.6, 0.0, 0.8, 0.0, 0.0, 2.0]);
        // columns have norms 1 and 2: full rank but not c*I
        let d = BlockMap::dense(q).unwrap();
        assert_eq!(d.orthogonal_scale(), None);
        assert!((d.spectral_norm_sq() - 4.0).abs() < 1e-12);
        let o = BlockMap::dense(DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0])).unwrap();
        assert!((o.orthogonal_scale().unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_dense_rejected() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(BlockMap::dense(a).is_err());
        assert!(BlockMap::dense(DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn rank_one_column_adjoint() {
        let map = BlockMap::rank_one_column(2, 3).unwrap();
        let u = dv(&[1.0, -2.0]);
        let y = dv(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let au = map.apply(&u).unwrap();
        assert_eq!(au, dv(&[1.0, -2.0, 1.0, -2.0, 1.0, -2.0]));
        let aty = map.apply_transpose(&y).unwrap();
        assert_eq!(aty, dv(&[9.0, 12.0]));
        assert!((au.dot(&y) - u.dot(&aty)).abs() < 1e-14);
    }

    #[test]
    fn problem_validation() {
        let b = dv(&[1.0, 2.0]);
        let id = || Block::new(BlockMap::identity(2).unwrap(), Regularizer::l1(1.0).unwrap()).unwrap();
        assert!(RlsdProblem::new(Block::empty(2), Block::empty(2), b.clone(), F3::Canonical).is_err());
        assert!(RlsdProblem::new(id(), Block::empty(3), b.clone(), F3::Canonical).is_err());
        assert!(RlsdProblem::new(id(), id(), b.clone(), F3::Canonical).is_ok());
        let nuc = Regularizer::nuclear(1.0, 3, 3).unwrap();
        assert!(Block::new(BlockMap::identity(2).unwrap(), nuc).is_err());
    }

    #[test]
    fn objective_examples() {
        let p = lasso_1d();
        let z = DVector::zeros(1);
        assert_eq!(p.objective(&z, &DVector::zeros(0), &z).unwrap(), 0.0);
        let v = dv(&[2.0]);
        assert_eq!(p.objective(&z, &DVector::zeros(0), &v).unwrap(), 2.0);
        assert!(p.objective(&DVector::zeros(2), &DVector::zeros(0), &z).is_err());
    }

    #[test]
    fn infeasible_points_are_errors() {
        let set = BoxSet::uniform(0.0, 1.0).unwrap();
        let b1 = Block::new(BlockMap::identity(2).unwrap(), Regularizer::zero_on_box(set).unwrap()).unwrap();
        let b2 = Block::new(BlockMap::identity(2).unwrap(), Regularizer::l1(1.0).unwrap()).unwrap();
        let p = RlsdProblem::new(b1, b2, dv(&[1.0, 1.0]), F3::Canonical).unwrap();
        let err = p
            .objective(&dv(&[2.0, 0.0]), &DVector::zeros(2), &DVector::zeros(2))
            .unwrap_err();
        match err {
            Error::Infeasible { block, violation } => {
                assert_eq!(block, "block1");
                assert!((violation - 1.0).abs() < 1e-15);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn constraint_violation_examples() {
        let p = lasso_1d();
        let e = DVector::zeros(0);
        let z = DVector::zeros(1);
        assert_eq!(p.constraint_violation(&z, &e, &dv(&[3.0])).unwrap(), 0.0);
        assert_eq!(p.constraint_violation(&z, &e, &z).unwrap(), 3.0);
    }

    #[test]
    fn lagrangian_examples() {
        let p = lasso_1d();
        let e = DVector::zeros(0);
        let z = DVector::zeros(1);
        // x = 0, lambda = 0: (gamma/2) ||b||^2
        assert_eq!(p.augmented_lagrangian(&z, &e, &z, &z, 2.0).unwrap(), 9.0);
        // feasible: equals objective
        let (x1, x3) = (dv(&[1.0]), dv(&[2.0]));
        let f = p.objective(&x1, &e, &x3).unwrap();
        let l = p.augmented_lagrangian(&x1, &e, &x3, &dv(&[7.0]), 5.0).unwrap();
        assert_eq!(f, l);
        assert!(p.augmented_lagrangian(&x1, &e, &x3, &z, 0.0).is_err());
    }

    #[test]
    fn kkt_examples() {
        let p = lasso_1d();
        let e = DVector::zeros(0);
        let k = p.kkt_residual(&dv(&[2.0]), &e, &dv(&[1.0]), &dv(&[1.0])).unwrap();
        assert!(k.max <= 1e-10, "{k:?}");

        let k = p.kkt_residual(&dv(&[0.5]), &e, &dv(&[0.25]), &dv(&[-1.0])).unwrap();
        assert_eq!(k.dual3, 1.25);
        assert_eq!(k.max, [k.stationarity1, k.stationarity2, k.dual3, k.primal].iter().cloned().fold(0.0, f64::max));

        let zb = Block::new(BlockMap::identity(3).unwrap(), Regularizer::l1(1.0).unwrap()).unwrap();
        let zb2 = Block::new(BlockMap::identity(3).unwrap(), Regularizer::l1(2.0).unwrap()).unwrap();
        let zp = RlsdProblem::new(zb, zb2, DVector::zeros(3), F3::Canonical).unwrap();
        let z = DVector::zeros(3);
        let k = zp.kkt_residual(&z, &z, &z, &z).unwrap();
        assert_eq!(k, KktResidual { stationarity1: 0.0, stationarity2: 0.0, dual3: 0.0, primal: 0.0, max: 0.0 });
    }

    #[test]
    fn quadratic_f3_validation() {
        let q = DMatrix::from_diagonal(&dv(&[1.0, 2.0]));
        let f = StronglyConvexSmooth::new(q.clone(), dv(&[1.0, 2.0]), None, None).unwrap();
        assert_eq!(f.sigma(), 1.0);
        assert_eq!(f.lipschitz(), 2.0);
        // -0.5 * (1/1 + 4/2)
        assert!((f.lower_bound() + 1.5).abs() < 1e-14);
        assert!(StronglyConvexSmooth::new(q.clone(), dv(&[0.0, 0.0]), Some(1.5), None).is_err());
        assert!(StronglyConvexSmooth::new(q.clone(), dv(&[0.0, 0.0]), None, Some(1.9)).is_err());
        assert!(StronglyConvexSmooth::new(q.clone(), dv(&[0.0, 0.0]), Some(0.5), Some(3.0)).is_ok());
        let singular = DMatrix::from_diagonal(&dv(&[0.0, 2.0]));
        assert!(StronglyConvexSmooth::new(singular, dv(&[0.0, 0.0]), None, None).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(StronglyConvexSmooth::new(asym, dv(&[0.0, 0.0]), None, None).is_err());
        let m = f.minimizer().unwrap();
        assert!((f.value(&m) - f.lower_bound()).abs() < 1e-14);
    }
}
