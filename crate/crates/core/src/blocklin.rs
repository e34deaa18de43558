//! Block-structured linear algebra for the window problem: the model-mismatch
//! residual `G(u)`, its block-bidiagonal Jacobian, the block-tridiagonal
//! normal matrix `G'^T G' + alpha H^T H` with a blockwise Cholesky solve, and
//! matrix-free spectral-norm estimates used by the condition checks.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::obs::ObservationOperator;
use crate::rng::SeededRng;
use crate::window::WindowState;

/// Relative residual accepted from a factored solve; anything worse reports
/// ill-posedness. Structured replacement for a NaN probe on the inverse.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// Default relative tolerance of the power-iteration norm estimators.
pub const NORM_REL_TOL: f64 = 1e-6;

/// Default iteration cap of the power-iteration norm estimators.
pub const NORM_MAX_ITER: usize = 500;

/// Anything that supports matrix-vector products with itself and its
/// transpose; the operand of the generic spectral-norm estimator.
pub trait LinearMap {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn mv(&self, v: &DVector<f64>) -> DVector<f64>;
    fn mtv(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl LinearMap for DMatrix<f64> {
    fn nrows(&self) -> usize {
        DMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        DMatrix::ncols(self)
    }
    fn mv(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
    fn mtv(&self, v: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(v)
    }
}

/// The window Jacobian `G'(u)`: block row `j` holds `-F'(u_j)` in block
/// column `j` and the identity in block column `j + 1`. Size
/// `n N x n (N + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBidiagonal {
    n: usize,
    /// The `N` lower blocks `-F'(u_j)`.
    pub lower: Vec<DMatrix<f64>>,
}

impl BlockBidiagonal {
    pub fn new(lower: Vec<DMatrix<f64>>) -> Self {
        assert!(!lower.is_empty());
        let n = lower[0].nrows();
        assert!(lower.iter().all(|b| b.nrows() == n && b.ncols() == n));
        Self { n, lower }
    }

    pub fn block_dim(&self) -> usize {
        self.n
    }

    /// Number of block rows `N`.
    pub fn num_block_rows(&self) -> usize {
        self.lower.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (n, nb) = (self.n, self.lower.len());
        let mut out = DMatrix::zeros(n * nb, n * (nb + 1));
        for (j, b) in self.lower.iter().enumerate() {
            out.view_mut((j * n, j * n), (n, n)).copy_from(b);
            out.view_mut((j * n, (j + 1) * n), (n, n))
                .copy_from(&DMatrix::identity(n, n));
        }
        out
    }
}

impl LinearMap for BlockBidiagonal {
    fn nrows(&self) -> usize {
        self.n * self.lower.len()
    }
    fn ncols(&self) -> usize {
        self.n * (self.lower.len() + 1)
    }
    fn mv(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        assert_eq!(v.len(), self.ncols());
        let mut out = DVector::zeros(self.nrows());
        for (j, b) in self.lower.iter().enumerate() {
            let mut row = out.rows_mut(j * n, n);
            row.gemv(1.0, b, &v.rows(j * n, n), 0.0);
            row += v.rows((j + 1) * n, n);
        }
        out
    }
    fn mtv(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        assert_eq!(v.len(), self.nrows());
        let mut out = DVector::zeros(self.ncols());
        for (j, b) in self.lower.iter().enumerate() {
            out.rows_mut(j * n, n).gemv_tr(1.0, b, &v.rows(j * n, n), 1.0);
            out.rows_mut((j + 1) * n, n).add_assign(&v.rows(j * n, n));
        }
        out
    }
}

use std::ops::AddAssign;

/// A block-diagonal matrix; used for differences of window Jacobians, whose
/// identity blocks cancel.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonal {
    pub blocks: Vec<DMatrix<f64>>,
}

impl LinearMap for BlockDiagonal {
    fn nrows(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }
    fn ncols(&self) -> usize {
        self.blocks.iter().map(|b| b.ncols()).sum()
    }
    fn mv(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nrows());
        let (mut r, mut c) = (0, 0);
        for b in &self.blocks {
            out.rows_mut(r, b.nrows())
                .gemv(1.0, b, &v.rows(c, b.ncols()), 0.0);
            r += b.nrows();
            c += b.ncols();
        }
        out
    }
    fn mtv(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols());
        let (mut r, mut c) = (0, 0);
        for b in &self.blocks {
            out.rows_mut(c, b.ncols())
                .gemv_tr(1.0, b, &v.rows(r, b.nrows()), 0.0);
            r += b.nrows();
            c += b.ncols();
        }
        out
    }
}

/// The model-mismatch residual: block `j` is `u_{j+1} - F(u_j)`, stacked to
/// length `n N`. Zero exactly on a model trajectory.
pub fn residual(model: &ModelSpec, u: &WindowState) -> Result<DVector<f64>> {
    let (n, nsteps) = (u.block_dim(), u.num_steps());
    let mut out = DVector::zeros(n * nsteps);
    for j in 0..nsteps {
        let stepped = model.step(u.block(j))?;
        out.rows_mut(j * n, n).copy_from(&(u.block(j + 1) - stepped));
    }
    Ok(out)
}

/// The window Jacobian `G'(u)` with lower blocks `-F'(u_j)`.
pub fn jacobian(model: &ModelSpec, u: &WindowState) -> BlockBidiagonal {
    BlockBidiagonal::new(
        (0..u.num_steps())
            .map(|j| -model.step_jacobian(u.block(j)))
            .collect(),
    )
}

/// Symmetric block-tridiagonal matrix: `N + 1` diagonal blocks and `N`
/// sub-diagonal blocks (the super-diagonal is the transpose).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    pub diag: Vec<DMatrix<f64>>,
    pub offdiag: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    pub fn block_dim(&self) -> usize {
        self.diag[0].nrows()
    }

    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn total_dim(&self) -> usize {
        self.block_dim() * self.num_blocks()
    }

    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.block_dim();
        assert_eq!(v.len(), self.total_dim());
        let mut out = DVector::zeros(v.len());
        for (j, d) in self.diag.iter().enumerate() {
            out.rows_mut(j * n, n).gemv(1.0, d, &v.rows(j * n, n), 0.0);
        }
        for (j, c) in self.offdiag.iter().enumerate() {
            // c couples block j into block row j + 1 and transposed back.
            out.rows_mut((j + 1) * n, n)
                .gemv(1.0, c, &v.rows(j * n, n), 1.0);
            out.rows_mut(j * n, n)
                .gemv_tr(1.0, c, &v.rows((j + 1) * n, n), 1.0);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.block_dim();
        let mut out = DMatrix::zeros(self.total_dim(), self.total_dim());
        for (j, d) in self.diag.iter().enumerate() {
            out.view_mut((j * n, j * n), (n, n)).copy_from(d);
        }
        for (j, c) in self.offdiag.iter().enumerate() {
            out.view_mut(((j + 1) * n, j * n), (n, n)).copy_from(c);
            out.view_mut((j * n, (j + 1) * n), (n, n))
                .copy_from(&c.transpose());
        }
        out
    }

    /// Add `alpha` to the diagonal entries of observed components.
    pub fn add_observation_weight(&mut self, alpha: f64, h: &ObservationOperator) {
        assert_eq!(h.state_dim(), self.block_dim());
        assert_eq!(h.num_steps() + 1, self.num_blocks());
        for (&t, sel) in h.obs_times().iter().zip(h.selectors()) {
            for &c in sel {
                self.diag[t][(c, c)] += alpha;
            }
        }
    }

    /// Add `shift` to every diagonal entry (Levenberg-Marquardt damping).
    pub fn add_diagonal_shift(&mut self, shift: f64) {
        let n = self.block_dim();
        for d in &mut self.diag {
            for i in 0..n {
                d[(i, i)] += shift;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for d in &mut self.diag {
            *d *= s;
        }
        for c in &mut self.offdiag {
            *c *= s;
        }
    }

    /// Blockwise Cholesky factorization. Breakdown (a non-positive pivot
    /// block) reports ill-posedness.
    pub fn factor(&self) -> Result<BlockTriFactor> {
        let nb = self.num_blocks();
        let mut chol: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(nb);
        let mut sub = Vec::with_capacity(nb.saturating_sub(1));
        let first = Cholesky::new(self.diag[0].clone()).ok_or_else(|| Error::IllPosed {
            reason: "Cholesky breakdown in pivot block 0".into(),
        })?;
        chol.push(first);
        for j in 1..nb {
            let c = &self.offdiag[j - 1];
            // M_j = C S_{j-1}^{-1}, via S_{j-1}^{-1} C^T.
            let m = chol[j - 1].solve(&c.transpose()).transpose();
            let schur = &self.diag[j] - &m * c.transpose();
            let f = Cholesky::new(schur).ok_or_else(|| Error::IllPosed {
                reason: format!("Cholesky breakdown in pivot block {j}"),
            })?;
            chol.push(f);
            sub.push(m);
        }
        Ok(BlockTriFactor {
            n: self.block_dim(),
            chol,
            sub,
        })
    }

    /// Solve through an existing factorization and verify the residual.
    pub fn solve_with(&self, f: &BlockTriFactor, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let x = f.solve(rhs);
        let res = (self.matvec(&x) - rhs).norm();
        let tol = SOLVE_RESIDUAL_TOL * (1.0 + rhs.norm());
        if !res.is_finite() || res > tol {
            return Err(Error::IllPosed {
                reason: format!("solve residual {res:.3e} exceeds tolerance {tol:.3e}"),
            });
        }
        Ok(x)
    }

    /// Sparse triplet dump (`row col value` per line) for inspection.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.block_dim();
        for (j, d) in self.diag.iter().enumerate() {
            for r in 0..n {
                for c in 0..n {
                    if d[(r, c)] != 0.0 {
                        writeln!(w, "{} {} {}", j * n + r, j * n + c, d[(r, c)])?;
                    }
                }
            }
        }
        for (j, b) in self.offdiag.iter().enumerate() {
            for r in 0..n {
                for c in 0..n {
                    if b[(r, c)] != 0.0 {
                        writeln!(w, "{} {} {}", (j + 1) * n + r, j * n + c, b[(r, c)])?;
                        writeln!(w, "{} {} {}", j * n + c, (j + 1) * n + r, b[(r, c)])?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Factored form `A = L S L^T` with unit block-bidiagonal `L` (sub blocks
/// `M_j`) and Cholesky-factored pivot blocks `S_j`.
pub struct BlockTriFactor {
    n: usize,
    chol: Vec<Cholesky<f64, Dyn>>,
    sub: Vec<DMatrix<f64>>,
}

impl BlockTriFactor {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let nb = self.chol.len();
        assert_eq!(rhs.len(), n * nb);
        let mut x = rhs.clone();
        // Forward: z_j = b_j - M_j z_{j-1}.
        for j in 1..nb {
            let prev = x.rows((j - 1) * n, n).into_owned();
            x.rows_mut(j * n, n).gemv(-1.0, &self.sub[j - 1], &prev, 1.0);
        }
        // Pivot solves: w_j = S_j^{-1} z_j.
        for j in 0..nb {
            let w = self.chol[j].solve(&x.rows(j * n, n).into_owned());
            x.rows_mut(j * n, n).copy_from(&w);
        }
        // Backward: x_j = w_j - M_{j+1}^T x_{j+1}.
        for j in (0..nb - 1).rev() {
            let next = x.rows((j + 1) * n, n).into_owned();
            x.rows_mut(j * n, n).gemv_tr(-1.0, &self.sub[j], &next, 1.0);
        }
        x
    }
}

/// Assemble the regularized normal matrix `G'^T G' + alpha H^T H` from the
/// window Jacobian. Diagonal block `j` is `F'_j^T F'_j [j<N] + I [j>0] +
/// alpha D_j`; sub-diagonal block `j` is `-F'_j`.
pub fn assemble_normal(
    j: &BlockBidiagonal,
    alpha: f64,
    h: &ObservationOperator,
) -> BlockTridiagonal {
    assert!(alpha >= 0.0);
    let n = j.block_dim();
    let nsteps = j.num_block_rows();
    let eye = DMatrix::identity(n, n);
    let mut diag = Vec::with_capacity(nsteps + 1);
    for k in 0..=nsteps {
        let mut d = DMatrix::zeros(n, n);
        if k < nsteps {
            d.gemm_tr(1.0, &j.lower[k], &j.lower[k], 0.0);
        }
        if k > 0 {
            d += &eye;
        }
        diag.push(d);
    }
    let mut out = BlockTridiagonal {
        diag,
        offdiag: j.lower.clone(),
    };
    if alpha > 0.0 {
        out.add_observation_weight(alpha, h);
    }
    out
}

/// Factor `A` and solve `A x = rhs`, verifying the residual.
pub fn solve_normal(a: &BlockTridiagonal, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let f = a.factor()?;
    a.solve_with(&f, rhs)
}

/// Spectral-norm estimate from power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rel_tol: f64,
}

/// Power iteration on a symmetric PSD operator; returns `sqrt(lambda_max)`
/// and the final iterate for warm-starting subsequent estimates.
fn power_iteration<F>(
    dim: usize,
    apply: F,
    rel_tol: f64,
    max_iter: usize,
    warm: Option<&DVector<f64>>,
) -> Result<(NormEstimate, DVector<f64>)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut v = match warm {
        Some(w) if w.len() == dim && w.norm() > 0.0 => w.clone(),
        _ => SeededRng::new(0x5eed_0f_9052, 0).normal_vector(dim),
    };
    v /= v.norm();
    let mut value = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..max_iter {
        iterations = k + 1;
        let tv = apply(&v)?;
        let lambda = v.dot(&tv).max(0.0);
        value = lambda.sqrt();
        let norm = tv.norm();
        if norm == 0.0 {
            // Operator annihilates the iterate: norm estimate 0 is exact.
            value = 0.0;
            converged = true;
            break;
        }
        // For a symmetric operator the Rayleigh quotient sits within
        // ||T v - lambda v|| of an eigenvalue, so the eigenresidual gives a
        // sound stopping rule (unlike the change in the estimate, which can
        // stall slowly without being close).
        let eigresidual = (norm * norm - lambda * lambda).max(0.0).sqrt();
        if eigresidual <= rel_tol * lambda.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        v = tv / norm;
    }
    Ok((
        NormEstimate {
            value,
            iterations,
            converged,
            rel_tol,
        },
        v,
    ))
}

/// Estimate `||A^{-1} G'^T||_2` through power iteration on
/// `v -> A^{-1}(G'^T(G'(A^{-1} v)))`, given an existing factorization of `A`.
pub fn opnorm_solve_jt_factored(
    j: &BlockBidiagonal,
    a: &BlockTridiagonal,
    f: &BlockTriFactor,
    rel_tol: f64,
    max_iter: usize,
    warm: Option<&DVector<f64>>,
) -> Result<(NormEstimate, DVector<f64>)> {
    power_iteration(
        a.total_dim(),
        |v| {
            let x = a.solve_with(f, v)?;
            a.solve_with(f, &j.mtv(&j.mv(&x)))
        },
        rel_tol,
        max_iter,
        warm,
    )
}

/// Estimate `||A^{-1} G'^T||_2` (left-hand side of the first condition check).
pub fn opnorm_solve_jt(
    j: &BlockBidiagonal,
    a: &BlockTridiagonal,
    rel_tol: f64,
) -> Result<NormEstimate> {
    let f = a.factor()?;
    opnorm_solve_jt_factored(j, a, &f, rel_tol, NORM_MAX_ITER, None).map(|(e, _)| e)
}

/// Estimate `||A^{-1}||_2` through power iteration on `A^{-2}`, given an
/// existing factorization.
pub fn opnorm_inverse_factored(
    a: &BlockTridiagonal,
    f: &BlockTriFactor,
    rel_tol: f64,
    max_iter: usize,
    warm: Option<&DVector<f64>>,
) -> Result<(NormEstimate, DVector<f64>)> {
    power_iteration(
        a.total_dim(),
        |v| {
            let x = a.solve_with(f, v)?;
            a.solve_with(f, &x)
        },
        rel_tol,
        max_iter,
        warm,
    )
}

/// Estimate `||A^{-1}||_2` (enters the second, noisy-mode condition check).
pub fn opnorm_inverse(a: &BlockTridiagonal, rel_tol: f64) -> Result<NormEstimate> {
    let f = a.factor()?;
    opnorm_inverse_factored(a, &f, rel_tol, NORM_MAX_ITER, None).map(|(e, _)| e)
}

/// Estimate `||B||_2` of any linear map through power iteration on `B^T B`.
pub fn opnorm_matrix<M: LinearMap>(b: &M, rel_tol: f64) -> NormEstimate {
    opnorm_matrix_with(b, rel_tol, NORM_MAX_ITER)
}

/// `opnorm_matrix` with an explicit iteration budget, for callers that need
/// tight tolerances on operators with small spectral gaps.
pub fn opnorm_matrix_with<M: LinearMap>(b: &M, rel_tol: f64, max_iter: usize) -> NormEstimate {
    let (est, _) = power_iteration(b.ncols(), |v| Ok(b.mtv(&b.mv(v))), rel_tol, max_iter, None)
        .expect("matrix-only power iteration cannot fail");
    est
}
