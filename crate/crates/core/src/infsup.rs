//! Discrete inf-sup constant: beta_delta = sqrt of the smallest eigenvalue
//! of the pencil (B M_X^-1 B^T, M_Y), compared against the closed-form
//! lower bound guaranteed by the stable-pair construction.

use crate::error::{Error, Result};
use crate::problems::{ProblemKind, ProblemSpec};
use crate::sparse::{
    dense_smallest_generalized, smallest_generalized_eigenvalue, sparse_llt, sparse_lu,
    CsrMatrix, EigOptions, SymOp,
};
use faer::linalg::solvers::SolveCore;
use faer::Mat;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct InfSupResult {
    pub n: usize,
    pub beta_delta: f64,
    pub beta_lb: f64,
    pub ratio: f64,
    pub problem: ProblemKind,
}

/// Closed-form lower bound for the discrete inf-sup constant of the
/// (transformed) problem: alpha_a / (sqrt(2) max(1, c_a)).
pub fn lower_bound(problem: &ProblemSpec) -> f64 {
    let alpha = problem.alpha_a();
    let ca = problem.continuity_a();
    alpha / (2.0f64.sqrt() * ca.max(1.0))
}

/// Reference-only bound for the untransformed time-dependent problem
/// (Garding case with lambda_a = q_inv > 0); the discretization itself
/// always runs on the transformed coercive problem.
pub fn lower_bound_untransformed_reference(q_inv: f64, t_final: f64) -> f64 {
    let alpha = q_inv;
    let ca = q_inv;
    let lambda = q_inv;
    alpha / (2.0f64.sqrt() * (ca + lambda).max(1.0))
        * (-lambda * t_final).exp()
        / (1.0 + 2.0 * lambda * lambda).max(2.0).sqrt()
}

pub struct BetaOutcome {
    pub beta: f64,
    pub lambda_min: f64,
    pub iterations: usize,
    pub used_dense_path: bool,
}

/// Operator B M_X^-1 B^T acting on test-space vectors.
struct NormalOp<'a> {
    b: &'a CsrMatrix,
    bt: CsrMatrix,
    mx_llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl<'a> NormalOp<'a> {
    fn new(b: &'a CsrMatrix, m_x: &CsrMatrix) -> Result<Self> {
        Ok(NormalOp {
            b,
            bt: b.transpose(),
            mx_llt: sparse_llt(&m_x.to_faer_csc()?)?,
        })
    }
}

impl SymOp for NormalOp<'_> {
    fn dim(&self) -> usize {
        self.b.n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        let mut w = vec![0.0; n];
        self.bt.spmv(x, &mut w);
        let rhs = faer::MatMut::from_column_major_slice_mut(&mut w, n, 1);
        self.mx_llt
            .solve_in_place_with_conj(faer::Conj::No, rhs);
        self.b.spmv(&w, y);
    }
}

/// Preconditioner (B M_X^-1 B^T)^-1 = B^-T M_X B^-1 from one sparse LU of B.
struct InverseNormalOp<'a> {
    m_x: &'a CsrMatrix,
    b_lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl<'a> InverseNormalOp<'a> {
    fn new(b: &CsrMatrix, m_x: &'a CsrMatrix) -> Result<Self> {
        Ok(InverseNormalOp {
            m_x,
            b_lu: sparse_lu(&b.to_faer_csc()?)?,
            n: b.n_rows,
        })
    }
}

impl SymOp for InverseNormalOp<'_> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        let mut w = x.to_vec();
        let rhs = faer::MatMut::from_column_major_slice_mut(&mut w, n, 1);
        self.b_lu.solve_in_place_with_conj(faer::Conj::No, rhs);
        self.m_x.spmv(&w, y);
        let rhs = faer::MatMut::from_column_major_slice_mut(y, n, 1);
        self.b_lu
            .solve_transpose_in_place_with_conj(faer::Conj::No, rhs);
    }
}

/// Computes beta_delta from the assembled system and Gram matrices.
///
/// Dense path up to `opts.dense_threshold` unknowns; beyond that a LOBPCG
/// iteration preconditioned with the inverse of the normal operator
/// obtained from one sparse LU of B.
pub fn compute_beta(
    b: &CsrMatrix,
    m_x: &CsrMatrix,
    m_y: &CsrMatrix,
    opts: &EigOptions,
) -> Result<BetaOutcome> {
    let n = b.n_rows;
    if b.n_cols != n || m_x.n_rows != n || m_y.n_rows != n {
        return Err(Error::invalid("system and Gram dimensions do not match"));
    }
    if n <= opts.dense_threshold || n <= 3 * opts.block_size {
        let mx_llt = sparse_llt(&m_x.to_faer_csc()?)?;
        // M_X^-1 B^T, then S = B (M_X^-1 B^T)
        let bt = b.transpose();
        let mut rhs = bt.to_dense();
        mx_llt.solve_in_place_with_conj(faer::Conj::No, rhs.as_mut());
        let mut s = Mat::<f64>::zeros(n, n);
        let mut col = vec![0.0; n];
        let mut out = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = rhs[(i, j)];
            }
            b.spmv(&col, &mut out);
            for i in 0..n {
                s[(i, j)] = out[i];
            }
        }
        let (lambda, _) = dense_smallest_generalized(s.as_ref(), m_y.to_dense().as_ref())?;
        Ok(BetaOutcome {
            beta: lambda.max(0.0).sqrt(),
            lambda_min: lambda,
            iterations: 0,
            used_dense_path: true,
        })
    } else {
        let op = NormalOp::new(b, m_x)?;
        let prec = InverseNormalOp::new(b, m_x)?;
        let out = smallest_generalized_eigenvalue(&op, m_y, Some(&prec), opts)?;
        Ok(BetaOutcome {
            beta: out.lambda.max(0.0).sqrt(),
            lambda_min: out.lambda,
            iterations: out.iterations,
            used_dense_path: false,
        })
    }
}

/// One CSV row per resolution: n, beta_delta, beta_lb, ratio.
pub fn write_infsup_csv(path: &Path, rows: &[InfSupResult]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "n,beta_delta,beta_lb,ratio")?;
    for r in rows {
        writeln!(
            f,
            "{},{:.6},{:.7},{:.4}",
            r.n, r.beta_delta, r.beta_lb, r.ratio
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pencil_gives_one() {
        let i = CsrMatrix::identity(12);
        let out = compute_beta(&i, &i, &i, &EigOptions::default()).unwrap();
        assert!((out.beta - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lower_bound_formulas() {
        let sq2 = 2.0f64.sqrt();
        // stationary c = d = 0.1 -> 0.1/sqrt(2)
        let p = ProblemSpec::stationary(0.1, 0.1, 4, 4);
        assert!((lower_bound(&p) - 0.1 / sq2).abs() < 1e-15);
        assert!((lower_bound(&p) - 0.0707107).abs() < 1e-7);
        // transformed q_inv = 0.8 -> 0.8/sqrt(2)
        let p = ProblemSpec::time_dependent(0.8, 3, 4, 4);
        assert!((lower_bound(&p) - 0.8 / sq2).abs() < 1e-15);
        assert!((lower_bound(&p) - 0.5656854).abs() < 1e-7);
        // table ratio check: 0.40317 / (0.4/sqrt(2)) ~ 1.425
        let ratio = 0.40317 / (0.4 / sq2);
        assert!((ratio - 1.425).abs() < 1e-3);
        // stationary with c or d above one divides by the larger constant
        let p = ProblemSpec::stationary(2.0, 0.5, 4, 4);
        assert!((lower_bound(&p) - 0.5 / (sq2 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn untransformed_reference_bound_is_smaller() {
        let q_inv = 0.8;
        let p = ProblemSpec::time_dependent(q_inv, 3, 4, 4);
        let transformed = lower_bound(&p);
        let reference = lower_bound_untransformed_reference(q_inv, 0.75);
        assert!(reference < transformed);
        assert!(reference > 0.0);
    }
}
