//! Compressed sparse row matrices, direct and iterative linear solvers, and
//! the smallest-generalized-eigenvalue solver used by the inf-sup analyzer.
//!
//! Sparse factorizations (LU with fill-reducing ordering, Cholesky) are
//! delegated to `faer`; the CSR type, the Krylov solvers and the
//! preconditioners live here.

mod eigen;
mod iter;
mod mm;

pub use eigen::{
    dense_smallest_generalized, smallest_generalized_eigenvalue, EigOptions, EigOutcome, SymOp,
};
pub use iter::{build_preconditioner, Preconditioner};
pub use mm::{read_matrix_market, read_vector_market, write_matrix_market, write_vector_market};

use crate::error::{Error, Result};
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// faer's parallel kernels miscompute large triangular solves in this
/// environment (verified against sequential results); element-level
/// parallelism lives in our own rayon loops instead, which also keeps every
/// factorization bitwise independent of the thread count.
pub(crate) fn ensure_faer_sequential() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || *row_ptr.last().unwrap_or(&0) != col_idx.len() {
            return Err(Error::invalid("inconsistent row pointer array"));
        }
        if col_idx.len() != values.len() {
            return Err(Error::invalid("column/value length mismatch"));
        }
        for r in 0..n_rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::invalid("row pointers must be nondecreasing"));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::invalid(format!(
                        "columns not strictly increasing in row {r}"
                    )));
                }
            }
            if let Some(&last) = cols.last() {
                if last as usize >= n_cols {
                    return Err(Error::invalid(format!("column out of range in row {r}")));
                }
            }
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut per_row: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            per_row[r].push((c as u32, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// Entry lookup by binary search (zero if not stored).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// y = A x, rows computed independently (deterministic under any thread
    /// count).
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        let row_ptr = &self.row_ptr;
        let col_idx = &self.col_idx;
        let values = &self.values;
        y.par_iter_mut().enumerate().for_each(|(r, yr)| {
            let mut acc = 0.0;
            for p in row_ptr[r]..row_ptr[r + 1] {
                acc += values[p] * x[col_idx[p] as usize];
            }
            *yr = acc;
        });
    }

    /// y = A^T x (serial; the transpose product is only used on the smaller
    /// eigenvalue-path matrices).
    pub fn spmv_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        y.fill(0.0);
        for r in 0..self.n_rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[p] as usize] += self.values[p] * xr;
            }
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for k in 0..self.n_cols {
            counts[k + 1] += counts[k];
        }
        let row_ptr = counts.clone();
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = counts;
        for r in 0..self.n_rows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[p] as usize;
                let dst = next[c];
                next[c] += 1;
                col_idx[dst] = r as u32;
                values[dst] = self.values[p];
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::<f64>::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[p] as usize)] = self.values[p];
            }
        }
        m
    }

    /// Converts to a faer column-major sparse matrix (for factorization).
    pub fn to_faer_csc(&self) -> Result<SparseColMat<usize, f64>> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push(Triplet::new(r, self.col_idx[p] as usize, self.values[p]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &triplets)
            .map_err(|e| Error::numerical(format!("faer sparse conversion failed: {e:?}")))
    }

    /// Removes entries with |value| <= rel_tol * (max |value| in their row).
    pub fn drop_small(&mut self, rel_tol: f64) {
        let mut write = 0;
        let mut new_ptr = vec![0usize; self.n_rows + 1];
        for r in 0..self.n_rows {
            let start = self.row_ptr[r];
            let end = self.row_ptr[r + 1];
            let mut row_max: f64 = 0.0;
            for p in start..end {
                row_max = row_max.max(self.values[p].abs());
            }
            let cut = rel_tol * row_max;
            for p in start..end {
                if self.values[p].abs() > cut {
                    self.col_idx[write] = self.col_idx[p];
                    self.values[write] = self.values[p];
                    write += 1;
                }
            }
            new_ptr[r + 1] = write;
        }
        self.col_idx.truncate(write);
        self.values.truncate(write);
        self.col_idx.shrink_to_fit();
        self.values.shrink_to_fit();
        self.row_ptr = new_ptr;
    }

    /// Largest absolute asymmetry |A - A^T| relative to max |A| (square
    /// matrices).
    pub fn symmetry_error(&self) -> f64 {
        assert_eq!(self.n_rows, self.n_cols);
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for r in 0..self.n_rows {
            let (c1, v1) = self.row(r);
            let (c2, v2) = t.row(r);
            let mut i = 0;
            let mut j = 0;
            while i < c1.len() || j < c2.len() {
                let (a, b) = match (c1.get(i), c2.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        let r = (v1[i], v2[j]);
                        i += 1;
                        j += 1;
                        r
                    }
                    (Some(&x), y) if y.map_or(true, |&y| x < y) => {
                        let r = (v1[i], 0.0);
                        i += 1;
                        r
                    }
                    _ => {
                        let r = (0.0, v2[j]);
                        j += 1;
                        r
                    }
                };
                worst = worst.max((a - b).abs());
                scale = scale.max(a.abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }
}

/// Euclidean norm.
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean inner product (serial, fixed order: results are independent of
/// the thread count).
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    DirectLu,
    Gmres,
    BiCgStab,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondKind {
    None,
    Jacobi,
    Ilu0,
    Ic0,
    /// Dense inversion of the diagonal blocks induced by a block partition
    /// (the velocity blocks of one space-time dof, in this artifact).
    BlockJacobi,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: SolveMethod,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub preconditioner: PrecondKind,
    #[serde(default = "default_restart")]
    pub gmres_restart: usize,
}

fn default_restart() -> usize {
    50
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolveMethod::DirectLu,
            rel_tol: 1e-10,
            max_iter: 5000,
            preconditioner: PrecondKind::Ilu0,
            gmres_restart: 50,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub rel_residual: f64,
    pub iterations: usize,
}

/// Keeps direct factorization away from matrices whose fill would not fit in
/// memory; such systems go through the Krylov solvers instead.
const DIRECT_NNZ_CAP: usize = 60_000_000;

/// Solves A x = b according to the options. See
/// [`solve_linear_with_blocks`] for supplying a block partition to the
/// block-Jacobi preconditioner.
pub fn solve_linear(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<SolveOutcome> {
    solve_linear_with_blocks(a, b, opts, None)
}

pub fn solve_linear_with_blocks(
    a: &CsrMatrix,
    b: &[f64],
    opts: &SolverOptions,
    blocks: Option<&[usize]>,
) -> Result<SolveOutcome> {
    opts.validate()?;
    if a.n_rows != a.n_cols {
        return Err(Error::invalid("solve_linear needs a square matrix"));
    }
    if b.len() != a.n_rows {
        return Err(Error::invalid("right-hand side length mismatch"));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(SolveOutcome {
            x: vec![0.0; a.n_rows],
            rel_residual: 0.0,
            iterations: 0,
        });
    }
    let outcome = match opts.method {
        SolveMethod::DirectLu => {
            if a.nnz() > DIRECT_NNZ_CAP {
                return Err(Error::invalid(format!(
                    "matrix with {} nonzeros is too large for the direct solver; \
                     use an iterative method",
                    a.nnz()
                )));
            }
            let x = direct_lu_solve(a, b)?;
            let mut r = vec![0.0; a.n_rows];
            a.spmv(&x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= bi;
            }
            SolveOutcome {
                x,
                rel_residual: norm2(&r) / bnorm,
                iterations: 0,
            }
        }
        SolveMethod::Gmres | SolveMethod::BiCgStab | SolveMethod::Cg => {
            let prec = build_preconditioner(a, opts.preconditioner, blocks)?;
            match opts.method {
                SolveMethod::Gmres => iter::gmres(a, b, &prec, opts),
                SolveMethod::BiCgStab => iter::bicgstab(a, b, &prec, opts),
                SolveMethod::Cg => iter::cg(a, b, &prec, opts),
                SolveMethod::DirectLu => unreachable!(),
            }?
        }
    };
    if opts.method == SolveMethod::DirectLu
        && !(outcome.rel_residual <= opts.rel_tol.max(1e-13) * 10.0)
    {
        return Err(Error::numerical(format!(
            "direct solve left relative residual {:.3e}",
            outcome.rel_residual
        )));
    }
    Ok(outcome)
}

/// Sparse LU with partial pivoting and a fill-reducing column ordering.
pub fn sparse_lu(
    csc: &SparseColMat<usize, f64>,
) -> Result<faer::sparse::linalg::solvers::Lu<usize, f64>> {
    use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
    ensure_faer_sequential();
    let symbolic = SymbolicLu::try_new(csc.symbolic())
        .map_err(|e| Error::numerical(format!("symbolic LU failed: {e:?}")))?;
    Lu::try_new_with_symbolic(symbolic, csc.as_ref())
        .map_err(|e| Error::numerical(format!("sparse LU failed: {e:?}")))
}

/// Sparse Cholesky of an SPD matrix (full pattern supplied, lower side
/// accessed).
pub fn sparse_llt(
    csc: &SparseColMat<usize, f64>,
) -> Result<faer::sparse::linalg::solvers::Llt<usize, f64>> {
    use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
    ensure_faer_sequential();
    let symbolic = SymbolicLlt::try_new(csc.symbolic(), faer::Side::Lower)
        .map_err(|e| Error::numerical(format!("symbolic Cholesky failed: {e:?}")))?;
    Llt::try_new_with_symbolic(symbolic, csc.as_ref(), faer::Side::Lower)
        .map_err(|e| Error::numerical(format!("sparse Cholesky failed: {e:?}")))
}

fn direct_lu_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    use faer::linalg::solvers::Solve;
    let csc = a.to_faer_csc()?;
    let lu = sparse_lu(&csc)?;
    let rhs = faer::MatRef::from_column_major_slice(b, b.len(), 1);
    let x = lu.solve(rhs);
    Ok((0..b.len()).map(|i| x[(i, 0)]).collect())
}
