//! Krylov solvers (CG, restarted GMRES, BiCGStab) with Jacobi, ILU(0),
//! IC(0) and block-Jacobi preconditioning. All inner products use a fixed
//! summation order so results do not depend on the thread count.

use super::{dot, norm2, CsrMatrix, PrecondKind, SolveOutcome, SolverOptions};
use crate::error::{Error, Result};

pub enum Preconditioner {
    Identity,
    /// Inverse diagonal.
    Jacobi(Vec<f64>),
    /// In-place ILU(0) factors on the matrix pattern.
    Ilu0(Ilu0),
    /// Incomplete Cholesky on the lower-triangular pattern.
    Ic0(Ic0),
    /// Factored dense diagonal blocks of a given partition.
    BlockJacobi(BlockJacobi),
}

impl Preconditioner {
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Jacobi(inv_diag) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv_diag) {
                    *zi = ri * di;
                }
            }
            Preconditioner::Ilu0(f) => f.apply(r, z),
            Preconditioner::Ic0(f) => f.apply(r, z),
            Preconditioner::BlockJacobi(f) => f.apply(r, z),
        }
    }
}

pub fn build_preconditioner(
    a: &CsrMatrix,
    kind: PrecondKind,
    blocks: Option<&[usize]>,
) -> Result<Preconditioner> {
    Ok(match kind {
        PrecondKind::None => Preconditioner::Identity,
        PrecondKind::Jacobi => {
            let mut inv = vec![0.0; a.n_rows];
            for (i, v) in inv.iter_mut().enumerate() {
                let d = a.get(i, i);
                if d == 0.0 {
                    return Err(Error::numerical(format!("zero diagonal in row {i}")));
                }
                *v = 1.0 / d;
            }
            Preconditioner::Jacobi(inv)
        }
        PrecondKind::Ilu0 => Preconditioner::Ilu0(Ilu0::new(a)?),
        PrecondKind::Ic0 => Preconditioner::Ic0(Ic0::new(a)?),
        PrecondKind::BlockJacobi => {
            let blocks = blocks.ok_or_else(|| {
                Error::invalid("block-Jacobi preconditioner needs a block partition")
            })?;
            Preconditioner::BlockJacobi(BlockJacobi::new(a, blocks)?)
        }
    })
}

/// ILU(0): incomplete LU on the sparsity pattern of A, unit lower diagonal.
pub struct Ilu0 {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    lu: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows;
        let mut lu = a.values.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                if a.col_idx[p] as usize == i {
                    diag_pos[i] = p;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(Error::numerical(format!("ILU(0): missing diagonal in row {i}")));
            }
        }
        // position map scratch: col -> position in the current row
        let mut pos_of = vec![usize::MAX; a.n_cols];
        for i in 0..n {
            let (start, end) = (a.row_ptr[i], a.row_ptr[i + 1]);
            for p in start..end {
                pos_of[a.col_idx[p] as usize] = p;
            }
            for p in start..diag_pos[i] {
                let k = a.col_idx[p] as usize;
                let piv = lu[diag_pos[k]];
                if piv == 0.0 {
                    return Err(Error::numerical(format!("ILU(0): zero pivot in row {k}")));
                }
                let lik = lu[p] / piv;
                lu[p] = lik;
                for q in diag_pos[k] + 1..a.row_ptr[k + 1] {
                    let j = a.col_idx[q] as usize;
                    let dst = pos_of[j];
                    if dst != usize::MAX {
                        lu[dst] -= lik * lu[q];
                    }
                }
            }
            for p in start..end {
                pos_of[a.col_idx[p] as usize] = usize::MAX;
            }
        }
        Ok(Ilu0 {
            row_ptr: a.row_ptr.clone(),
            col_idx: a.col_idx.clone(),
            lu,
            diag_pos,
        })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        // L z = r (unit diagonal)
        for i in 0..n {
            let mut acc = r[i];
            for p in self.row_ptr[i]..self.diag_pos[i] {
                acc -= self.lu[p] * z[self.col_idx[p] as usize];
            }
            z[i] = acc;
        }
        // U z = z
        for i in (0..n).rev() {
            let mut acc = z[i];
            for p in self.diag_pos[i] + 1..self.row_ptr[i + 1] {
                acc -= self.lu[p] * z[self.col_idx[p] as usize];
            }
            z[i] = acc / self.lu[self.diag_pos[i]];
        }
    }
}

/// IC(0): incomplete Cholesky A ~ L L^T on the lower-triangular pattern.
pub struct Ic0 {
    // L stored row-wise, diagonal last in each row
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    l: Vec<f64>,
}

impl Ic0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows;
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            let count = (a.row_ptr[i]..a.row_ptr[i + 1])
                .filter(|&p| a.col_idx[p] as usize <= i)
                .count();
            row_ptr[i + 1] = row_ptr[i] + count;
        }
        let mut col_idx = vec![0u32; row_ptr[n]];
        let mut l = vec![0.0; row_ptr[n]];
        for i in 0..n {
            let mut w = row_ptr[i];
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                if a.col_idx[p] as usize <= i {
                    col_idx[w] = a.col_idx[p];
                    l[w] = a.values[p];
                    w += 1;
                }
            }
            if w == row_ptr[i] || col_idx[w - 1] as usize != i {
                return Err(Error::numerical(format!("IC(0): missing diagonal in row {i}")));
            }
        }
        let mut pos_of = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            for p in start..end {
                pos_of[col_idx[p] as usize] = p;
            }
            for p in start..end - 1 {
                let k = col_idx[p] as usize;
                // l_ik = (a_ik - sum_{j<k} l_ij l_kj) / l_kk
                let mut acc = l[p];
                for q in row_ptr[k]..row_ptr[k + 1] - 1 {
                    let j = col_idx[q] as usize;
                    let dst = pos_of[j];
                    if dst != usize::MAX && dst < p {
                        acc -= l[dst] * l[q];
                    }
                }
                let lkk = l[row_ptr[k + 1] - 1];
                l[p] = acc / lkk;
            }
            let mut acc = l[end - 1];
            for p in start..end - 1 {
                acc -= l[p] * l[p];
            }
            if acc <= 0.0 {
                return Err(Error::numerical(format!(
                    "IC(0) breakdown at row {i} (pivot {acc:.3e})"
                )));
            }
            l[end - 1] = acc.sqrt();
            for p in start..end {
                pos_of[col_idx[p] as usize] = usize::MAX;
            }
        }
        Ok(Ic0 { row_ptr, col_idx, l })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        // L y = r
        for i in 0..n {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = r[i];
            for p in start..end - 1 {
                acc -= self.l[p] * z[self.col_idx[p] as usize];
            }
            z[i] = acc / self.l[end - 1];
        }
        // L^T z = y (column sweep)
        for i in (0..n).rev() {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let zi = z[i] / self.l[end - 1];
            z[i] = zi;
            for p in start..end - 1 {
                z[self.col_idx[p] as usize] -= self.l[p] * zi;
            }
        }
    }
}

/// Dense LU factors of the diagonal blocks of a partition.
pub struct BlockJacobi {
    block_ptr: Vec<usize>,
    // per block: column-major LU factors with partial pivoting
    factors: Vec<(Vec<f64>, Vec<usize>)>,
}

impl BlockJacobi {
    pub fn new(a: &CsrMatrix, block_ptr: &[usize]) -> Result<Self> {
        if block_ptr.first() != Some(&0) || block_ptr.last() != Some(&a.n_rows) {
            return Err(Error::invalid("block partition must cover all rows"));
        }
        let mut factors = Vec::with_capacity(block_ptr.len() - 1);
        for b in 0..block_ptr.len() - 1 {
            let (lo, hi) = (block_ptr[b], block_ptr[b + 1]);
            let m = hi - lo;
            let mut dense = vec![0.0; m * m];
            for i in lo..hi {
                let (cols, vals) = a.row(i);
                let from = cols.partition_point(|&c| (c as usize) < lo);
                for p in from..cols.len() {
                    let c = cols[p] as usize;
                    if c >= hi {
                        break;
                    }
                    dense[(c - lo) * m + (i - lo)] = vals[p];
                }
            }
            let piv = lu_factor_in_place(&mut dense, m)
                .map_err(|_| Error::numerical(format!("singular diagonal block {b}")))?;
            factors.push((dense, piv));
        }
        Ok(BlockJacobi {
            block_ptr: block_ptr.to_vec(),
            factors,
        })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for b in 0..self.factors.len() {
            let (lo, hi) = (self.block_ptr[b], self.block_ptr[b + 1]);
            let m = hi - lo;
            let (lu, piv) = &self.factors[b];
            let mut x: Vec<f64> = r[lo..hi].to_vec();
            lu_solve_in_place(lu, piv, m, &mut x);
            z[lo..hi].copy_from_slice(&x);
        }
    }
}

/// Column-major dense LU with partial pivoting. Returns the pivot rows.
pub fn lu_factor_in_place(a: &mut [f64], n: usize) -> std::result::Result<Vec<usize>, ()> {
    let mut piv = vec![0usize; n];
    for k in 0..n {
        let mut p = k;
        let mut best = a[k * n + k].abs();
        for i in k + 1..n {
            let v = a[k * n + i].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(());
        }
        piv[k] = p;
        if p != k {
            for j in 0..n {
                a.swap(j * n + k, j * n + p);
            }
        }
        let pivot = a[k * n + k];
        for i in k + 1..n {
            a[k * n + i] /= pivot;
        }
        for j in k + 1..n {
            let akj = a[j * n + k];
            if akj != 0.0 {
                for i in k + 1..n {
                    a[j * n + i] -= a[k * n + i] * akj;
                }
            }
        }
    }
    Ok(piv)
}

pub fn lu_solve_in_place(lu: &[f64], piv: &[usize], n: usize, b: &mut [f64]) {
    for k in 0..n {
        b.swap(k, piv[k]);
    }
    for k in 0..n {
        let bk = b[k];
        if bk != 0.0 {
            for i in k + 1..n {
                b[i] -= lu[k * n + i] * bk;
            }
        }
    }
    for k in (0..n).rev() {
        b[k] /= lu[k * n + k];
        let bk = b[k];
        if bk != 0.0 {
            for i in 0..k {
                b[i] -= lu[k * n + i] * bk;
            }
        }
    }
}

/// Preconditioned conjugate gradient for SPD systems.
pub fn cg(
    a: &CsrMatrix,
    b: &[f64],
    prec: &Preconditioner,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    prec.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.spmv(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::numerical(format!(
                "CG breakdown at iteration {it} (p'Ap = {pap:.3e}); matrix not SPD?"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = norm2(&r);
        if rn <= opts.rel_tol * bnorm {
            return Ok(SolveOutcome {
                x,
                rel_residual: rn / bnorm,
                iterations: it,
            });
        }
        prec.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::numerical(format!(
        "CG did not converge in {} iterations (relative residual {:.3e})",
        opts.max_iter,
        norm2(&r) / bnorm
    )))
}

/// Right-preconditioned restarted GMRES.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    prec: &Preconditioner,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let n = b.len();
    let m = opts.gmres_restart.max(1);
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    let mut total_it = 0usize;
    let mut r = b.to_vec();
    let mut scratch = vec![0.0; n];

    loop {
        let beta = norm2(&r);
        if beta <= opts.rel_tol * bnorm {
            return Ok(SolveOutcome {
                x,
                rel_residual: beta / bnorm,
                iterations: total_it,
            });
        }
        if total_it >= opts.max_iter {
            return Err(Error::numerical(format!(
                "GMRES did not converge in {} iterations (relative residual {:.3e})",
                opts.max_iter,
                beta / bnorm
            )));
        }

        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            if total_it >= opts.max_iter {
                break;
            }
            total_it += 1;
            prec.apply(&v[k], &mut scratch);
            let mut w = vec![0.0; n];
            a.spmv(&scratch, &mut w);
            // modified Gram-Schmidt
            for j in 0..=k {
                let hjk = dot(&w, &v[j]);
                h[j][k] = hjk;
                for i in 0..n {
                    w[i] -= hjk * v[j][i];
                }
            }
            let hk1 = norm2(&w);
            h[k + 1][k] = hk1;
            // apply accumulated Givens rotations
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + hk1 * hk1).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = hk1 / denom;
            h[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if hk1 != 0.0 {
                v.push(w.iter().map(|wi| wi / hk1).collect());
            }
            if g[k + 1].abs() <= opts.rel_tol * bnorm || hk1 == 0.0 {
                break;
            }
        }

        // back-substitution for the small least squares problem
        let k = k_used;
        let mut y = vec![0.0f64; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        let mut update = vec![0.0; n];
        for j in 0..k {
            for i in 0..n {
                update[i] += y[j] * v[j][i];
            }
        }
        prec.apply(&update, &mut scratch);
        for i in 0..n {
            x[i] += scratch[i];
        }
        a.spmv(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        if k == 0 {
            return Err(Error::numerical(
                "GMRES stagnated (zero Krylov step)".to_string(),
            ));
        }
    }
}

/// Right-preconditioned BiCGStab.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    prec: &Preconditioner,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::numerical(format!(
                "BiCGStab breakdown (rho ~ 0) at iteration {it}"
            )));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        prec.apply(&p, &mut phat);
        a.spmv(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) <= opts.rel_tol * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            let mut res = vec![0.0; n];
            a.spmv(&x, &mut res);
            for i in 0..n {
                res[i] = b[i] - res[i];
            }
            return Ok(SolveOutcome {
                x,
                rel_residual: norm2(&res) / bnorm,
                iterations: it,
            });
        }
        prec.apply(&s, &mut shat);
        a.spmv(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::numerical("BiCGStab breakdown (t = 0)".to_string()));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = norm2(&r);
        if rn <= opts.rel_tol * bnorm {
            let mut res = vec![0.0; n];
            a.spmv(&x, &mut res);
            for i in 0..n {
                res[i] = b[i] - res[i];
            }
            return Ok(SolveOutcome {
                x,
                rel_residual: norm2(&res) / bnorm,
                iterations: it,
            });
        }
        if omega.abs() < 1e-300 {
            return Err(Error::numerical("BiCGStab breakdown (omega ~ 0)".to_string()));
        }
    }
    Err(Error::numerical(format!(
        "BiCGStab did not converge in {} iterations",
        opts.max_iter
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_test_matrix(n: usize) -> CsrMatrix {
        // 1D Laplacian plus identity
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 3.0));
            if i > 0 {
                trip.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                trip.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &trip)
    }

    #[test]
    fn cg_with_ic0_on_spd() {
        let a = spd_test_matrix(80);
        let b: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
        let opts = SolverOptions {
            method: super::super::SolveMethod::Cg,
            rel_tol: 1e-12,
            preconditioner: PrecondKind::Ic0,
            ..Default::default()
        };
        let prec = build_preconditioner(&a, opts.preconditioner, None).unwrap();
        let out = cg(&a, &b, &prec, &opts).unwrap();
        assert!(out.rel_residual <= 1e-12);
    }

    #[test]
    fn block_jacobi_is_exact_for_block_diagonal() {
        // two decoupled 2x2 blocks
        let a = CsrMatrix::from_triplets(
            4,
            4,
            &[
                (0, 0, 2.0),
                (0, 1, 1.0),
                (1, 0, 3.0),
                (1, 1, 4.0),
                (2, 2, 1.0),
                (2, 3, -1.0),
                (3, 2, 2.0),
                (3, 3, 5.0),
            ],
        );
        let bj = BlockJacobi::new(&a, &[0, 2, 4]).unwrap();
        let r = [1.0, 2.0, 3.0, 4.0];
        let mut z = [0.0; 4];
        bj.apply(&r, &mut z);
        let mut az = [0.0; 4];
        a.spmv(&z, &mut az);
        for (ai, ri) in az.iter().zip(&r) {
            assert!((ai - ri).abs() < 1e-12);
        }
    }

    #[test]
    fn ilu0_exact_for_tridiagonal() {
        // ILU(0) of a tridiagonal matrix is its exact LU factorization
        let a = spd_test_matrix(12);
        let f = Ilu0::new(&a).unwrap();
        let r: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
        let mut z = vec![0.0; 12];
        f.apply(&r, &mut z);
        let mut az = vec![0.0; 12];
        a.spmv(&z, &mut az);
        for (ai, ri) in az.iter().zip(&r) {
            assert!((ai - ri).abs() < 1e-10);
        }
    }
}
