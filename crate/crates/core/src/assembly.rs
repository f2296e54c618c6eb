//! Assembly of the Petrov-Galerkin system matrix B, the load vector, and
//! the Gram matrices M_X (trial space, X-norm) and M_Y (test space,
//! discrete Y-norm).
//!
//! Every matrix has the same four-index structure
//!
//! ```text
//! A[(k,l),(i,j)] = sum_{a,b} (int_over_elements d^(a) p_i d^(b) p_k) * T[a][b][l,j]
//! ```
//!
//! where slot 0 is the function value, slot s >= 1 the derivative along
//! space-time axis s-1, and `T[a][b]` are precomputed n_v x n_v velocity
//! blocks. On a uniform mesh with constant coefficients the space-time
//! integrals factorize into per-axis 1D Gauss integrals, so the kernel
//! tabulates those once per axis and scatters dense velocity blocks into
//! the rows of kept test pairs.

use crate::error::Result;
use crate::mesh::{gauss_rule, make_uniform_mesh, Mesh1D};
use crate::problems::{initial_condition, manufactured_f0, ProblemKind, ProblemSpec};
use crate::spacetime::{build_q2_space, lagrange_q2, lagrange_q2_deriv, Q2Space};
use crate::spaces::{build_test_space, StableTrialBasis, TestSpace};
use crate::sparse::CsrMatrix;
use crate::velocity::{
    assemble_velocity_matrices, compute_lifted_basis, factorize_spd, LiftedBasis, VelocityForm,
    VelocitySpace,
};
use faer::linalg::solvers::Solve;
use faer::Mat;
use std::f64::consts::PI;

/// Gauss points per direction for the system matrices (exact for the
/// degree-4 polynomial products of Q2).
pub const SYSTEM_QUAD: usize = 3;
/// Gauss points per direction for load vectors and error norms.
pub const LOAD_QUAD: usize = 5;
/// Row-relative drop tolerance: assembled entries at or below
/// `DROP_REL_TOL * max |row|` are not stored.
pub const DROP_REL_TOL: f64 = 1e-14;

/// Everything the pipeline needs about one discretized problem.
pub struct Discretization {
    pub problem: ProblemSpec,
    pub st: Q2Space,
    pub vel: VelocitySpace,
    pub form: VelocityForm,
    pub lifts: LiftedBasis,
    pub test_space: TestSpace,
}

impl Discretization {
    pub fn build(problem: &ProblemSpec) -> Result<Self> {
        problem.validate()?;
        let mut axes = Vec::new();
        if let ProblemKind::TimeDependentFp { t_final, .. } = problem.kind {
            axes.push(make_uniform_mesh(0.0, t_final, problem.n_t, false)?);
        }
        let x_axis = make_uniform_mesh(0.0, 1.0, problem.n_x, false)?;
        axes.push(x_axis.clone());
        axes.push(x_axis);
        let st = build_q2_space(&axes)?;
        let v_mesh = make_uniform_mesh(0.0, 2.0 * PI, problem.n_v, true)?;
        let vel = assemble_velocity_matrices(&v_mesh)?;
        let form = crate::velocity::make_velocity_form(&vel, problem)?;
        let lifts = compute_lifted_basis(&vel, &form)?;
        let test_space = build_test_space(&st, &vel, problem)?;
        Ok(Discretization {
            problem: *problem,
            st,
            vel,
            form,
            lifts,
            test_space,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.test_space.dim()
    }

    pub fn trial_basis(&self) -> StableTrialBasis<'_> {
        StableTrialBasis::new(&self.st, &self.lifts, &self.problem)
    }

    /// Row partition by space-time dof (the velocity blocks), usable as the
    /// block structure of a block-Jacobi preconditioner.
    pub fn velocity_block_partition(&self) -> &[usize] {
        &self.test_space.pair_offset
    }

    /// Number of derivative slots: value + one per space-time axis.
    fn n_slots(&self) -> usize {
        self.st.dim() + 1
    }
}

/// Dense row-major matrix for the velocity block tables (rows must be
/// contiguous for the scatter kernel).
#[derive(Clone)]
struct RowMat {
    n: usize,
    data: Vec<f64>,
}

impl RowMat {
    fn from_faer(m: &Mat<f64>) -> Self {
        let n = m.nrows();
        let mut data = vec![0.0; n * m.ncols()];
        for r in 0..n {
            for c in 0..m.ncols() {
                data[r * m.ncols() + c] = m[(r, c)];
            }
        }
        RowMat {
            n: m.ncols(),
            data,
        }
    }

    fn scaled(m: &Mat<f64>, s: f64) -> Self {
        let mut out = Self::from_faer(m);
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }
}

/// The (ns x ns) table of velocity blocks of one bilinear form, each
/// oriented (row = test velocity index l, col = trial velocity index j).
struct BlockTables {
    ns: usize,
    t: Vec<Option<RowMat>>,
}

impl BlockTables {
    fn get(&self, a: usize, b: usize) -> Option<&RowMat> {
        self.t[a * self.ns + b].as_ref()
    }
}

/// Precomputed dense velocity products shared by the three matrix tables.
struct VelProducts {
    /// Weight matrices per derivative axis: [M,] M_cos, M_sin.
    w: Vec<Mat<f64>>,
    /// Lift matrices per derivative axis: A~^-1 W_a.
    rho: Vec<Mat<f64>>,
    /// A_V * rho_a.
    h_x: Vec<Mat<f64>>,
}

fn vel_products(disc: &Discretization) -> VelProducts {
    let vel = &disc.vel;
    let (w, rho): (Vec<Mat<f64>>, Vec<Mat<f64>>) = if disc.problem.is_time_dependent() {
        (
            vec![
                vel.mass.clone(),
                vel.mass_cos.clone(),
                vel.mass_sin.clone(),
            ],
            vec![
                disc.lifts.rho_one.clone(),
                disc.lifts.rho_v1.clone(),
                disc.lifts.rho_v2.clone(),
            ],
        )
    } else {
        (
            vec![vel.mass_cos.clone(), vel.mass_sin.clone()],
            vec![disc.lifts.rho_v1.clone(), disc.lifts.rho_v2.clone()],
        )
    };
    let h_x = rho.iter().map(|r| &vel.a_v * r).collect();
    VelProducts { w, rho, h_x }
}

fn tables_for_b(disc: &Discretization) -> BlockTables {
    let ns = disc.n_slots();
    let p = vel_products(disc);
    let mut t = vec![None; ns * ns];
    t[0] = Some(RowMat::from_faer(&disc.form.a_tilde));
    for a in 1..ns {
        // a~(z_ij, psi_l) p_k contributes -W_a
        t[a * ns] = Some(RowMat::scaled(&p.w[a - 1], -1.0));
        // <p_i psi_j, -w_b psi_l> d_b p_k contributes -W_b
        t[a] = Some(RowMat::scaled(&p.w[a - 1], -1.0));
        for b in 1..ns {
            // <z_ij, -w_b psi_l> d_b p_k contributes +W_b A~^-1 W_a
            t[a * ns + b] = Some(RowMat::from_faer(&(&p.w[b - 1] * &p.rho[a - 1])));
        }
    }
    BlockTables { ns, t }
}

fn tables_for_gram_x(disc: &Discretization) -> BlockTables {
    let ns = disc.n_slots();
    let p = vel_products(disc);
    let mut t = vec![None; ns * ns];
    t[0] = Some(RowMat::from_faer(&disc.vel.a_v));
    for a in 1..ns {
        t[a * ns] = Some(RowMat::scaled(&p.h_x[a - 1], -1.0));
        t[a] = Some(RowMat::scaled(&p.h_x[a - 1].transpose().to_owned(), -1.0));
        for b in 1..ns {
            let d_ab = p.rho[b - 1].transpose() * &p.h_x[a - 1];
            t[a * ns + b] = Some(RowMat::from_faer(&d_ab));
        }
    }
    BlockTables { ns, t }
}

fn tables_for_gram_y(disc: &Discretization) -> Result<BlockTables> {
    let ns = disc.n_slots();
    let p = vel_products(disc);
    let chol = factorize_spd(&disc.vel.a_v, "velocity V-Gram")?;
    let mut t = vec![None; ns * ns];
    t[0] = Some(RowMat::from_faer(&disc.vel.a_v));
    for a in 1..ns {
        // Riesz lift of the transport functional: W_b A_V^-1 W_a
        let s_a = chol.solve(&p.w[a - 1]);
        for b in 1..ns {
            t[a * ns + b] = Some(RowMat::from_faer(&(&p.w[b - 1] * &s_a)));
        }
    }
    Ok(BlockTables { ns, t })
}

/// Per-axis 1D integral tables: `tab[ei][ek][(i1, k1)] = int (d^ei p_i1)(d^ek p_k1)`.
struct AxisTables {
    tab: [Mat<f64>; 4],
}

impl AxisTables {
    fn get(&self, ei: usize, ek: usize) -> &Mat<f64> {
        &self.tab[ei * 2 + ek]
    }
}

fn axis_tables(mesh: &Mesh1D, quad_order: usize) -> Result<AxisTables> {
    let m = 2 * mesh.n_cells() + 1;
    let quad = gauss_rule(quad_order)?;
    let h = mesh.h();
    let mut tab = [
        Mat::<f64>::zeros(m, m),
        Mat::<f64>::zeros(m, m),
        Mat::<f64>::zeros(m, m),
        Mat::<f64>::zeros(m, m),
    ];
    for cell in 0..mesh.n_cells() {
        for (q, &s) in quad.points.iter().enumerate() {
            let w = quad.weights[q] * 0.5 * h;
            let v = lagrange_q2(s);
            let dref = lagrange_q2_deriv(s);
            let d = [
                dref[0] * 2.0 / h,
                dref[1] * 2.0 / h,
                dref[2] * 2.0 / h,
            ];
            for li in 0..3 {
                let gi = 2 * cell + li;
                for lk in 0..3 {
                    let gk = 2 * cell + lk;
                    tab[0][(gi, gk)] += w * v[li] * v[lk];
                    tab[1][(gi, gk)] += w * v[li] * d[lk];
                    tab[2][(gi, gk)] += w * d[li] * v[lk];
                    tab[3][(gi, gk)] += w * d[li] * d[lk];
                }
            }
        }
    }
    let _ = m;
    Ok(AxisTables { tab })
}

/// 1D coupling range of a Q2 dof: vertex dofs reach two cells, edge
/// midpoints one.
fn couple_range(a: usize, m: usize) -> (usize, usize) {
    if a % 2 == 0 {
        (a.saturating_sub(2), (a + 2).min(m - 1))
    } else {
        (a - 1, a + 1)
    }
}

/// Shared assembly kernel.
fn assemble_bilinear(
    disc: &Discretization,
    tables: &BlockTables,
    quad_order: usize,
) -> Result<CsrMatrix> {
    let st = &disc.st;
    let ts = &disc.test_space;
    let dim = st.dim();
    let ns = tables.ns;
    let n_v = ts.n_v;
    let axes: Vec<AxisTables> = st
        .axes
        .iter()
        .map(|ax| axis_tables(ax, quad_order))
        .collect::<Result<_>>()?;
    let n_st = st.n_dofs();
    let dpa = st.dofs_per_axis().to_vec();

    // neighbor boxes per space-time dof
    let boxes: Vec<(Vec<usize>, Vec<usize>)> = (0..n_st)
        .map(|k| {
            let km = st.dof_multi(k);
            let mut lo = Vec::with_capacity(dim);
            let mut hi = Vec::with_capacity(dim);
            for ax in 0..dim {
                let (l, h) = couple_range(km[ax], dpa[ax]);
                lo.push(l);
                hi.push(h);
            }
            (lo, hi)
        })
        .collect();

    // row pattern: each kept pair (k, l) has one contiguous run of columns
    // per neighboring dof i, in ascending i order
    let mut row_len = vec![0usize; n_st];
    for k in 0..n_st {
        if ts.kept_count(k) == 0 {
            continue;
        }
        let mut len = 0usize;
        for_each_in_box(&boxes[k].0, &boxes[k].1, &dpa, |i| {
            len += ts.kept_count(i);
        });
        row_len[k] = len;
    }
    let n_rows = ts.dim();
    let mut row_ptr = Vec::with_capacity(n_rows + 1);
    row_ptr.push(0usize);
    for k in 0..n_st {
        for _ in 0..ts.kept_count(k) {
            row_ptr.push(row_ptr.last().unwrap() + row_len[k]);
        }
    }
    let nnz = *row_ptr.last().unwrap();
    let mut col_idx = vec![0u32; nnz];
    // column pattern
    {
        let mut write = 0usize;
        for k in 0..n_st {
            let kc = ts.kept_count(k);
            if kc == 0 {
                continue;
            }
            let row_start = write;
            for_each_in_box(&boxes[k].0, &boxes[k].1, &dpa, |i| {
                let base = ts.pair_offset[i];
                for jj in 0..ts.kept_count(i) {
                    col_idx[write] = (base + jj) as u32;
                    write += 1;
                }
            });
            let len = write - row_start;
            for _ in 1..kc {
                col_idx.copy_within(row_start..row_start + len, write);
                write += len;
            }
        }
        debug_assert_eq!(write, nnz);
    }

    // values: one contiguous chunk per space-time dof k, filled in parallel
    let mut values = vec![0.0f64; nnz];
    let mut chunks: Vec<(usize, &mut [f64])> = Vec::new();
    {
        let mut rest = values.as_mut_slice();
        for k in 0..n_st {
            let len = ts.kept_count(k) * row_len[k];
            let (head, tail) = rest.split_at_mut(len);
            if ts.kept_count(k) > 0 {
                chunks.push((k, head));
            }
            rest = tail;
        }
    }

    use rayon::prelude::*;
    chunks.par_iter_mut().for_each(|(k, chunk)| {
        let k = *k;
        let kept_l = ts.kept_js(k);
        let mut km = [0usize; 3];
        dof_multi_into(&dpa, k, &mut km);
        let width = row_len[k];
        let mut col_off = 0usize;
        let mut im = [0usize; 3];
        for_each_in_box(&boxes[k].0, &boxes[k].1, &dpa, |i| {
            let kc_i = ts.kept_count(i);
            if kc_i == 0 {
                return;
            }
            dof_multi_into(&dpa, i, &mut im);
            // per-axis factor pairs (value, derivative) for trial i / test k
            let mut fv = [0.0f64; 3];
            let mut fd_i = [0.0f64; 3];
            let mut fd_k = [0.0f64; 3];
            let mut fdd = [0.0f64; 3];
            for ax in 0..dim {
                let t = &axes[ax];
                fv[ax] = t.get(0, 0)[(im[ax], km[ax])];
                fd_i[ax] = t.get(1, 0)[(im[ax], km[ax])];
                fd_k[ax] = t.get(0, 1)[(im[ax], km[ax])];
                fdd[ax] = t.get(1, 1)[(im[ax], km[ax])];
            }
            // combined space-time coefficients, hoisted out of the row loop
            let mut coefs = [[0.0f64; 4]; 4];
            for a in 0..ns {
                for b in 0..ns {
                    let mut c = 1.0;
                    for ax in 0..dim {
                        let di = a == ax + 1;
                        let dk = b == ax + 1;
                        c *= match (di, dk) {
                            (false, false) => fv[ax],
                            (true, false) => fd_i[ax],
                            (false, true) => fd_k[ax],
                            (true, true) => fdd[ax],
                        };
                    }
                    coefs[a][b] = c;
                }
            }
            let kept_i = ts.kept_js(i);
            let full_i = kc_i == n_v;
            for (l_row, &l) in kept_l.iter().enumerate() {
                let dst = &mut chunk[l_row * width + col_off..l_row * width + col_off + kc_i];
                for a in 0..ns {
                    for b in 0..ns {
                        let Some(t) = tables.get(a, b) else { continue };
                        let c = coefs[a][b];
                        if c == 0.0 {
                            continue;
                        }
                        let trow = t.row(l as usize);
                        if full_i {
                            for (d, tv) in dst.iter_mut().zip(trow) {
                                *d += c * tv;
                            }
                        } else {
                            for (d, &j) in dst.iter_mut().zip(kept_i) {
                                *d += c * trow[j as usize];
                            }
                        }
                    }
                }
            }
            col_off += kc_i;
        });
    });

    let mut out = CsrMatrix {
        n_rows,
        n_cols: n_rows,
        row_ptr,
        col_idx,
        values,
    };
    out.drop_small(DROP_REL_TOL);
    Ok(out)
}

fn dof_multi_into(dims: &[usize], mut flat: usize, out: &mut [usize; 3]) {
    for ax in (0..dims.len()).rev() {
        out[ax] = flat % dims[ax];
        flat /= dims[ax];
    }
}

fn for_each_in_box(
    lo: &[usize],
    hi: &[usize],
    dims: &[usize],
    mut f: impl FnMut(usize),
) {
    match lo.len() {
        2 => {
            for i0 in lo[0]..=hi[0] {
                let base0 = i0 * dims[1];
                for i1 in lo[1]..=hi[1] {
                    f(base0 + i1);
                }
            }
        }
        3 => {
            for i0 in lo[0]..=hi[0] {
                let base0 = i0 * dims[1];
                for i1 in lo[1]..=hi[1] {
                    let base1 = (base0 + i1) * dims[2];
                    for i2 in lo[2]..=hi[2] {
                        f(base1 + i2);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
}

/// Assembles the Petrov-Galerkin system matrix B with rows indexed by test
/// pairs (k, l) and columns by trial pairs (i, j).
pub fn assemble_system(disc: &Discretization) -> Result<CsrMatrix> {
    assemble_system_with_quad(disc, SYSTEM_QUAD)
}

pub fn assemble_system_with_quad(disc: &Discretization, quad_order: usize) -> Result<CsrMatrix> {
    assemble_bilinear(disc, &tables_for_b(disc), quad_order)
}

/// Gram matrix of the trial basis in the X-norm.
pub fn assemble_gram_x(disc: &Discretization) -> Result<CsrMatrix> {
    assemble_bilinear(disc, &tables_for_gram_x(disc), SYSTEM_QUAD)
}

/// Gram matrix of the test basis in the discrete Y-norm.
pub fn assemble_gram_y(disc: &Discretization) -> Result<CsrMatrix> {
    assemble_bilinear(disc, &tables_for_gram_y(disc)?, SYSTEM_QUAD)
}

/// Load vector: initial-condition functional for the time-dependent
/// problem, source-term functional for the stationary one.
pub fn assemble_load(disc: &Discretization) -> Result<Vec<f64>> {
    let ts = &disc.test_space;
    let st = &disc.st;
    let mut load = vec![0.0; ts.dim()];
    let quad = gauss_rule(LOAD_QUAD)?;
    match disc.problem.kind {
        ProblemKind::Stationary { c, d } => {
            let n_v = disc.vel.n_v;
            let h_v = disc.vel.h_v();
            let hx = st.axes[0].h();
            let hy = st.axes[1].h();
            let jac = 0.25 * hx * hy;
            // the trig-times-hat velocity factor needs a higher order than
            // the polynomial x-factors to stay below discretization error on
            // the coarsest circles
            let vquad = gauss_rule(7)?;
            let mut fv = vec![0.0; n_v];
            for element in 0..st.n_elements() {
                let em = st.element_multi(element);
                let dofs = st.element_dofs(element);
                for (qa, &sa) in quad.points.iter().enumerate() {
                    let x1 = st.axes[0].from_ref(em[0], sa);
                    let va = lagrange_q2(sa);
                    for (qb, &sb) in quad.points.iter().enumerate() {
                        let x2 = st.axes[1].from_ref(em[1], sb);
                        let vb = lagrange_q2(sb);
                        let w2 = quad.weights[qa] * quad.weights[qb] * jac;
                        // velocity moments of the source at this x-point
                        fv.fill(0.0);
                        for vc in 0..n_v {
                            let right = (vc + 1) % n_v;
                            for (qv, &sv) in vquad.points.iter().enumerate() {
                                let phi = disc.vel.mesh.from_ref(vc, sv);
                                let wv = vquad.weights[qv] * 0.5 * h_v;
                                let f = manufactured_f0(x1, x2, phi, c, d);
                                fv[vc] += wv * f * 0.5 * (1.0 - sv);
                                fv[right] += wv * f * 0.5 * (1.0 + sv);
                            }
                        }
                        for (local, &k) in dofs.iter().enumerate() {
                            let pk = va[local / 3] * vb[local % 3];
                            if pk == 0.0 {
                                continue;
                            }
                            let base = ts.pair_offset[k];
                            for (jj, &j) in ts.kept_js(k).iter().enumerate() {
                                load[base + jj] += w2 * pk * fv[j as usize];
                            }
                        }
                    }
                }
            }
        }
        ProblemKind::TimeDependentFp { .. } => {
            // only the initial face contributes: |k . n| = 1 on {t = 0} and
            // the spatial inflow datum is zero
            let h_v = disc.vel.h_v();
            let hx = st.axes[1].h();
            let hy = st.axes[2].h();
            let jac = 0.25 * hx * hy;
            let n_x = st.axes[1].n_cells();
            for e1 in 0..n_x {
                for e2 in 0..n_x {
                    let element = st.element_index(&[0, e1, e2]);
                    let dofs = st.element_dofs(element);
                    for (qa, &sa) in quad.points.iter().enumerate() {
                        let x1 = st.axes[1].from_ref(e1, sa);
                        let va = lagrange_q2(sa);
                        for (qb, &sb) in quad.points.iter().enumerate() {
                            let x2 = st.axes[2].from_ref(e2, sb);
                            let vb = lagrange_q2(sb);
                            let w2 = quad.weights[qa] * quad.weights[qb] * jac;
                            let g0 = initial_condition(x1, x2);
                            if g0 == 0.0 {
                                continue;
                            }
                            for la in 0..3 {
                                for lb in 0..3 {
                                    // local t-index 0 layer carries the trace
                                    let local = la * 3 + lb;
                                    let k = dofs[local];
                                    let pk = va[la] * vb[lb];
                                    let base = ts.pair_offset[k];
                                    for jj in 0..ts.kept_count(k) {
                                        load[base + jj] += w2 * g0 * pk * h_v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(load)
}

pub struct AssembledSystem {
    pub b: CsrMatrix,
    pub load: Vec<f64>,
    pub m_x: CsrMatrix,
    pub m_y: CsrMatrix,
}

pub fn assemble_all(disc: &Discretization) -> Result<AssembledSystem> {
    Ok(AssembledSystem {
        b: assemble_system(disc)?,
        load: assemble_load(disc)?,
        m_x: assemble_gram_x(disc)?,
        m_y: assemble_gram_y(disc)?,
    })
}

/// X-norm split of each kept trial function: returns per pair (i, j) the
/// squared norms (||p_i psi_j||_X^2, ||z_ij||_X^2). Together with the
/// diagonal of B this witnesses the discrete stability inequality
/// `b(chi, p) >= alpha_a (||p||_X^2 + ||z||_X^2)`.
pub fn stability_terms(disc: &Discretization) -> Result<Vec<(f64, f64)>> {
    let st = &disc.st;
    let ts = &disc.test_space;
    let dim = st.dim();
    let axes: Vec<AxisTables> = st
        .axes
        .iter()
        .map(|ax| axis_tables(ax, SYSTEM_QUAD))
        .collect::<Result<_>>()?;
    let p = vel_products(disc);
    // z-z blocks: rho_b^T A_V rho_a
    let mut dzz = Vec::new();
    for a in 0..dim {
        let mut row = Vec::new();
        for b in 0..dim {
            row.push(p.rho[b].transpose() * &p.h_x[a]);
        }
        dzz.push(row);
    }
    let mut out = Vec::with_capacity(ts.dim());
    for i in 0..st.n_dofs() {
        let im = st.dof_multi(i);
        let mut fv = [0.0f64; 3];
        let mut fd_i = [0.0f64; 3];
        let mut fdd = [0.0f64; 3];
        for ax in 0..dim {
            fv[ax] = axes[ax].get(0, 0)[(im[ax], im[ax])];
            fd_i[ax] = axes[ax].get(1, 0)[(im[ax], im[ax])];
            fdd[ax] = axes[ax].get(1, 1)[(im[ax], im[ax])];
        }
        let coef = |a: usize, b: usize| -> f64 {
            let mut c = 1.0;
            for ax in 0..dim {
                let di = a == ax + 1;
                let dk = b == ax + 1;
                c *= match (di, dk) {
                    (false, false) => fv[ax],
                    (true, true) => fdd[ax],
                    (true, false) | (false, true) => fd_i[ax],
                };
            }
            c
        };
        for &j in ts.kept_js(i) {
            let j = j as usize;
            let s_p = coef(0, 0) * disc.vel.a_v[(j, j)];
            let mut s_z = 0.0;
            for a in 1..=dim {
                for b in 1..=dim {
                    s_z += coef(a, b) * dzz[a - 1][b - 1][(j, j)];
                }
            }
            out.push((s_p, s_z));
        }
    }
    Ok(out)
}
