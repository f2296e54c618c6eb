//! Error norms against exact solutions, convergence-order estimation,
//! angular moments (spatial density) and sparsity statistics, plus the CSV
//! output formats of the study harnesses.

use crate::assembly::{Discretization, LOAD_QUAD};
use crate::error::{Error, Result};
use crate::mesh::gauss_rule;
use crate::problems::{ProblemKind, TransformDirection};
use crate::sparse::CsrMatrix;
use std::io::Write;
use std::path::Path;

/// Discrete solution field: evaluates the trial-space expansion
/// `u = sum u_ij (p_i psi_j + z_ij)` through its velocity coefficient
/// vector at space(-time) points.
pub struct SolutionField<'a> {
    pub disc: &'a Discretization,
    pub coeffs: &'a [f64],
}

impl<'a> SolutionField<'a> {
    pub fn new(disc: &'a Discretization, coeffs: &'a [f64]) -> Result<Self> {
        if coeffs.len() != disc.n_unknowns() {
            return Err(Error::invalid("coefficient vector length mismatch"));
        }
        Ok(SolutionField { disc, coeffs })
    }

    /// Velocity coefficient vector of the field at a reference point of an
    /// element.
    pub fn coef_at_element(&self, element: usize, ref_point: &[f64], out: &mut [f64]) {
        let disc = self.disc;
        let st = &disc.st;
        let ts = &disc.test_space;
        let n_v = disc.vel.n_v;
        let dim = st.dim();
        let (vals, grads) = st.eval_basis_and_gradient(element, ref_point).unwrap();
        let dofs = st.element_dofs(element);
        out.fill(0.0);
        let mut slopes = vec![0.0; dim * n_v];
        for (local, &i) in dofs.iter().enumerate() {
            let base = ts.pair_offset[i];
            for (jj, &j) in ts.kept_js(i).iter().enumerate() {
                let u = self.coeffs[base + jj];
                if u == 0.0 {
                    continue;
                }
                let j = j as usize;
                out[j] += vals[local] * u;
                for ax in 0..dim {
                    slopes[ax * n_v + j] += grads[local][ax] * u;
                }
            }
        }
        // z-parts: subtract rho_ax * slope_ax
        let basis = disc.trial_basis();
        for ax in 0..dim {
            let rho = basis.lift_for_axis(ax);
            let sl = &slopes[ax * n_v..(ax + 1) * n_v];
            for r in 0..n_v {
                let mut acc = 0.0;
                for (jcol, &s) in sl.iter().enumerate() {
                    if s != 0.0 {
                        acc += rho[(r, jcol)] * s;
                    }
                }
                out[r] -= acc;
            }
        }
    }

    /// Velocity coefficient vector at a physical point.
    pub fn coef_at(&self, point: &[f64], out: &mut [f64]) {
        let (element, refc) = self.disc.st.locate(point);
        self.coef_at_element(element, &refc, out);
    }

    /// Point value of the field.
    pub fn value(&self, point: &[f64], phi: f64) -> f64 {
        let mut c = vec![0.0; self.disc.vel.n_v];
        self.coef_at(point, &mut c);
        self.disc.vel.eval(&c, phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// L^2 error over space x velocity.
    pub l2_error: f64,
    /// Error in the L^2(space; V) norm (adds the angular seminorm).
    pub x_error: f64,
}

/// Error norms of a stationary solution against an exact function given as
/// `(value, d/dphi)` at `(x, phi)`.
///
/// Element-wise Gauss quadrature at [`LOAD_QUAD`] points per direction; the
/// discrete field is evaluated through the full trial expansion including
/// its z-parts.
pub fn error_norms(
    disc: &Discretization,
    coeffs: &[f64],
    exact: &dyn Fn(&[f64], f64) -> (f64, f64),
) -> Result<ErrorReport> {
    error_norms_with_quad(disc, coeffs, exact, LOAD_QUAD)
}

pub fn error_norms_with_quad(
    disc: &Discretization,
    coeffs: &[f64],
    exact: &dyn Fn(&[f64], f64) -> (f64, f64),
    quad_order: usize,
) -> Result<ErrorReport> {
    let field = SolutionField::new(disc, coeffs)?;
    let st = &disc.st;
    let vel = &disc.vel;
    let dim = st.dim();
    let quad = gauss_rule(quad_order)?;
    let n_v = vel.n_v;
    let h_v = vel.h_v();
    let mut l2_sq = 0.0;
    let mut semi_sq = 0.0;
    let mut c = vec![0.0; n_v];
    let mut refc = vec![0.0; dim];
    let mut point = vec![0.0; dim];
    let qtotal = quad.len().pow(dim as u32);
    for element in 0..st.n_elements() {
        let em = st.element_multi(element);
        for qflat in 0..qtotal {
            let mut rem = qflat;
            let mut wx = 1.0;
            for ax in (0..dim).rev() {
                let qi = rem % quad.len();
                rem /= quad.len();
                refc[ax] = quad.points[qi];
                wx *= quad.weights[qi] * 0.5 * st.axes[ax].h();
            }
            for ax in 0..dim {
                point[ax] = st.axes[ax].from_ref(em[ax], refc[ax]);
            }
            field.coef_at_element(element, &refc, &mut c);
            for vc in 0..n_v {
                let right = (vc + 1) % n_v;
                let duh = (c[right] - c[vc]) / h_v;
                for (qv, &sv) in quad.points.iter().enumerate() {
                    let phi = vel.mesh.from_ref(vc, sv);
                    let w = wx * quad.weights[qv] * 0.5 * h_v;
                    let uh = c[vc] * 0.5 * (1.0 - sv) + c[right] * 0.5 * (1.0 + sv);
                    let (ue, due) = exact(&point, phi);
                    l2_sq += w * (ue - uh) * (ue - uh);
                    semi_sq += w * (due - duh) * (due - duh);
                }
            }
        }
    }
    Ok(ErrorReport {
        l2_error: l2_sq.sqrt(),
        x_error: (l2_sq + semi_sq).sqrt(),
    })
}

/// Spatial-density grid: the angular moment sampled at `grid_n` x `grid_n`
/// uniform points of the unit square.
#[derive(Debug, Clone)]
pub struct MomentGrid {
    pub t: f64,
    pub grid_n: usize,
    /// Row-major values, x1 varying fastest within a row... rows are x2.
    pub values: Vec<f64>,
}

pub const MOMENT_GRID_N: usize = 101;

/// Angular moments of a time-dependent solution at the requested time
/// slices, mapped back to the physical (untransformed) solution.
pub fn moments(disc: &Discretization, coeffs: &[f64], times: &[f64]) -> Result<Vec<MomentGrid>> {
    let ProblemKind::TimeDependentFp { q_inv, t_final } = disc.problem.kind else {
        return Err(Error::invalid("moments need a time-dependent solution"));
    };
    for &t in times {
        if !(0.0..=t_final + 1e-12).contains(&t) {
            return Err(Error::invalid(format!(
                "time slice {t} outside [0, {t_final}]"
            )));
        }
    }
    let field = SolutionField::new(disc, coeffs)?;
    let n_v = disc.vel.n_v;
    let h_v = disc.vel.h_v();
    let gn = MOMENT_GRID_N;
    let mut out = Vec::with_capacity(times.len());
    let mut c = vec![0.0; n_v];
    for &t in times {
        let mut values = vec![0.0; gn * gn];
        for gy in 0..gn {
            let x2 = gy as f64 / (gn - 1) as f64;
            for gx in 0..gn {
                let x1 = gx as f64 / (gn - 1) as f64;
                field.coef_at(&[t.min(t_final), x1, x2], &mut c);
                values[gy * gn + gx] = h_v * c.iter().sum::<f64>();
            }
        }
        // untransform: the solver works on the e^{-lambda_a t} transformed
        // problem with lambda_a = q_inv
        let slice_times = vec![t; values.len()];
        crate::problems::temporal_transform(
            TransformDirection::Inverse,
            &mut values,
            q_inv,
            &slice_times,
        );
        out.push(MomentGrid { t, grid_n: gn, values });
    }
    Ok(out)
}

/// Integral of the (untransformed) moment field over the spatial square at
/// one time slice, by element-wise Gauss quadrature.
pub fn moment_mass(disc: &Discretization, coeffs: &[f64], t: f64) -> Result<f64> {
    let ProblemKind::TimeDependentFp { q_inv, t_final } = disc.problem.kind else {
        return Err(Error::invalid("moments need a time-dependent solution"));
    };
    let field = SolutionField::new(disc, coeffs)?;
    let quad = gauss_rule(LOAD_QUAD)?;
    let n_v = disc.vel.n_v;
    let h_v = disc.vel.h_v();
    let mut c = vec![0.0; n_v];
    let mut mass = 0.0;
    let hx = disc.st.axes[1].h();
    let hy = disc.st.axes[2].h();
    let n_x = disc.st.axes[1].n_cells();
    for e1 in 0..n_x {
        for e2 in 0..n_x {
            for (qa, &sa) in quad.points.iter().enumerate() {
                let x1 = disc.st.axes[1].from_ref(e1, sa);
                for (qb, &sb) in quad.points.iter().enumerate() {
                    let x2 = disc.st.axes[2].from_ref(e2, sb);
                    let w = quad.weights[qa] * quad.weights[qb] * 0.25 * hx * hy;
                    field.coef_at(&[t.min(t_final), x1, x2], &mut c);
                    mass += w * h_v * c.iter().sum::<f64>();
                }
            }
        }
    }
    Ok(mass * (q_inv * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityStats {
    pub nnz: usize,
    /// nnz / N^2.
    pub ratio_entries: f64,
    /// nnz / (n_x1 n_x2 n_v^2).
    pub scaled: f64,
}

pub fn sparsity_stats(b: &CsrMatrix, n_x: usize, n_v: usize) -> SparsityStats {
    let nnz = b.nnz();
    SparsityStats {
        nnz,
        ratio_entries: nnz as f64 / (b.n_rows as f64 * b.n_cols as f64),
        scaled: nnz as f64 / (n_x as f64 * n_x as f64 * (n_v * n_v) as f64),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OrderFit {
    /// Order p of the saturating model err^2 = (A n^-p)^2 + F^2.
    pub order: f64,
    pub amplitude: f64,
    pub floor: f64,
    /// Plain least-squares slope of log err against log n, for reference.
    pub ls_slope: f64,
}

/// Fits the convergence order of an error sequence over resolutions `ns`.
///
/// Error sequences saturate once the other discretization axis dominates;
/// fitting the three-parameter model `err^2 = A^2 n^{-2p} + F^2` separates
/// the decaying part from the floor, which a plain log-log fit across a
/// plateau cannot.
pub fn fit_order(ns: &[f64], errs: &[f64]) -> OrderFit {
    assert_eq!(ns.len(), errs.len());
    assert!(ns.len() >= 2);
    let logs: Vec<(f64, f64)> = ns
        .iter()
        .zip(errs)
        .map(|(&n, &e)| (n.ln(), e.max(1e-300).ln()))
        .collect();
    let xbar = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
    let ybar = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &logs {
        num += (x - xbar) * (y - ybar);
        den += (x - xbar) * (x - xbar);
    }
    let ls_slope = -num / den;
    if ns.len() == 2 {
        return OrderFit {
            order: ls_slope,
            amplitude: errs[0] * ns[0].powf(ls_slope),
            floor: 0.0,
            ls_slope,
        };
    }

    let s: Vec<f64> = errs.iter().map(|e| e * e).collect();
    // least squares for (A^2, F^2) at fixed p, with nonnegativity clamps
    let sse_at = |p: f64| -> (f64, f64, f64) {
        let x: Vec<f64> = ns.iter().map(|&n| n.powf(-2.0 * p)).collect();
        let m = x.len() as f64;
        let sx = x.iter().sum::<f64>();
        let sxx = x.iter().map(|v| v * v).sum::<f64>();
        let sy = s.iter().sum::<f64>();
        let sxy = x.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>();
        let det = m * sxx - sx * sx;
        let (mut a2, mut f2) = if det.abs() > 1e-300 {
            ((m * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
        } else {
            (0.0, sy / m)
        };
        if f2 < 0.0 {
            f2 = 0.0;
            a2 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        }
        if a2 < 0.0 {
            a2 = 0.0;
            f2 = sy / m;
        }
        let sse = x
            .iter()
            .zip(&s)
            .map(|(xi, si)| {
                let r = si - a2 * xi - f2;
                r * r
            })
            .sum::<f64>();
        (sse, a2, f2)
    };
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    let mut p = 0.05;
    while p <= 6.0 {
        let (sse, a2, f2) = sse_at(p);
        if sse < best.0 {
            best = (sse, p, a2, f2);
        }
        p += 0.005;
    }
    // golden-section refinement around the grid optimum
    let (mut lo, mut hi) = (best.1 - 0.01, best.1 + 0.01);
    for _ in 0..50 {
        let m1 = lo + 0.382 * (hi - lo);
        let m2 = lo + 0.618 * (hi - lo);
        if sse_at(m1).0 < sse_at(m2).0 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let p_opt = 0.5 * (lo + hi);
    let (_, a2, f2) = sse_at(p_opt);
    OrderFit {
        order: p_opt,
        amplitude: a2.sqrt(),
        floor: f2.sqrt(),
        ls_slope,
    }
}

/// Error tables in the layout of the study harness: one row per n_x, one
/// column per n_v.
pub fn write_error_table(
    path: &Path,
    n_x_list: &[usize],
    n_v_list: &[usize],
    table: &[Vec<f64>],
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "n_x")?;
    for nv in n_v_list {
        write!(f, ",{nv}")?;
    }
    writeln!(f)?;
    for (r, nx) in n_x_list.iter().enumerate() {
        write!(f, "{nx}")?;
        for v in &table[r] {
            write!(f, ",{v:.10e}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

pub fn write_moments_csv(path: &Path, grid: &MomentGrid) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let gn = grid.grid_n;
    for gy in 0..gn {
        let row: Vec<String> = (0..gn)
            .map(|gx| format!("{:.10e}", grid.values[gy * gn + gx]))
            .collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_sparsity_csv(path: &Path, rows: &[(usize, SparsityStats)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "n,nnz,ratio_entries,scaled")?;
    for (n, s) in rows {
        writeln!(
            f,
            "{},{},{:.8e},{:.6}",
            n, s.nnz, s.ratio_entries, s.scaled
        )?;
    }
    Ok(())
}
