//! The discrete test space (tensor-product basis functions whose trace
//! vanishes on the outflow boundary) and the problem-dependent stable trial
//! space built from the lifted velocity basis.

use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::spacetime::Q2Space;
use crate::velocity::{LiftedBasis, VelocitySpace};
use std::f64::consts::PI;

/// Tolerance for the positive-measure test of arc intersections. Arc
/// endpoints are exact multiples of h_v and pi/2 up to roundoff, so any
/// genuine overlap measures at least a fraction of h_v.
const ARC_TOL: f64 = 1e-9;

/// Measure of the intersection of two open arcs on the circle, given as
/// (start, length) with length <= 2 pi.
fn arc_overlap(a_start: f64, a_len: f64, b_start: f64, b_len: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let wrap = |x: f64| -> f64 {
        let mut y = x % two_pi;
        if y < 0.0 {
            y += two_pi;
        }
        y
    };
    let a0 = wrap(a_start);
    let b0 = wrap(b_start);
    let mut total = 0.0;
    for shift in [-two_pi, 0.0, two_pi] {
        let lo = a0.max(b0 + shift);
        let hi = (a0 + a_len).min(b0 + shift + b_len);
        if hi > lo {
            total += hi - lo;
        }
    }
    total
}

/// Outflow arc (start, length pi) for a spatial face: the set of angles with
/// `v(phi) . n > 0`.
fn outflow_arc(spatial_axis: usize, upper: bool) -> (f64, f64) {
    // spatial_axis 0 -> v component cos(phi), 1 -> sin(phi)
    match (spatial_axis, upper) {
        (0, true) => (-PI / 2.0, PI),  // cos > 0
        (0, false) => (PI / 2.0, PI),  // cos < 0
        (1, true) => (0.0, PI),        // sin > 0
        (1, false) => (PI, PI),        // sin < 0
        _ => unreachable!("only two spatial axes exist"),
    }
}

/// The admissible tensor pairs (space-time dof i, velocity dof j) with
/// identically vanishing trace on the outflow boundary, in global numbering
/// ordered by i first, then j.
///
/// The stable trial space has the same index set: its function for pair
/// (i, j) is `p_i psi_j + z_ij`, so `dim X = dim Y` by construction.
pub struct TestSpace {
    pub n_st_dofs: usize,
    pub n_v: usize,
    /// Start of dof i's run of kept pairs in the global numbering.
    pub pair_offset: Vec<usize>,
    /// Concatenated kept velocity indices per space-time dof.
    pub kept_j: Vec<u32>,
    /// Rank of velocity dof j within dof i's kept run; u32::MAX if dropped.
    rank: Vec<u32>,
}

impl TestSpace {
    /// Total number of kept pairs (the dimension N of test and trial space).
    pub fn dim(&self) -> usize {
        *self.pair_offset.last().unwrap()
    }

    pub fn kept_count(&self, st_dof: usize) -> usize {
        self.pair_offset[st_dof + 1] - self.pair_offset[st_dof]
    }

    pub fn kept_js(&self, st_dof: usize) -> &[u32] {
        &self.kept_j[self.pair_offset[st_dof]..self.pair_offset[st_dof + 1]]
    }

    /// Global row of a pair, if kept.
    pub fn row(&self, st_dof: usize, j: usize) -> Option<usize> {
        let r = self.rank[st_dof * self.n_v + j];
        if r == u32::MAX {
            None
        } else {
            Some(self.pair_offset[st_dof] + r as usize)
        }
    }

    /// Inverse of [`TestSpace::row`].
    pub fn pair(&self, row: usize) -> (usize, usize) {
        let i = self.pair_offset.partition_point(|&p| p <= row) - 1;
        (i, self.kept_j[row] as usize)
    }
}

/// Builds the test space for the given problem.
///
/// A pair (i, j) is dropped iff the trace of `p_i psi_j` is nonzero on a
/// positive-measure subset of the outflow boundary: for the time-dependent
/// problem the final-time face drops every velocity index, and a spatial
/// face of the dof drops all hats whose open support arc meets the face's
/// open outflow half-circle. Tangency at an arc endpoint keeps the pair
/// (the trace vanishes almost everywhere there).
pub fn build_test_space(
    st: &Q2Space,
    vel: &VelocitySpace,
    problem: &ProblemSpec,
) -> Result<TestSpace> {
    if st.dim() != problem.dim() {
        return Err(Error::invalid(format!(
            "space-time mesh has {} axes but the problem needs {}",
            st.dim(),
            problem.dim()
        )));
    }
    if vel.n_v != problem.n_v {
        return Err(Error::invalid("velocity space size mismatch"));
    }
    let n_st = st.n_dofs();
    let n_v = vel.n_v;
    let h_v = vel.h_v();
    let time_axes = if problem.is_time_dependent() { 1 } else { 0 };

    let mut pair_offset = Vec::with_capacity(n_st + 1);
    let mut kept_j = Vec::new();
    let mut rank = vec![u32::MAX; n_st * n_v];
    pair_offset.push(0);
    for i in 0..n_st {
        let faces = st.boundary_faces(i);
        let on_final_time = problem.is_time_dependent()
            && faces.iter().any(|f| f.axis == 0 && f.upper);
        if !on_final_time {
            let spatial_faces: Vec<_> = faces
                .iter()
                .filter(|f| f.axis >= time_axes)
                .map(|f| outflow_arc(f.axis - time_axes, f.upper))
                .collect();
            for j in 0..n_v {
                let supp_start = vel.node(j) - h_v;
                let dropped = spatial_faces.iter().any(|&(b0, blen)| {
                    arc_overlap(supp_start, 2.0 * h_v, b0, blen) > ARC_TOL
                });
                if !dropped {
                    rank[i * n_v + j] = (kept_j.len() - pair_offset[i]) as u32;
                    kept_j.push(j as u32);
                }
            }
        }
        pair_offset.push(kept_j.len());
    }
    Ok(TestSpace {
        n_st_dofs: n_st,
        n_v,
        pair_offset,
        kept_j,
        rank,
    })
}

/// The stable trial basis: pair (i, j) maps to `p_i psi_j + z_ij` with
/// `z_ij(t,x) = -d(t,x)^{-1} (dt p_i rho_j^1 + dx1 p_i rho_j^{v1}
/// + dx2 p_i rho_j^{v2})` (the time term absent for stationary problems).
pub struct StableTrialBasis<'a> {
    pub st: &'a Q2Space,
    pub lifts: &'a LiftedBasis,
    pub time_dependent: bool,
    /// Scalar prefactor of the separable velocity form. Constant 1 for the
    /// shipped problems, where the prefactor is folded into the form matrix.
    pub d_coeff: fn(&[f64]) -> f64,
}

pub fn unit_coefficient(_point: &[f64]) -> f64 {
    1.0
}

impl<'a> StableTrialBasis<'a> {
    pub fn new(st: &'a Q2Space, lifts: &'a LiftedBasis, problem: &ProblemSpec) -> Self {
        StableTrialBasis {
            st,
            lifts,
            time_dependent: problem.is_time_dependent(),
            d_coeff: unit_coefficient,
        }
    }

    /// Lift matrix for derivative axis `ax` of the space-time mesh.
    pub fn lift_for_axis(&self, ax: usize) -> &faer::Mat<f64> {
        if self.time_dependent {
            match ax {
                0 => &self.lifts.rho_one,
                1 => &self.lifts.rho_v1,
                2 => &self.lifts.rho_v2,
                _ => unreachable!(),
            }
        } else {
            match ax {
                0 => &self.lifts.rho_v1,
                1 => &self.lifts.rho_v2,
                _ => unreachable!(),
            }
        }
    }

    /// Coefficient vector (in V_h) of `z_ij` at a point of an element.
    /// Zero when the space-time dof has no support on the element.
    pub fn eval_z(
        &self,
        pair: (usize, usize),
        element: usize,
        ref_point: &[f64],
    ) -> Result<Vec<f64>> {
        let (i, j) = pair;
        let n_v = self.lifts.n_v();
        let mut out = vec![0.0; n_v];
        let (_, grads) = self.st.eval_basis_and_gradient(element, ref_point)?;
        let dofs = self.st.element_dofs(element);
        let Some(local) = dofs.iter().position(|&d| d == i) else {
            return Ok(out);
        };
        let point = self.physical_point(element, ref_point);
        let dinv = 1.0 / (self.d_coeff)(&point);
        for ax in 0..self.st.dim() {
            let g = grads[local][ax];
            if g != 0.0 {
                let rho = self.lift_for_axis(ax);
                for r in 0..n_v {
                    out[r] -= dinv * g * rho[(r, j)];
                }
            }
        }
        Ok(out)
    }

    /// Coefficient vector of the full trial function `p_i psi_j + z_ij` at a
    /// point of an element.
    pub fn eval_trial(
        &self,
        pair: (usize, usize),
        element: usize,
        ref_point: &[f64],
    ) -> Result<Vec<f64>> {
        let (i, j) = pair;
        let mut out = self.eval_z(pair, element, ref_point)?;
        let (vals, _) = self.st.eval_basis_and_gradient(element, ref_point)?;
        let dofs = self.st.element_dofs(element);
        if let Some(local) = dofs.iter().position(|&d| d == i) {
            out[j] += vals[local];
        }
        Ok(out)
    }

    pub fn physical_point(&self, element: usize, ref_point: &[f64]) -> Vec<f64> {
        let em = self.st.element_multi(element);
        (0..self.st.dim())
            .map(|ax| self.st.axes[ax].from_ref(em[ax], ref_point[ax]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_uniform_mesh;
    use crate::spacetime::build_q2_space;
    use crate::velocity::{assemble_velocity_matrices, compute_lifted_basis, make_velocity_form};

    fn velocity(n_v: usize) -> VelocitySpace {
        let mesh = make_uniform_mesh(0.0, 2.0 * PI, n_v, true).unwrap();
        assemble_velocity_matrices(&mesh).unwrap()
    }

    fn stationary_setup(n_x: usize, n_v: usize) -> (Q2Space, VelocitySpace, ProblemSpec) {
        let ax = make_uniform_mesh(0.0, 1.0, n_x, false).unwrap();
        let st = build_q2_space(&[ax.clone(), ax]).unwrap();
        (st, velocity(n_v), ProblemSpec::stationary(0.1, 0.1, n_x, n_v))
    }

    #[test]
    fn arc_overlap_measures() {
        assert!((arc_overlap(0.0, PI, 0.0, PI) - PI).abs() < 1e-14);
        assert!(arc_overlap(0.0, 1.0, 1.0, 1.0).abs() < 1e-14);
        // wrap-around overlap
        let o = arc_overlap(3.0 * PI / 2.0, PI, 0.0, PI);
        assert!((o - PI / 2.0).abs() < 1e-13, "{o}");
    }

    #[test]
    fn interior_dofs_keep_all_pairs() {
        let (st, vel, p) = stationary_setup(4, 8);
        let ts = build_test_space(&st, &vel, &p).unwrap();
        let interior = st.dof_index(&[4, 4]);
        assert_eq!(ts.kept_count(interior), 8);
        for j in 0..8 {
            assert!(ts.row(interior, j).is_some());
        }
    }

    #[test]
    fn final_time_dofs_drop_everything() {
        let tax = make_uniform_mesh(0.0, 0.75, 3, false).unwrap();
        let xax = make_uniform_mesh(0.0, 1.0, 4, false).unwrap();
        let st = build_q2_space(&[tax, xax.clone(), xax]).unwrap();
        let vel = velocity(4);
        let p = ProblemSpec::time_dependent(0.8, 3, 4, 4);
        let ts = build_test_space(&st, &vel, &p).unwrap();
        let m = st.dofs_per_axis().to_vec();
        let final_dof = st.dof_index(&[m[0] - 1, 3, 3]);
        assert_eq!(ts.kept_count(final_dof), 0);
        // an initial-time dof is inflow and keeps interior-in-x pairs
        let initial_dof = st.dof_index(&[0, 3, 3]);
        assert_eq!(ts.kept_count(initial_dof), 4);
    }

    #[test]
    fn tangency_at_arc_endpoints_keeps_the_pair() {
        // n_v = 4: the hat at phi = pi has support (pi/2, 3pi/2) which only
        // touches the outflow set of the +e1 face at its endpoints
        let (st, vel, p) = stationary_setup(4, 4);
        let ts = build_test_space(&st, &vel, &p).unwrap();
        let m = st.dofs_per_axis()[0];
        let face_dof = st.dof_index(&[m - 1, 4]); // on x1 = 1, interior in x2
        assert_eq!(ts.kept_count(face_dof), 1);
        assert!(ts.row(face_dof, 2).is_some(), "hat at pi must be kept");
        // corner (1,1): union of outflow arcs leaves nothing at n_v = 4
        let corner = st.dof_index(&[m - 1, m - 1]);
        assert_eq!(ts.kept_count(corner), 0);
    }

    #[test]
    fn kept_pairs_match_surface_sampling_oracle() {
        // brute force: sample |p_i psi_j| on a fine grid of the outflow part
        // of the boundary and keep the pair iff the trace is numerically zero
        let (st, vel, p) = stationary_setup(4, 16);
        let ts = build_test_space(&st, &vel, &p).unwrap();
        let n_v = vel.n_v;
        let mut e_j = vec![0.0; n_v];
        for i in 0..st.n_dofs() {
            for j in 0..n_v {
                e_j.fill(0.0);
                e_j[j] = 1.0;
                let mut max_trace: f64 = 0.0;
                // the four faces of the unit square
                for (axis, upper) in [(0, false), (0, true), (1, false), (1, true)] {
                    let xfix = if upper { 1.0 } else { 0.0 };
                    let (a0, alen) = outflow_arc(axis, upper);
                    for s in 0..200 {
                        let along = (s as f64 + 0.5) / 200.0;
                        let point = if axis == 0 {
                            [xfix, along]
                        } else {
                            [along, xfix]
                        };
                        let pi_val = {
                            let mut coeffs = vec![0.0; st.n_dofs()];
                            coeffs[i] = 1.0;
                            st.eval_field(&coeffs, &point)
                        };
                        if pi_val.abs() < 1e-13 {
                            continue;
                        }
                        for t in 0..200 {
                            let phi = a0 + (t as f64 + 0.5) / 200.0 * alen;
                            let psi = vel.eval(&e_j, phi);
                            max_trace = max_trace.max((pi_val * psi).abs());
                        }
                    }
                }
                let oracle_keep = max_trace < 1e-12;
                assert_eq!(
                    ts.row(i, j).is_some(),
                    oracle_keep,
                    "pair (i={i}, j={j}): max outflow trace {max_trace:.3e}"
                );
            }
        }
    }

    #[test]
    fn kept_pair_trace_vanishes_on_outflow_segments() {
        let (st, vel, p) = stationary_setup(4, 16);
        let ts = build_test_space(&st, &vel, &p).unwrap();
        let mut e_j = vec![0.0; vel.n_v];
        for i in 0..st.n_dofs() {
            for &j in ts.kept_js(i) {
                e_j.fill(0.0);
                e_j[j as usize] = 1.0;
                for face in st.boundary_faces(i) {
                    let (a0, alen) = outflow_arc(face.axis, face.upper);
                    for t in 0..200 {
                        let phi = a0 + (t as f64 + 0.5) / 200.0 * alen;
                        let psi = vel.eval(&e_j, phi).abs();
                        assert!(
                            psi <= 1e-12,
                            "kept pair ({i},{j}) has |psi(phi)| = {psi:.3e} on outflow"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn row_pair_roundtrip() {
        let (st, vel, p) = stationary_setup(3, 8);
        let ts = build_test_space(&st, &vel, &p).unwrap();
        for row in 0..ts.dim() {
            let (i, j) = ts.pair(row);
            assert_eq!(ts.row(i, j), Some(row));
        }
    }

    #[test]
    fn z_matrix_residual_identity() {
        // A~ z + (dx1 p_i M_cos + dx2 p_i M_sin) e_j = 0 at quadrature points
        let (st, vel, p) = stationary_setup(2, 8);
        let form = make_velocity_form(&vel, &p).unwrap();
        let lifts = compute_lifted_basis(&vel, &form).unwrap();
        let ts = build_test_space(&st, &vel, &p).unwrap();
        let basis = StableTrialBasis::new(&st, &lifts, &p);
        let quad = crate::mesh::gauss_rule(3).unwrap();
        let n_v = vel.n_v;
        let a_inf = (0..n_v)
            .map(|r| (0..n_v).map(|c| form.a_tilde[(r, c)].abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        for element in 0..st.n_elements() {
            let dofs = st.element_dofs(element);
            for &qa in quad.points.iter() {
                for &qb in quad.points.iter() {
                    let rp = [qa, qb];
                    let (_, grads) = st.eval_basis_and_gradient(element, &rp).unwrap();
                    for (local, &i) in dofs.iter().enumerate() {
                        for &j in ts.kept_js(i) {
                            let j = j as usize;
                            let z = basis.eval_z((i, j), element, &rp).unwrap();
                            let mut worst: f64 = 0.0;
                            for r in 0..n_v {
                                let mut acc = 0.0;
                                for cidx in 0..n_v {
                                    acc += form.a_tilde[(r, cidx)] * z[cidx];
                                }
                                acc += grads[local][0] * vel.mass_cos[(r, j)]
                                    + grads[local][1] * vel.mass_sin[(r, j)];
                                worst = worst.max(acc.abs());
                            }
                            assert!(
                                worst <= 1e-11 * a_inf,
                                "pair ({i},{j}) residual {worst:.3e}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn z_sums_to_zero_over_partition_of_unity() {
        // sum_i grad p_i = 0, so the z parts cancel when summed over i
        let (st, vel, p) = stationary_setup(3, 8);
        let form = make_velocity_form(&vel, &p).unwrap();
        let lifts = compute_lifted_basis(&vel, &form).unwrap();
        let basis = StableTrialBasis::new(&st, &lifts, &p);
        let element = 4;
        let rp = [0.21, -0.67];
        let mut acc = vec![0.0; vel.n_v];
        for &i in &st.element_dofs(element) {
            let z = basis.eval_z((i, 3), element, &rp).unwrap();
            for (a, b) in acc.iter_mut().zip(&z) {
                *a += b;
            }
        }
        for v in &acc {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn trial_at_gradient_free_point_is_unit_vector() {
        // at the element center only the mid-mid basis function is active
        // (value 1) and its gradient vanishes, so the trial function reduces
        // to e_j there
        let (st, vel, p) = stationary_setup(3, 8);
        let form = make_velocity_form(&vel, &p).unwrap();
        let lifts = compute_lifted_basis(&vel, &form).unwrap();
        let basis = StableTrialBasis::new(&st, &lifts, &p);
        let element = 0;
        let dofs = st.element_dofs(element);
        let mid = dofs[4]; // local (1,1)
        let tr = basis.eval_trial((mid, 5), element, &[0.0, 0.0]).unwrap();
        for (idx, v) in tr.iter().enumerate() {
            let want = if idx == 5 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn trial_recomputation_oracle() {
        // independent recomposition of p_i(x) e_j + z from raw ingredients
        let (st, vel, p) = stationary_setup(2, 8);
        let form = make_velocity_form(&vel, &p).unwrap();
        let lifts = compute_lifted_basis(&vel, &form).unwrap();
        let basis = StableTrialBasis::new(&st, &lifts, &p);
        let element = 3;
        let rp = [0.4, -0.1];
        let dofs = st.element_dofs(element);
        let (vals, grads) = st.eval_basis_and_gradient(element, &rp).unwrap();
        for (local, &i) in dofs.iter().enumerate() {
            for j in [0usize, 3, 7] {
                let got = basis.eval_trial((i, j), element, &rp).unwrap();
                let mut want = vec![0.0; vel.n_v];
                want[j] += vals[local];
                for r in 0..vel.n_v {
                    want[r] -= grads[local][0] * lifts.rho_v1[(r, j)]
                        + grads[local][1] * lifts.rho_v2[(r, j)];
                }
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-13);
                }
            }
        }
    }
}
