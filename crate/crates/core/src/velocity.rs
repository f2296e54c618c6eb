//! Periodic piecewise-linear finite element space on the velocity circle
//! S^1 (parametrized by the angle phi in [0, 2pi)), its coupling matrices,
//! the velocity bilinear form and the lifted basis functions used to build
//! the stable trial space.

use crate::error::{Error, Result};
use crate::mesh::{gauss_rule, Mesh1D};
use crate::problems::{ProblemKind, ProblemSpec};
use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};
use std::f64::consts::PI;

/// Quadrature order for the angle-weighted mass matrices. Seven points per
/// cell integrate the trig-times-quadratic integrands to machine precision
/// for every n_v >= 3, which the entry-level oracle comparisons require.
const WEIGHTED_MASS_QUAD: usize = 7;

/// The velocity space V_h with its coupling matrices.
///
/// All matrices are dense n_v x n_v; they enter dense triple products during
/// assembly precomputation anyway and n_v stays small (<= 512).
pub struct VelocitySpace {
    pub mesh: Mesh1D,
    pub n_v: usize,
    /// L^2 mass matrix.
    pub mass: Mat<f64>,
    /// Stiffness matrix of the angular derivative.
    pub stiffness: Mat<f64>,
    /// cos(phi)-weighted mass matrix.
    pub mass_cos: Mat<f64>,
    /// sin(phi)-weighted mass matrix.
    pub mass_sin: Mat<f64>,
    /// Gram matrix of the V = H^1(S^1) inner product: mass + stiffness.
    pub a_v: Mat<f64>,
}

impl VelocitySpace {
    pub fn h_v(&self) -> f64 {
        self.mesh.h()
    }

    /// Node angle of hat function `j`.
    pub fn node(&self, j: usize) -> f64 {
        self.mesh.node(j)
    }

    /// Evaluates the P1 expansion with the given coefficients at `phi`.
    pub fn eval(&self, coeffs: &[f64], phi: f64) -> f64 {
        let h = self.h_v();
        let two_pi = 2.0 * PI;
        let mut p = phi % two_pi;
        if p < 0.0 {
            p += two_pi;
        }
        let cell = ((p / h) as usize).min(self.n_v - 1);
        let s = (p - cell as f64 * h) / h;
        let left = coeffs[cell];
        let right = coeffs[(cell + 1) % self.n_v];
        left * (1.0 - s) + right * s
    }

    /// Derivative of the P1 expansion on the cell containing `phi`
    /// (piecewise constant).
    pub fn eval_deriv(&self, coeffs: &[f64], phi: f64) -> f64 {
        let h = self.h_v();
        let two_pi = 2.0 * PI;
        let mut p = phi % two_pi;
        if p < 0.0 {
            p += two_pi;
        }
        let cell = ((p / h) as usize).min(self.n_v - 1);
        (coeffs[(cell + 1) % self.n_v] - coeffs[cell]) / h
    }
}

/// Assembles mass, stiffness, weighted mass and V-Gram matrices on a
/// periodic mesh of [0, 2pi).
pub fn assemble_velocity_matrices(mesh: &Mesh1D) -> Result<VelocitySpace> {
    if !mesh.periodic() {
        return Err(Error::invalid("velocity mesh must be periodic"));
    }
    if mesh.a() != 0.0 || (mesh.b() - 2.0 * PI).abs() > 1e-12 {
        return Err(Error::invalid("velocity mesh must cover [0, 2pi)"));
    }
    let n = mesh.n_cells();
    if n < 3 {
        return Err(Error::invalid(
            "periodic P1 needs at least 3 cells on the circle",
        ));
    }
    let h = mesh.h();
    let mut mass = Mat::<f64>::zeros(n, n);
    let mut stiffness = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let prev = (j + n - 1) % n;
        let next = (j + 1) % n;
        mass[(j, j)] = 2.0 * h / 3.0;
        mass[(j, prev)] += h / 6.0;
        mass[(j, next)] += h / 6.0;
        stiffness[(j, j)] = 2.0 / h;
        stiffness[(j, prev)] += -1.0 / h;
        stiffness[(j, next)] += -1.0 / h;
    }

    let quad = gauss_rule(WEIGHTED_MASS_QUAD)?;
    let mut mass_cos = Mat::<f64>::zeros(n, n);
    let mut mass_sin = Mat::<f64>::zeros(n, n);
    for cell in 0..n {
        let idx = [cell, (cell + 1) % n];
        for (q, &s) in quad.points.iter().enumerate() {
            let phi = mesh.from_ref(cell, s);
            let w = quad.weights[q] * 0.5 * h;
            let vals = [0.5 * (1.0 - s), 0.5 * (1.0 + s)];
            for a in 0..2 {
                for b in 0..2 {
                    let vv = vals[a] * vals[b] * w;
                    mass_cos[(idx[a], idx[b])] += phi.cos() * vv;
                    mass_sin[(idx[a], idx[b])] += phi.sin() * vv;
                }
            }
        }
    }

    let mut a_v = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a_v[(i, j)] = mass[(i, j)] + stiffness[(i, j)];
        }
    }

    Ok(VelocitySpace {
        mesh: mesh.clone(),
        n_v: n,
        mass,
        stiffness,
        mass_cos,
        mass_sin,
        a_v,
    })
}

/// The velocity bilinear form applied to the FE basis.
pub struct VelocityForm {
    pub kind: ProblemKind,
    /// Matrix of the (transformed) form on the hat basis.
    pub a_tilde: Mat<f64>,
}

/// Builds the velocity form matrix for the given problem.
///
/// Time-dependent problems use the transformed coercive form
/// `q_inv * (M + K)`; stationary problems use `d K + c M`.
pub fn make_velocity_form(space: &VelocitySpace, problem: &ProblemSpec) -> Result<VelocityForm> {
    let n = space.n_v;
    let mut a_tilde = Mat::<f64>::zeros(n, n);
    match problem.kind {
        ProblemKind::TimeDependentFp { q_inv, .. } => {
            if q_inv <= 0.0 {
                return Err(Error::invalid("q_inv must be positive"));
            }
            for i in 0..n {
                for j in 0..n {
                    a_tilde[(i, j)] = q_inv * space.a_v[(i, j)];
                }
            }
        }
        ProblemKind::Stationary { c, d } => {
            if c <= 0.0 || d <= 0.0 {
                return Err(Error::invalid("c and d must be positive"));
            }
            for i in 0..n {
                for j in 0..n {
                    a_tilde[(i, j)] = d * space.stiffness[(i, j)] + c * space.mass[(i, j)];
                }
            }
        }
    }
    Ok(VelocityForm {
        kind: problem.kind,
        a_tilde,
    })
}

/// The lifted basis: columns `j` of the three matrices are the coefficient
/// vectors of `rho_j^1`, `rho_j^{v_1}`, `rho_j^{v_2}`, i.e. the solutions of
/// `a~(rho, .) = (w psi_j, .)` for the weights w in {1, cos, sin}.
pub struct LiftedBasis {
    pub rho_one: Mat<f64>,
    pub rho_v1: Mat<f64>,
    pub rho_v2: Mat<f64>,
}

impl LiftedBasis {
    pub fn n_v(&self) -> usize {
        self.rho_one.nrows()
    }
}

/// Solves the 3 n_v lift problems through one shared Cholesky factorization
/// of the form matrix.
pub fn compute_lifted_basis(space: &VelocitySpace, form: &VelocityForm) -> Result<LiftedBasis> {
    let chol = factorize_spd(&form.a_tilde, "velocity form matrix")?;
    Ok(LiftedBasis {
        rho_one: chol.solve(&space.mass),
        rho_v1: chol.solve(&space.mass_cos),
        rho_v2: chol.solve(&space.mass_sin),
    })
}

/// Cholesky factorization of a dense SPD matrix with a descriptive error.
pub fn factorize_spd(m: &Mat<f64>, what: &str) -> Result<Llt<f64>> {
    crate::sparse::ensure_faer_sequential();
    m.llt(Side::Lower)
        .map_err(|_| Error::numerical(format!("{what} is not positive definite")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_uniform_mesh;

    fn circle_mesh(n: usize) -> Mesh1D {
        make_uniform_mesh(0.0, 2.0 * PI, n, true).unwrap()
    }

    fn space(n: usize) -> VelocitySpace {
        assemble_velocity_matrices(&circle_mesh(n)).unwrap()
    }

    fn max_abs_asym(m: &Mat<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        worst
    }

    #[test]
    fn p1_mass_and_stiffness_closed_forms() {
        let sp = space(8);
        let h = sp.h_v();
        for j in 0..8 {
            assert!((sp.mass[(j, j)] - 2.0 * h / 3.0).abs() < 1e-14);
            assert!((sp.mass[(j, (j + 1) % 8)] - h / 6.0).abs() < 1e-14);
            assert!((sp.stiffness[(j, j)] - 2.0 / h).abs() < 1e-12);
            assert!((sp.stiffness[(j, (j + 1) % 8)] + 1.0 / h).abs() < 1e-12);
            let mass_row: f64 = (0..8).map(|l| sp.mass[(j, l)]).sum();
            let stiff_row: f64 = (0..8).map(|l| sp.stiffness[(j, l)]).sum();
            assert!((mass_row - h).abs() < 1e-14);
            assert!(stiff_row.abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_and_invalid_meshes() {
        assert!(assemble_velocity_matrices(&circle_mesh(2)).is_err());
        let open = make_uniform_mesh(0.0, 2.0 * PI, 8, false).unwrap();
        assert!(assemble_velocity_matrices(&open).is_err());
        let wrong = make_uniform_mesh(0.0, 1.0, 8, true).unwrap();
        assert!(assemble_velocity_matrices(&wrong).is_err());
    }

    #[test]
    fn weighted_mass_against_quadrature_oracle() {
        // 4-point-per-cell Gauss of cos(phi) psi_j psi_l, assembled entries
        // agree with the oracle up to the oracle's own quadrature error.
        let sp = space(8);
        let quad = gauss_rule(4).unwrap();
        let h = sp.h_v();
        let n = sp.n_v;
        let mut oracle = Mat::<f64>::zeros(n, n);
        for cell in 0..n {
            let idx = [cell, (cell + 1) % n];
            for (q, &s) in quad.points.iter().enumerate() {
                let phi = sp.mesh.from_ref(cell, s);
                let w = quad.weights[q] * 0.5 * h;
                let vals = [0.5 * (1.0 - s), 0.5 * (1.0 + s)];
                for a in 0..2 {
                    for b in 0..2 {
                        oracle[(idx[a], idx[b])] += phi.cos() * vals[a] * vals[b] * w;
                    }
                }
            }
        }
        // agreement is limited by the 4-point oracle's own quadrature error
        // on the trig weight (the assembled entries use a higher order)
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (oracle[(i, j)] - sp.mass_cos[(i, j)]).abs() < 5e-8,
                    "entry ({i},{j}): {} vs {}",
                    oracle[(i, j)],
                    sp.mass_cos[(i, j)]
                );
            }
        }
    }

    #[test]
    fn symmetry_and_spd() {
        let sp = space(16);
        assert!(max_abs_asym(&sp.mass) < 1e-14);
        assert!(max_abs_asym(&sp.stiffness) < 1e-14);
        assert!(max_abs_asym(&sp.mass_cos) < 1e-14);
        assert!(max_abs_asym(&sp.mass_sin) < 1e-14);
        assert!(factorize_spd(&sp.mass, "mass").is_ok());
        assert!(factorize_spd(&sp.a_v, "a_v").is_ok());

        let p = ProblemSpec::stationary(1.0, 0.4, 4, 16);
        let form = make_velocity_form(&sp, &p).unwrap();
        assert!(max_abs_asym(&form.a_tilde) < 1e-14);
        assert!(factorize_spd(&form.a_tilde, "a~").is_ok());
    }

    #[test]
    fn form_matrices_match_combinations() {
        let sp = space(8);
        // stationary c = d = 0.1: a~ = 0.1 (K + M) = 0.1 A_V
        let form = make_velocity_form(&sp, &ProblemSpec::stationary(0.1, 0.1, 4, 8)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((form.a_tilde[(i, j)] - 0.1 * sp.a_v[(i, j)]).abs() < 1e-14);
            }
        }
        // transformed time-dependent q_inv = 0.8: a~ = 0.8 A_V
        let form =
            make_velocity_form(&sp, &ProblemSpec::time_dependent(0.8, 3, 4, 8)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((form.a_tilde[(i, j)] - 0.8 * sp.a_v[(i, j)]).abs() < 1e-14);
            }
        }
        // stationary c = 1, d = 0.4: a~ = 0.4 K + M
        let form = make_velocity_form(&sp, &ProblemSpec::stationary(1.0, 0.4, 4, 8)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let want = 0.4 * sp.stiffness[(i, j)] + sp.mass[(i, j)];
                assert!((form.a_tilde[(i, j)] - want).abs() < 1e-14);
            }
        }
        assert!(make_velocity_form(&sp, &ProblemSpec::stationary(-1.0, 0.4, 4, 8)).is_err());
    }

    #[test]
    fn coercivity_witness() {
        use rand::{Rng, SeedableRng};
        let sp = space(16);
        for (p, alpha) in [
            (ProblemSpec::stationary(0.1, 0.4, 4, 16), 0.1),
            (ProblemSpec::time_dependent(0.4, 3, 4, 16), 0.4),
        ] {
            let form = make_velocity_form(&sp, &p).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
            for _ in 0..100 {
                let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let quad = |m: &Mat<f64>| -> f64 {
                    let mut acc = 0.0;
                    for i in 0..16 {
                        for j in 0..16 {
                            acc += x[i] * m[(i, j)] * x[j];
                        }
                    }
                    acc
                };
                assert!(quad(&form.a_tilde) >= alpha * quad(&sp.a_v) - 1e-12);
            }
        }
    }

    #[test]
    fn lift_residuals_and_identities() {
        let sp = space(16);
        for p in [
            ProblemSpec::stationary(0.7, 0.2, 4, 16),
            ProblemSpec::time_dependent(0.8, 3, 4, 16),
        ] {
            let form = make_velocity_form(&sp, &p).unwrap();
            let lifts = compute_lifted_basis(&sp, &form).unwrap();
            for (rho, rhs) in [
                (&lifts.rho_one, &sp.mass),
                (&lifts.rho_v1, &sp.mass_cos),
                (&lifts.rho_v2, &sp.mass_sin),
            ] {
                let res = &form.a_tilde * rho - rhs;
                for j in 0..16 {
                    let rn: f64 = (0..16).map(|i| res[(i, j)] * res[(i, j)]).sum::<f64>().sqrt();
                    let bn: f64 = (0..16).map(|i| rhs[(i, j)] * rhs[(i, j)]).sum::<f64>().sqrt();
                    assert!(rn <= 1e-12 * bn.max(1e-300), "col {j}: {rn} vs {bn}");
                }
            }
            // partition-of-unity lift identity: sum_j rho_one[j] solves
            // A~ s = M 1 = h 1, hence s = q 1 (transformed) or s = 1/c 1.
            let expect = match p.kind {
                ProblemKind::TimeDependentFp { q_inv, .. } => 1.0 / q_inv,
                ProblemKind::Stationary { c, .. } => 1.0 / c,
            };
            for i in 0..16 {
                let s: f64 = (0..16).map(|j| lifts.rho_one[(i, j)]).sum();
                assert!((s - expect).abs() < 1e-12, "row {i}: {s} vs {expect}");
            }
        }
    }

    #[test]
    fn lift_against_dense_solve_oracle() {
        // independent Gaussian elimination oracle for A_V x = M_cos e_0 at n_v = 4
        let sp = space(4);
        let p = ProblemSpec::stationary(1.0, 1.0, 4, 4);
        let form = make_velocity_form(&sp, &p).unwrap();
        let lifts = compute_lifted_basis(&sp, &form).unwrap();

        let n = 4;
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = sp.a_v[(i, j)];
            }
            a[i][n] = sp.mass_cos[(i, 0)];
        }
        // partial-pivot elimination
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut s = a[row][n];
            for k in row + 1..n {
                s -= a[row][k] * x[k];
            }
            x[row] = s / a[row][row];
        }
        for i in 0..n {
            assert!(
                (lifts.rho_v1[(i, 0)] - x[i]).abs() < 1e-13,
                "{} vs {}",
                lifts.rho_v1[(i, 0)],
                x[i]
            );
        }
    }
}
