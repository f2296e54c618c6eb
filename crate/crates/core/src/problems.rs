//! Problem definitions: the time-dependent Fokker-Planck test case (run in
//! temporally transformed, coercive form) and the stationary manufactured
//! solution case, together with all data functions.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Problem family.
///
/// The time-dependent problem is always discretized after the temporal
/// transformation `w -> e^{-lambda_a t} w` with `lambda_a = q_inv`, so the
/// velocity bilinear form the solver sees is the coercive
/// `q_inv * (.,.)_V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    TimeDependentFp {
        q_inv: f64,
        #[serde(default = "default_t_final")]
        t_final: f64,
    },
    Stationary {
        c: f64,
        d: f64,
    },
}

fn default_t_final() -> f64 {
    0.75
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    pub kind: ProblemKind,
    /// Time cells (ignored for the stationary problem).
    #[serde(default)]
    pub n_t: usize,
    /// Spatial cells per axis.
    pub n_x: usize,
    /// Velocity cells (= velocity dofs on the periodic circle).
    pub n_v: usize,
}

impl ProblemSpec {
    pub fn time_dependent(q_inv: f64, n_t: usize, n_x: usize, n_v: usize) -> Self {
        ProblemSpec {
            kind: ProblemKind::TimeDependentFp {
                q_inv,
                t_final: 0.75,
            },
            n_t,
            n_x,
            n_v,
        }
    }

    pub fn stationary(c: f64, d: f64, n_x: usize, n_v: usize) -> Self {
        ProblemSpec {
            kind: ProblemKind::Stationary { c, d },
            n_t: 0,
            n_x,
            n_v,
        }
    }

    /// The paper's single resolution parameter `n` with
    /// `n = 1/h_x = 2pi/h_v` and, for the time-dependent problem,
    /// `n = 1/h_t`, i.e. `n_t = t_final * n`.
    pub fn with_table_resolution(kind: ProblemKind, n: usize) -> Result<Self> {
        match kind {
            ProblemKind::Stationary { .. } => Ok(ProblemSpec {
                kind,
                n_t: 0,
                n_x: n,
                n_v: n,
            }),
            ProblemKind::TimeDependentFp { t_final, .. } => {
                let nt = t_final * n as f64;
                if (nt - nt.round()).abs() > 1e-9 || nt.round() < 1.0 {
                    return Err(Error::invalid(format!(
                        "t_final * n = {nt} is not a positive integer; cannot build the time mesh"
                    )));
                }
                Ok(ProblemSpec {
                    kind,
                    n_t: nt.round() as usize,
                    n_x: n,
                    n_v: n,
                })
            }
        }
    }

    /// Number of space(-time) axes: 3 for the time-dependent problem, 2 for
    /// the stationary one.
    pub fn dim(&self) -> usize {
        match self.kind {
            ProblemKind::TimeDependentFp { .. } => 3,
            ProblemKind::Stationary { .. } => 2,
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self.kind, ProblemKind::TimeDependentFp { .. })
    }

    /// Coercivity constant of the (transformed) velocity form.
    pub fn alpha_a(&self) -> f64 {
        match self.kind {
            ProblemKind::TimeDependentFp { q_inv, .. } => q_inv,
            ProblemKind::Stationary { c, d } => c.min(d),
        }
    }

    /// Continuity constant of the (transformed) velocity form w.r.t. the
    /// V-norm.
    pub fn continuity_a(&self) -> f64 {
        match self.kind {
            ProblemKind::TimeDependentFp { q_inv, .. } => q_inv,
            ProblemKind::Stationary { c, d } => c.max(d),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProblemKind::TimeDependentFp { q_inv, t_final } => {
                if !(0.1..=1.0).contains(&q_inv) {
                    return Err(Error::invalid(format!(
                        "q_inv = {q_inv} outside the supported range [0.1, 1]"
                    )));
                }
                if t_final <= 0.0 {
                    return Err(Error::invalid("t_final must be positive"));
                }
                if self.n_t == 0 {
                    return Err(Error::invalid("n_t must be at least 1"));
                }
            }
            ProblemKind::Stationary { c, d } => {
                if c <= 0.0 || d <= 0.0 {
                    return Err(Error::invalid(format!(
                        "stationary constants must be positive, got c={c}, d={d}"
                    )));
                }
            }
        }
        if self.n_x == 0 {
            return Err(Error::invalid("n_x must be at least 1"));
        }
        if self.n_v < 3 {
            return Err(Error::invalid("n_v must be at least 3"));
        }
        Ok(())
    }
}

/// Initial condition of the time-dependent problem: a radially symmetric,
/// C^1 bump supported in the disc of radius 1/4 around (0.5, 0.5),
/// independent of the velocity angle.
pub fn initial_condition(x1: f64, x2: f64) -> f64 {
    let r = ((0.5 - x1).powi(2) + (0.5 - x2).powi(2)).sqrt();
    if r < 0.25 {
        (128.0 * r.powi(3) - 48.0 * r * r + 1.0) / (2.0 * PI)
    } else {
        0.0
    }
}

/// Exact solution of the stationary test case.
pub fn manufactured_u(x1: f64, x2: f64, phi: f64) -> f64 {
    let s1 = (PI * x1).sin();
    let s2 = (PI * x2).sin();
    let sp = phi.sin();
    s1 * s1 * s2 * s2 * sp * sp
}

/// Angular derivative of the exact solution (used by the X-norm error).
pub fn manufactured_u_dphi(x1: f64, x2: f64, phi: f64) -> f64 {
    let s1 = (PI * x1).sin();
    let s2 = (PI * x2).sin();
    s1 * s1 * s2 * s2 * (2.0 * phi).sin()
}

/// Source term matching [`manufactured_u`]:
/// `f0 = v . grad_x u + c u - d d^2/dphi^2 u` with `v = (cos phi, sin phi)`.
pub fn manufactured_f0(x1: f64, x2: f64, phi: f64, c: f64, d: f64) -> f64 {
    let s1 = (PI * x1).sin();
    let s2 = (PI * x2).sin();
    let sp = phi.sin();
    let u = s1 * s1 * s2 * s2 * sp * sp;
    let du_dx1 = PI * (2.0 * PI * x1).sin() * s2 * s2 * sp * sp;
    let du_dx2 = PI * s1 * s1 * (2.0 * PI * x2).sin() * sp * sp;
    let d2u_dphi2 = 2.0 * s1 * s1 * s2 * s2 * (2.0 * phi).cos();
    phi.cos() * du_dx1 + phi.sin() * du_dx2 + c * u - d * d2u_dphi2
}

/// Returns the manufactured solution and its source term as closures.
pub fn manufactured_pair(
    c: f64,
    d: f64,
) -> (
    impl Fn(f64, f64, f64) -> f64,
    impl Fn(f64, f64, f64) -> f64,
) {
    (manufactured_u, move |x1, x2, phi| {
        manufactured_f0(x1, x2, phi, c, d)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    /// Physical to transformed: multiply by `e^{-lambda_a t}`.
    Forward,
    /// Transformed to physical: multiply by `e^{+lambda_a t}`.
    Inverse,
}

/// Applies the temporal transformation factor to values sampled at the given
/// times (one time per value).
pub fn temporal_transform(
    direction: TransformDirection,
    values: &mut [f64],
    lambda_a: f64,
    times: &[f64],
) {
    assert_eq!(values.len(), times.len());
    let sign = match direction {
        TransformDirection::Forward => -1.0,
        TransformDirection::Inverse => 1.0,
    };
    for (v, &t) in values.iter_mut().zip(times) {
        *v *= (sign * lambda_a * t).exp();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_condition_values() {
        // r = 0
        assert!((initial_condition(0.5, 0.5) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        // r = 1/4: continuity at the support edge
        assert!(initial_condition(0.75, 0.5).abs() < 1e-15);
        assert!(initial_condition(0.5 + 0.25 - 1e-12, 0.5).abs() < 1e-9);
        // r = 1/8
        let v = initial_condition(0.625, 0.5);
        assert!((v - 0.5 / (2.0 * PI)).abs() < 1e-15, "{v}");
    }

    #[test]
    fn manufactured_point_values() {
        // all factors one at (0.5, 0.5, pi/2)
        assert!((manufactured_u(0.5, 0.5, PI / 2.0) - 1.0).abs() < 1e-14);
        // transport terms vanish there; d^2/dphi^2 sin^2 = 2 cos(2 phi) = -2
        let (c, d) = (0.3, 0.7);
        let f = manufactured_f0(0.5, 0.5, PI / 2.0, c, d);
        assert!((f - (c + 2.0 * d)).abs() < 1e-13, "{f}");
        // u vanishes on the spatial boundary
        for &x in &[0.0, 1.0] {
            assert!(manufactured_u(x, 0.3, 1.0).abs() < 1e-25);
            assert!(manufactured_u(0.3, x, 1.0).abs() < 1e-25);
        }
    }

    #[test]
    fn manufactured_f0_finite_difference_oracle() {
        // central differences of u reproduce f0 at random points
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (c, d) = (0.1, 0.1);
        let h = 1e-5;
        let mut max_err: f64 = 0.0;
        for _ in 0..1000 {
            let x1: f64 = rng.gen_range(0.05..0.95);
            let x2: f64 = rng.gen_range(0.05..0.95);
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            let du1 = (manufactured_u(x1 + h, x2, phi) - manufactured_u(x1 - h, x2, phi))
                / (2.0 * h);
            let du2 = (manufactured_u(x1, x2 + h, phi) - manufactured_u(x1, x2 - h, phi))
                / (2.0 * h);
            let d2p = (manufactured_u(x1, x2, phi + h) - 2.0 * manufactured_u(x1, x2, phi)
                + manufactured_u(x1, x2, phi - h))
                / (h * h);
            let f_fd =
                phi.cos() * du1 + phi.sin() * du2 + c * manufactured_u(x1, x2, phi) - d * d2p;
            let err = (f_fd - manufactured_f0(x1, x2, phi, c, d)).abs();
            max_err = max_err.max(err);
        }
        assert!(max_err < 1e-6, "max FD residual {max_err}");
    }

    #[test]
    fn temporal_transform_factors() {
        let times = [0.0, 0.5, 0.75];
        let mut vals = [1.0, 1.0, 1.0];
        // lambda = 0 is the identity
        temporal_transform(TransformDirection::Inverse, &mut vals, 0.0, &times);
        assert_eq!(vals, [1.0, 1.0, 1.0]);
        // node at t = 0 unchanged, t = 0.75 with lambda = 0.8 gains e^0.6
        temporal_transform(TransformDirection::Inverse, &mut vals, 0.8, &times);
        assert!((vals[0] - 1.0).abs() < 1e-15);
        assert!((vals[2] - 0.6f64.exp()).abs() < 1e-15);
        assert!((vals[2] - 1.8221188003905089).abs() < 1e-12);
        // forward then inverse is the identity
        let mut v2 = [2.0, 3.0, 4.0];
        temporal_transform(TransformDirection::Forward, &mut v2, 0.8, &times);
        temporal_transform(TransformDirection::Inverse, &mut v2, 0.8, &times);
        assert!((v2[0] - 2.0).abs() < 1e-14);
        assert!((v2[1] - 3.0).abs() < 1e-14);
        assert!((v2[2] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn table_resolution_time_mesh() {
        let kind = ProblemKind::TimeDependentFp {
            q_inv: 0.8,
            t_final: 0.75,
        };
        let p = ProblemSpec::with_table_resolution(kind, 16).unwrap();
        assert_eq!(p.n_t, 12);
        assert_eq!(p.n_x, 16);
        assert_eq!(p.n_v, 16);
        assert!(ProblemSpec::with_table_resolution(kind, 5).is_err());
    }

    #[test]
    fn validation_errors() {
        let mut p = ProblemSpec::stationary(0.1, 0.1, 4, 8);
        p.validate().unwrap();
        p.n_v = 2;
        assert!(p.validate().is_err());
        assert!(ProblemSpec::stationary(0.0, 0.1, 4, 8).validate().is_err());
        assert!(ProblemSpec::time_dependent(0.05, 3, 4, 4)
            .validate()
            .is_err());
    }
}
