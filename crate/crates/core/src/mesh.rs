//! Uniform 1D meshes, tensor-product element traversal and Gauss-Legendre
//! quadrature. All assembly routines map elements to the reference cell
//! [-1, 1] with a constant Jacobian h/2 per axis.

use crate::error::{Error, Result};

/// Uniform mesh on the interval `[a, b]` with `n_cells` cells.
///
/// For a periodic mesh node `n_cells` is identified with node 0, so the
/// number of distinct nodes equals the number of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    a: f64,
    b: f64,
    n_cells: usize,
    periodic: bool,
}

impl Mesh1D {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n_cells as f64
    }

    /// Number of distinct nodes (periodic meshes identify the endpoints).
    pub fn n_nodes(&self) -> usize {
        if self.periodic {
            self.n_cells
        } else {
            self.n_cells + 1
        }
    }

    /// Coordinate of node `k`.
    pub fn node(&self, k: usize) -> f64 {
        self.a + k as f64 * self.h()
    }

    /// Left and right endpoint of cell `k`.
    pub fn cell_bounds(&self, k: usize) -> (f64, f64) {
        (self.node(k), self.a + (k + 1) as f64 * self.h())
    }

    /// Map a reference coordinate in [-1, 1] into cell `k`.
    pub fn from_ref(&self, k: usize, s: f64) -> f64 {
        let (x0, x1) = self.cell_bounds(k);
        0.5 * (x0 + x1) + 0.5 * (x1 - x0) * s
    }
}

/// Builds a uniform mesh. Fails for `b <= a` or `n_cells == 0`.
pub fn make_uniform_mesh(a: f64, b: f64, n_cells: usize, periodic: bool) -> Result<Mesh1D> {
    if !(b > a) {
        return Err(Error::invalid(format!("mesh interval [{a}, {b}] is empty")));
    }
    if n_cells == 0 {
        return Err(Error::invalid("mesh needs at least one cell"));
    }
    Ok(Mesh1D {
        a,
        b,
        n_cells,
        periodic,
    })
}

/// Gauss-Legendre rule on the reference cell [-1, 1].
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Standard Gauss-Legendre nodes and weights on [-1, 1].
///
/// Nodes are computed by Newton iteration on the Legendre polynomial from
/// Chebyshev initial guesses; this is exact to machine precision for the
/// supported sizes (1 through 10 points).
pub fn gauss_rule(n_points: usize) -> Result<QuadRule> {
    if n_points == 0 || n_points > 10 {
        return Err(Error::invalid(format!(
            "gauss rule with {n_points} points not supported (1..=10)"
        )));
    }
    let n = n_points;
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Legendre value and derivative via the three-term recurrence.
    let legendre = |x: f64| -> (f64, f64) {
        let mut p0 = 1.0;
        let mut p1 = x;
        if n == 1 {
            return (x, 1.0);
        }
        for k in 2..=n {
            let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = pk;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    };
    for i in 0..n.div_ceil(2) {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..60 {
            let (p, dp) = legendre(x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = x;
        weights[i] = w;
        points[n - 1 - i] = -x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok(QuadRule { points, weights })
}

/// Enumerates the multi-indices of a tensor-product grid in lexicographic
/// order with the last axis fastest.
pub struct TensorIndices {
    dims: Vec<usize>,
    next: usize,
    total: usize,
}

impl TensorIndices {
    pub fn new(dims: &[usize]) -> Self {
        let total = dims.iter().product();
        TensorIndices {
            dims: dims.to_vec(),
            next: 0,
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Decode a flat index into its multi-index.
    pub fn decode(dims: &[usize], mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; dims.len()];
        for ax in (0..dims.len()).rev() {
            idx[ax] = flat % dims[ax];
            flat /= dims[ax];
        }
        idx
    }

    /// Encode a multi-index into its flat index.
    pub fn encode(dims: &[usize], idx: &[usize]) -> usize {
        let mut flat = 0;
        for ax in 0..dims.len() {
            flat = flat * dims[ax] + idx[ax];
        }
        flat
    }
}

impl Iterator for TensorIndices {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.next >= self.total {
            return None;
        }
        let idx = Self::decode(&self.dims, self.next);
        self.next += 1;
        Some(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mesh_basics() {
        let m = make_uniform_mesh(0.0, 1.0, 16, false).unwrap();
        assert_eq!(m.h(), 1.0 / 16.0);
        assert_eq!(m.n_nodes(), 17);

        let m = make_uniform_mesh(0.0, 2.0 * std::f64::consts::PI, 4, true).unwrap();
        assert!((m.h() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(m.n_nodes(), 4);

        // h_t for the time interval (0, 0.75) at n_t = 16
        let m = make_uniform_mesh(0.0, 0.75, 16, false).unwrap();
        assert_eq!(m.h(), 0.046875);
    }

    #[test]
    fn invalid_mesh_args() {
        assert!(make_uniform_mesh(0.0, 0.0, 4, false).is_err());
        assert!(make_uniform_mesh(1.0, 0.0, 4, false).is_err());
        assert!(make_uniform_mesh(0.0, 1.0, 0, false).is_err());
    }

    #[test]
    fn gauss_small_rules() {
        let r = gauss_rule(1).unwrap();
        assert_eq!(r.points, vec![0.0]);
        assert_eq!(r.weights, vec![2.0]);

        let r = gauss_rule(2).unwrap();
        let g = 1.0 / 3.0f64.sqrt();
        assert!((r.points[0] + g).abs() < 1e-15 && (r.points[1] - g).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15 && (r.weights[1] - 1.0).abs() < 1e-15);

        let r = gauss_rule(3).unwrap();
        let g = (3.0f64 / 5.0).sqrt();
        assert!((r.points[0] + g).abs() < 1e-15);
        assert!((r.points[1]).abs() < 1e-15);
        assert!((r.weights[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((r.weights[0] - 5.0 / 9.0).abs() < 1e-15);

        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(11).is_err());
    }

    #[test]
    fn gauss_weight_sums_and_exactness() {
        for n in 1..=10 {
            let r = gauss_rule(n).unwrap();
            let sum: f64 = r.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-14, "weight sum for n={n}: {sum}");
            // x^k integrates exactly for k <= 2n-1
            for k in 0..2 * n {
                let approx: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(&x, &w)| w * x.powi(k as i32))
                    .sum();
                let exact = if k % 2 == 0 {
                    2.0 / (k as f64 + 1.0)
                } else {
                    0.0
                };
                assert!(
                    (approx - exact).abs() < 1e-13,
                    "n={n} k={k}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn tensor_traversal_counts() {
        let dims = [3usize, 4, 5];
        let it = TensorIndices::new(&dims);
        assert_eq!(it.total(), 60);
        let all: Vec<_> = it.collect();
        assert_eq!(all.len(), 60);
        let mut seen = std::collections::HashSet::new();
        for idx in &all {
            assert!(seen.insert(idx.clone()), "duplicate index {idx:?}");
        }
        // last axis fastest
        assert_eq!(all[0], vec![0, 0, 0]);
        assert_eq!(all[1], vec![0, 0, 1]);
        assert_eq!(
            TensorIndices::encode(&dims, &[1, 2, 3]),
            TensorIndices::encode(&dims, &TensorIndices::decode(&dims, 33))
        );
    }
}
