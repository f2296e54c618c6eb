//! Continuous tensor-product Q2 finite element space on a rectangular box:
//! three axes (t, x1, x2) for the time-dependent problem, two axes (x1, x2)
//! for the stationary one. Dof numbering is lexicographic with the last
//! axis fastest.

use crate::error::{Error, Result};
use crate::mesh::{Mesh1D, TensorIndices};

/// One face of the box: an axis and which side of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    /// true for the upper face (outward normal +e_axis).
    pub upper: bool,
}

pub struct Q2Space {
    pub axes: Vec<Mesh1D>,
    dofs_per_axis: Vec<usize>,
    cells_per_axis: Vec<usize>,
}

/// 1D quadratic Lagrange basis on [-1, 1] with nodes {-1, 0, 1}.
pub fn lagrange_q2(s: f64) -> [f64; 3] {
    [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)]
}

/// Reference derivative of [`lagrange_q2`].
pub fn lagrange_q2_deriv(s: f64) -> [f64; 3] {
    [s - 0.5, -2.0 * s, s + 0.5]
}

/// Builds the Q2 space over 2 or 3 non-periodic axes.
pub fn build_q2_space(axes: &[Mesh1D]) -> Result<Q2Space> {
    if axes.len() != 2 && axes.len() != 3 {
        return Err(Error::invalid(format!(
            "Q2 space needs 2 or 3 axes, got {}",
            axes.len()
        )));
    }
    for (k, ax) in axes.iter().enumerate() {
        if ax.periodic() {
            return Err(Error::invalid(format!("axis {k} must not be periodic")));
        }
    }
    Ok(Q2Space {
        axes: axes.to_vec(),
        dofs_per_axis: axes.iter().map(|m| 2 * m.n_cells() + 1).collect(),
        cells_per_axis: axes.iter().map(|m| m.n_cells()).collect(),
    })
}

impl Q2Space {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn dofs_per_axis(&self) -> &[usize] {
        &self.dofs_per_axis
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs_per_axis.iter().product()
    }

    pub fn n_elements(&self) -> usize {
        self.cells_per_axis.iter().product()
    }

    pub fn n_local_dofs(&self) -> usize {
        3usize.pow(self.dim() as u32)
    }

    pub fn dof_multi(&self, dof: usize) -> Vec<usize> {
        TensorIndices::decode(&self.dofs_per_axis, dof)
    }

    pub fn dof_index(&self, multi: &[usize]) -> usize {
        TensorIndices::encode(&self.dofs_per_axis, multi)
    }

    pub fn element_multi(&self, element: usize) -> Vec<usize> {
        TensorIndices::decode(&self.cells_per_axis, element)
    }

    pub fn element_index(&self, multi: &[usize]) -> usize {
        TensorIndices::encode(&self.cells_per_axis, multi)
    }

    /// Node coordinates of a dof (nodes sit at half-cell spacing).
    pub fn node_coords(&self, dof: usize) -> Vec<f64> {
        let multi = self.dof_multi(dof);
        multi
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.a() + 0.5 * ax.h() * i as f64)
            .collect()
    }

    /// Global dofs of an element in local lexicographic order (last axis
    /// fastest), 3^dim entries.
    pub fn element_dofs(&self, element: usize) -> Vec<usize> {
        let em = self.element_multi(element);
        let dim = self.dim();
        let mut out = Vec::with_capacity(self.n_local_dofs());
        let mut local = vec![0usize; dim];
        loop {
            let mut flat = 0;
            for ax in 0..dim {
                flat = flat * self.dofs_per_axis[ax] + (2 * em[ax] + local[ax]);
            }
            out.push(flat);
            // advance local multi-index, last axis fastest
            let mut ax = dim;
            loop {
                if ax == 0 {
                    return out;
                }
                ax -= 1;
                local[ax] += 1;
                if local[ax] < 3 {
                    break;
                }
                local[ax] = 0;
            }
        }
    }

    /// Faces of the box on which the dof's basis function has nonzero trace.
    /// Interior dofs yield an empty list; edge/corner dofs list all incident
    /// faces.
    pub fn boundary_faces(&self, dof: usize) -> Vec<Face> {
        let multi = self.dof_multi(dof);
        let mut faces = Vec::new();
        for ax in 0..self.dim() {
            if multi[ax] == 0 {
                faces.push(Face {
                    axis: ax,
                    upper: false,
                });
            } else if multi[ax] == self.dofs_per_axis[ax] - 1 {
                faces.push(Face {
                    axis: ax,
                    upper: true,
                });
            }
        }
        faces
    }

    /// Evaluates all local basis functions and their physical gradients at a
    /// reference point of the given element.
    pub fn eval_basis_and_gradient(
        &self,
        element: usize,
        ref_point: &[f64],
    ) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        if element >= self.n_elements() {
            return Err(Error::invalid(format!(
                "element {element} out of range (n = {})",
                self.n_elements()
            )));
        }
        if ref_point.len() != self.dim() {
            return Err(Error::invalid("reference point has wrong dimension"));
        }
        let dim = self.dim();
        let vals_1d: Vec<[f64; 3]> = ref_point.iter().map(|&s| lagrange_q2(s)).collect();
        let ders_1d: Vec<[f64; 3]> = (0..dim)
            .map(|ax| {
                let d = lagrange_q2_deriv(ref_point[ax]);
                let scale = 2.0 / self.axes[ax].h();
                [d[0] * scale, d[1] * scale, d[2] * scale]
            })
            .collect();
        let n_local = self.n_local_dofs();
        let mut values = vec![0.0; n_local];
        let mut grads = vec![[0.0; 3]; n_local];
        for (l, local) in TensorIndices::new(&vec![3; dim]).enumerate() {
            let mut v = 1.0;
            for ax in 0..dim {
                v *= vals_1d[ax][local[ax]];
            }
            values[l] = v;
            for g_ax in 0..dim {
                let mut gv = 1.0;
                for ax in 0..dim {
                    gv *= if ax == g_ax {
                        ders_1d[ax][local[ax]]
                    } else {
                        vals_1d[ax][local[ax]]
                    };
                }
                grads[l][g_ax] = gv;
            }
        }
        Ok((values, grads))
    }

    /// Locates the element containing a physical point and returns its
    /// reference coordinates (points on shared boundaries go to the lower
    /// element, the last element owns its upper boundary).
    pub fn locate(&self, point: &[f64]) -> (usize, Vec<f64>) {
        let dim = self.dim();
        let mut emulti = vec![0usize; dim];
        let mut refc = vec![0.0; dim];
        for ax in 0..dim {
            let m = &self.axes[ax];
            let s = (point[ax] - m.a()) / m.h();
            let cell = (s.floor() as isize).clamp(0, m.n_cells() as isize - 1) as usize;
            emulti[ax] = cell;
            refc[ax] = 2.0 * (s - cell as f64) - 1.0;
        }
        (self.element_index(&emulti), refc)
    }

    /// Evaluates the nodal field with the given coefficients at a physical
    /// point.
    pub fn eval_field(&self, coeffs: &[f64], point: &[f64]) -> f64 {
        let (el, refc) = self.locate(point);
        let (vals, _) = self.eval_basis_and_gradient(el, &refc).unwrap();
        let dofs = self.element_dofs(el);
        dofs.iter()
            .zip(&vals)
            .map(|(&d, &v)| coeffs[d] * v)
            .sum()
    }
}
