//! Discrete homogenized plate energy, its gradient and Hessian.
//!
//! With `Z = e(Um) + 1/2 grad w (x) grad w` and `eta = -D^2 w` (both as
//! `(11, 22, 12)` tensor components) the energy is
//!
//! ```text
//! |Y_B| 1/2 int Q(Z, eta) - |Y| int f . (Um, w) + |Y_M| int j
//! ```
//!
//! where `j` is the pre-strain offset density, independent of the state.

use nalgebra::{Matrix3, SMatrix, Vector3};
use rayon::prelude::*;

use super::basis::{Dofs, ElementBasis, PointBasis};
use super::load::{LoadField, PrestrainField};
use super::{PlateMesh, PlateState};
use crate::error::Result;
use crate::homogenize::{prestrain_offset, HomogenizedTensors};

pub type ElementHessian = SMatrix<f64, 24, 24>;
type Operator = SMatrix<f64, 6, 24>;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyParts {
    /// `|Y_B| 1/2 int Q(Z, eta)`.
    pub elastic: f64,
    /// `-|Y| int f . U`.
    pub load: f64,
    /// `|Y_M| int j`.
    pub offset: f64,
    pub total: f64,
}

/// A plate, its tensors, loading and pre-strain, ready for evaluation.
#[derive(Debug, Clone)]
pub struct PlateProblem<'a> {
    pub mesh: &'a PlateMesh,
    pub tensors: &'a HomogenizedTensors,
    pub load: LoadField,
    pub prestrain: PrestrainField,
    basis: ElementBasis,
    block: SMatrix<f64, 6, 6>,
    a: Matrix3<f64>,
    b: Matrix3<f64>,
    c: Matrix3<f64>,
    /// `|Y| int f . N` per unknown, clamped entries zero.
    load_vector: Vec<f64>,
    offset_energy: f64,
}

/// Membrane strain, bending strain and deflection gradient at a point.
pub(crate) fn kinematics(b: &PointBasis, q: &Dofs) -> (Vector3<f64>, Vector3<f64>, [f64; 2]) {
    let (gx, gy) = (b.wx.dot(q), b.wy.dot(q));
    let z = Vector3::new(
        b.u1x.dot(q) + 0.5 * gx * gx,
        b.u2y.dot(q) + 0.5 * gy * gy,
        0.5 * (b.u1y.dot(q) + b.u2x.dot(q)) + 0.5 * gx * gy,
    );
    let eta = -Vector3::new(b.wxx.dot(q), b.wyy.dot(q), b.wxy.dot(q));
    (z, eta, [gx, gy])
}

/// Derivative of `(Z, eta)` with respect to the element unknowns.
fn operator(b: &PointBasis, g: [f64; 2]) -> Operator {
    let rows = [
        b.u1x + b.wx * g[0],
        b.u2y + b.wy * g[1],
        (b.u1y + b.u2x) * 0.5 + (b.wx * g[1] + b.wy * g[0]) * 0.5,
        -b.wxx,
        -b.wyy,
        -b.wxy,
    ];
    Operator::from_fn(|r, c| rows[r][c])
}

impl<'a> PlateProblem<'a> {
    pub fn new(
        mesh: &'a PlateMesh,
        tensors: &'a HomogenizedTensors,
        load: LoadField,
        prestrain: PrestrainField,
    ) -> Result<Self> {
        let offset = prestrain_offset(tensors, &prestrain, &load)?;
        let basis = ElementBasis::new(mesh.hx, mesh.hy);
        let m = |t: &[[f64; 3]; 3]| Matrix3::from_fn(|i, j| t[i][j]);
        let a = m(&tensors.a);
        let c = m(&tensors.c);
        let mut problem = PlateProblem {
            mesh,
            tensors,
            load,
            prestrain,
            block: tensors.block_form(),
            a: 0.5 * (a + a.transpose()),
            b: m(&tensors.b),
            c: 0.5 * (c + c.transpose()),
            basis,
            load_vector: Vec::new(),
            offset_energy: 0.0,
        };
        problem.load_vector = problem.assemble_load_vector();
        if let Some(off) = offset {
            problem.offset_energy = tensors.vol_m * problem.integrate(|x, y| off.density(x, y));
        }
        Ok(problem)
    }

    fn integrate<F: Fn(f64, f64) -> f64 + Sync>(&self, f: F) -> f64 {
        let per: Vec<f64> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let o = self.mesh.element_origin(e);
                self.basis.points.iter().map(|p| p.weight * f(o[0] + p.offset[0], o[1] + p.offset[1])).sum()
            })
            .collect();
        per.iter().sum()
    }

    fn assemble_load_vector(&self) -> Vec<f64> {
        let vol_y = self.tensors.vol_y;
        let per: Vec<Dofs> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let o = self.mesh.element_origin(e);
                let mut v = Dofs::zeros();
                for p in &self.basis.points {
                    let f = self.load.eval(o[0] + p.offset[0], o[1] + p.offset[1]);
                    v += (p.basis.u1 * f[0] + p.basis.u2 * f[1] + p.basis.w * f[2]) * (vol_y * p.weight);
                }
                v
            })
            .collect();
        let mut out = vec![0.0; self.mesh.n_dofs()];
        self.scatter(&per, &mut out);
        self.mesh.apply_clamp(&mut out);
        out
    }

    fn scatter(&self, per: &[Dofs], out: &mut [f64]) {
        for (e, v) in per.iter().enumerate() {
            for (d, g) in self.mesh.element_dofs(e).iter().enumerate() {
                out[*g] += v[d];
            }
        }
    }

    fn gather(&self, q: &[f64], e: usize) -> Dofs {
        let dofs = self.mesh.element_dofs(e);
        Dofs::from_fn(|d, _| q[dofs[d]])
    }

    fn quad_form(&self, z: &Vector3<f64>, eta: &Vector3<f64>) -> f64 {
        z.dot(&(self.a * z)) + 2.0 * eta.dot(&(self.b * z)) + eta.dot(&(self.c * eta))
    }

    pub fn load_vector(&self) -> &[f64] {
        &self.load_vector
    }

    pub fn load_norm(&self) -> f64 {
        self.load_vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn offset_energy(&self) -> f64 {
        self.offset_energy
    }

    /// Stored elastic energy of the unknown vector `q`.
    pub fn elastic_energy(&self, q: &[f64]) -> f64 {
        let scale = 0.5 * self.tensors.vol_b;
        let per: Vec<f64> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let qe = self.gather(q, e);
                self.basis
                    .points
                    .iter()
                    .map(|p| {
                        let (z, eta, _) = kinematics(&p.basis, &qe);
                        p.weight * self.quad_form(&z, &eta)
                    })
                    .sum::<f64>()
            })
            .collect();
        scale * per.iter().sum::<f64>()
    }

    /// The state-dependent part of the energy; the Newton line search
    /// works with this alone.
    pub fn potential(&self, q: &[f64]) -> f64 {
        let work: f64 = self.load_vector.iter().zip(q).map(|(f, u)| f * u).sum();
        self.elastic_energy(q) - work
    }

    pub fn energy_parts(&self, state: &PlateState) -> EnergyParts {
        let q = self.clamped_vec(state);
        let elastic = self.elastic_energy(&q);
        let load = -self.load_vector.iter().zip(&q).map(|(f, u)| f * u).sum::<f64>();
        EnergyParts { elastic, load, offset: self.offset_energy, total: elastic + load + self.offset_energy }
    }

    pub fn energy(&self, state: &PlateState) -> f64 {
        self.energy_parts(state).total
    }

    fn clamped_vec(&self, state: &PlateState) -> Vec<f64> {
        let mut q = state.to_vec();
        self.mesh.apply_clamp(&mut q);
        q
    }

    /// First variation with respect to every unknown; clamped entries zero.
    pub fn gradient_vec(&self, q: &[f64]) -> Vec<f64> {
        let vol_b = self.tensors.vol_b;
        let per: Vec<Dofs> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let qe = self.gather(q, e);
                let mut g = Dofs::zeros();
                for p in &self.basis.points {
                    let (z, eta, grad) = kinematics(&p.basis, &qe);
                    let n = self.a * z + self.b.transpose() * eta;
                    let m = self.b * z + self.c * eta;
                    let s = nalgebra::Vector6::new(n[0], n[1], n[2], m[0], m[1], m[2]);
                    g += operator(&p.basis, grad).transpose() * s * (vol_b * p.weight);
                }
                g
            })
            .collect();
        let mut out = vec![0.0; self.mesh.n_dofs()];
        self.scatter(&per, &mut out);
        for (o, f) in out.iter_mut().zip(&self.load_vector) {
            *o -= f;
        }
        self.mesh.apply_clamp(&mut out);
        out
    }

    pub fn gradient(&self, state: &PlateState) -> Vec<f64> {
        self.gradient_vec(&self.clamped_vec(state))
    }

    /// Element Hessians including the geometric stiffness of the
    /// membrane force.
    pub fn element_hessians(&self, q: &[f64]) -> Vec<ElementHessian> {
        let vol_b = self.tensors.vol_b;
        (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let qe = self.gather(q, e);
                let mut h = ElementHessian::zeros();
                for p in &self.basis.points {
                    let (z, eta, grad) = kinematics(&p.basis, &qe);
                    let l = operator(&p.basis, grad);
                    let n = self.a * z + self.b.transpose() * eta;
                    let wx = &p.basis.wx;
                    let wy = &p.basis.wy;
                    let geometric = wx * wx.transpose() * n[0]
                        + wy * wy.transpose() * n[1]
                        + (wx * wy.transpose() + wy * wx.transpose()) * (0.5 * n[2]);
                    h += (l.transpose() * self.block * l + geometric) * (vol_b * p.weight);
                }
                h
            })
            .collect()
    }

    /// Dense Hessian, for tests on small grids.
    pub fn dense_hessian(&self, q: &[f64]) -> nalgebra::DMatrix<f64> {
        let n = self.mesh.n_dofs();
        let mut h = nalgebra::DMatrix::zeros(n, n);
        for (e, he) in self.element_hessians(q).iter().enumerate() {
            let dofs = self.mesh.element_dofs(e);
            for a in 0..24 {
                for b in 0..24 {
                    h[(dofs[a], dofs[b])] += he[(a, b)];
                }
            }
        }
        h
    }
}

/// Total energy of `state`, pre-strain offset included.
pub fn eval_energy(
    mesh: &PlateMesh,
    tensors: &HomogenizedTensors,
    load: &LoadField,
    prestrain: &PrestrainField,
    state: &PlateState,
) -> Result<f64> {
    Ok(PlateProblem::new(mesh, tensors, load.clone(), *prestrain)?.energy(state))
}

pub fn eval_gradient(
    mesh: &PlateMesh,
    tensors: &HomogenizedTensors,
    load: &LoadField,
    prestrain: &PrestrainField,
    state: &PlateState,
) -> Result<Vec<f64>> {
    Ok(PlateProblem::new(mesh, tensors, load.clone(), *prestrain)?.gradient(state))
}
