//! Damped Newton minimization of the plate energy and the linear bending
//! problem used as its small-load reference.

use serde::{Deserialize, Serialize};

use super::basis::ElementBasis;
use super::energy::{ElementHessian, EnergyParts, PlateProblem};
use super::load::{LoadField, PrestrainField};
use super::{PlateMesh, PlateState, DOFS_PER_NODE};
use crate::error::{Error, Result};
use crate::homogenize::{HomogenizedTensors, Mat3};
use crate::linalg::{Skyline, SkylineCholesky};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    /// Stop when `|g| <= tol (1 + |load|)`.
    pub tol: f64,
    pub max_newton: usize,
    /// Number of equal load increments.
    pub load_steps: usize,
    pub max_backtracks: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-9, max_newton: 50, load_steps: 1, max_backtracks: 40, armijo: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub load_step: usize,
    pub iteration: usize,
    /// Total energy, offset included.
    pub energy: f64,
    pub grad_norm: f64,
    /// Accepted step length that produced this iterate (0 for the start).
    pub step: f64,
    /// Diagonal shift needed to factor the Hessian at the previous iterate.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VkSolution {
    pub state: PlateState,
    pub energy: EnergyParts,
    pub gradient_norm: f64,
    pub trace: Vec<TraceEntry>,
    /// Every accepted iterate, kept only when requested.
    pub iterates: Vec<Vec<f64>>,
    pub newton_iterations: usize,
    pub max_shift: f64,
}

/// Numbering of the unclamped unknowns.
struct FreeDofs {
    index: Vec<Option<usize>>,
    list: Vec<usize>,
}

impl FreeDofs {
    fn new(mesh: &PlateMesh, per_node: &[usize]) -> Self {
        let mut index = Vec::new();
        let mut list = Vec::new();
        for n in 0..mesh.n_nodes() {
            for k in 0..DOFS_PER_NODE {
                let slot = if !mesh.clamped[n] && per_node.contains(&k) {
                    list.push(DOFS_PER_NODE * n + k);
                    Some(list.len() - 1)
                } else {
                    None
                };
                index.push(slot);
            }
        }
        FreeDofs { index, list }
    }

    fn profile(&self, mesh: &PlateMesh) -> Vec<usize> {
        let mut first: Vec<usize> = (0..self.list.len()).collect();
        for e in 0..mesh.n_elements() {
            let free: Vec<usize> = mesh.element_dofs(e).iter().filter_map(|d| self.index[*d]).collect();
            if let Some(&lo) = free.iter().min() {
                for &i in &free {
                    first[i] = first[i].min(lo);
                }
            }
        }
        first
    }
}

fn assemble_skyline<const N: usize>(
    mesh: &PlateMesh,
    free: &FreeDofs,
    first: &[usize],
    local: &[usize; N],
    elements: &[nalgebra::SMatrix<f64, N, N>],
) -> Skyline {
    let mut sky = Skyline::new(first.to_vec());
    for (e, ke) in elements.iter().enumerate() {
        let dofs = mesh.element_dofs(e);
        let idx: [Option<usize>; N] = std::array::from_fn(|a| free.index[dofs[local[a]]]);
        for a in 0..N {
            let Some(i) = idx[a] else { continue };
            for b in 0..N {
                match idx[b] {
                    Some(j) if j <= i => sky.add(i, j, ke[(a, b)]),
                    _ => {}
                }
            }
        }
    }
    sky
}

/// Factor, adding `tau I` with `tau = 1e-8 max|diag|`, then ten times more,
/// until the factorization succeeds.
fn factor_shifted(sky: Skyline) -> Result<(SkylineCholesky, f64)> {
    if let Ok(f) = sky.clone().factor() {
        return Ok((f, 0.0));
    }
    let mut tau = 1e-8 * sky.max_abs_diagonal().max(f64::MIN_POSITIVE);
    for _ in 0..20 {
        let mut shifted = sky.clone();
        shifted.add_to_diagonal(tau);
        if let Ok(f) = shifted.factor() {
            return Ok((f, tau));
        }
        tau *= 10.0;
    }
    Err(Error::NewtonFailure(format!("Hessian could not be factored even with shift {tau:.3e}")))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const IDENTITY_24: [usize; 24] = {
    let mut a = [0; 24];
    let mut i = 0;
    while i < 24 {
        a[i] = i;
        i += 1;
    }
    a
};

/// Minimize the plate energy by Newton's method with Armijo backtracking.
///
/// The line search compares only the state-dependent part of the energy,
/// so the iterates do not depend on the pre-strain offset. With
/// `load_steps > 1` the load is ramped linearly and each increment starts
/// from the previous solution. The result is a local minimizer that may
/// depend on the ramp.
pub fn solve_vk(
    mesh: &PlateMesh,
    tensors: &HomogenizedTensors,
    load: &LoadField,
    prestrain: &PrestrainField,
    opts: &NewtonOptions,
) -> Result<VkSolution> {
    solve_vk_impl(mesh, tensors, load, prestrain, opts, false)
}

/// As [`solve_vk`], additionally returning every accepted iterate.
pub fn solve_vk_recording(
    mesh: &PlateMesh,
    tensors: &HomogenizedTensors,
    load: &LoadField,
    prestrain: &PrestrainField,
    opts: &NewtonOptions,
) -> Result<VkSolution> {
    solve_vk_impl(mesh, tensors, load, prestrain, opts, true)
}

fn solve_vk_impl(
    mesh: &PlateMesh,
    tensors: &HomogenizedTensors,
    load: &LoadField,
    prestrain: &PrestrainField,
    opts: &NewtonOptions,
    record: bool,
) -> Result<VkSolution> {
    tensors.check_coercive()?;
    if opts.load_steps == 0 {
        return Err(Error::Config("load_steps must be at least 1".into()));
    }
    let free = FreeDofs::new(mesh, &[0, 1, 2, 3, 4, 5]);
    let first = free.profile(mesh);
    let mut q = vec![0.0; mesh.n_dofs()];
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut total_iterations = 0;
    let mut max_shift: f64 = 0.0;
    let mut warned = false;
    let mut last: Option<(PlateProblem<'_>, f64)> = None;

    for step in 1..=opts.load_steps {
        let t = step as f64 / opts.load_steps as f64;
        let problem = PlateProblem::new(mesh, tensors, load.scaled(t), *prestrain)?;
        let threshold = opts.tol * (1.0 + problem.load_norm());
        let mut energy = problem.potential(&q);
        let mut g = problem.gradient_vec(&q);
        let mut gn = norm(&g);
        let (mut alpha, mut shift) = (0.0, 0.0);
        let mut iteration = 0;
        loop {
            trace.push(TraceEntry {
                load_step: step,
                iteration,
                energy: energy + problem.offset_energy(),
                grad_norm: gn,
                step: alpha,
                shift,
            });
            if record {
                iterates.push(q.clone());
            }
            if gn <= threshold {
                break;
            }
            if iteration == opts.max_newton {
                return Err(Error::SolverNonConvergence { iterations: iteration, residual: gn / (1.0 + problem.load_norm()) });
            }
            let hessians: Vec<ElementHessian> = problem.element_hessians(&q);
            let sky = assemble_skyline(mesh, &free, &first, &IDENTITY_24, &hessians);
            let (chol, tau) = factor_shifted(sky)?;
            shift = tau;
            if tau > 0.0 {
                max_shift = max_shift.max(tau);
                if !warned {
                    log::warn!(
                        "Hessian needed a diagonal shift {tau:.3e}; the load may exceed the smallness \
                         condition under which the minimizer is known to be well behaved"
                    );
                    warned = true;
                }
            }
            let rhs: Vec<f64> = free.list.iter().map(|&d| -g[d]).collect();
            let dx = chol.solve(&rhs);
            let mut dir = vec![0.0; q.len()];
            for (&d, v) in free.list.iter().zip(&dx) {
                dir[d] = *v;
            }
            let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_backtracks {
                let trial: Vec<f64> = q.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
                let e_trial = problem.potential(&trial);
                if e_trial <= energy + opts.armijo * alpha * slope {
                    accepted = Some((trial, e_trial));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, e_trial)) = accepted else {
                return Err(Error::NewtonFailure(format!(
                    "line search failed after {} backtracks at load step {step}, iteration {iteration}: \
                     energy {energy:.6e}, gradient norm {gn:.3e}, slope {slope:.3e}",
                    opts.max_backtracks
                )));
            };
            q = trial;
            energy = e_trial;
            g = problem.gradient_vec(&q);
            gn = norm(&g);
            iteration += 1;
            total_iterations += 1;
        }
        last = Some((problem, gn));
    }

    let (problem, gradient_norm) = last.expect("at least one load step");
    let state = PlateState::from_vec(&q);
    Ok(VkSolution {
        energy: problem.energy_parts(&state),
        state,
        gradient_norm,
        trace,
        iterates,
        newton_iterations: total_iterations,
        max_shift,
    })
}

/// Clamped linear bending problem: minimize
/// `|Y_B| 1/2 int C D^2 w : D^2 w - |Y| int f3 w` with one factorization.
/// Returns the Hermite unknowns `(w, w_x, w_y, w_xy)` per node.
pub fn linear_bending_solve(
    mesh: &PlateMesh,
    c: &Mat3,
    vol_b: f64,
    vol_y: f64,
    load: &LoadField,
) -> Result<Vec<[f64; 4]>> {
    let cs = {
        let m = nalgebra::Matrix3::from_fn(|i, j| c[i][j]);
        0.5 * (m + m.transpose())
    };
    let free = FreeDofs::new(mesh, &[2, 3, 4, 5]);
    let first = free.profile(mesh);
    let basis = ElementBasis::new(mesh.hx, mesh.hy);
    let local: [usize; 16] = std::array::from_fn(|i| 6 * (i / 4) + 2 + i % 4);
    let mut rhs = vec![0.0; free.list.len()];
    let mut ke_all = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let o = mesh.element_origin(e);
        let mut ke = nalgebra::SMatrix::<f64, 16, 16>::zeros();
        let mut fe = nalgebra::SVector::<f64, 16>::zeros();
        for p in &basis.points {
            let b = nalgebra::SMatrix::<f64, 3, 16>::from_fn(|r, k| {
                let row = [&p.basis.wxx, &p.basis.wyy, &p.basis.wxy][r];
                row[local[k]]
            });
            ke += b.transpose() * cs * b * (vol_b * p.weight);
            let f3 = load.eval(o[0] + p.offset[0], o[1] + p.offset[1])[2];
            fe += nalgebra::SVector::<f64, 16>::from_fn(|k, _| p.basis.w[local[k]]) * (vol_y * f3 * p.weight);
        }
        let dofs = mesh.element_dofs(e);
        for k in 0..16 {
            if let Some(i) = free.index[dofs[local[k]]] {
                rhs[i] += fe[k];
            }
        }
        ke_all.push(ke);
    }
    let sky = assemble_skyline(mesh, &free, &first, &local, &ke_all);
    let chol = sky
        .factor()
        .map_err(|row| Error::ClampInsufficient(format!("bending stiffness is singular at free unknown {row}")))?;
    let x = chol.solve(&rhs);
    let mut out = vec![[0.0; 4]; mesh.n_nodes()];
    for (&d, v) in free.list.iter().zip(&x) {
        out[d / DOFS_PER_NODE][d % DOFS_PER_NODE - 2] = *v;
    }
    Ok(out)
}
