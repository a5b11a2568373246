//! Linear-elastic cell problems on the voxel mesh.
//!
//! Frame correctors live in the periodic zero-mean space on the frame
//! nodes:
//!
//! ```text
//! int_{Y_B} a (M^I + e(chi_m[I])) : e(w) = 0
//! int_{Y_B} a (y3 M^I + e(chi_b[I])) : e(w) = 0      I in {11, 22, 12}
//! ```
//!
//! Matrix correctors vanish on the frame/matrix interface:
//!
//! ```text
//! int_{Y_M} a e(chi_p[alpha]) : e(w) = int_{Y_M} w_alpha
//! int_{Y_M} a (M^K + e(chi_pre[K])) : e(w) = 0        K over the six basis strains
//! ```
//!
//! The `y3 M^I` sign on the bending load makes the bending tensor the
//! energy of a stationary field. A constant pre-strain `S = sum_K s_K M^K`
//! and in-plane force `f` give the matrix displacement by superposition,
//! `u_M = f_alpha chi_p[alpha] + s_K chi_pre[K]`.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hex::{ElementVector, HexElement};
use crate::linalg::{dense_solve, pcg, Backend, BlockCsr, SolveStats, SolverSettings};
use crate::microcell::{check_frame_connectivity, Phase, PeriodicMesh, VoxelCell};
use crate::tensor::{BasisIndex, HookeTensor, StrainBasis};

/// Displacement per independent mesh node. Entries outside the phase the
/// field belongs to are zero.
pub type NodalField = Vec<[f64; 3]>;

#[derive(Debug, Clone)]
pub enum Constraint {
    /// Weighted zero mean per component (`w_n = int N_n` over the phase).
    ZeroMean { weights: Vec<f64> },
    /// Homogeneous Dirichlet on the listed independent nodes (already
    /// removed from the unknowns).
    Dirichlet { fixed: Vec<bool> },
}

/// Assembled stiffness of one phase restricted to its unknowns.
#[derive(Debug, Clone)]
pub struct CellSystem {
    pub phase: Phase,
    pub element: HexElement,
    pub d: Matrix6<f64>,
    /// Mesh elements of this phase.
    pub elements: Vec<usize>,
    /// Lower-corner `y3` of each entry of `elements`.
    pub element_z: Vec<f64>,
    /// Element connectivity in independent node numbers.
    pub connectivity: Vec<[usize; 8]>,
    /// Independent node -> block row of the unknown vector.
    pub node_dof: Vec<Option<usize>>,
    pub dof_nodes: Vec<usize>,
    pub k: BlockCsr,
    pub constraint: Constraint,
    pub settings: SolverSettings,
}

fn assemble(
    mesh: &PeriodicMesh,
    phase: Phase,
    h: &HookeTensor,
    fixed: Option<&[bool]>,
    settings: SolverSettings,
) -> CellSystem {
    let element = HexElement::new(mesh.spacing);
    let d = h.voigt_matrix();
    let elements: Vec<usize> = (0..mesh.elements.len()).filter(|&e| mesh.element_phase[e] == phase).collect();
    let element_z: Vec<f64> = elements.iter().map(|&e| mesh.y3(mesh.element_layer(e))).collect();
    let connectivity: Vec<[usize; 8]> = elements.iter().map(|&e| mesh.elements[e]).collect();

    let mut node_dof = vec![None; mesh.n_independent()];
    let mut dof_nodes = Vec::new();
    let touched = mesh.phase_nodes(phase);
    for (n, t) in touched.iter().enumerate() {
        if *t && !fixed.is_some_and(|f| f[n]) {
            node_dof[n] = Some(dof_nodes.len());
            dof_nodes.push(n);
        }
    }

    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dof_nodes.len()];
    for el in &connectivity {
        for &a in el {
            if let Some(ra) = node_dof[a] {
                rows[ra].extend(el.iter().filter_map(|&b| node_dof[b]));
            }
        }
    }
    let mut k = BlockCsr::from_pattern(rows);
    let ke = element.stiffness(&d);
    for el in &connectivity {
        for (la, &a) in el.iter().enumerate() {
            let Some(ra) = node_dof[a] else { continue };
            for (lb, &b) in el.iter().enumerate() {
                let Some(rb) = node_dof[b] else { continue };
                let block: Matrix3<f64> = ke.fixed_view::<3, 3>(3 * la, 3 * lb).into_owned();
                k.add_block(ra, rb, &block);
            }
        }
    }

    let constraint = match fixed {
        Some(f) => Constraint::Dirichlet { fixed: f.to_vec() },
        None => {
            let mut weights = vec![0.0; dof_nodes.len()];
            let w = element.volume() / 8.0;
            for el in &connectivity {
                for &a in el {
                    if let Some(r) = node_dof[a] {
                        weights[r] += w;
                    }
                }
            }
            Constraint::ZeroMean { weights }
        }
    };

    CellSystem { phase, element, d, elements, element_z, connectivity, node_dof, dof_nodes, k, constraint, settings }
}

/// Frame stiffness `int_{Y_B} a e(u) : e(w)` with periodic identification
/// and the zero-mean constraint.
pub fn assemble_frame_system(mesh: &PeriodicMesh, h: &HookeTensor, settings: SolverSettings) -> Result<CellSystem> {
    let (n1, n2, n3) = (mesh.n1, mesh.n2, mesh.n3);
    check_frame_connectivity(n1, n2, n3, &mesh.element_phase)
        .map_err(|e| Error::SingularSystem(format!("frame stiffness would be singular: {e}")))?;
    Ok(assemble(mesh, Phase::Frame, h, None, settings))
}

impl CellSystem {
    pub fn n_unknowns(&self) -> usize {
        3 * self.dof_nodes.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.k.mul_vec(x, &mut y);
        y
    }

    /// Unknown vector -> nodal field over all independent nodes.
    pub fn to_field(&self, x: &[f64], n_nodes: usize) -> NodalField {
        let mut field = vec![[0.0; 3]; n_nodes];
        for (r, &n) in self.dof_nodes.iter().enumerate() {
            field[n] = [x[3 * r], x[3 * r + 1], x[3 * r + 2]];
        }
        field
    }

    pub fn from_field(&self, field: &NodalField) -> Vec<f64> {
        self.dof_nodes.iter().flat_map(|&n| field[n]).collect()
    }

    fn scatter(&self, f: &mut [f64], el: &[usize; 8], fe: &ElementVector) {
        for (la, &a) in el.iter().enumerate() {
            if let Some(r) = self.node_dof[a] {
                for i in 0..3 {
                    f[3 * r + i] += fe[3 * la + i];
                }
            }
        }
    }

    /// `-int a S(y) : e(w)` for an engineering-strain field `S` that is
    /// affine in `y3`: `S = (c0 + c1 y3) s`.
    pub fn prestrain_load(&self, s: &Vector6<f64>, c0: f64, c1: f64) -> Vec<f64> {
        let mut f = vec![0.0; self.n_unknowns()];
        for (el, &z) in self.connectivity.iter().zip(&self.element_z) {
            let fe = self.element.prestrain_load(&self.d, |p| s * (c0 + c1 * (z + p.local[2])));
            self.scatter(&mut f, el, &fe);
        }
        f
    }

    /// `int w_comp` over the phase.
    pub fn body_load(&self, comp: usize) -> Vec<f64> {
        let fe = self.element.body_load(comp);
        let mut f = vec![0.0; self.n_unknowns()];
        for el in &self.connectivity {
            self.scatter(&mut f, el, &fe);
        }
        f
    }

    fn remove_translations(&self, v: &mut [f64]) {
        let n = self.dof_nodes.len() as f64;
        for c in 0..3 {
            let mean: f64 = v.iter().skip(c).step_by(3).sum::<f64>() / n;
            v.iter_mut().skip(c).step_by(3).for_each(|x| *x -= mean);
        }
    }

    fn enforce_zero_mean(&self, x: &mut [f64], weights: &[f64]) {
        let total: f64 = weights.iter().sum();
        for c in 0..3 {
            let mean: f64 = x.iter().skip(c).step_by(3).zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
            x.iter_mut().skip(c).step_by(3).for_each(|v| *v -= mean);
        }
    }

    /// Weighted mean of each displacement component over the phase.
    pub fn weighted_mean(&self, x: &[f64]) -> [f64; 3] {
        match &self.constraint {
            Constraint::ZeroMean { weights } => {
                let total: f64 = weights.iter().sum();
                std::array::from_fn(|c| {
                    x.iter().skip(c).step_by(3).zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
                })
            }
            Constraint::Dirichlet { .. } => [0.0; 3],
        }
    }

    /// Solve `K x = b` in the constrained space.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        if b.is_empty() {
            return Ok((Vec::new(), SolveStats { iterations: 0, relative_residual: 0.0 }));
        }
        let singular = matches!(self.constraint, Constraint::ZeroMean { .. });
        let mut iterations = 0;
        let mut x = match self.settings.backend {
            Backend::Cg => {
                let (x, st) = if singular {
                    pcg(&self.k, b, &self.settings, |v| self.remove_translations(v))?
                } else {
                    pcg(&self.k, b, &self.settings, |_| {})?
                };
                iterations = st.iterations;
                x
            }
            Backend::Direct => {
                let kernel: Vec<Vec<f64>> = match &self.constraint {
                    Constraint::ZeroMean { weights } => (0..3)
                        .map(|c| {
                            let mut v = vec![0.0; self.n_unknowns()];
                            for (r, w) in weights.iter().enumerate() {
                                v[3 * r + c] = *w;
                            }
                            v
                        })
                        .collect(),
                    Constraint::Dirichlet { .. } => Vec::new(),
                };
                let mut rhs = b.to_vec();
                if singular {
                    self.remove_translations(&mut rhs);
                }
                dense_solve(&self.k, &kernel, &rhs)?
            }
        };
        if let Constraint::ZeroMean { weights } = &self.constraint {
            self.enforce_zero_mean(&mut x, weights);
        }
        let stats = SolveStats { iterations, relative_residual: self.relative_residual(&x, b) };
        if !(stats.relative_residual <= 10.0 * self.settings.tolerance.max(1e-14)) {
            return Err(Error::SolverNonConvergence { iterations, residual: stats.relative_residual });
        }
        Ok((x, stats))
    }

    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let kx = self.apply(x);
        let mut r: Vec<f64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
        let mut bb = b.to_vec();
        if matches!(self.constraint, Constraint::ZeroMean { .. }) {
            self.remove_translations(&mut r);
            self.remove_translations(&mut bb);
        }
        let bn = bb.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bn == 0.0 {
            rn
        } else {
            rn / bn
        }
    }
}

/// Frame correctors `(chi_m, chi_b)` for the in-plane basis `(11, 22, 12)`.
pub fn solve_frame_correctors(
    sys: &CellSystem,
    basis: &StrainBasis,
    n_nodes: usize,
) -> Result<(Vec<NodalField>, Vec<NodalField>, Vec<SolveStats>)> {
    use rayon::prelude::*;
    let loads: Vec<Vec<f64>> = basis
        .membrane()
        .iter()
        .flat_map(|m| {
            let s = m.to_strain_voigt();
            [sys.prestrain_load(&s, 1.0, 0.0), sys.prestrain_load(&s, 0.0, 1.0)]
        })
        .collect();
    let solved: Vec<(Vec<f64>, SolveStats)> = loads.par_iter().map(|b| sys.solve(b)).collect::<Result<_>>()?;
    let mut chi_m = Vec::with_capacity(3);
    let mut chi_b = Vec::with_capacity(3);
    let mut stats = Vec::with_capacity(6);
    for (i, (x, s)) in solved.into_iter().enumerate() {
        stats.push(s);
        let field = sys.to_field(&x, n_nodes);
        if i % 2 == 0 {
            chi_m.push(field);
        } else {
            chi_b.push(field);
        }
    }
    Ok((chi_m, chi_b, stats))
}

#[derive(Debug, Clone, Default)]
pub struct MatrixCorrectors {
    pub chi_p: Vec<NodalField>,
    pub chi_pre: Vec<NodalField>,
    pub degenerate: bool,
    pub stats: Vec<SolveStats>,
}

/// Dirichlet-constrained matrix stiffness. `None` when the matrix phase is
/// empty.
pub fn assemble_matrix_system(
    mesh: &PeriodicMesh,
    h: &HookeTensor,
    settings: SolverSettings,
) -> Result<Option<CellSystem>> {
    if !mesh.element_phase.contains(&Phase::Matrix) {
        return Ok(None);
    }
    let interface = mesh.interface_nodes();
    if !interface.iter().any(|v| *v) {
        return Err(Error::SingularSystem(
            "matrix phase has no interface with the frame: the Dirichlet condition is vacuous".into(),
        ));
    }
    Ok(Some(assemble(mesh, Phase::Matrix, h, Some(&interface), settings)))
}

pub fn solve_matrix_correctors(
    mesh: &PeriodicMesh,
    h: &HookeTensor,
    include_prestrain: bool,
    settings: SolverSettings,
) -> Result<MatrixCorrectors> {
    use rayon::prelude::*;
    let Some(sys) = assemble_matrix_system(mesh, h, settings)? else {
        return Ok(MatrixCorrectors { degenerate: true, ..Default::default() });
    };
    let n_nodes = mesh.n_independent();
    let mut loads = vec![sys.body_load(0), sys.body_load(1)];
    if include_prestrain {
        for m in StrainBasis.full() {
            loads.push(sys.prestrain_load(&m.to_strain_voigt(), 1.0, 0.0));
        }
    }
    let solved: Vec<(Vec<f64>, SolveStats)> = loads.par_iter().map(|b| sys.solve(b)).collect::<Result<_>>()?;
    let mut out = MatrixCorrectors::default();
    for (i, (x, s)) in solved.into_iter().enumerate() {
        out.stats.push(s);
        let field = sys.to_field(&x, n_nodes);
        if i < 2 {
            out.chi_p.push(field);
        } else {
            out.chi_pre.push(field);
        }
    }
    Ok(out)
}

/// All correctors of one cell/material pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSet {
    pub fingerprint: String,
    pub n_nodes: usize,
    /// Order `(11, 22, 12)`.
    pub chi_m: Vec<NodalField>,
    pub chi_b: Vec<NodalField>,
    /// Order `(1, 2)`; empty when the matrix phase is empty.
    pub chi_p: Vec<NodalField>,
    /// Order `(11, 22, 33, 23, 13, 12)`; empty when not requested.
    pub chi_pre: Vec<NodalField>,
    pub frame_nodes: Vec<bool>,
    pub matrix_nodes: Vec<bool>,
    pub interface_nodes: Vec<bool>,
    pub degenerate_matrix: bool,
    pub max_relative_residual: f64,
}

impl CorrectorSet {
    pub fn has_prestrain(&self) -> bool {
        self.degenerate_matrix || self.chi_pre.len() == 6
    }

    /// Number of exported fields: frame, matrix body-load, matrix pre-strain.
    pub fn field_counts(&self) -> (usize, usize, usize) {
        (self.chi_m.len() + self.chi_b.len(), self.chi_p.len(), self.chi_pre.len())
    }
}

/// Content hash binding correctors to the geometry and materials.
pub fn fingerprint(cell: &VoxelCell, frame: &HookeTensor, matrix: &HookeTensor) -> String {
    let mut h = Sha256::new();
    h.update(cell.fingerprint().as_bytes());
    for t in [frame, matrix] {
        for v in t.voigt().iter().flatten() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Solve every cell problem. The frame and matrix families run concurrently.
pub fn solve_correctors(
    cell: &VoxelCell,
    mesh: &PeriodicMesh,
    frame: &HookeTensor,
    matrix: &HookeTensor,
    include_prestrain: bool,
    settings: SolverSettings,
) -> Result<CorrectorSet> {
    let (frame_result, matrix_result) = rayon::join(
        || -> Result<_> {
            let sys = assemble_frame_system(mesh, frame, settings)?;
            solve_frame_correctors(&sys, &StrainBasis, mesh.n_independent())
        },
        || solve_matrix_correctors(mesh, matrix, include_prestrain, settings),
    );
    let (chi_m, chi_b, fstats) = frame_result?;
    let mc = matrix_result?;
    let max_relative_residual =
        fstats.iter().chain(&mc.stats).map(|s| s.relative_residual).fold(0.0, f64::max);
    Ok(CorrectorSet {
        fingerprint: fingerprint(cell, frame, matrix),
        n_nodes: mesh.n_independent(),
        chi_m,
        chi_b,
        chi_p: mc.chi_p,
        chi_pre: mc.chi_pre,
        frame_nodes: mesh.phase_nodes(Phase::Frame),
        matrix_nodes: mesh.phase_nodes(Phase::Matrix),
        interface_nodes: mesh.interface_nodes(),
        degenerate_matrix: mc.degenerate,
        max_relative_residual,
    })
}

/// Everything needed to rebuild the cell fields later: geometry,
/// materials, and correctors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorBundle {
    pub cell: VoxelCell,
    pub frame: HookeTensor,
    pub matrix: HookeTensor,
    pub correctors: CorrectorSet,
}

impl CorrectorBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = bincode::serialize(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let bundle: CorrectorBundle =
            bincode::deserialize(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let expected = fingerprint(&bundle.cell, &bundle.frame, &bundle.matrix);
        if expected != bundle.correctors.fingerprint {
            return Err(Error::Stale { expected, found: bundle.correctors.fingerprint });
        }
        Ok(bundle)
    }
}

/// Element DOFs of a nodal field.
pub fn gather(field: &NodalField, el: &[usize; 8]) -> ElementVector {
    ElementVector::from_fn(|i, _| field[el[i / 3]][i % 3])
}

/// Linear combination `sum_k c_k field_k`.
pub fn combine(fields: &[NodalField], coeffs: &[f64]) -> NodalField {
    assert_eq!(fields.len(), coeffs.len());
    let n = fields.first().map_or(0, |f| f.len());
    let mut out = vec![[0.0; 3]; n];
    for (f, c) in fields.iter().zip(coeffs) {
        if *c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(f) {
            for i in 0..3 {
                o[i] += c * v[i];
            }
        }
    }
    out
}

/// Index into `chi_pre` of basis strain `k`.
pub fn prestrain_slot(k: BasisIndex) -> usize {
    BasisIndex::FULL.iter().position(|b| *b == k).expect("basis index")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microcell::{build_frame_cell, build_full_cell, build_periodic_mesh};
    use crate::tensor::isotropic_hooke;

    fn settings(backend: Backend) -> SolverSettings {
        SolverSettings { tolerance: 1e-12, backend, ..SolverSettings::default() }
    }

    fn node_y3(mesh: &PeriodicMesh, n: usize) -> f64 {
        mesh.coords[mesh.independent[n]][2]
    }

    #[test]
    fn full_cell_membrane_corrector_is_the_plane_stress_contraction() {
        // lambda = 2, mu = 1: chi_3 = -lambda / (lambda + 2 mu) y3 for M^11 and M^22
        let cell = build_full_cell(0.25, 3, 3, 6).unwrap();
        let mesh = build_periodic_mesh(&cell);
        let h = isotropic_hooke(2.0, 1.0).unwrap();
        let sys = assemble_frame_system(&mesh, &h, settings(Backend::Cg)).unwrap();
        let (chi_m, _, stats) = solve_frame_correctors(&sys, &StrainBasis, mesh.n_independent()).unwrap();
        assert!(stats.iter().all(|s| s.relative_residual < 1e-11));
        for n in 0..mesh.n_independent() {
            let y3 = node_y3(&mesh, n);
            for (i, field) in chi_m.iter().enumerate() {
                let expect = if i < 2 { [0.0, 0.0, -0.5 * y3] } else { [0.0; 3] };
                for c in 0..3 {
                    assert!((field[n][c] - expect[c]).abs() < 1e-10, "I={i} node {n} comp {c}");
                }
            }
        }
    }

    #[test]
    fn full_cell_bending_corrector_approaches_the_parabola() {
        let kappa: f64 = 0.25;
        let cell = build_full_cell(kappa, 2, 2, 32).unwrap();
        let mesh = build_periodic_mesh(&cell);
        let h = isotropic_hooke(1.0, 1.0).unwrap();
        let sys = assemble_frame_system(&mesh, &h, settings(Backend::Cg)).unwrap();
        let (_, chi_b, _) = solve_frame_correctors(&sys, &StrainBasis, mesh.n_independent()).unwrap();
        let peak = kappa * kappa / 9.0;
        for n in 0..mesh.n_independent() {
            let y3 = node_y3(&mesh, n);
            let exact = -(y3 * y3 - kappa * kappa / 3.0) / 6.0;
            assert!((chi_b[0][n][2] - exact).abs() < 1e-2 * peak, "{} vs {exact}", chi_b[0][n][2]);
            assert!(chi_b[0][n][0].abs() < 1e-12 && chi_b[2][n][2].abs() < 1e-12);
        }
    }

    #[test]
    fn direct_and_cg_agree_on_the_frame() {
        let cell = build_frame_cell(0.25, 4, 4, 4).unwrap();
        let mesh = build_periodic_mesh(&cell);
        let h = isotropic_hooke(1.0, 1.0).unwrap();
        let cg = assemble_frame_system(&mesh, &h, settings(Backend::Cg)).unwrap();
        let direct = assemble_frame_system(&mesh, &h, settings(Backend::Direct)).unwrap();
        let (m1, b1, _) = solve_frame_correctors(&cg, &StrainBasis, mesh.n_independent()).unwrap();
        let (m2, b2, _) = solve_frame_correctors(&direct, &StrainBasis, mesh.n_independent()).unwrap();
        for (f, g) in m1.iter().chain(&b1).zip(m2.iter().chain(&b2)) {
            let scale = g.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in f.iter().flatten().zip(g.iter().flatten()) {
                assert!((a - b).abs() <= 1e-9 * scale.max(1e-300));
            }
        }
        for f in m1.iter().chain(&b1) {
            let mean = cg.weighted_mean(&cg.from_field(f));
            assert!(mean.iter().all(|m| m.abs() < 1e-14), "{mean:?}");
        }
    }

    #[test]
    fn correctors_are_stationary() {
        // G_ij = chi_i . K chi_j is symmetric and K chi = b holds to tolerance
        let cell = build_frame_cell(0.25, 4, 4, 4).unwrap();
        let mesh = build_periodic_mesh(&cell);
        let h = isotropic_hooke(1.0, 0.5).unwrap();
        let sys = assemble_frame_system(&mesh, &h, settings(Backend::Cg)).unwrap();
        let (m, b, _) = solve_frame_correctors(&sys, &StrainBasis, mesh.n_independent()).unwrap();
        let xs: Vec<Vec<f64>> = m.iter().chain(&b).map(|f| sys.from_field(f)).collect();
        let g = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(sys.apply(y)).map(|(p, q)| p * q).sum() };
        for x in &xs {
            for y in &xs {
                let scale = (g(x, x) * g(y, y)).sqrt();
                assert!((g(x, y) - g(y, x)).abs() <= 1e-12 * scale);
            }
        }
        let s = StrainBasis.matrix(BasisIndex::M12).to_strain_voigt();
        let rhs = sys.prestrain_load(&s, 1.0, 0.0);
        assert!(sys.relative_residual(&xs[2], &rhs) < 1e-11);
    }

    #[test]
    fn matrix_correctors_vanish_on_the_interface() {
        let cell = build_frame_cell(0.25, 8, 8, 4).unwrap();
        let mesh = build_periodic_mesh(&cell);
        let h = isotropic_hooke(0.1, 0.05).unwrap();
        let mc = solve_matrix_correctors(&mesh, &h, true, settings(Backend::Cg)).unwrap();
        assert_eq!((mc.chi_p.len(), mc.chi_pre.len()), (2, 6));
        let iface = mesh.interface_nodes();
        let matrix_nodes = mesh.phase_nodes(Phase::Matrix);
        for f in mc.chi_p.iter().chain(&mc.chi_pre) {
            for (n, v) in f.iter().enumerate() {
                if iface[n] || !matrix_nodes[n] {
                    assert_eq!(*v, [0.0; 3]);
                }
            }
        }
        // Testing the chi_p equation with chi_p itself.
        let sys = assemble_matrix_system(&mesh, &h, settings(Backend::Cg)).unwrap().unwrap();
        for (a, f) in mc.chi_p.iter().enumerate() {
            let x = sys.from_field(f);
            let energy: f64 = x.iter().zip(sys.apply(&x)).map(|(p, q)| p * q).sum();
            let work: f64 = x.iter().zip(sys.body_load(a)).map(|(p, q)| p * q).sum();
            assert!((energy - work).abs() < 1e-10 * work.abs(), "{energy} vs {work}");
            assert!(work > 0.0);
        }
    }

    #[test]
    fn all_frame_cell_has_no_matrix_correctors() {
        let cell = build_full_cell(0.25, 2, 2, 2).unwrap();
        let mesh = build_periodic_mesh(&cell);
        let h = isotropic_hooke(1.0, 1.0).unwrap();
        let set = solve_correctors(&cell, &mesh, &h, &h, true, settings(Backend::Cg)).unwrap();
        assert!(set.degenerate_matrix && set.chi_p.is_empty() && set.has_prestrain());
        assert_eq!(set.field_counts(), (6, 0, 0));
    }

    #[test]
    fn disconnected_frame_is_singular() {
        let mut cell = build_frame_cell(0.25, 4, 4, 2).unwrap();
        cell.phase.iter_mut().for_each(|p| *p = Phase::Matrix);
        cell.phase[0] = Phase::Frame;
        let mesh = build_periodic_mesh(&cell);
        let h = isotropic_hooke(1.0, 1.0).unwrap();
        assert!(matches!(
            assemble_frame_system(&mesh, &h, SolverSettings::default()),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn bundle_round_trip_and_staleness() {
        let cell = build_frame_cell(0.25, 4, 4, 2).unwrap();
        let mesh = build_periodic_mesh(&cell);
        let h = isotropic_hooke(1.0, 1.0).unwrap();
        let m = isotropic_hooke(0.1, 0.1).unwrap();
        let correctors = solve_correctors(&cell, &mesh, &h, &m, true, SolverSettings::default()).unwrap();
        assert_eq!(correctors.field_counts(), (6, 2, 6));
        let mut bundle = CorrectorBundle { cell, frame: h, matrix: m, correctors };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        bundle.save(&path).unwrap();
        assert_eq!(CorrectorBundle::load(&path).unwrap(), bundle);
        bundle.matrix = isotropic_hooke(0.2, 0.1).unwrap();
        bundle.save(&path).unwrap();
        assert!(matches!(CorrectorBundle::load(&path), Err(Error::Stale { .. })));
    }
}
