//! Fine-scale fields at selected points of the plate.
//!
//! At a macro point the membrane strain `Z` and the bending strain
//! `eta = -D^2 w` of the discrete plate state select the frame
//! displacement `uhat = Z_I chi_m[I] + eta_I chi_b[I]`; the matrix
//! displacement is `f_alpha chi_p[alpha] + s_K chi_pre[K]` with `s` the
//! local pre-strain.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector6;
use rayon::prelude::*;

use crate::cellsolve::{combine, gather, CorrectorBundle, NodalField};
use crate::error::{Error, Result};
use crate::hex::HexElement;
use crate::homogenize::{eval_limit_quadratic_form, frame_energy_density, frame_displacement, HomogenizedTensors};
use crate::microcell::{build_periodic_mesh, PeriodicMesh, Phase};
use crate::plate::{LoadField, PlateMesh, PlateState, PointBasis, PrestrainField};
use crate::tensor::{SymMat2, SymMat3};
use crate::vtk::{cell_grid, VtkGrid};

/// Macro sample points: `grid:NxM` (element-centred lattice over the
/// plate) or `at:x,y;x,y;...`.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplePoints {
    Grid(usize, usize),
    List(Vec<[f64; 2]>),
}

impl FromStr for SamplePoints {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("points `{s}`: expected `grid:NxM` or `at:x,y;x,y`"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "grid" => {
                let (a, b) = args.split_once('x').ok_or_else(bad)?;
                let n: usize = a.trim().parse().map_err(|_| bad())?;
                let m: usize = b.trim().parse().map_err(|_| bad())?;
                if n == 0 || m == 0 {
                    return Err(bad());
                }
                Ok(SamplePoints::Grid(n, m))
            }
            "at" => {
                let mut pts = Vec::new();
                for p in args.split(';').filter(|t| !t.trim().is_empty()) {
                    let (x, y) = p.split_once(',').ok_or_else(bad)?;
                    pts.push([x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?]);
                }
                Ok(SamplePoints::List(pts))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for SamplePoints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplePoints::Grid(n, m) => write!(f, "grid:{n}x{m}"),
            SamplePoints::List(p) => {
                let items: Vec<String> = p.iter().map(|[x, y]| format!("{x},{y}")).collect();
                write!(f, "at:{}", items.join(";"))
            }
        }
    }
}

impl SamplePoints {
    pub fn resolve(&self, l: f64) -> Vec<[f64; 2]> {
        match self {
            SamplePoints::Grid(n, m) => {
                let mut out = Vec::with_capacity(n * m);
                for j in 0..*m {
                    for i in 0..*n {
                        out.push([
                            -l + (i as f64 + 0.5) * 2.0 * l / *n as f64,
                            -l + (j as f64 + 0.5) * 2.0 * l / *m as f64,
                        ]);
                    }
                }
                out
            }
            SamplePoints::List(p) => p.clone(),
        }
    }
}

/// Plate strains at one point, from the shape functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroStrain {
    /// `e(Um) + 1/2 grad w (x) grad w`.
    pub z: SymMat2,
    /// `-D^2 w`.
    pub eta: SymMat2,
}

pub fn macro_strain(mesh: &PlateMesh, state: &PlateState, x: f64, y: f64) -> Result<MacroStrain> {
    let (e, off) = mesh.locate(x, y)?;
    let b = PointBasis::new(off[0], off[1], mesh.hx, mesh.hy);
    let dofs = mesh.element_dofs(e);
    let v = state.to_vec();
    let q = nalgebra::SVector::<f64, 24>::from_fn(|d, _| v[dofs[d]]);
    let (gx, gy) = (b.wx.dot(&q), b.wy.dot(&q));
    Ok(MacroStrain {
        z: SymMat2::new(
            b.u1x.dot(&q) + 0.5 * gx * gx,
            b.u2y.dot(&q) + 0.5 * gy * gy,
            0.5 * (b.u1y.dot(&q) + b.u2x.dot(&q)) + 0.5 * gx * gy,
        ),
        eta: SymMat2::new(-b.wxx.dot(&q), -b.wyy.dot(&q), -b.wxy.dot(&q)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroFields {
    pub point: [f64; 2],
    pub strain: MacroStrain,
    /// Frame displacement on the independent cell nodes.
    pub uhat: NodalField,
    /// Matrix displacement; `None` for an empty matrix phase.
    pub um: Option<NodalField>,
    /// Limit strain `(Z + y3 eta) + e_y(uhat)` at frame element centres,
    /// tensor components `(11, 22, 33, 23, 13, 12)`; zero on matrix elements.
    pub elim: Vec<SymMat3>,
    /// `(1/|Y_B|) int_{Y_B} a Elim : Elim`.
    pub energy_density: f64,
}

/// Reconstruct the cell fields at every point.
pub fn recover_micro(
    bundle: &CorrectorBundle,
    mesh: &PlateMesh,
    state: &PlateState,
    load: &LoadField,
    prestrain: &PrestrainField,
    points: &[[f64; 2]],
) -> Result<Vec<MicroFields>> {
    let c = &bundle.correctors;
    if !prestrain.is_zero() && !c.degenerate_matrix && c.chi_pre.len() != 6 {
        return Err(Error::Config("pre-strain given but the correctors were solved without pre-strain".into()));
    }
    for p in points {
        mesh.locate(p[0], p[1])?;
    }
    let cell_mesh = build_periodic_mesh(&bundle.cell);
    let element = HexElement::new(cell_mesh.spacing);
    points
        .par_iter()
        .map(|&[x, y]| {
            let strain = macro_strain(mesh, state, x, y)?;
            let uhat = frame_displacement(c, &strain.z, &strain.eta);
            let um = if c.degenerate_matrix {
                None
            } else {
                let f = load.eval(x, y);
                let s = prestrain.at(x, y);
                let mut fields = c.chi_p.clone();
                let mut coeffs = vec![f[0], f[1]];
                if c.chi_pre.len() == 6 {
                    fields.extend(c.chi_pre.iter().cloned());
                    coeffs.extend_from_slice(&s.0);
                }
                Some(combine(&fields, &coeffs))
            };
            let elim = limit_strain(&cell_mesh, &element, &uhat, &strain);
            let energy_density =
                frame_energy_density(&cell_mesh, &bundle.frame, bundle.cell.vol_b, &uhat, &strain.z, &strain.eta);
            Ok(MicroFields { point: [x, y], strain, uhat, um, elim, energy_density })
        })
        .collect()
}

fn limit_strain(mesh: &PeriodicMesh, element: &HexElement, uhat: &NodalField, m: &MacroStrain) -> Vec<SymMat3> {
    let z = m.z.embed().to_strain_voigt();
    let eta = m.eta.embed().to_strain_voigt();
    let centre = element.points.iter().map(|p| p.strain).sum::<crate::hex::StrainOperator>() / 8.0;
    mesh.elements
        .iter()
        .enumerate()
        .map(|(e, el)| {
            if mesh.element_phase[e] != Phase::Frame {
                return SymMat3::ZERO;
            }
            let y3 = mesh.y3(mesh.element_layer(e)) + 0.5 * mesh.spacing[2];
            let s: Vector6<f64> = z + eta * y3 + centre * gather(uhat, el);
            SymMat3::from_strain_voigt(&s)
        })
        .collect()
}

/// Relative gap between the recovered cell energy and the limit
/// quadratic form at the same point.
pub fn pointwise_energy_gap(fields: &MicroFields, tensors: &HomogenizedTensors) -> f64 {
    let q = eval_limit_quadratic_form(tensors, &fields.strain.z, &fields.strain.eta);
    (fields.energy_density - q).abs() / fields.energy_density.abs().max(q.abs()).max(1e-300)
}

/// One file per sample point, `micro_000.vtk`, ... Returns the paths.
pub fn export_micro_fields(dir: &Path, bundle: &CorrectorBundle, fields: &[MicroFields]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mesh = build_periodic_mesh(&bundle.cell);
    let mut out = Vec::with_capacity(fields.len());
    for (k, f) in fields.iter().enumerate() {
        let mut named = vec![("uhat".to_string(), &f.uhat)];
        if let Some(um) = &f.um {
            named.push(("uM".to_string(), um));
        }
        let title = format!("vkhom micro fields at ({:e}, {:e})", f.point[0], f.point[1]);
        let mut grid: VtkGrid = cell_grid(&mesh, &title, &named);
        for (slot, label) in ["11", "22", "33", "23", "13", "12"].iter().enumerate() {
            grid.cell_scalars.push((format!("elim_{label}"), f.elim.iter().map(|s| s.0[slot]).collect()));
        }
        let path = dir.join(format!("micro_{k:03}.vtk"));
        grid.write(&path)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellsolve::solve_correctors;
    use crate::homogenize::assemble_homogenized;
    use crate::linalg::SolverSettings;
    use crate::microcell::{build_frame_cell, build_full_cell};
    use crate::plate::{solve_vk, ClampSpec, NewtonOptions};
    use crate::tensor::isotropic_hooke;
    use crate::vtk::{FRAME_FILE, MATRIX_FILE};
    use rand::{Rng, SeedableRng};

    fn bundle(frame_cell: bool) -> CorrectorBundle {
        let cell = if frame_cell { build_frame_cell(0.25, 8, 8, 4) } else { build_full_cell(0.25, 2, 2, 4) }.unwrap();
        let mesh = build_periodic_mesh(&cell);
        let frame = isotropic_hooke(1.0, 1.0).unwrap();
        let matrix = isotropic_hooke(0.1, 0.05).unwrap();
        let settings = SolverSettings { tolerance: 1e-12, ..SolverSettings::default() };
        let correctors = solve_correctors(&cell, &mesh, &frame, &matrix, true, settings).unwrap();
        CorrectorBundle { cell, frame, matrix, correctors }
    }

    fn plate() -> PlateMesh {
        PlateMesh::new(1.0, 8, 8, ClampSpec::Disc { cx: 0.0, cy: 0.0, r: 0.3 }).unwrap()
    }

    #[test]
    fn sample_point_syntax() {
        assert_eq!("grid:4x2".parse::<SamplePoints>().unwrap(), SamplePoints::Grid(4, 2));
        let p: SamplePoints = "at:0.1,0.2; -0.5,0".parse().unwrap();
        assert_eq!(p.resolve(1.0), vec![[0.1, 0.2], [-0.5, 0.0]]);
        assert_eq!(p.to_string().parse::<SamplePoints>().unwrap(), p);
        assert_eq!(SamplePoints::Grid(2, 1).resolve(1.0), vec![[-0.5, 0.0], [0.5, 0.0]]);
        assert!("grid:0x2".parse::<SamplePoints>().is_err());
        assert!("ring:1".parse::<SamplePoints>().is_err());
    }

    #[test]
    fn zero_state_gives_zero_fields() {
        let b = bundle(true);
        let mesh = plate();
        let out = recover_micro(&b, &mesh, &PlateState::zeros(&mesh), &LoadField::zero(), &PrestrainField::zero(), &[[0.2, 0.4]])
            .unwrap();
        let f = &out[0];
        assert!(f.uhat.iter().flatten().all(|v| *v == 0.0));
        assert!(f.um.as_ref().unwrap().iter().flatten().all(|v| *v == 0.0));
        assert!(f.elim.iter().all(|s| *s == SymMat3::ZERO));
        assert_eq!(f.energy_density, 0.0);
    }

    #[test]
    fn uniform_membrane_state_gives_identical_cells() {
        let b = bundle(true);
        let mesh = plate();
        let mut state = PlateState::zeros(&mesh);
        for (n, u) in state.um.iter_mut().enumerate() {
            let [x, y] = mesh.node_coords(n);
            *u = [0.01 * x - 0.003 * y, 0.002 * x + 0.004 * y];
        }
        let out = recover_micro(&b, &mesh, &state, &LoadField::zero(), &PrestrainField::zero(), &[[-0.7, 0.1], [0.3, 0.9], [0.0, -0.45]])
            .unwrap();
        for f in &out[1..] {
            for (a, c) in f.uhat.iter().flatten().zip(out[0].uhat.iter().flatten()) {
                assert!((a - c).abs() <= 1e-15 * (1.0 + c.abs()));
            }
        }
    }

    #[test]
    fn pointwise_energy_matches_limit_form() {
        let b = bundle(true);
        let t = assemble_homogenized(&b.cell, &b.frame, &b.matrix, &b.correctors).unwrap();
        let mesh = plate();
        let load = LoadField::transverse(0.5);
        let sol = solve_vk(&mesh, &t, &load, &PrestrainField::zero(), &NewtonOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<[f64; 2]> = (0..6).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let out = recover_micro(&b, &mesh, &sol.state, &load, &PrestrainField::zero(), &pts).unwrap();
        for f in &out {
            assert!(f.energy_density > 0.0);
            assert!(pointwise_energy_gap(f, &t) < 1e-9, "{}", pointwise_energy_gap(f, &t));
        }
    }

    #[test]
    fn outside_points_are_rejected() {
        let b = bundle(false);
        let mesh = plate();
        let err = recover_micro(&b, &mesh, &PlateState::zeros(&mesh), &LoadField::zero(), &PrestrainField::zero(), &[[1.5, 0.0]]);
        assert!(matches!(err, Err(Error::Domain(..))));
    }

    #[test]
    fn corrector_export_counts_and_periodicity() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(true);
        let files = crate::vtk::export_correctors(dir.path(), &b).unwrap();
        assert_eq!(files.len(), 2);
        let frame = VtkGrid::read(&dir.path().join(FRAME_FILE)).unwrap();
        let matrix = VtkGrid::read(&dir.path().join(MATRIX_FILE)).unwrap();
        assert_eq!((frame.point_vectors.len(), matrix.point_vectors.len()), (6, 8));
        let [nx, ny, nz] = frame.dims;
        for (_, v) in frame.point_vectors.iter().chain(&matrix.point_vectors) {
            for k in 0..nz {
                for j in 0..ny {
                    assert_eq!(v[nx * (j + ny * k)], v[nx - 1 + nx * (j + ny * k)]);
                }
                for i in 0..nx {
                    assert_eq!(v[i + nx * ny * k], v[i + nx * (ny - 1 + ny * k)]);
                }
            }
        }

        let full = tempfile::tempdir().unwrap();
        let files = crate::vtk::export_correctors(full.path(), &bundle(false)).unwrap();
        assert_eq!(files.len(), 1);
        assert!(!full.path().join(MATRIX_FILE).exists());
    }

    #[test]
    fn micro_export_is_byte_stable() {
        let b = bundle(true);
        let mesh = plate();
        let mut state = PlateState::zeros(&mesh);
        state.u3[40] = [0.01, 0.02, -0.01, 0.003];
        let load: LoadField = "f1=const:0.2".parse().unwrap();
        let pre = PrestrainField::from_matrix([[0.01, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let fields = recover_micro(&b, &mesh, &state, &load, &pre, &[[0.1, 0.1]]).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = export_micro_fields(d1.path(), &b, &fields).unwrap();
        let p2 = export_micro_fields(d2.path(), &b, &fields).unwrap();
        assert_eq!(std::fs::read(&p1[0]).unwrap(), std::fs::read(&p2[0]).unwrap());
        let g = VtkGrid::read(&p1[0]).unwrap();
        assert_eq!(g.point_vectors.len(), 2);
        assert_eq!(g.cell_scalars.len(), 7);
    }
}
