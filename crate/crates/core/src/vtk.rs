//! Legacy ASCII VTK structured-points files.
//!
//! Floats are written in shortest round-trip exponent form, so reading a
//! file back reproduces the values bit for bit and identical inputs give
//! identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::cellsolve::{CorrectorBundle, NodalField};
use crate::error::{Error, Result};
use crate::microcell::{build_periodic_mesh, PeriodicMesh, Phase};
use crate::plate::{PlateMesh, PlateState};
use crate::tensor::BasisIndex;

/// In-memory structured-points dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VtkGrid {
    pub title: String,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub point_vectors: Vec<(String, Vec<[f64; 3]>)>,
    pub point_scalars: Vec<(String, Vec<f64>)>,
    pub cell_scalars: Vec<(String, Vec<f64>)>,
}

impl VtkGrid {
    pub fn n_points(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().map(|d| d.saturating_sub(1).max(1)).product()
    }

    pub fn vectors(&self, name: &str) -> Option<&[[f64; 3]]> {
        self.point_vectors.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn scalars(&self, name: &str) -> Option<&[f64]> {
        self.point_scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        let _ = writeln!(s, "{}", self.title);
        s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
        let [a, b, c] = self.dims;
        let _ = writeln!(s, "DIMENSIONS {a} {b} {c}");
        let _ = writeln!(s, "ORIGIN {:e} {:e} {:e}", self.origin[0], self.origin[1], self.origin[2]);
        let _ = writeln!(s, "SPACING {:e} {:e} {:e}", self.spacing[0], self.spacing[1], self.spacing[2]);
        if !self.point_vectors.is_empty() || !self.point_scalars.is_empty() {
            let _ = writeln!(s, "POINT_DATA {}", self.n_points());
            for (name, v) in &self.point_vectors {
                let _ = writeln!(s, "VECTORS {name} double");
                for x in v {
                    let _ = writeln!(s, "{:e} {:e} {:e}", x[0], x[1], x[2]);
                }
            }
            for (name, v) in &self.point_scalars {
                write_scalars(&mut s, name, v);
            }
        }
        if !self.cell_scalars.is_empty() {
            let _ = writeln!(s, "CELL_DATA {}", self.n_cells());
            for (name, v) in &self.cell_scalars {
                write_scalars(&mut s, name, v);
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::Format(format!("VTK: {why}"));
        let mut lines = text.lines();
        if !lines.next().is_some_and(|l| l.starts_with("# vtk DataFile")) {
            return Err(bad("missing version line"));
        }
        let mut grid = VtkGrid { title: lines.next().unwrap_or_default().to_string(), ..Default::default() };
        if lines.next().map(str::trim) != Some("ASCII") {
            return Err(bad("only ASCII files are supported"));
        }
        let mut tokens = lines.flat_map(str::split_whitespace).peekable();
        let mut next = || tokens.next().ok_or_else(|| bad("unexpected end of file"));
        if next()? != "DATASET" || next()? != "STRUCTURED_POINTS" {
            return Err(bad("expected DATASET STRUCTURED_POINTS"));
        }
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad(&format!("bad number `{t}`")));
        let int = |t: &str| t.parse::<usize>().map_err(|_| bad(&format!("bad integer `{t}`")));
        let mut section = "";
        let mut count = 0;
        while let Ok(key) = next() {
            match key {
                "DIMENSIONS" => grid.dims = [int(next()?)?, int(next()?)?, int(next()?)?],
                "ORIGIN" => grid.origin = [num(next()?)?, num(next()?)?, num(next()?)?],
                "SPACING" | "ASPECT_RATIO" => grid.spacing = [num(next()?)?, num(next()?)?, num(next()?)?],
                "POINT_DATA" => {
                    section = "point";
                    count = int(next()?)?;
                }
                "CELL_DATA" => {
                    section = "cell";
                    count = int(next()?)?;
                }
                "VECTORS" => {
                    let name = next()?.to_string();
                    next()?;
                    let mut v = Vec::with_capacity(count);
                    for _ in 0..count {
                        v.push([num(next()?)?, num(next()?)?, num(next()?)?]);
                    }
                    if section != "point" {
                        return Err(bad("cell vectors are not supported"));
                    }
                    grid.point_vectors.push((name, v));
                }
                "SCALARS" => {
                    let name = next()?.to_string();
                    next()?;
                    let mut t = next()?;
                    if t != "LOOKUP_TABLE" {
                        if int(t)? != 1 {
                            return Err(bad("only single-component scalars are supported"));
                        }
                        t = next()?;
                    }
                    if t != "LOOKUP_TABLE" {
                        return Err(bad("expected LOOKUP_TABLE"));
                    }
                    next()?;
                    let v = (0..count).map(|_| num(next()?)).collect::<Result<Vec<f64>>>()?;
                    match section {
                        "point" => grid.point_scalars.push((name, v)),
                        "cell" => grid.cell_scalars.push((name, v)),
                        _ => return Err(bad("SCALARS outside a data section")),
                    }
                }
                other => return Err(bad(&format!("unexpected keyword `{other}`"))),
            }
        }
        Ok(grid)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn write_scalars(s: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for x in v {
        let _ = writeln!(s, "{x:e}");
    }
}

/// Plate grid with `U = (u1, u2, w)` and the Hermite slopes of `w`.
pub fn plate_grid(mesh: &PlateMesh, state: &PlateState) -> VtkGrid {
    let u: Vec<[f64; 3]> = state.um.iter().zip(&state.u3).map(|(m, w)| [m[0], m[1], w[0]]).collect();
    let slope = |k: usize| state.u3.iter().map(|w| w[k]).collect::<Vec<f64>>();
    VtkGrid {
        title: "vkhom plate solution".into(),
        dims: [mesh.m1 + 1, mesh.m2 + 1, 1],
        origin: [-mesh.l, -mesh.l, 0.0],
        spacing: [mesh.hx, mesh.hy, 1.0],
        point_vectors: vec![("U".into(), u)],
        point_scalars: vec![
            ("w_x".into(), slope(1)),
            ("w_y".into(), slope(2)),
            ("w_xy".into(), slope(3)),
            ("clamped".into(), mesh.clamped.iter().map(|c| f64::from(u8::from(*c))).collect()),
        ],
        cell_scalars: Vec::new(),
    }
}

pub fn write_plate_vtk(path: &Path, mesh: &PlateMesh, state: &PlateState) -> Result<()> {
    plate_grid(mesh, state).write(path)
}

/// Grid geometry `(L, m1, m2)` and nodal state of a plate file.
pub fn read_plate_vtk(path: &Path) -> Result<(f64, usize, usize, PlateState)> {
    let grid = VtkGrid::read(path)?;
    let missing = |n: &str| Error::Format(format!("{}: missing field `{n}`", path.display()));
    let u = grid.vectors("U").ok_or_else(|| missing("U"))?;
    let s: Vec<&[f64]> = ["w_x", "w_y", "w_xy"]
        .iter()
        .map(|n| grid.scalars(n).ok_or_else(|| missing(n)))
        .collect::<Result<_>>()?;
    let state = PlateState {
        um: u.iter().map(|v| [v[0], v[1]]).collect(),
        u3: u.iter().enumerate().map(|(i, v)| [v[2], s[0][i], s[1][i], s[2][i]]).collect(),
    };
    Ok((-grid.origin[0], grid.dims[0] - 1, grid.dims[1] - 1, state))
}

/// Cell lattice with values of independent-node fields expanded to every
/// geometric node, plus the phase of each voxel.
pub fn cell_grid(mesh: &PeriodicMesh, title: &str, fields: &[(String, &NodalField)]) -> VtkGrid {
    let point_vectors = fields
        .iter()
        .map(|(name, f)| (name.clone(), mesh.master.iter().map(|&m| f[m]).collect()))
        .collect();
    VtkGrid {
        title: title.into(),
        dims: [mesh.n1 + 1, mesh.n2 + 1, mesh.n3 + 1],
        origin: [0.0, 0.0, -mesh.kappa],
        spacing: mesh.spacing,
        point_vectors,
        point_scalars: Vec::new(),
        cell_scalars: vec![("phase".into(), mesh.element_phase.iter().map(|p| f64::from(p.byte())).collect())],
    }
}

pub const FRAME_FILE: &str = "correctors_frame.vtk";
pub const MATRIX_FILE: &str = "correctors_matrix.vtk";

/// Write the frame correctors and, when the matrix phase is not empty,
/// the matrix correctors. Returns the files written.
pub fn export_correctors(dir: &Path, bundle: &CorrectorBundle) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mesh = build_periodic_mesh(&bundle.cell);
    let c = &bundle.correctors;
    let mut written = Vec::new();
    let mut frame = Vec::new();
    for (family, set) in [("chi_m", &c.chi_m), ("chi_b", &c.chi_b)] {
        for (k, f) in BasisIndex::MEMBRANE.iter().zip(set) {
            frame.push((format!("{family}_{}", k.label()), f));
        }
    }
    let path = dir.join(FRAME_FILE);
    cell_grid(&mesh, "vkhom frame correctors", &frame).write(&path)?;
    written.push(path);

    if c.degenerate_matrix || !mesh.element_phase.contains(&Phase::Matrix) {
        log::info!("matrix phase is empty; {MATRIX_FILE} not written");
        return Ok(written);
    }
    let mut matrix = Vec::new();
    for (a, f) in c.chi_p.iter().enumerate() {
        matrix.push((format!("chi_p_{}", a + 1), f));
    }
    for (k, f) in BasisIndex::FULL.iter().zip(&c.chi_pre) {
        matrix.push((format!("chi_pre_{}", k.label()), f));
    }
    let path = dir.join(MATRIX_FILE);
    cell_grid(&mesh, "vkhom matrix correctors", &matrix).write(&path)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plate::ClampSpec;

    #[test]
    fn plate_round_trip_is_exact() {
        let mesh = PlateMesh::new(0.75, 3, 2, ClampSpec::Edge { sides: vec![crate::plate::Side::Left] }).unwrap();
        let mut state = PlateState::zeros(&mesh);
        for (i, (m, w)) in state.um.iter_mut().zip(state.u3.iter_mut()).enumerate() {
            let t = i as f64;
            *m = [t.sin() * 1e-3, 1.0 / (t + 3.0)];
            *w = [t.cos() / 7.0, -t * 1e-17, std::f64::consts::PI * t, 0.1 + 0.2];
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plate.vtk");
        write_plate_vtk(&path, &mesh, &state).unwrap();
        let (l, m1, m2, back) = read_plate_vtk(&path).unwrap();
        assert_eq!((l, m1, m2), (0.75, 3, 2));
        assert_eq!(back, state);
        let again = std::fs::read(&path).unwrap();
        write_plate_vtk(&path, &mesh, &state).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), again);
    }

    #[test]
    fn parser_rejects_binary_and_garbage() {
        assert!(VtkGrid::parse("# vtk DataFile Version 3.0\nx\nBINARY\n").is_err());
        assert!(VtkGrid::parse("hello").is_err());
        let g = VtkGrid {
            title: "t".into(),
            dims: [2, 2, 2],
            origin: [0.0; 3],
            spacing: [1.0; 3],
            cell_scalars: vec![("phase".into(), vec![1.0])],
            ..Default::default()
        };
        assert_eq!(VtkGrid::parse(&g.to_text()).unwrap(), g);
    }
}
