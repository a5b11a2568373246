//! Voxelized reference cells `(0,1)^2 x (-kappa, kappa)` with a frame (B) /
//! matrix (M) phase label per voxel, and the periodic hexahedral mesh built
//! on top of them.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Stiff periodically connected frame.
    Frame,
    /// Soft filler.
    Matrix,
}

impl Phase {
    pub fn byte(self) -> u8 {
        match self {
            Phase::Frame => 0,
            Phase::Matrix => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellGeometry {
    /// Cross frame: matrix occupies `(kappa, 1-kappa)^2 x (-kappa, kappa)`.
    Frame { kappa: f64 },
    /// Arbitrary two-phase voxel image read from disk.
    VoxelImage { path: PathBuf },
}

impl CellGeometry {
    pub fn is_frame(&self) -> bool {
        matches!(self, CellGeometry::Frame { .. })
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(Error::Geometry(format!(
            "kappa = {kappa} must lie in (0, 1/2): a soft matrix layer between the beams requires eps - 2 kappa eps > 0"
        )));
    }
    Ok(())
}

/// Voxelization of the reference cell. Voxels are stored `y1`-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelCell {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub kappa: f64,
    pub phase: Vec<Phase>,
    pub vol_b: f64,
    pub vol_m: f64,
    /// True for the canonical cross-frame geometry (square symmetric).
    pub frame_kind: bool,
}

impl VoxelCell {
    pub fn len(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n1 * (j + self.n2 * k)
    }

    pub fn phase_at(&self, i: usize, j: usize, k: usize) -> Phase {
        self.phase[self.index(i, j, k)]
    }

    /// Voxel edge lengths `(h1, h2, h3)`.
    pub fn spacing(&self) -> [f64; 3] {
        [1.0 / self.n1 as f64, 1.0 / self.n2 as f64, 2.0 * self.kappa / self.n3 as f64]
    }

    pub fn voxel_volume(&self) -> f64 {
        let [a, b, c] = self.spacing();
        a * b * c
    }

    /// `|Y| = 2 kappa`.
    pub fn vol_y(&self) -> f64 {
        2.0 * self.kappa
    }

    /// No matrix voxels: the plate is a full (homogeneous-frame) plate.
    pub fn degenerate_matrix(&self) -> bool {
        self.phase.iter().all(|p| *p == Phase::Frame)
    }

    fn recompute_volumes(&mut self) {
        let nb = self.phase.iter().filter(|p| **p == Phase::Frame).count();
        let v = self.voxel_volume();
        self.vol_b = nb as f64 * v;
        self.vol_m = (self.len() - nb) as f64 * v;
    }

    /// Content hash of the geometry (dimensions, kappa, phase labels).
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"voxel-cell-v1");
        for n in [self.n1, self.n2, self.n3] {
            h.update((n as u64).to_le_bytes());
        }
        h.update(self.kappa.to_le_bytes());
        h.update(self.phase.iter().map(|p| p.byte()).collect::<Vec<_>>());
        hex::encode(h.finalize())
    }

    /// Check the connectivity hypotheses on the frame: face-connected inside
    /// the cell, and touching its own translate across each lateral face.
    pub fn check_frame_connectivity(&self) -> Result<()> {
        check_frame_connectivity(self.n1, self.n2, self.n3, &self.phase)
    }
}

pub(crate) fn check_frame_connectivity(n1: usize, n2: usize, n3: usize, phase: &[Phase]) -> Result<()> {
    let index = |i: usize, j: usize, k: usize| i + n1 * (j + n2 * k);
    let at = |i: usize, j: usize, k: usize| phase[index(i, j, k)];
    let frame: Vec<usize> = (0..phase.len()).filter(|&v| phase[v] == Phase::Frame).collect();
    if frame.is_empty() {
        return Err(Error::Geometry("frame phase is empty".into()));
    }
    let mut seen = vec![false; phase.len()];
    let mut queue = VecDeque::from([frame[0]]);
    seen[frame[0]] = true;
    let mut reached = 1usize;
    while let Some(v) = queue.pop_front() {
        let i = v % n1;
        let j = (v / n1) % n2;
        let k = v / (n1 * n2);
        let mut push = |ii: usize, jj: usize, kk: usize| {
            let w = index(ii, jj, kk);
            if !seen[w] && phase[w] == Phase::Frame {
                seen[w] = true;
                reached += 1;
                queue.push_back(w);
            }
        };
        if i > 0 {
            push(i - 1, j, k);
        }
        if i + 1 < n1 {
            push(i + 1, j, k);
        }
        if j > 0 {
            push(i, j - 1, k);
        }
        if j + 1 < n2 {
            push(i, j + 1, k);
        }
        if k > 0 {
            push(i, j, k - 1);
        }
        if k + 1 < n3 {
            push(i, j, k + 1);
        }
    }
    if reached != frame.len() {
        return Err(Error::Geometry(format!(
            "frame phase is not connected ({reached} of {} voxels reachable)",
            frame.len()
        )));
    }
    let across_1 =
        (0..n3).any(|k| (0..n2).any(|j| at(0, j, k) == Phase::Frame && at(n1 - 1, j, k) == Phase::Frame));
    let across_2 =
        (0..n3).any(|k| (0..n1).any(|i| at(i, 0, k) == Phase::Frame && at(i, n2 - 1, k) == Phase::Frame));
    if !across_1 || !across_2 {
        return Err(Error::Geometry(format!(
            "frame phase is not periodically connected (connects to its shift along y1: {across_1}, y2: {across_2})"
        )));
    }
    Ok(())
}

/// Canonical cross-frame cell. Voxel centres strictly inside
/// `(kappa, 1-kappa)^2` are matrix; everything else, including centres that
/// sit exactly on the interface, is frame.
pub fn build_frame_cell(kappa: f64, n1: usize, n2: usize, n3: usize) -> Result<VoxelCell> {
    check_kappa(kappa)?;
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Err(Error::Geometry(format!("resolution {n1}x{n2}x{n3} has an empty axis")));
    }
    for (axis, n) in [(1, n1), (2, n2)] {
        let t = kappa * n as f64;
        if (t - t.round()).abs() > 1e-9 {
            log::warn!(
                "kappa * n{axis} = {t} is not an integer: the frame/matrix interface is stair-cased"
            );
        }
    }
    let (lo, hi) = (kappa, 1.0 - kappa);
    let mut phase = Vec::with_capacity(n1 * n2 * n3);
    for _k in 0..n3 {
        for j in 0..n2 {
            let y2 = (j as f64 + 0.5) / n2 as f64;
            for i in 0..n1 {
                let y1 = (i as f64 + 0.5) / n1 as f64;
                let inside = y1 > lo && y1 < hi && y2 > lo && y2 < hi;
                phase.push(if inside { Phase::Matrix } else { Phase::Frame });
            }
        }
    }
    let mut cell = VoxelCell { n1, n2, n3, kappa, phase, vol_b: 0.0, vol_m: 0.0, frame_kind: true };
    cell.recompute_volumes();
    cell.check_frame_connectivity()?;
    Ok(cell)
}

/// A frame cell with no matrix voxels at all (full plate).
pub fn build_full_cell(kappa: f64, n1: usize, n2: usize, n3: usize) -> Result<VoxelCell> {
    check_kappa(kappa)?;
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Err(Error::Geometry(format!("resolution {n1}x{n2}x{n3} has an empty axis")));
    }
    let mut cell = VoxelCell {
        n1,
        n2,
        n3,
        kappa,
        phase: vec![Phase::Frame; n1 * n2 * n3],
        vol_b: 0.0,
        vol_m: 0.0,
        frame_kind: true,
    };
    cell.recompute_volumes();
    Ok(cell)
}

/// Header of the voxel image format. The payload holds one byte per voxel,
/// `0` = frame, `1` = matrix, ordered `y1` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelHeader {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub kappa: f64,
    #[serde(default = "default_order")]
    pub order: String,
    /// Payload file, relative to the header. Defaults to the header path
    /// with a `.raw` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

fn default_order() -> String {
    "y1-fastest".to_string()
}

/// Build a cell from a parsed header and its raw payload.
pub fn load_voxel_cell(header: &VoxelHeader, payload: &[u8]) -> Result<VoxelCell> {
    if header.order != "y1-fastest" {
        return Err(Error::Format(format!("unsupported voxel order '{}'", header.order)));
    }
    if !(header.kappa > 0.0) || !header.kappa.is_finite() {
        return Err(Error::Format(format!("kappa must be positive, got {}", header.kappa)));
    }
    let n = header.n1 * header.n2 * header.n3;
    if n == 0 {
        return Err(Error::Format("header has an empty axis".into()));
    }
    if payload.len() != n {
        return Err(Error::Format(format!(
            "payload has {} bytes but header {}x{}x{} requires {n}",
            payload.len(),
            header.n1,
            header.n2,
            header.n3
        )));
    }
    let phase = payload
        .iter()
        .enumerate()
        .map(|(i, b)| match b {
            0 => Ok(Phase::Frame),
            1 => Ok(Phase::Matrix),
            other => Err(Error::Format(format!("voxel {i} has invalid label {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cell = VoxelCell {
        n1: header.n1,
        n2: header.n2,
        n3: header.n3,
        kappa: header.kappa,
        phase,
        vol_b: 0.0,
        vol_m: 0.0,
        frame_kind: false,
    };
    cell.recompute_volumes();
    cell.check_frame_connectivity()?;
    Ok(cell)
}

fn payload_path(header_path: &Path, header: &VoxelHeader) -> PathBuf {
    match &header.payload {
        Some(p) => header_path.parent().unwrap_or(Path::new(".")).join(p),
        None => header_path.with_extension("raw"),
    }
}

pub fn read_voxel_cell(header_path: &Path) -> Result<VoxelCell> {
    let header: VoxelHeader = serde_json::from_str(&fs::read_to_string(header_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", header_path.display())))?;
    let payload = fs::read(payload_path(header_path, &header))?;
    load_voxel_cell(&header, &payload)
}

/// Write header (JSON) and payload (`.raw` next to it).
pub fn write_voxel_cell(cell: &VoxelCell, header_path: &Path) -> Result<()> {
    let raw = header_path.with_extension("raw");
    let header = VoxelHeader {
        n1: cell.n1,
        n2: cell.n2,
        n3: cell.n3,
        kappa: cell.kappa,
        order: default_order(),
        payload: raw.file_name().map(|s| s.to_string_lossy().into_owned()),
    };
    fs::write(header_path, serde_json::to_string_pretty(&header)? + "\n")?;
    fs::write(raw, cell.phase.iter().map(|p| p.byte()).collect::<Vec<u8>>())?;
    Ok(())
}

/// Hexahedral mesh of the closed cell with periodic identification in
/// `y1` and `y2`.
///
/// Geometric nodes live on the `(n1+1) x (n2+1) x (n3+1)` lattice. Nodes on
/// the faces `y1 = 1` or `y2 = 1` are slaves of the node obtained by
/// wrapping both lateral indices; the top and bottom faces are free.
#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub spacing: [f64; 3],
    pub kappa: f64,
    /// Geometric node coordinates.
    pub coords: Vec<[f64; 3]>,
    /// Geometric node -> independent node.
    pub master: Vec<usize>,
    /// Independent node -> its geometric representative.
    pub independent: Vec<usize>,
    /// `(slave, master)` pairs, both geometric indices.
    pub periodic_pairs: Vec<(usize, usize)>,
    /// Element -> 8 independent nodes, local order `a + 2b + 4c`.
    pub elements: Vec<[usize; 8]>,
    pub element_phase: Vec<Phase>,
}

impl PeriodicMesh {
    pub fn geometric_node(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.n1 + 1) * (j + (self.n2 + 1) * k)
    }

    pub fn n_geometric(&self) -> usize {
        self.coords.len()
    }

    pub fn n_independent(&self) -> usize {
        self.independent.len()
    }

    /// `y3` of lattice layer `k`.
    pub fn y3(&self, k: usize) -> f64 {
        -self.kappa + k as f64 * self.spacing[2]
    }

    /// Lattice layer of element `e`.
    pub fn element_layer(&self, e: usize) -> usize {
        e / (self.n1 * self.n2)
    }

    /// Independent nodes touched by at least one element of `phase`.
    pub fn phase_nodes(&self, phase: Phase) -> Vec<bool> {
        let mut mask = vec![false; self.n_independent()];
        for (el, p) in self.elements.iter().zip(&self.element_phase) {
            if *p == phase {
                for &n in el {
                    mask[n] = true;
                }
            }
        }
        mask
    }

    /// Independent nodes shared by frame and matrix elements.
    pub fn interface_nodes(&self) -> Vec<bool> {
        let b = self.phase_nodes(Phase::Frame);
        let m = self.phase_nodes(Phase::Matrix);
        b.iter().zip(&m).map(|(x, y)| *x && *y).collect()
    }
}

pub fn build_periodic_mesh(cell: &VoxelCell) -> PeriodicMesh {
    let (n1, n2, n3) = (cell.n1, cell.n2, cell.n3);
    let spacing = cell.spacing();
    let geo = |i: usize, j: usize, k: usize| i + (n1 + 1) * (j + (n2 + 1) * k);
    let indep = |i: usize, j: usize, k: usize| (i % n1) + n1 * ((j % n2) + n2 * k);

    let n_geo = (n1 + 1) * (n2 + 1) * (n3 + 1);
    let mut coords = Vec::with_capacity(n_geo);
    let mut master = Vec::with_capacity(n_geo);
    let mut periodic_pairs = Vec::new();
    let mut independent = vec![0usize; n1 * n2 * (n3 + 1)];
    for k in 0..=n3 {
        for j in 0..=n2 {
            for i in 0..=n1 {
                coords.push([i as f64 * spacing[0], j as f64 * spacing[1], -cell.kappa + k as f64 * spacing[2]]);
                master.push(indep(i, j, k));
                if i == n1 || j == n2 {
                    periodic_pairs.push((geo(i, j, k), geo(i % n1, j % n2, k)));
                } else {
                    independent[indep(i, j, k)] = geo(i, j, k);
                }
            }
        }
    }
    let mut elements = Vec::with_capacity(cell.len());
    for k in 0..n3 {
        for j in 0..n2 {
            for i in 0..n1 {
                let mut el = [0usize; 8];
                for (local, slot) in el.iter_mut().enumerate() {
                    let (a, b, c) = (local & 1, (local >> 1) & 1, (local >> 2) & 1);
                    *slot = indep(i + a, j + b, k + c);
                }
                elements.push(el);
            }
        }
    }
    PeriodicMesh {
        n1,
        n2,
        n3,
        spacing,
        kappa: cell.kappa,
        coords,
        master,
        independent,
        periodic_pairs,
        elements,
        element_phase: cell.phase.clone(),
    }
}
