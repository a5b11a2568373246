//! Fixtures shared by the benchmarks in `benches/`.

use vkhom_core::cellsolve::solve_correctors;
use vkhom_core::homogenize::assemble_homogenized;
use vkhom_core::microcell::{build_frame_cell, build_periodic_mesh};
use vkhom_core::plate::PlateMesh;
use vkhom_core::tensor::isotropic_hooke;
use vkhom_core::{ClampSpec, CorrectorSet, HomogenizedTensors, HookeTensor, SolverSettings, VoxelCell};

pub fn materials() -> (HookeTensor, HookeTensor) {
    (isotropic_hooke(1.0, 1.0).unwrap(), isotropic_hooke(0.02, 0.01).unwrap())
}

pub fn frame_cell(n: usize) -> VoxelCell {
    build_frame_cell(0.25, n, n, n).unwrap()
}

pub fn correctors(cell: &VoxelCell, prestrain: bool) -> CorrectorSet {
    let (frame, matrix) = materials();
    let mesh = build_periodic_mesh(cell);
    solve_correctors(cell, &mesh, &frame, &matrix, prestrain, SolverSettings::default()).unwrap()
}

/// Tensors of the `n^3` frame cell, pre-strain correctors included.
pub fn tensors(n: usize) -> HomogenizedTensors {
    let cell = frame_cell(n);
    let set = correctors(&cell, true);
    let (frame, matrix) = materials();
    assemble_homogenized(&cell, &frame, &matrix, &set).unwrap()
}

pub fn disc_plate(m: usize) -> PlateMesh {
    PlateMesh::new(1.0, m, m, ClampSpec::Disc { cx: 0.0, cy: 0.0, r: 0.3 }).unwrap()
}
