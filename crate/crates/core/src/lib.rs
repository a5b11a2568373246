//! Two-scale toolkit for periodic stiff-frame / soft-matrix composite
//! plates: cell problems on a voxel mesh, homogenized membrane, coupling
//! and bending tensors, the clamped von Karman plate they define, and
//! reconstruction of the fine-scale fields.

pub mod cellsolve;
pub mod error;
pub mod hex;
pub mod homogenize;
pub mod linalg;
pub mod microcell;
pub mod plate;
pub mod recover;
pub mod tensor;
pub mod vtk;

pub use cellsolve::{CorrectorBundle, CorrectorSet};
pub use error::{Error, Result};
pub use homogenize::{HomogenizedTensors, StructureReport};
pub use linalg::SolverSettings;
pub use microcell::{CellGeometry, PeriodicMesh, Phase, VoxelCell};
pub use plate::{ClampSpec, LoadField, PlateMesh, PlateState, PrestrainField};
pub use recover::{MicroFields, SamplePoints};
pub use tensor::{HookeTensor, StrainBasis, SymMat2, SymMat3};
