//! JSON record of a plate solve.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::energy::EnergyParts;
use super::load::{LoadField, PrestrainField};
use super::newton::{TraceEntry, VkSolution};
use super::{ClampSpec, PlateMesh, PlateState};
use crate::error::Result;
use crate::homogenize::HomogenizedTensors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub l: f64,
    pub m1: usize,
    pub m2: usize,
    pub hx: f64,
    pub hy: f64,
    pub node_order: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Volumes {
    pub vol_b: f64,
    pub vol_m: f64,
    pub vol_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateSolution {
    pub grid: GridInfo,
    pub clamp: ClampSpec,
    pub load: LoadField,
    pub prestrain: PrestrainField,
    pub volumes: Volumes,
    pub tensors_fingerprint: String,
    pub um: Vec<[f64; 2]>,
    /// `(w, w_x, w_y, w_xy)` per node.
    pub u3: Vec<[f64; 4]>,
    pub energy: EnergyParts,
    pub gradient_norm: f64,
    pub newton_iterations: usize,
    pub max_shift: f64,
    pub trace: Vec<TraceEntry>,
}

impl PlateSolution {
    pub fn new(
        mesh: &PlateMesh,
        tensors: &HomogenizedTensors,
        load: &LoadField,
        prestrain: &PrestrainField,
        run: &VkSolution,
    ) -> Self {
        PlateSolution {
            grid: GridInfo {
                l: mesh.l,
                m1: mesh.m1,
                m2: mesh.m2,
                hx: mesh.hx,
                hy: mesh.hy,
                node_order: "i + (m1 + 1) j".into(),
            },
            clamp: mesh.clamp.clone(),
            load: load.clone(),
            prestrain: *prestrain,
            volumes: Volumes { vol_b: tensors.vol_b, vol_m: tensors.vol_m, vol_y: tensors.vol_y },
            tensors_fingerprint: tensors.fingerprint.clone(),
            um: run.state.um.clone(),
            u3: run.state.u3.clone(),
            energy: run.energy,
            gradient_norm: run.gradient_norm,
            newton_iterations: run.newton_iterations,
            max_shift: run.max_shift,
            trace: run.trace.clone(),
        }
    }

    pub fn mesh(&self) -> Result<PlateMesh> {
        PlateMesh::new(self.grid.l, self.grid.m1, self.grid.m2, self.clamp.clone())
    }

    pub fn state(&self) -> PlateState {
        PlateState { um: self.um.clone(), u3: self.u3.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
