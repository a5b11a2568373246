//! Run configuration: a strict TOML schema plus range checks that are
//! collected rather than reported one at a time.
//!
//! ```toml
//! seed = 7
//!
//! [geometry]
//! kind = "frame"            # or "voxel" with `path = "cell.json"`
//! kappa = 0.25
//! resolution = [16, 16, 16]
//!
//! [material.frame]
//! lambda = 1.0
//! mu = 1.0
//!
//! [material.matrix]
//! lambda = 0.1
//! mu = 0.1
//!
//! [plate]
//! L = 1.0
//! grid = [32, 32]
//! clamp = "disc:0,0,0.3"
//! load = "f3=const:1.0"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vkhom_core::linalg::{Backend, SolverSettings};
use vkhom_core::plate::{ClampSpec, LoadField, NewtonOptions, PrestrainField};
use vkhom_core::tensor::isotropic_hooke;
use vkhom_core::{HookeTensor, SamplePoints};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    pub plate: Option<PlateConfig>,
    pub recover: Option<RecoverConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometryConfig {
    Frame { kappa: f64, resolution: [usize; 3] },
    Voxel { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub frame: PhaseMaterial,
    pub matrix: PhaseMaterial,
}

/// Either Lame constants or a full 6x6 engineering Voigt matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PhaseMaterial {
    Isotropic { lambda: f64, mu: f64 },
    Voigt { voigt: [[f64; 6]; 6] },
}

impl PhaseMaterial {
    pub fn hooke(&self) -> vkhom_core::Result<HookeTensor> {
        match self {
            PhaseMaterial::Isotropic { lambda, mu } => isotropic_hooke(*lambda, *mu),
            PhaseMaterial::Voigt { voigt } => HookeTensor::from_voigt(*voigt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateConfig {
    #[serde(rename = "L")]
    pub l: f64,
    pub grid: [usize; 2],
    #[serde(default = "default_clamp")]
    pub clamp: String,
    #[serde(default)]
    pub load: String,
    /// Constant pre-strain `B` (its symmetric part is used).
    pub prestrain: Option<[[f64; 3]; 3]>,
    /// JSON file `{"B": [[..], [..], [..]]}`, alternative to `prestrain`.
    pub prestrain_file: Option<PathBuf>,
    #[serde(default)]
    pub newton: NewtonOptions,
}

fn default_clamp() -> String {
    "disc:0,0,0.3".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    #[serde(default = "default_points")]
    pub points: String,
}

fn default_points() -> String {
    "grid:4x4".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write VTK files next to the JSON artifacts.
    pub vtk: bool,
    /// Solve the six matrix pre-strain correctors.
    pub prestrain_correctors: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("vkhom-out"), vtk: true, prestrain_correctors: true }
    }
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Parse and validate. Relative paths are resolved against `base`, and
/// referenced files must exist.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, ConfigErrors> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![format!("syntax: {e}")]))?;
    let mut config: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        ConfigErrors(vec![format!("schema: at `{path}`: {}", e.into_inner())])
    })?;
    config.resolve_paths(base);
    let errors = config.violations();
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigErrors(errors))
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    fn resolve_paths(&mut self, base: &Path) {
        if let GeometryConfig::Voxel { path } = &mut self.geometry {
            resolve(base, path);
        }
        if let Some(PlateConfig { prestrain_file: Some(p), .. }) = &mut self.plate {
            resolve(base, p);
        }
        resolve(base, &mut self.output.dir);
    }

    /// Range and consistency violations, all of them.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match &self.geometry {
            GeometryConfig::Frame { kappa, resolution } => {
                if !(*kappa > 0.0 && *kappa < 0.5) {
                    v.push(format!("geometry.kappa = {kappa}: the frame half-width must satisfy 0 < kappa < 1/2"));
                }
                for (axis, n) in resolution.iter().enumerate() {
                    if *n == 0 || *n > 512 {
                        v.push(format!("geometry.resolution[{axis}] = {n}: must be in 1..=512"));
                    }
                }
            }
            GeometryConfig::Voxel { path } => {
                if !path.is_file() {
                    v.push(format!("geometry.path: `{}` does not exist", path.display()));
                }
            }
        }
        for (name, m) in [("frame", &self.material.frame), ("matrix", &self.material.matrix)] {
            if let Err(e) = m.hooke() {
                v.push(format!("material.{name}: {e}"));
            }
        }
        let s = &self.solver;
        if !(s.tolerance > 0.0 && s.tolerance < 1.0) {
            v.push(format!("solver.tolerance = {}: must be in (0, 1)", s.tolerance));
        }
        if s.max_iter == 0 {
            v.push("solver.max_iter must be positive".into());
        }
        if let Some(p) = &self.plate {
            if !(p.l > 0.0 && p.l.is_finite()) {
                v.push(format!("plate.L = {}: must be positive", p.l));
            }
            for (axis, n) in p.grid.iter().enumerate() {
                if *n == 0 || *n > 1024 {
                    v.push(format!("plate.grid[{axis}] = {n}: must be in 1..=1024"));
                }
            }
            if let Err(e) = p.clamp.parse::<ClampSpec>() {
                v.push(format!("plate.clamp: {e}"));
            }
            if let Err(e) = p.load.parse::<LoadField>() {
                v.push(format!("plate.load: {e}"));
            }
            if p.prestrain.is_some() && p.prestrain_file.is_some() {
                v.push("plate: give either `prestrain` or `prestrain_file`, not both".into());
            }
            if let Some(b) = &p.prestrain {
                if b.iter().flatten().any(|x| !x.is_finite()) {
                    v.push("plate.prestrain: entries must be finite".into());
                }
            }
            if let Some(f) = &p.prestrain_file {
                if !f.is_file() {
                    v.push(format!("plate.prestrain_file: `{}` does not exist", f.display()));
                }
            }
            let has_prestrain = p.prestrain.is_some_and(|b| b.iter().flatten().any(|x| *x != 0.0)) || p.prestrain_file.is_some();
            if has_prestrain && !self.output.prestrain_correctors {
                v.push("plate pre-strain requires output.prestrain_correctors = true".into());
            }
            let n = &p.newton;
            if !(n.tol > 0.0) {
                v.push(format!("plate.newton.tol = {}: must be positive", n.tol));
            }
            if n.load_steps == 0 {
                v.push("plate.newton.load_steps must be at least 1".into());
            }
            if n.max_newton == 0 {
                v.push("plate.newton.max_newton must be positive".into());
            }
            if !(n.armijo > 0.0 && n.armijo < 1.0) {
                v.push(format!("plate.newton.armijo = {}: must be in (0, 1)", n.armijo));
            }
        }
        if let Some(r) = &self.recover {
            if self.plate.is_none() {
                v.push("recover needs a [plate] block".into());
            }
            if let Err(e) = r.points.parse::<SamplePoints>() {
                v.push(format!("recover.points: {e}"));
            }
        }
        v
    }

    pub fn backend_name(&self) -> &'static str {
        match self.solver.backend {
            Backend::Direct => "direct",
            Backend::Cg => "cg",
        }
    }
}

impl PlateConfig {
    pub fn clamp_spec(&self) -> vkhom_core::Result<ClampSpec> {
        self.clamp.parse()
    }

    pub fn load_field(&self) -> vkhom_core::Result<LoadField> {
        self.load.parse()
    }

    pub fn prestrain_field(&self) -> vkhom_core::Result<PrestrainField> {
        match (&self.prestrain, &self.prestrain_file) {
            (Some(b), _) => Ok(PrestrainField::from_matrix(*b)),
            (None, Some(path)) => vkhom_core::plate::read_prestrain(path),
            (None, None) => Ok(PrestrainField::zero()),
        }
    }
}
