//! Stage implementations and the cached pipeline that chains them.
//!
//! Artifacts in the output directory:
//!
//! | stage      | files                                                    |
//! |------------|----------------------------------------------------------|
//! | cell       | `cell.json`, `cell.raw`, `correctors.bin`, `vtk/correctors_*.vtk` |
//! | homogenize | `tensors.json`                                           |
//! | plate      | `solution.json`, `vtk/plate.vtk`                         |
//! | recover    | `recover.json`, `vtk/micro_*.vtk`                        |
//!
//! A stage is skipped when the hash of its inputs matches the key stored
//! in `.cache/<stage>.key` and its outputs are still present.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vkhom_core::cellsolve::solve_correctors;
use vkhom_core::homogenize::{assemble_homogenized, eval_limit_quadratic_form, TensorsFile};
use vkhom_core::microcell::{build_frame_cell, build_periodic_mesh, read_voxel_cell, write_voxel_cell};
use vkhom_core::plate::{solve_vk, ClampSpec, LoadField, NewtonOptions, PlateMesh, PlateSolution, PrestrainField};
use vkhom_core::recover::{export_micro_fields, recover_micro, SamplePoints};
use vkhom_core::vtk::{export_correctors, write_plate_vtk};
use vkhom_core::{CorrectorBundle, Error, SolverSettings, VoxelCell};

use crate::config::{ConfigErrors, GeometryConfig, MaterialConfig, RecoverConfig, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CELL_HEADER: &str = "cell.json";
pub const CELL_PAYLOAD: &str = "cell.raw";
pub const CORRECTORS: &str = "correctors.bin";
pub const TENSORS: &str = "tensors.json";
pub const SOLUTION: &str = "solution.json";
pub const RECOVER: &str = "recover.json";
pub const MANIFEST: &str = "manifest.json";
pub const VTK_DIR: &str = "vtk";
pub const PLATE_VTK: &str = "plate.vtk";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { source, .. } => exit_code(source),
        }
    }
}

/// 2 for bad input, 3 for solver failure, 4 for I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::SolverNonConvergence { .. } | Error::NewtonFailure(_) => 3,
        Error::Io(_) => 4,
        Error::Json(j) if j.is_io() => 4,
        _ => 2,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> vkhom_core::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Incremental cache key.
struct Key(Sha256);

impl Key {
    fn new(stage: &str) -> Self {
        let mut h = Sha256::new();
        h.update(format!("vkhom {VERSION} {stage}\n").as_bytes());
        Key(h)
    }

    fn json<T: Serialize>(mut self, value: &T) -> Self {
        self.0.update(serde_json::to_vec(value).expect("serializable"));
        self.0.update(b"\n");
        self
    }

    fn file(mut self, path: &Path) -> vkhom_core::Result<Self> {
        self.0.update(fs::read(path)?);
        self.0.update(b"\n");
        Ok(self)
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// Geometry of the configured cell.
pub fn build_cell(geometry: &GeometryConfig) -> vkhom_core::Result<VoxelCell> {
    match geometry {
        GeometryConfig::Frame { kappa, resolution: [n1, n2, n3] } => build_frame_cell(*kappa, *n1, *n2, *n3),
        GeometryConfig::Voxel { path } => read_voxel_cell(path),
    }
}

/// Solve every corrector of the configured cell.
pub fn cell_stage(
    geometry: &GeometryConfig,
    material: &MaterialConfig,
    settings: SolverSettings,
    prestrain_correctors: bool,
) -> vkhom_core::Result<CorrectorBundle> {
    let cell = build_cell(geometry)?;
    let frame = material.frame.hooke()?;
    let matrix = material.matrix.hooke()?;
    let mesh = build_periodic_mesh(&cell);
    log::info!(
        "cell {}x{}x{}, |Y_B| = {:.6}, |Y_M| = {:.6}, {} nodes",
        cell.n1,
        cell.n2,
        cell.n3,
        cell.vol_b,
        cell.vol_m,
        mesh.n_independent()
    );
    let correctors = solve_correctors(&cell, &mesh, &frame, &matrix, prestrain_correctors, settings)?;
    log::info!("correctors solved, max relative residual {:.3e}", correctors.max_relative_residual);
    Ok(CorrectorBundle { cell, frame, matrix, correctors })
}

pub fn write_cell_outputs(dir: &Path, bundle: &CorrectorBundle, vtk: bool) -> vkhom_core::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let header = dir.join(CELL_HEADER);
    write_voxel_cell(&bundle.cell, &header)?;
    let correctors = dir.join(CORRECTORS);
    bundle.save(&correctors)?;
    let mut out = vec![header, dir.join(CELL_PAYLOAD), correctors];
    if vtk {
        out.extend(export_correctors(&dir.join(VTK_DIR), bundle)?);
    }
    Ok(out)
}

pub fn homogenize_stage(bundle: &CorrectorBundle) -> vkhom_core::Result<TensorsFile> {
    let t = assemble_homogenized(&bundle.cell, &bundle.frame, &bundle.matrix, &bundle.correctors)?;
    let file = TensorsFile::new(t);
    log::info!("smallest eigenvalue of the limit form: {:.6e}", file.min_block_eigenvalue);
    Ok(file)
}

/// Parameters of one plate solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateJob {
    pub l: f64,
    pub grid: [usize; 2],
    pub clamp: ClampSpec,
    pub load: LoadField,
    pub prestrain: PrestrainField,
    pub newton: NewtonOptions,
}

pub fn plate_stage(tensors: &TensorsFile, job: &PlateJob) -> vkhom_core::Result<(PlateMesh, PlateSolution)> {
    let mesh = PlateMesh::new(job.l, job.grid[0], job.grid[1], job.clamp.clone())?;
    let t = &tensors.tensors;
    let run = solve_vk(&mesh, t, &job.load, &job.prestrain, &job.newton)?;
    log::info!(
        "plate converged in {} Newton iterations, energy {:.9e}, |g| {:.3e}",
        run.newton_iterations,
        run.energy.total,
        run.gradient_norm
    );
    let solution = PlateSolution::new(&mesh, t, &job.load, &job.prestrain, &run);
    Ok((mesh, solution))
}

/// Summary of one recovered macro point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredPoint {
    pub point: [f64; 2],
    pub z: [f64; 3],
    pub eta: [f64; 3],
    pub cell_energy_density: f64,
    pub limit_form: Option<f64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverReport {
    pub points: Vec<RecoveredPoint>,
}

pub fn recover_stage(
    bundle: &CorrectorBundle,
    solution: &PlateSolution,
    tensors: Option<&TensorsFile>,
    points: &SamplePoints,
    vtk_dir: &Path,
) -> vkhom_core::Result<(RecoverReport, Vec<PathBuf>)> {
    if let Some(t) = tensors {
        if t.tensors.fingerprint != bundle.correctors.fingerprint {
            return Err(Error::Stale { expected: t.tensors.fingerprint.clone(), found: bundle.correctors.fingerprint.clone() });
        }
    }
    if solution.tensors_fingerprint != bundle.correctors.fingerprint {
        return Err(Error::Stale {
            expected: solution.tensors_fingerprint.clone(),
            found: bundle.correctors.fingerprint.clone(),
        });
    }
    let mesh = solution.mesh()?;
    let pts = points.resolve(mesh.l);
    let fields = recover_micro(bundle, &mesh, &solution.state(), &solution.load, &solution.prestrain, &pts)?;
    let files = export_micro_fields(vtk_dir, bundle, &fields)?;
    let report = RecoverReport {
        points: fields
            .iter()
            .zip(&files)
            .map(|(f, path)| RecoveredPoint {
                point: f.point,
                z: f.strain.z.0,
                eta: f.strain.eta.0,
                cell_energy_density: f.energy_density,
                limit_form: tensors.map(|t| eval_limit_quadratic_form(&t.tensors, &f.strain.z, &f.strain.eta)),
                file: path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            })
            .collect(),
    };
    Ok((report, files))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> vkhom_core::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputRecord>,
}

struct Runner<'a> {
    dir: &'a Path,
    force: bool,
    stages: Vec<StageRecord>,
    outputs: Vec<PathBuf>,
}

impl Runner<'_> {
    fn key_path(&self, stage: &str) -> PathBuf {
        self.dir.join(".cache").join(format!("{stage}.key"))
    }

    fn failed_path(&self, stage: &str) -> PathBuf {
        self.dir.join(format!("{stage}.failed"))
    }

    fn cached(&self, stage: &str, key: &str, outputs: &[PathBuf]) -> bool {
        !self.force
            && fs::read_to_string(self.key_path(stage)).is_ok_and(|k| k.trim() == key)
            && outputs.iter().all(|p| p.exists())
    }

    /// Run `body` unless cached. `body` returns the files it wrote.
    fn stage<F>(&mut self, name: &'static str, key: String, expected: &[PathBuf], body: F) -> Result<(), PipelineError>
    where
        F: FnOnce() -> vkhom_core::Result<Vec<PathBuf>>,
    {
        let start = Instant::now();
        let wrap = |source: Error| PipelineError::Stage { stage: name, source };
        let listed = self.dir.join(".cache").join(format!("{name}.outputs"));
        let status = if self.cached(name, &key, expected) && listed.exists() {
            log::info!("stage {name}: cached");
            let text = fs::read_to_string(&listed).map_err(|e| wrap(e.into()))?;
            let files: Vec<PathBuf> = text.lines().map(|l| self.dir.join(l)).collect();
            if files.iter().all(|f| f.exists()) {
                self.outputs.extend(files);
                StageStatus::Cached
            } else {
                self.run_body(name, &key, body).map_err(wrap)?;
                StageStatus::Ran
            }
        } else {
            self.run_body(name, &key, body).map_err(wrap)?;
            StageStatus::Ran
        };
        self.stages.push(StageRecord { name: name.into(), status, seconds: start.elapsed().as_secs_f64(), key });
        Ok(())
    }

    fn run_body<F>(&mut self, name: &str, key: &str, body: F) -> vkhom_core::Result<()>
    where
        F: FnOnce() -> vkhom_core::Result<Vec<PathBuf>>,
    {
        log::info!("stage {name}: running");
        let _ = fs::remove_file(self.key_path(name));
        match body() {
            Ok(files) => {
                let _ = fs::remove_file(self.failed_path(name));
                fs::create_dir_all(self.dir.join(".cache"))?;
                let rel: Vec<String> = files.iter().map(|f| relative(self.dir, f)).collect();
                fs::write(self.dir.join(".cache").join(format!("{name}.outputs")), rel.join("\n") + "\n")?;
                fs::write(self.key_path(name), format!("{key}\n"))?;
                self.outputs.extend(files);
                Ok(())
            }
            Err(e) => {
                let _ = fs::write(self.failed_path(name), format!("{e}\n"));
                Err(e)
            }
        }
    }
}

fn relative(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

impl PipelineReport {
    pub fn all_cached(&self) -> bool {
        self.manifest.stages.iter().all(|s| s.status == StageStatus::Cached)
    }
}

fn config_hash(config: &RunConfig) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("serializable"))
}

/// Run every stage the configuration asks for, in dependency order.
pub fn run_pipeline(config: &RunConfig, force: bool) -> Result<PipelineReport, PipelineError> {
    let dir = config.output.dir.as_path();
    let io = |stage: &'static str| move |e: std::io::Error| PipelineError::Stage { stage, source: e.into() };
    fs::create_dir_all(dir).map_err(io("setup"))?;
    let mut runner = Runner { dir, force, stages: Vec::new(), outputs: Vec::new() };
    let vtk = config.output.vtk;
    let vtk_dir = dir.join(VTK_DIR);

    // cell
    let mut key = Key::new("cell").json(&config.geometry).json(&config.material).json(&config.solver).json(&(
        config.output.prestrain_correctors,
        vtk,
    ));
    if let GeometryConfig::Voxel { path } = &config.geometry {
        let wrap = |source| PipelineError::Stage { stage: "cell", source };
        key = key.file(path).map_err(wrap)?;
        let header: vkhom_core::microcell::VoxelHeader = serde_json::from_str(
            &fs::read_to_string(path).map_err(|e| wrap(e.into()))?,
        )
        .map_err(|e| wrap(e.into()))?;
        let payload = match &header.payload {
            Some(p) => path.parent().unwrap_or(Path::new(".")).join(p),
            None => path.with_extension("raw"),
        };
        key = key.file(&payload).map_err(wrap)?;
    }
    let corrector_path = dir.join(CORRECTORS);
    runner.stage("cell", key.finish(), std::slice::from_ref(&corrector_path), || {
        let bundle = cell_stage(&config.geometry, &config.material, config.solver, config.output.prestrain_correctors)?;
        write_cell_outputs(dir, &bundle, vtk)
    })?;

    // homogenize
    let tensors_path = dir.join(TENSORS);
    let key = Key::new("homogenize")
        .file(&corrector_path)
        .map_err(|source| PipelineError::Stage { stage: "homogenize", source })?
        .finish();
    runner.stage("homogenize", key, std::slice::from_ref(&tensors_path), || {
        let bundle = CorrectorBundle::load(&corrector_path)?;
        let file = homogenize_stage(&bundle)?;
        file.write(&tensors_path)?;
        Ok(vec![tensors_path.clone()])
    })?;

    // plate
    let solution_path = dir.join(SOLUTION);
    if let Some(plate) = &config.plate {
        let wrap = |source| PipelineError::Stage { stage: "plate", source };
        let job = PlateJob {
            l: plate.l,
            grid: plate.grid,
            clamp: plate.clamp_spec().map_err(wrap)?,
            load: plate.load_field().map_err(wrap)?,
            prestrain: plate.prestrain_field().map_err(wrap)?,
            newton: plate.newton,
        };
        let key = Key::new("plate")
            .file(&tensors_path)
            .map_err(wrap)?
            .json(&(job.l, job.grid, &job.clamp, &job.load, &job.prestrain, &job.newton, vtk))
            .finish();
        runner.stage("plate", key, std::slice::from_ref(&solution_path), || {
            let tensors = TensorsFile::read(&tensors_path)?;
            let (mesh, solution) = plate_stage(&tensors, &job)?;
            solution.write(&solution_path)?;
            let mut files = vec![solution_path.clone()];
            if vtk {
                fs::create_dir_all(&vtk_dir)?;
                let p = vtk_dir.join(PLATE_VTK);
                write_plate_vtk(&p, &mesh, &solution.state())?;
                files.push(p);
            }
            Ok(files)
        })?;

        // recover
        if let Some(RecoverConfig { points }) = &config.recover {
            let wrap = |source| PipelineError::Stage { stage: "recover", source };
            let pts: SamplePoints = points.parse().map_err(wrap)?;
            let key = Key::new("recover")
                .file(&solution_path)
                .and_then(|k| k.file(&corrector_path))
                .map_err(wrap)?
                .json(&pts.to_string())
                .finish();
            let recover_path = dir.join(RECOVER);
            runner.stage("recover", key, std::slice::from_ref(&recover_path), || {
                let bundle = CorrectorBundle::load(&corrector_path)?;
                let solution = PlateSolution::read(&solution_path)?;
                let tensors = TensorsFile::read(&tensors_path)?;
                let (report, mut files) = recover_stage(&bundle, &solution, Some(&tensors), &pts, &vtk_dir)?;
                write_json(&recover_path, &report)?;
                files.push(recover_path.clone());
                Ok(files)
            })?;
        }
    }

    let mut outputs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for f in &runner.outputs {
        let rel = relative(dir, f);
        if seen.insert(rel.clone()) {
            let bytes = fs::read(f).map_err(io("manifest"))?;
            outputs.push(OutputRecord { path: rel, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        }
    }
    outputs.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        tool: "vkhom".into(),
        version: VERSION.into(),
        config_hash: config_hash(config),
        seed: config.seed,
        threads: rayon::current_num_threads(),
        stages: runner.stages,
        outputs,
    };
    let manifest_path = dir.join(MANIFEST);
    write_json(&manifest_path, &manifest).map_err(|source| PipelineError::Stage { stage: "manifest", source })?;
    Ok(PipelineReport { manifest, manifest_path })
}

/// Hash of a file, for callers comparing artifacts.
pub fn artifact_hash(path: &Path) -> vkhom_core::Result<String> {
    file_hash(path)
}
