use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vkhom_core::homogenize::{verify_structure, TensorsFile};
use vkhom_core::plate::{read_prestrain, ClampSpec, LoadField, NewtonOptions, PlateSolution, PrestrainField};
use vkhom_core::vtk::write_plate_vtk;
use vkhom_core::{CorrectorBundle, SamplePoints};
use vkhom_cli::config::read_config;
use vkhom_cli::pipeline::{self, exit_code, PlateJob};

#[derive(Parser)]
#[command(name = "vkhom", version, about = "Homogenized von Karman plates for periodic frame cells")]
struct Cli {
    /// Worker threads (default: VKHOM_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the cell and solve its correctors.
    Cell {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: output.dir from the config).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Assemble the homogenized tensors from a corrector file.
    Homogenize {
        #[arg(long)]
        correctors: PathBuf,
        #[arg(short, long, default_value = "tensors.json")]
        out: PathBuf,
    },
    /// Solve the limit plate problem.
    Plate(PlateArgs),
    /// Rebuild the cell-scale fields at sample points of a plate solution.
    Recover {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        correctors: PathBuf,
        /// `grid:NxM` or `at:x,y;x,y`.
        #[arg(long, default_value = "grid:4x4")]
        points: String,
        /// Directory for the per-point VTK files.
        #[arg(long, default_value = "vtk")]
        vtk: PathBuf,
        /// Summary JSON.
        #[arg(short, long, default_value = "recover.json")]
        out: PathBuf,
    },
    /// Check a tensors file: coercivity and the structure report.
    Verify { tensors: PathBuf },
    /// Run every configured stage with caching.
    Pipeline {
        config: PathBuf,
        /// Ignore cached stages.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args)]
struct PlateArgs {
    #[arg(long)]
    tensors: PathBuf,
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    /// Elements per side, `M1xM2`.
    #[arg(long, default_value = "64x64", value_parser = parse_grid)]
    grid: [usize; 2],
    /// `disc:cx,cy,R` or `edge:left,right,bottom,top|all`.
    #[arg(long, default_value = "disc:0,0,0.3")]
    clamp: ClampSpec,
    /// e.g. `f3=const:1` or `f3=gauss:cx,cy,sigma,v`.
    #[arg(long, default_value = "")]
    load: LoadField,
    /// JSON file `{"B": 3x3}`.
    #[arg(long)]
    prestrain: Option<PathBuf>,
    #[arg(long, default_value_t = NewtonOptions::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = NewtonOptions::default().max_newton)]
    max_newton: usize,
    #[arg(long, default_value_t = 1)]
    load_steps: usize,
    #[arg(short, long, default_value = "solution.json")]
    out: PathBuf,
    /// Also write the displacement field as VTK.
    #[arg(long)]
    vtk: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("expected M1xM2, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    let g = [p(a)?, p(b)?];
    if g.contains(&0) {
        return Err("grid sizes must be positive".into());
    }
    Ok(g)
}

fn threads(flag: Option<usize>) -> Result<usize, String> {
    match flag {
        Some(n) => Ok(n),
        None => match std::env::var("VKHOM_THREADS") {
            Ok(v) => v.trim().parse().map_err(|_| format!("VKHOM_THREADS=`{v}` is not a thread count")),
            Err(_) => Ok(0),
        },
    }
}

type Outcome = Result<u8, (i32, String)>;

fn core_err(e: vkhom_core::Error) -> (i32, String) {
    (exit_code(&e), e.to_string())
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Cell { config, out } => {
            let cfg = read_config(&config).map_err(|e| (2, e.to_string()))?;
            let dir = out.unwrap_or(cfg.output.dir.clone());
            let bundle =
                pipeline::cell_stage(&cfg.geometry, &cfg.material, cfg.solver, cfg.output.prestrain_correctors)
                    .map_err(core_err)?;
            let files = pipeline::write_cell_outputs(&dir, &bundle, cfg.output.vtk).map_err(core_err)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(0)
        }
        Command::Homogenize { correctors, out } => {
            let bundle = CorrectorBundle::load(&correctors).map_err(core_err)?;
            let file = pipeline::homogenize_stage(&bundle).map_err(core_err)?;
            file.write(&out).map_err(core_err)?;
            println!("{}", out.display());
            Ok(0)
        }
        Command::Plate(args) => plate(args),
        Command::Recover { solution, correctors, points, vtk, out } => {
            let pts: SamplePoints = points.parse().map_err(core_err)?;
            let bundle = CorrectorBundle::load(&correctors).map_err(core_err)?;
            let sol = PlateSolution::read(&solution).map_err(core_err)?;
            let (report, files) = pipeline::recover_stage(&bundle, &sol, None, &pts, &vtk).map_err(core_err)?;
            pipeline::write_json(&out, &report).map_err(core_err)?;
            for f in files.iter().chain([&out]) {
                println!("{}", f.display());
            }
            Ok(0)
        }
        Command::Verify { tensors } => verify(&tensors),
        Command::Pipeline { config, force } => {
            let cfg = read_config(&config).map_err(|e| (2, e.to_string()))?;
            let report = pipeline::run_pipeline(&cfg, force).map_err(|e| (e.exit_code(), e.to_string()))?;
            for s in &report.manifest.stages {
                println!("{:<11} {:<7} {:>9.3}s", s.name, format!("{:?}", s.status).to_lowercase(), s.seconds);
            }
            println!("{}", report.manifest_path.display());
            Ok(0)
        }
    }
}

fn plate(args: PlateArgs) -> Outcome {
    let tensors = TensorsFile::read(&args.tensors).map_err(core_err)?;
    let prestrain = match &args.prestrain {
        Some(p) => read_prestrain(p).map_err(core_err)?,
        None => PrestrainField::zero(),
    };
    let newton =
        NewtonOptions { tol: args.tol, max_newton: args.max_newton, load_steps: args.load_steps, ..Default::default() };
    if !(newton.tol > 0.0) || newton.load_steps == 0 || newton.max_newton == 0 {
        return Err((2, "--tol, --max-newton and --load-steps must be positive".into()));
    }
    let job = PlateJob { l: args.l, grid: args.grid, clamp: args.clamp, load: args.load, prestrain, newton };
    let (mesh, solution) = pipeline::plate_stage(&tensors, &job).map_err(core_err)?;
    solution.write(&args.out).map_err(core_err)?;
    println!("{}", args.out.display());
    if let Some(v) = &args.vtk {
        write_plate_vtk(v, &mesh, &solution.state()).map_err(core_err)?;
        println!("{}", v.display());
    }
    Ok(0)
}

fn verify(path: &Path) -> Outcome {
    let file = TensorsFile::read(path).map_err(core_err)?;
    let mut ok = true;
    let eig = file.tensors.min_block_eigenvalue();
    let coercive = eig > 0.0;
    ok &= coercive;
    println!("{:<20} {:>12.4e}  {}", "min_eigenvalue", eig, if coercive { "ok" } else { "FAIL" });
    let report = verify_structure(&file.tensors, file.tensors.materials_isotropic);
    if report.applicable {
        for (name, residual) in report.checks() {
            let pass = residual < report.threshold;
            ok &= pass;
            println!("{:<20} {:>12.4e}  {}", name, residual, if pass { "ok" } else { "FAIL" });
        }
    } else {
        println!("structure report: advisory only (not a frame cell with isotropic phases)");
        for (name, residual) in report.checks() {
            println!("{:<20} {:>12.4e}", name, residual);
        }
    }
    println!("{}", if ok { "verify: passed" } else { "verify: FAILED" });
    Ok(if ok { 0 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let n = match threads(cli.threads) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::warn!("thread pool: {e}");
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
