//! `myo`: run studies, generate and inspect meshes, export fields.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use myo_core::config::{load_config, load_config_str, load_preset, presets, ResolvedConfig};
use myo_core::dynamics::{load_checkpoint, write_checkpoint, Checkpoint};
use myo_core::export::{snapshot, write_vtk};
use myo_core::mesh::{import_mesh, write_mesh, ImportOptions, Mesh};
use myo_core::scenarios::studies::{RunArtifacts, StudyOutput};
use myo_core::scenarios::{RunSummary, Simulation};
use myo_core::{MyoError, Result};

#[derive(Parser)]
#[command(
    name = "myo",
    version,
    about = "Muscle-tendon finite-element simulator"
)]
struct Cli {
    /// Worker threads for assembly and factorization.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file or a bundled preset.
    Run(RunArgs),
    /// Generate, inspect or convert meshes.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Write a checkpoint as a VTK field file.
    Export(ExportArgs),
    /// List or print the bundled presets.
    #[command(subcommand)]
    Presets(PresetCommand),
}

#[derive(Args)]
struct RunArgs {
    /// Preset name (see `myo presets list`); alternative to --config.
    preset: Option<String>,
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set materials.muscle.sigma0=3e5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Write a generated block or gastrocnemius mesh.
    Generate {
        /// `block` or `gastroc`.
        kind: String,
        /// Override relative to the mesh table, e.g. `divisions.nx=8` or
        /// `gastroc.theta0="25 deg"`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Print counts, volumes and invariant checks.
    Inspect {
        path: PathBuf,
        #[arg(long)]
        normalize_fibres: bool,
    },
    /// Rewrite a mesh; a `.vtk` output gives the undeformed geometry.
    Convert {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        normalize_fibres: bool,
    },
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Only `vtk` is supported.
    #[arg(long, default_value = "vtk")]
    format: String,
}

#[derive(Subcommand)]
enum PresetCommand {
    List,
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result =
        myo_core::configure_threads(cli.threads, cli.deterministic).and_then(|_| {
            match cli.command {
                Command::Run(args) => cmd_run(args, cli.deterministic),
                Command::Mesh(cmd) => cmd_mesh(cmd),
                Command::Export(args) => cmd_export(args),
                Command::Presets(cmd) => cmd_presets(cmd),
            }
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &MyoError) -> u8 {
    use MyoError::*;
    match e {
        NonConvergence { .. }
        | NonPositiveJacobian { .. }
        | NonPositiveDilation(_)
        | SingularMatrix(_)
        | LinearSolveFailure(_) => 3,
        Io(_) => 1,
        _ => 2,
    }
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| MyoError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    io(path, fs::write(path, text))
}

#[derive(Serialize)]
struct Summary<'a> {
    study: &'a str,
    status: &'a str,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    wall_time_s: f64,
    deterministic: bool,
    metrics: &'a std::collections::BTreeMap<String, f64>,
    runs: Vec<RunEntry<'a>>,
}

#[derive(Serialize)]
struct RunEntry<'a> {
    name: &'a str,
    #[serde(flatten)]
    summary: &'a RunSummary,
}

fn cmd_run(args: RunArgs, deterministic: bool) -> Result<()> {
    let cfg: ResolvedConfig = match (&args.preset, &args.config) {
        (Some(name), None) => load_preset(name, &args.overrides)?,
        (None, Some(path)) => load_config(path, &args.overrides)?,
        _ => {
            return Err(MyoError::Config(
                "give either a preset name or --config".into(),
            ))
        }
    };
    let dir = args
        .output_dir
        .clone()
        .unwrap_or_else(|| cfg.config.output.dir.clone());
    io(&dir, fs::create_dir_all(&dir))?;
    write(&dir.join("resolved.toml"), &cfg.echo()?)?;
    let study = cfg.config.study.as_ref().map_or("run", |s| s.name());

    let every = cfg.config.time.output_every;
    let vtk = cfg.config.output.vtk;
    let mut observer = |name: &str, sim: &Simulation| -> Result<()> {
        let steps = sim.records.len();
        if vtk && every > 0 && steps % every == 0 {
            let run_dir = dir.join(name);
            io(&run_dir, fs::create_dir_all(&run_dir))?;
            let file = snapshot(
                &sim.model.mesh,
                &sim.checkpoint(),
                &format!("{name} t={:e}", sim.state.t),
            )?;
            write(
                &run_dir.join(format!("snapshot_{steps:06}.vtk")),
                &write_vtk(&file),
            )?;
        }
        Ok(())
    };

    let start = Instant::now();
    let mut out = StudyOutput::default();
    let result = cfg.execute_into(&mut out, &mut observer);
    for run in &out.runs {
        write_run(&dir, run, &cfg)?;
    }
    let code = result.as_ref().err().map_or(0, exit_code);
    let summary = Summary {
        study,
        status: match code {
            0 => "ok",
            3 => "nonconvergence",
            _ => "error",
        },
        exit_code: code,
        error: result.as_ref().err().map(|e| e.to_string()),
        wall_time_s: start.elapsed().as_secs_f64(),
        deterministic,
        metrics: &out.metrics,
        runs: out
            .runs
            .iter()
            .map(|r| RunEntry {
                name: &r.name,
                summary: &r.summary,
            })
            .collect(),
    };
    let text = toml::to_string(&summary).map_err(|e| MyoError::Io(e.to_string()))?;
    write(&dir.join("summary.toml"), &text)?;
    for r in &out.runs {
        let s = &r.summary;
        println!(
            "{}: {} steps to t = {:e}, {} Newton iterations, final residual {:.3e}",
            r.name, s.steps, s.t_final, s.newton_iterations, s.final_residual
        );
    }
    for (k, v) in &out.metrics {
        println!("{k} = {v:e}");
    }
    println!("artifacts in {}", dir.display());
    result
}

fn write_run(dir: &Path, run: &RunArtifacts, cfg: &ResolvedConfig) -> Result<()> {
    let run_dir = dir.join(&run.name);
    io(&run_dir, fs::create_dir_all(&run_dir))?;
    write(&run_dir.join("probes.csv"), &run.series.to_csv())?;
    write(&run_dir.join("mesh.myomesh"), &write_mesh(&run.mesh))?;
    if cfg.config.output.checkpoint {
        write(
            &run_dir.join("final.myostate"),
            &write_checkpoint(&run.checkpoint),
        )?;
    }
    if cfg.config.output.vtk {
        let file = snapshot(&run.mesh, &run.checkpoint, &format!("{} final", run.name))?;
        write(&run_dir.join("final.vtk"), &write_vtk(&file))?;
    }
    Ok(())
}

fn read_mesh(path: &Path, normalize_fibres: bool) -> Result<Mesh> {
    import_mesh(path, ImportOptions { normalize_fibres }).map_err(|e| match e {
        MyoError::Io(m) => MyoError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn cmd_mesh(cmd: MeshCommand) -> Result<()> {
    match cmd {
        MeshCommand::Generate {
            kind,
            overrides,
            output,
        } => {
            if !["block", "gastroc"].contains(&kind.as_str()) {
                return Err(MyoError::Config(format!(
                    "unknown mesh kind {kind:?}; use block or gastroc"
                )));
            }
            let overrides: Vec<String> = overrides.iter().map(|o| format!("mesh.{o}")).collect();
            let cfg = load_config_str(
                &format!("[mesh]\nkind = \"{kind}\"\n"),
                &overrides,
                Path::new("."),
            )?;
            let mesh = cfg.mesh()?;
            write(&output, &write_mesh(&mesh))?;
            println!(
                "wrote {} ({} nodes, {} cells)",
                output.display(),
                mesh.n_nodes(),
                mesh.n_cells()
            );
            Ok(())
        }
        MeshCommand::Inspect {
            path,
            normalize_fibres,
        } => {
            let mesh = read_mesh(&path, normalize_fibres)?;
            print!("{}", inspect(&mesh));
            Ok(())
        }
        MeshCommand::Convert {
            input,
            output,
            normalize_fibres,
        } => {
            let mesh = read_mesh(&input, normalize_fibres)?;
            let text = if output.extension().is_some_and(|e| e == "vtk") {
                let state = myo_core::assembly::SystemState::rest(
                    &myo_core::assembly::DofMap::new(&mesh, &[])?,
                );
                let cp = Checkpoint::new(&mesh, &state, &vec![0.0; mesh.n_cells()]);
                write_vtk(&snapshot(&mesh, &cp, "undeformed")?)
            } else {
                write_mesh(&mesh)
            };
            write(&output, &text)
        }
    }
}

const MM3: f64 = 1e-9;

fn inspect(mesh: &Mesh) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "element: {}", mesh.element.name());
    let _ = writeln!(s, "nodes: {}", mesh.n_nodes());
    let _ = writeln!(s, "cells: {}", mesh.n_cells());
    let v = mesh.volume();
    let _ = writeln!(s, "volume: {v:.10e} m^3 ({:.6} mm^3)", v / MM3);
    let (lo, hi) = mesh.bounding_box();
    let _ = writeln!(
        s,
        "bounding box: [{:.6}, {:.6}] x [{:.6}, {:.6}] x [{:.6}, {:.6}] mm",
        lo.x * 1e3,
        hi.x * 1e3,
        lo.y * 1e3,
        hi.y * 1e3,
        lo.z * 1e3,
        hi.z * 1e3
    );
    let _ = writeln!(s, "h_min: {:.6e} m", mesh.h_min());
    let _ = writeln!(s, "regions: {}", mesh.region_names().join(", "));
    for name in mesh.region_names() {
        let kind = mesh.regions[(0..mesh.n_cells())
            .find(|&c| mesh.regions[c].name() == name)
            .unwrap_or(0)];
        let cells: Vec<usize> = (0..mesh.n_cells())
            .filter(|&c| mesh.regions[c] == kind)
            .collect();
        let angle = cells
            .iter()
            .map(|&c| {
                let a = mesh.fibre(c, 0);
                a.y.hypot(a.z).atan2(a.x).to_degrees()
            })
            .sum::<f64>()
            / cells.len() as f64;
        let _ = writeln!(
            s,
            "region {name}: {} cells, volume {:.6} mm^3, mean fibre angle from x {angle:.6} deg",
            cells.len(),
            mesh.region_volume(kind) / MM3
        );
    }
    let sets: Vec<String> = mesh
        .face_sets
        .iter()
        .map(|(k, v)| format!("{k} ({})", v.len()))
        .collect();
    let _ = writeln!(s, "face sets: {}", sets.join(", "));
    if !mesh.node_sets.is_empty() {
        let sets: Vec<String> = mesh
            .node_sets
            .iter()
            .map(|(k, v)| format!("{k} ({})", v.len()))
            .collect();
        let _ = writeln!(s, "node sets: {}", sets.join(", "));
    }
    let _ = writeln!(
        s,
        "checks: {}",
        match mesh.validate() {
            Ok(()) => "ok".to_string(),
            Err(e) => format!("FAILED: {e}"),
        }
    );
    s
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    if args.format != "vtk" {
        return Err(MyoError::Config(format!(
            "unsupported export format {:?}",
            args.format
        )));
    }
    let mesh = read_mesh(&args.mesh, false)?;
    let cp = load_checkpoint(&args.checkpoint).map_err(|e| match e {
        MyoError::Io(m) => MyoError::Config(m),
        other => other,
    })?;
    let title = args.checkpoint.file_name().map_or_else(
        || "checkpoint".to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    write(&args.output, &write_vtk(&snapshot(&mesh, &cp, &title)?))
}

fn cmd_presets(cmd: PresetCommand) -> Result<()> {
    match cmd {
        PresetCommand::List => {
            for name in presets::NAMES {
                let text = presets::get(name).unwrap_or_default();
                let blurb = text
                    .lines()
                    .take_while(|l| l.starts_with('#') && l.trim() != "#")
                    .map(|l| l.trim_start_matches('#').trim())
                    .collect::<Vec<_>>()
                    .join(" ");
                println!("{name:20} {blurb}");
            }
            Ok(())
        }
        PresetCommand::Show { name } => {
            let text = presets::get(&name).ok_or_else(|| {
                MyoError::Config(format!(
                    "unknown preset {name:?}; available: {}",
                    presets::NAMES.join(", ")
                ))
            })?;
            print!("{text}");
            Ok(())
        }
    }
}
