//! `holo`: design, baseline, evaluation and export of acoustic holograms.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::{Array2, Axis};
use serde_json::json;

use holo_core::config::{load_config, Setup};
use holo_core::exec::Exec;
use holo_core::grid::{ComplexField, PlaneField, C64};
use holo_core::io::{
    encode_checkpoint, encode_plane, encode_volume, hash_hex, read_field, read_voxels, write_atomic, write_pgm,
    write_voxels, ConfigHash,
};
use holo_core::material::binarization_error;
use holo_core::objective::loss;
use holo_core::optim::Checkpoint;
use holo_core::pipeline;
use holo_core::HoloError;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "holo", version, about = "Acoustic hologram design through a differentiable Helmholtz solver")]
struct Cli {
    /// Run every loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a volumetric lens; writes checkpoints, the loss history and
    /// the thresholded lens.
    Design {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Skip the two extra solves per checkpoint that measure the
        /// binarization error.
        #[arg(long)]
        no_binarization: bool,
    },
    /// Thin-element baseline: phase map, thickness map and voxelized lens.
    ThinElement {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Correlation and CNR of a lens (simulated) or a stored field.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Lens voxel file to simulate.
        #[arg(long, conflicts_with = "field", required_unless_present = "field")]
        lens: Option<PathBuf>,
        /// Field file: a target plane, or a full volume.
        #[arg(long)]
        field: Option<PathBuf>,
        /// Accept inputs produced under a different config.
        #[arg(long)]
        force: bool,
        /// Also write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare the adjoint gradient with finite differences.
    GradientCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        probes: usize,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Simulate a lens and write field planes as PGM and raw binary.
    Export {
        #[arg(long)]
        config: PathBuf,
        /// Lens voxel file; the bare scenario if omitted.
        #[arg(long)]
        lens: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

/// Failure carrying its exit status.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<HoloError> for Failure {
    fn from(e: HoloError) -> Self {
        let (code, kind) = match &e {
            HoloError::NonConvergence { .. } | HoloError::Singular { .. } | HoloError::NonFinite(_) => {
                (EXIT_SOLVER, "solver")
            }
            HoloError::Format(_) => (EXIT_VALIDATION, "format"),
            HoloError::ZeroNorm(_) | HoloError::ShapeMismatch { .. } => (EXIT_VALIDATION, "validation"),
            HoloError::Io(_) => (EXIT_CONFIG, "io"),
            _ => (EXIT_CONFIG, "config"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        HoloError::from(e).into()
    }
}

fn validation(message: String) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        kind: "validation",
        message,
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message, "exit_code": f.code }));
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command, exec: Exec) -> Res<()> {
    match command {
        Command::Design {
            config,
            out,
            no_binarization,
        } => design(&setup(&config, exec)?, &out, !no_binarization),
        Command::ThinElement { config, out } => thin_element(&setup(&config, exec)?, &out),
        Command::Evaluate {
            config,
            lens,
            field,
            force,
            json,
        } => evaluate(&setup(&config, exec)?, lens.as_deref(), field.as_deref(), force, json.as_deref()),
        Command::GradientCheck {
            config,
            probes,
            tolerance,
        } => gradient_check(&setup(&config, exec)?, probes, tolerance),
        Command::Export {
            config,
            lens,
            out,
            force,
        } => export(&setup(&config, exec)?, lens.as_deref(), &out, force),
    }
}

fn setup(path: &Path, exec: Exec) -> Res<Setup> {
    let cfg = load_config(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut s = cfg.build(base)?;
    s.scenario.settings.exec = exec;
    s.scenario.plan = s.scenario.plan.clone().with_exec(exec);
    Ok(s)
}

fn check_hash(setup: &Setup, found: Option<ConfigHash>, what: &Path, force: bool) -> Res<()> {
    if force || found == Some(setup.hash) {
        return Ok(());
    }
    let found = found.map_or_else(|| "none".to_string(), |h| hash_hex(&h));
    Err(validation(format!(
        "{} was produced under config {found}, not {} (use --force to override)",
        what.display(),
        hash_hex(&setup.hash)
    )))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Res<()> {
    let text = serde_json::to_string_pretty(value).expect("json serializes") + "\n";
    Ok(write_atomic(path, text.as_bytes())?)
}

fn prepare(out: &Path, setup: &Setup) -> Res<()> {
    fs::create_dir_all(out)?;
    Ok(write_atomic(&out.join("config.toml"), setup.config.dump().as_bytes())?)
}

fn design(setup: &Setup, out: &Path, track_binarization: bool) -> Res<()> {
    prepare(out, setup)?;
    let ckdir = out.join("checkpoints");
    fs::create_dir_all(&ckdir)?;
    let sc = &setup.scenario;
    let hash = setup.hash;
    let write_cp = |cp: &Checkpoint| -> Res<()> {
        let mut cp = cp.clone();
        if track_binarization {
            let d = sc.initial_design(setup.config.seed)?.with_gamma(cp.gamma.clone())?;
            cp.binarization_error = Some(binarization_error(&d, sc)?);
        }
        let path = ckdir.join(format!("iter_{:05}.ahck", cp.iteration));
        Ok(write_atomic(&path, &encode_checkpoint(&cp, Some(&hash)))?)
    };

    let initial = sc.initial_design(setup.config.seed)?;
    let q = sc.target_field(&sc.medium(&initial)?)?.amplitude();
    write_cp(&Checkpoint {
        iteration: 0,
        gamma: initial.gamma.clone(),
        loss: loss(&q, &sc.target, &sc.loss)?,
        binarization_error: None,
    })?;

    let mut pending: Option<Failure> = None;
    let result = pipeline::design(setup, |cp, _| {
        if pending.is_none() {
            if let Err(f) = write_cp(cp) {
                pending = Some(f);
            }
        }
    });
    if let Some(f) = pending {
        return Err(f);
    }
    let output = match result {
        Ok(o) => o,
        Err((e, partial)) => {
            let mut f = Failure::from(e);
            f.message = format!("{} ({} checkpoints written)", f.message, partial.len() + 1);
            return Err(f);
        }
    };

    let mut history = format!("# config {}\n# iteration loss\n", hash_hex(&hash));
    for (i, l) in output.state.loss_history.iter().enumerate() {
        history.push_str(&format!("{i} {l:?}\n"));
    }
    write_atomic(&out.join("loss_history.txt"), history.as_bytes())?;
    let voxels = pipeline::design_voxels(setup, &output.design)?;
    write_voxels(&out.join("lens.ahvx"), &voxels)?;
    let report = pipeline::evaluate_medium(setup, &pipeline::medium_from_voxels(setup, &voxels)?)?;
    let summary = json!({
        "config_hash": hash_hex(&hash),
        "iterations": setup.config.optimizer.n_iterations,
        "final_loss": output.state.loss_history.last(),
        "checkpoints": std::iter::once(0).chain(output.checkpoints.iter().map(|c| c.iteration)).collect::<Vec<_>>(),
        "binarized": report,
    });
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "design: {} iterations, binarized correlation {:.4}, CNR {:.3}",
        setup.config.optimizer.n_iterations, report.correlation, report.cnr
    );
    Ok(())
}

fn real_plane(dx: f64, values: &Array2<f64>) -> Res<PlaneField> {
    Ok(PlaneField::new(dx, values.mapv(|v| C64::new(v, 0.0)))?)
}

fn thin_element(setup: &Setup, out: &Path) -> Res<()> {
    prepare(out, setup)?;
    let hash = setup.hash;
    let comment = format!("config {}", hash_hex(&hash));
    let te = pipeline::thin_element(setup)?;
    let dx = te.phase.dx;
    write_atomic(&out.join("phase.ahfb"), &encode_plane(&real_plane(dx, &te.phase.phase)?, Some(&hash)))?;
    write_atomic(&out.join("thickness.ahfb"), &encode_plane(&real_plane(dx, &te.thickness.thickness)?, Some(&hash)))?;
    write_atomic(&out.join("thickness.pgm"), &write_pgm(&te.thickness.thickness, Some(&comment)))?;
    write_voxels(&out.join("lens.ahvx"), &te.voxels)?;
    let report = pipeline::evaluate_medium(setup, &te.medium)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "config_hash": hash_hex(&hash),
            "method": if setup.aberrator.is_some() { "phase-conjugation" } else { "iterative-angular-spectrum" },
            "retrieval_correlations": te.correlations,
            "full_wave": report,
        }),
    )?;
    println!("thin-element: correlation {:.4}, CNR {:.3}", report.correlation, report.cnr);
    Ok(())
}

fn evaluate(setup: &Setup, lens: Option<&Path>, field: Option<&Path>, force: bool, json_out: Option<&Path>) -> Res<()> {
    let sc = &setup.scenario;
    let grid = &sc.base.grid;
    let report = if let Some(path) = lens {
        let v = read_voxels(path)?;
        check_hash(setup, v.config_hash, path, force)?;
        pipeline::evaluate_medium(setup, &pipeline::medium_from_voxels(setup, &v)?)?
    } else {
        let path = field.expect("clap requires one input");
        let f = read_field(path)?;
        check_hash(setup, f.config_hash, path, force)?;
        let plane = grid.plane_shape(sc.axis())?;
        if f.dims == plane {
            pipeline::evaluate_target(setup, &f.into_plane()?)?
        } else if f.dims == grid.shape() {
            let vol = f.into_volume(grid.absorber_width())?;
            let a3 = grid.axis3(sc.axis())?;
            let p = vol.values.index_axis(Axis(a3), sc.extraction_index).to_owned();
            pipeline::evaluate_plane(setup, &PlaneField::new(grid.dx(), p)?)?
        } else {
            return Err(validation(format!(
                "field dims {:?} match neither the target plane {:?} nor the grid {:?}",
                f.dims,
                plane,
                grid.shape()
            )));
        }
    };
    println!("correlation {:.6}", report.correlation);
    println!("cnr {:.6}", report.cnr);
    println!("best_depth {:.6e} correlation {:.6}", report.best_depth, report.best_correlation);
    if let Some(p) = json_out {
        let mut v = serde_json::to_value(&report).expect("report serializes");
        v["config_hash"] = json!(hash_hex(&setup.hash));
        write_json(p, &v)?;
    }
    Ok(())
}

fn gradient_check(setup: &Setup, probes: usize, tolerance: f64) -> Res<()> {
    let r = pipeline::gradient_check(setup, probes, setup.config.seed, tolerance)?;
    for p in &r.probes {
        println!(
            "probe {:?}: adjoint {:.6e} fd {:.6e} (h {:.0e}) rel err {:.2e}",
            p.voxel, p.adjoint, p.finite_difference, p.step, p.relative_error
        );
    }
    let verdict = if r.passed { "PASS" } else { "FAIL" };
    println!("{verdict}: max rel. err {:.3e} (tolerance {:.1e})", r.max_relative_error, r.tolerance);
    if r.passed {
        Ok(())
    } else {
        Err(validation(format!("gradient check failed: max rel. err {:.3e}", r.max_relative_error)))
    }
}

/// Amplitude image of a volume: the full field in 2D, the plane through
/// the middle of the first axis in 3D.
fn section(field: &ComplexField) -> Array2<f64> {
    let d = field.values.shape();
    field.values.index_axis(Axis(0), d[0] / 2).mapv(|v| v.norm())
}

fn export(setup: &Setup, lens: Option<&Path>, out: &Path, force: bool) -> Res<()> {
    prepare(out, setup)?;
    let sc = &setup.scenario;
    let grid = &sc.base.grid;
    let hash = setup.hash;
    let comment = format!("config {}", hash_hex(&hash));
    let medium = match lens {
        Some(path) => {
            let v = read_voxels(path)?;
            check_hash(setup, v.config_hash, path, force)?;
            pipeline::medium_from_voxels(setup, &v)?
        }
        None => sc.base.clone(),
    };
    let fwd = sc.solve(&medium)?;
    let field = ComplexField::new(grid.clone(), fwd.op.to_pressure(&fwd.u))?;
    let a3 = grid.axis3(sc.axis())?;
    let extraction = PlaneField::new(grid.dx(), field.values.index_axis(Axis(a3), sc.extraction_index).to_owned())?;
    let q0 = real_plane(grid.dx(), &sc.target.q0.values)?;
    write_atomic(&out.join("field.ahfb"), &encode_volume(&field, Some(&hash)))?;
    write_atomic(&out.join("extraction.ahfb"), &encode_plane(&extraction, Some(&hash)))?;
    write_atomic(&out.join("target.ahfb"), &encode_plane(&fwd.q, Some(&hash)))?;
    write_atomic(&out.join("q0.ahfb"), &encode_plane(&q0, Some(&hash)))?;
    write_atomic(&out.join("field.pgm"), &write_pgm(&section(&field), Some(&comment)))?;
    write_atomic(&out.join("target.pgm"), &write_pgm(&fwd.q.amplitude().values, Some(&comment)))?;
    write_atomic(&out.join("q0.pgm"), &write_pgm(&sc.target.q0.values, Some(&comment)))?;
    println!("export: wrote field, extraction, target and q0 to {}", out.display());
    Ok(())
}
