//! End-to-end flows on a built [`Setup`]: physics-based design, the
//! thin-element baseline and evaluation with a target-depth sweep.

use ndarray::Array2;
use serde::Serialize;

use crate::config::Setup;
use crate::error::{HoloError, Result};
use crate::grid::{Material, Medium, PlaneField};
use crate::io::{export_voxels, VoxelFile};
use crate::material::{binarize, DesignVariable, MaterialPair};
use crate::objective::{cnr, correlation, find_target_depth};
use crate::optim::{optimize_with, Checkpoint, OptimState, OptimizeOutput};
use crate::thin_element::{iasa_design, phase_conjugate_design, phase_to_thickness, thickness_to_medium, PhaseMap, ThicknessMap};

/// Half-width of the depth sweep around the nominal target plane.
pub const SWEEP_HALF_WIDTH: f64 = 2e-3;

#[derive(Debug, Clone)]
pub struct ThinElementDesign {
    pub phase: PhaseMap,
    pub thickness: ThicknessMap,
    pub medium: Medium,
    /// Lens region; material 0 is the background, material 1 the columns.
    pub voxels: VoxelFile,
    /// Per-cycle phase-retrieval correlation; empty for phase conjugation.
    pub correlations: Vec<f64>,
}

/// Thin-element lens: phase retrieval in a homogeneous scenario, phase
/// conjugation through the aberrator otherwise.
pub fn thin_element(setup: &Setup) -> Result<ThinElementDesign> {
    let sc = &setup.scenario;
    let cfg = &setup.config;
    let layout = &setup.layout;
    let dx = sc.base.grid.dx();
    let amplitude = setup.source_amplitude();
    let aperture = amplitude.mapv(|a| a > 0.0);
    let lens_material = sc.pair.get(cfg.thin_element.lens_material);
    let (phase, correlations) = if setup.aberrator.is_some() {
        let p = phase_conjugate_design(&sc.target.q0, sc, &sc.base, sc.target.depth, layout.hologram_index, &aperture)?;
        (p, Vec::new())
    } else {
        let d = layout.target_distance - (layout.hologram_index - layout.source_index) as f64 * dx;
        let r = iasa_design(&sc.plan, &sc.target.q0, &amplitude, d, cfg.thin_element.iterations)?;
        (r.phase, r.correlations)
    };
    let c0 = cfg.medium.c0;
    let thickness = phase_to_thickness(&phase, lens_material.c, c0, sc.source.frequency, cfg.lens.thickness)?;
    let medium = thickness_to_medium(&thickness, &sc.base, &sc.lens, lens_material)?;
    let background = Material::new(c0, cfg.medium.rho0, cfg.medium.alpha0)?;
    let mut voxels = export_voxels(
        &medium.extract(&sc.lens)?,
        &MaterialPair::new(background, lens_material)?,
        &sc.lens.shape,
        dx,
    )?;
    voxels.config_hash = Some(setup.hash);
    Ok(ThinElementDesign {
        phase,
        thickness,
        medium,
        voxels,
        correlations,
    })
}

/// Adam run from the seeded initial design.
pub fn design(
    setup: &Setup,
    on_checkpoint: impl FnMut(&Checkpoint, &OptimState),
) -> std::result::Result<OptimizeOutput, (HoloError, Vec<Checkpoint>)> {
    let initial = match setup.scenario.initial_design(setup.config.seed) {
        Ok(d) => d,
        Err(e) => return Err((e, Vec::new())),
    };
    optimize_with(
        &initial,
        &setup.scenario,
        &setup.config.optimizer.adam(),
        setup.config.optimizer.checkpoint_every,
        on_checkpoint,
    )
}

/// Thresholded design as a voxel file stamped with the config hash.
pub fn design_voxels(setup: &Setup, design: &DesignVariable) -> Result<VoxelFile> {
    let sc = &setup.scenario;
    let mut v = export_voxels(&binarize(design, 0.0), &sc.pair, &sc.lens.shape, sc.base.grid.dx())?;
    v.config_hash = Some(setup.hash);
    Ok(v)
}

/// Lens voxels placed into the scenario background.
pub fn medium_from_voxels(setup: &Setup, voxels: &VoxelFile) -> Result<Medium> {
    if voxels.dims != setup.scenario.lens.shape {
        return Err(HoloError::ShapeMismatch {
            expected: setup.scenario.lens.shape.clone(),
            found: voxels.dims.clone(),
        });
    }
    setup.scenario.medium_with(&voxels.block())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    /// Correlation and CNR on the nominal target plane.
    pub correlation: f64,
    pub cnr: f64,
    /// Sweep depths beyond the extraction plane.
    pub depths: Vec<f64>,
    pub correlations: Vec<f64>,
    /// Depth of best correlation and that correlation.
    pub best_depth: f64,
    pub best_correlation: f64,
    pub best_cnr: f64,
}

/// CNR for reports: a silent background counts as infinite contrast.
fn report_cnr(q: &crate::grid::AmplitudeImage, mask: &Array2<bool>) -> Result<f64> {
    match cnr(q, mask) {
        Err(HoloError::ZeroNorm(_)) => Ok(f64::INFINITY),
        r => r,
    }
}

/// Correlation and CNR on the target plane, plus a sweep over
/// `depth +- SWEEP_HALF_WIDTH` in steps of the grid spacing.
pub fn evaluate_plane(setup: &Setup, extraction: &PlaneField) -> Result<EvaluationReport> {
    let sc = &setup.scenario;
    let d0 = sc.target.depth;
    let dx = sc.base.grid.dx();
    let n = (SWEEP_HALF_WIDTH / dx).round() as i64;
    let depths: Vec<f64> = (-n..=n).map(|i| d0 + i as f64 * dx).filter(|&d| d > 0.0).collect();
    let planes: Vec<(f64, Array2<f64>)> = sc
        .settings
        .exec
        .map(&depths, |&d| sc.plan.propagate(extraction, d).map(|p| (d, p.amplitude().values)))
        .into_iter()
        .collect::<Result<_>>()?;
    let images = planes
        .into_iter()
        .map(|(d, v)| Ok((d, crate::grid::AmplitudeImage::new(dx, v)?)))
        .collect::<Result<Vec<_>>>()?;
    let q0 = &sc.target.q0;
    let correlations = images.iter().map(|(_, q)| correlation(q, q0)).collect::<Result<Vec<_>>>()?;
    let (best_depth, best_correlation) = find_target_depth(&images, q0)?;
    let best = &images.iter().find(|(d, _)| *d == best_depth).expect("depth from sweep").1;
    let q = sc.plan.propagate(extraction, d0)?.amplitude();
    Ok(EvaluationReport {
        correlation: correlation(&q, q0)?,
        cnr: report_cnr(&q, &sc.target.mask)?,
        depths,
        correlations,
        best_depth,
        best_correlation,
        best_cnr: report_cnr(best, &sc.target.mask)?,
    })
}

/// Full-wave simulation of `medium` followed by [`evaluate_plane`].
pub fn evaluate_medium(setup: &Setup, medium: &Medium) -> Result<EvaluationReport> {
    let fwd = setup.scenario.solve(medium)?;
    let sc = &setup.scenario;
    let axis3 = sc.base.grid.axis3(sc.axis())?;
    let plane = fwd
        .op
        .to_pressure(&fwd.u)
        .index_axis(ndarray::Axis(axis3), sc.extraction_index)
        .to_owned();
    evaluate_plane(setup, &PlaneField::new(sc.base.grid.dx(), plane)?)
}

/// Correlation and CNR of a field already on the target plane.
pub fn evaluate_target(setup: &Setup, target_plane: &PlaneField) -> Result<EvaluationReport> {
    let sc = &setup.scenario;
    let q = target_plane.amplitude();
    let c = correlation(&q, &sc.target.q0)?;
    let n = report_cnr(&q, &sc.target.mask)?;
    Ok(EvaluationReport {
        correlation: c,
        cnr: n,
        depths: vec![sc.target.depth],
        correlations: vec![c],
        best_depth: sc.target.depth,
        best_correlation: c,
        best_cnr: n,
    })
}

/// Finite-difference steps tried per probe.
pub const FD_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub voxel: [usize; 3],
    pub adjoint: f64,
    pub finite_difference: f64,
    pub step: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub probes: Vec<ProbeResult>,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn relative_error(a: f64, b: f64) -> f64 {
    let den = a.abs().max(b.abs());
    if den == 0.0 {
        0.0
    } else {
        (a - b).abs() / den
    }
}

/// Distinct random voxels of the design region, in storage indices.
pub fn random_probes(design: &DesignVariable, n: usize, seed: u64) -> Vec<[usize; 3]> {
    use rand::seq::index::sample;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = design.gamma.shape();
    sample(&mut rng, design.gamma.len(), n.min(design.gamma.len()))
        .into_iter()
        .map(|k| [k / (d[1] * d[2]), (k / d[2]) % d[1], k % d[2]])
        .collect()
}

/// Adjoint gradient against central differences at `n_probes` random
/// voxels of the seeded initial design. Each probe keeps the step from
/// [`FD_STEPS`] with the smallest disagreement.
pub fn gradient_check(setup: &Setup, n_probes: usize, seed: u64, tolerance: f64) -> Result<GradientCheck> {
    let sc = &setup.scenario;
    let design = sc.initial_design(seed)?;
    let probes = random_probes(&design, n_probes, seed);
    let adjoint = crate::oracle::adjoint_samples(&design, sc, &sc.loss, &probes)?;
    let mut best: Vec<(f64, f64, f64)> = vec![(f64::INFINITY, 0.0, 0.0); probes.len()];
    for h in FD_STEPS {
        let fd = crate::oracle::fd_gradient(&design, sc, &sc.loss, &probes, h)?;
        for (i, (&a, &f)) in adjoint.iter().zip(&fd).enumerate() {
            let e = relative_error(a, f);
            if e < best[i].0 {
                best[i] = (e, f, h);
            }
        }
    }
    let results: Vec<ProbeResult> = probes
        .iter()
        .zip(&adjoint)
        .zip(&best)
        .map(|((&voxel, &a), &(e, f, h))| ProbeResult {
            voxel,
            adjoint: a,
            finite_difference: f,
            step: h,
            relative_error: e,
        })
        .collect();
    let max = results.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    Ok(GradientCheck {
        probes: results,
        max_relative_error: max,
        tolerance,
        passed: max < tolerance,
    })
}
