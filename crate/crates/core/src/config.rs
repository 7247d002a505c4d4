//! TOML scenario configuration.
//!
//! Every key has a default except `seed`. Lengths are in meters, speeds in
//! m/s, densities in kg/m³ and absorption in Np/m at the design frequency.
//! The material values shipped as defaults are illustrative stand-ins for a
//! soft and a rigid photopolymer, not measured data.
//!
//! Layout along the propagation (last) axis:
//!
//! ```text
//! | absorber | source_margin | source | lens | [gap | aberrator] | extraction_offset | extraction | tail_margin | absorber |
//! ```
//!
//! The lens input face sits on the cell after the source plane and the
//! target plane lies `lens.thickness + target.depth` beyond the source.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HoloError, Result};
use crate::grid::{
    disc_mask, embed_region, homogeneous_medium, make_grid, AmplitudeImage, Grid, Material, Region, SourcePlane,
    MIN_POINTS_PER_WAVELENGTH,
};
use crate::helmholtz::HelmholtzSettings;
use crate::io::{read_pgm, read_voxels, ConfigHash, VoxelFile};
use crate::material::MaterialPair;
use crate::objective::{LossConfig, TargetSpec};
use crate::optim::AdamConfig;
use crate::propagation::{AsPlan, EvanescentPolicy};
use crate::scenario::Scenario;
use crate::targets::{bird_glyph, glyph_target, resample, two_spot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// 2 or 3. Default 3.
    pub ndim: usize,
    /// Cells per wavelength at the slowest material. Default 6.
    pub points_per_wavelength: f64,
    /// Absorbing layer width in cells. Default 12.
    pub absorber_width: usize,
    /// Interior width across each transverse axis. Default 50 mm.
    pub transverse_size: f64,
    /// Gap between the absorbing layer and the source plane. Default 1 mm.
    pub source_margin: f64,
    /// Gap between the extraction plane and the absorbing layer. Default 1 mm.
    pub tail_margin: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            ndim: 3,
            points_per_wavelength: 6.0,
            absorber_width: 12,
            transverse_size: 0.05,
            source_margin: 1e-3,
            tail_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundConfig {
    pub c0: f64,
    pub rho0: f64,
    pub alpha0: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            c0: 1480.0,
            rho0: 1000.0,
            alpha0: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Piston diameter. Default 25.4 mm.
    pub diameter: f64,
    /// Default 2 MHz.
    pub frequency: f64,
    pub amplitude: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            diameter: 0.0254,
            frequency: 2e6,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LensConfig {
    /// Default 6 mm.
    pub thickness: f64,
    /// Side of the square design region. Default 50 mm.
    pub diameter: f64,
}

impl Default for LensConfig {
    fn default() -> Self {
        Self {
            thickness: 6e-3,
            diameter: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// Bundled bird silhouette.
    Glyph,
    /// PGM file given by `target.image`.
    Image,
    TwoSpot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub kind: TargetKind,
    /// PGM path, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    /// Physical width of the image or pattern. Default 30 mm.
    pub width: f64,
    /// Target distance beyond the lens output face. Default 12 mm.
    pub depth: f64,
    /// Distance from the last structure to the extraction plane. Default 1 mm.
    pub extraction_offset: f64,
    pub spot_diameter: f64,
    pub spot_separation: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            kind: TargetKind::Glyph,
            image: None,
            width: 0.03,
            depth: 0.012,
            extraction_offset: 1e-3,
            spot_diameter: 4e-3,
            spot_separation: 0.012,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub n_iterations: usize,
    pub checkpoint_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            beta1: a.beta1,
            beta2: a.beta2,
            learning_rate: a.learning_rate,
            epsilon: a.epsilon,
            n_iterations: a.n_iterations,
            checkpoint_every: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            learning_rate: self.learning_rate,
            epsilon: self.epsilon,
            n_iterations: self.n_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThinElementConfig {
    pub iterations: usize,
    /// Which material of the pair forms the columns.
    pub lens_material: u8,
}

impl Default for ThinElementConfig {
    fn default() -> Self {
        Self {
            iterations: crate::thin_element::DEFAULT_IASA_ITERATIONS,
            lens_material: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AberratorConfig {
    /// Voxel file, relative to the config file.
    pub file: PathBuf,
    /// Gap between the lens output face and the aberrator.
    #[serde(default)]
    pub axial_offset: f64,
}

fn default_pair() -> MaterialPair {
    MaterialPair {
        material0: Material {
            c: 2035.0,
            rho: 1128.0,
            alpha: 200.0,
        },
        material1: Material {
            c: 2473.0,
            rho: 1181.0,
            alpha: 60.0,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub medium: BackgroundConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub lens: LensConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default = "default_pair")]
    pub materials: MaterialPair,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub solver: HelmholtzSettings,
    #[serde(default)]
    pub thin_element: ThinElementConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aberrator: Option<AberratorConfig>,
}

impl ScenarioConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            grid: GridConfig::default(),
            medium: BackgroundConfig::default(),
            source: SourceConfig::default(),
            lens: LensConfig::default(),
            target: TargetConfig::default(),
            materials: default_pair(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            solver: HelmholtzSettings::default(),
            thin_element: ThinElementConfig::default(),
            aberrator: None,
        }
    }

    /// Normalized TOML with every key written out.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`dump`](Self::dump).
    pub fn hash(&self) -> ConfigHash {
        Sha256::digest(self.dump().as_bytes()).into()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HoloError::Config(m));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let g = &self.grid;
        if !(g.ndim == 2 || g.ndim == 3) {
            return bad(format!("grid.ndim must be 2 or 3, got {}", g.ndim));
        }
        if !(g.points_per_wavelength >= MIN_POINTS_PER_WAVELENGTH && g.points_per_wavelength.is_finite()) {
            return bad(format!("grid.points_per_wavelength must be at least {MIN_POINTS_PER_WAVELENGTH}"));
        }
        if g.absorber_width == 0 {
            return bad("grid.absorber_width must be positive".into());
        }
        if !(pos(g.transverse_size) && g.source_margin >= 0.0 && g.tail_margin >= 0.0) {
            return bad("grid sizes must be positive".into());
        }
        let m = &self.medium;
        Material::new(m.c0, m.rho0, m.alpha0).map_err(|e| HoloError::Config(format!("medium: {e}")))?;
        if !(pos(self.source.diameter) && pos(self.source.frequency) && pos(self.source.amplitude)) {
            return bad("source diameter, frequency and amplitude must be positive".into());
        }
        if !(pos(self.lens.thickness) && pos(self.lens.diameter)) {
            return bad("lens sizes must be positive".into());
        }
        for (name, size) in [
            ("lens.diameter", self.lens.diameter),
            ("source.diameter", self.source.diameter),
            ("target.width", self.target.width),
        ] {
            if size > g.transverse_size * (1.0 + 1e-12) {
                return bad(format!(
                    "{name} = {size} m exceeds grid.transverse_size = {} m",
                    g.transverse_size
                ));
            }
        }
        let t = &self.target;
        if !(pos(t.width) && pos(t.depth) && t.extraction_offset >= 0.0) {
            return bad("target width and depth must be positive, extraction_offset nonnegative".into());
        }
        if t.extraction_offset >= t.depth {
            return bad("target.extraction_offset must be smaller than target.depth".into());
        }
        match t.kind {
            TargetKind::Image if t.image.is_none() => return bad("target.kind = \"image\" needs target.image".into()),
            TargetKind::TwoSpot if !(pos(t.spot_diameter) && t.spot_separation > t.spot_diameter) => {
                return bad("two-spot target needs 0 < spot_diameter < spot_separation".into());
            }
            _ => {}
        }
        self.materials.validate().map_err(|e| HoloError::Config(format!("materials: {e}")))?;
        self.loss.validate().map_err(|e| HoloError::Config(format!("loss: {e}")))?;
        self.optimizer.adam().validate().map_err(|e| HoloError::Config(format!("optimizer: {e}")))?;
        self.solver.validate().map_err(|e| HoloError::Config(format!("solver: {e}")))?;
        if self.thin_element.iterations == 0 || self.thin_element.lens_material > 1 {
            return bad("thin_element needs iterations >= 1 and lens_material 0 or 1".into());
        }
        if let Some(a) = &self.aberrator {
            if !(a.axial_offset >= 0.0 && a.axial_offset.is_finite()) {
                return bad("aberrator.axial_offset must be nonnegative".into());
            }
        }
        Ok(())
    }

    /// Cell size from the slowest background or lens material.
    pub fn dx(&self) -> f64 {
        let c_min = self.medium.c0.min(self.materials.material0.c).min(self.materials.material1.c);
        c_min / (self.source.frequency * self.grid.points_per_wavelength)
    }

    /// Cell layout. `aberrator_dims` is the grid-order shape of the
    /// aberrator voxel block, if any.
    pub fn layout(&self, aberrator_dims: Option<&[usize]>) -> Result<Layout> {
        let dx = self.dx();
        let g = &self.grid;
        let w = g.absorber_width;
        let cells = |x: f64| (x / dx).round() as usize;
        let interior = (g.transverse_size / dx - 1e-9).ceil() as usize;
        let nt = interior + 2 * w;
        let s = w + ((g.source_margin / dx - 1e-9).ceil() as usize).max(1);
        let n_lens = cells(self.lens.thickness);
        if n_lens < 2 {
            return Err(HoloError::Config(format!(
                "lens.thickness = {} m is below two cells of {dx:.3e} m",
                self.lens.thickness
            )));
        }
        let n_lat = cells(self.lens.diameter).clamp(1, interior);
        let lat_off = (nt - n_lat) / 2;
        let hologram = s + 1 + n_lens;
        let (aberrator, after) = match aberrator_dims {
            Some(d) => {
                if d.len() != g.ndim {
                    return Err(HoloError::Config(format!(
                        "aberrator has {} axes, grid has {}",
                        d.len(),
                        g.ndim
                    )));
                }
                let start = hologram + cells(self.aberrator.as_ref().map_or(0.0, |a| a.axial_offset));
                let mut offset = Vec::with_capacity(d.len());
                for &n in &d[..d.len() - 1] {
                    if n > interior {
                        return Err(HoloError::Config(format!(
                            "aberrator width {n} exceeds the {interior} interior cells"
                        )));
                    }
                    offset.push((nt - n) / 2);
                }
                offset.push(start);
                let depth = d[d.len() - 1];
                (Some(Region::new(&offset, d)), start + depth)
            }
            None => (None, hologram),
        };
        let extraction = after + cells(self.target.extraction_offset);
        let n_axial = extraction + 1 + ((g.tail_margin / dx - 1e-9).ceil() as usize).max(1) + w;
        let target_distance = self.lens.thickness + self.target.depth;
        let as_depth = target_distance - (extraction - s) as f64 * dx;
        if as_depth <= 0.0 {
            return Err(HoloError::Config(format!(
                "target plane ({target_distance} m from the source) lies before the extraction plane"
            )));
        }
        let mut shape = vec![nt; g.ndim];
        shape[g.ndim - 1] = n_axial;
        let mut lens_offset = vec![lat_off; g.ndim];
        lens_offset[g.ndim - 1] = s + 1;
        let mut lens_shape = vec![n_lat; g.ndim];
        lens_shape[g.ndim - 1] = n_lens;
        Ok(Layout {
            dx,
            shape,
            source_index: s,
            lens: Region::new(&lens_offset, &lens_shape),
            hologram_index: hologram,
            aberrator,
            extraction_index: extraction,
            target_distance,
            as_depth,
        })
    }

    /// Target amplitude resampled onto the plane grid.
    pub fn target_image(&self, plane: [usize; 2], dx: f64, base_dir: &Path) -> Result<AmplitudeImage> {
        let t = &self.target;
        match t.kind {
            TargetKind::Glyph => glyph_target(&bird_glyph(), t.width, plane, dx),
            TargetKind::TwoSpot => two_spot(plane, dx, t.spot_separation, t.spot_diameter),
            TargetKind::Image => {
                let path = base_dir.join(t.image.as_ref().expect("validated"));
                let img = read_pgm(&std::fs::read(&path)?)?;
                AmplitudeImage::new(dx, resample(&img, t.width, plane, dx)?)
            }
        }
    }

    /// Assemble the scenario. Relative paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Setup> {
        self.validate()?;
        let aberrator = match &self.aberrator {
            Some(a) => Some(read_voxels(&base_dir.join(&a.file))?),
            None => None,
        };
        let layout = self.layout(aberrator.as_ref().map(|v| v.dims.as_slice()))?;
        let grid = make_grid(&layout.shape, layout.dx, self.grid.absorber_width)?;
        let m = &self.medium;
        let mut base = homogeneous_medium(&grid, m.c0, m.rho0, m.alpha0)?;
        if let (Some(v), Some(r)) = (&aberrator, &layout.aberrator) {
            if (v.dx - grid.dx()).abs() > 1e-9 * grid.dx() {
                return Err(HoloError::Config(format!(
                    "aberrator spacing {} m differs from the grid spacing {} m",
                    v.dx,
                    grid.dx()
                )));
            }
            base = embed_region(&base, &v.block(), &r.offset)?;
        }
        let c_min = base.min_sound_speed().min(self.materials.material0.c).min(self.materials.material1.c);
        grid.check_resolution(c_min, self.source.frequency)?;
        let axis = grid.ndim() - 1;
        let source = SourcePlane::disc(
            &grid,
            axis,
            layout.source_index,
            self.source.diameter,
            self.source.amplitude,
            0.0,
            self.source.frequency,
        )?;
        let plane = grid.plane_shape(axis)?;
        let q0 = self.target_image(plane, grid.dx(), base_dir)?;
        let target = TargetSpec::thresholded(q0, layout.as_depth)?;
        let plan = AsPlan::for_grid(&grid, axis, m.c0, self.source.frequency, EvanescentPolicy::Decay)?;
        let scenario = Scenario::new(
            base,
            source,
            layout.lens.clone(),
            self.materials,
            layout.extraction_index,
            target,
            plan,
            self.solver.clone(),
            self.loss,
        )?;
        Ok(Setup {
            config: self.clone(),
            layout,
            scenario,
            aberrator,
            hash: self.hash(),
        })
    }
}

/// Cell indices of the scenario geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub dx: f64,
    pub shape: Vec<usize>,
    pub source_index: usize,
    pub lens: Region,
    /// First plane after the lens output face.
    pub hologram_index: usize,
    pub aberrator: Option<Region>,
    pub extraction_index: usize,
    /// Source plane to target plane.
    pub target_distance: f64,
    /// Extraction plane to target plane.
    pub as_depth: f64,
}

/// A built scenario with the config that produced it.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ScenarioConfig,
    pub layout: Layout,
    pub scenario: Scenario,
    pub aberrator: Option<VoxelFile>,
    pub hash: ConfigHash,
}

impl Setup {
    /// Source aperture amplitude on the plane grid.
    pub fn source_amplitude(&self) -> Array2<f64> {
        let grid: &Grid = &self.scenario.base.grid;
        let plane = grid.plane_shape(grid.ndim() - 1).expect("valid axis");
        disc_mask(plane, grid.dx(), self.config.source.diameter)
            .mapv(|m| if m { self.config.source.amplitude } else { 0.0 })
    }
}

/// Parse, reject unknown keys and validate.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| HoloError::Config(e.to_string()))?;
    if !table.contains_key("seed") {
        return Err(HoloError::Config("missing required key `seed`".into()));
    }
    let schema = schema_keys();
    check_keys(&table, "", &schema)?;
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| HoloError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Dotted paths of every leaf key, with optional keys filled in.
fn schema_keys() -> BTreeSet<String> {
    let mut full = ScenarioConfig::with_seed(0);
    full.target.image = Some(PathBuf::from("x"));
    full.loss.lambda = Some(0.0);
    full.aberrator = Some(AberratorConfig {
        file: PathBuf::from("x"),
        axial_offset: 0.0,
    });
    let table: toml::Table = toml::from_str(&full.dump()).expect("dump parses");
    let mut out = BTreeSet::new();
    fn walk(t: &toml::Table, prefix: &str, out: &mut BTreeSet<String>) {
        for (k, v) in t {
            let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            if let toml::Value::Table(sub) = v {
                walk(sub, &p, out);
            } else {
                out.insert(p);
            }
        }
    }
    walk(&table, "", &mut out);
    out
}

fn check_keys(t: &toml::Table, prefix: &str, schema: &BTreeSet<String>) -> Result<()> {
    for (k, v) in t {
        let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let section = format!("{p}.");
        let is_section = schema.iter().any(|s| s.starts_with(&section));
        match v {
            toml::Value::Table(sub) if is_section => check_keys(sub, &p, schema)?,
            _ if schema.contains(&p) => {}
            _ => {
                return Err(HoloError::UnknownKey {
                    suggestion: nearest_key(&p, schema),
                    key: p,
                })
            }
        }
    }
    Ok(())
}

fn nearest_key(key: &str, schema: &BTreeSet<String>) -> Option<String> {
    let flat = |s: &str| s.replace('.', "_");
    let last = |s: &str| s.rsplit('.').next().unwrap_or(s).to_string();
    let (k_flat, k_last) = (flat(key), last(key));
    schema
        .iter()
        .map(|cand| {
            let (c_flat, c_last) = (flat(cand), last(cand));
            let d = strsim::levenshtein(&k_flat, &c_flat)
                .min(strsim::levenshtein(&k_last, &c_flat))
                .min(strsim::levenshtein(&k_last, &c_last) + usize::from(key.contains('.') && !same_section(key, cand)));
            (d, cand)
        })
        .min_by_key(|(d, _)| *d)
        .filter(|(d, _)| *d <= 2.max(k_last.len() / 3))
        .map(|(_, c)| c.clone())
}

fn same_section(a: &str, b: &str) -> bool {
    a.rsplit_once('.').map(|x| x.0) == b.rsplit_once('.').map(|x| x.0)
}
