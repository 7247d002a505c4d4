//! Sigmoid mixture of two printable materials, thresholding, and the
//! binarization statistics used to follow a design run.

use ndarray::{Array3, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result};
use crate::grid::{Material, MaterialBlock, Region};
use crate::objective::correlation;
use crate::scenario::Scenario;

/// Half-width of the uniform distribution used to initialize `gamma`.
pub const INIT_SPREAD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialPair {
    pub material0: Material,
    pub material1: Material,
}

impl MaterialPair {
    pub fn new(material0: Material, material1: Material) -> Result<Self> {
        let pair = Self { material0, material1 };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        self.material0.validate()?;
        self.material1.validate()?;
        if self.material0 == self.material1 {
            return Err(HoloError::InvalidMedium("the two materials are identical".into()));
        }
        Ok(())
    }

    pub fn get(&self, index: u8) -> Material {
        if index == 0 {
            self.material0
        } else {
            self.material1
        }
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// `(m1 - m0) sigma(gamma) + m0`
pub fn mix(m0: f64, m1: f64, gamma: f64) -> f64 {
    (m1 - m0) * sigmoid(gamma) + m0
}

/// Real design field over the lens region, in storage layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVariable {
    pub gamma: Array3<f64>,
    pub pair: MaterialPair,
    pub region: Region,
}

impl DesignVariable {
    pub fn new(gamma: Array3<f64>, pair: MaterialPair, region: Region) -> Result<Self> {
        pair.validate()?;
        let expected = region_dims3(&region);
        if gamma.shape() != expected {
            return Err(HoloError::ShapeMismatch {
                expected: expected.to_vec(),
                found: gamma.shape().to_vec(),
            });
        }
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(HoloError::NonFinite("design variable"));
        }
        Ok(Self { gamma, pair, region })
    }

    /// Uniform design with every voxel at `value`.
    pub fn uniform(value: f64, pair: MaterialPair, region: Region) -> Result<Self> {
        Self::new(Array3::from_elem(region_dims3(&region), value), pair, region)
    }

    /// I.i.d. uniform initialization in `[-INIT_SPREAD, INIT_SPREAD]`.
    pub fn random(seed: u64, pair: MaterialPair, region: Region) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = Array3::from_shape_simple_fn(region_dims3(&region), || {
            rng.random_range(-INIT_SPREAD..=INIT_SPREAD)
        });
        Self::new(gamma, pair, region)
    }

    pub fn with_gamma(&self, gamma: Array3<f64>) -> Result<Self> {
        Self::new(gamma, self.pair, self.region.clone())
    }
}

pub(crate) fn region_dims3(region: &Region) -> [usize; 3] {
    let mut d = [1; 3];
    let n = region.shape.len().min(3);
    d[3 - n..].copy_from_slice(&region.shape[region.shape.len() - n..]);
    d
}

/// Per-voxel properties `theta = (m1 - m0) sigma(gamma) + m0` for c, rho and
/// alpha, all driven by the same `gamma`.
pub fn mixture(design: &DesignVariable) -> MaterialBlock {
    let (m0, m1) = (design.pair.material0, design.pair.material1);
    MaterialBlock {
        c: design.gamma.mapv(|g| mix(m0.c, m1.c, g)),
        rho: design.gamma.mapv(|g| mix(m0.rho, m1.rho, g)),
        alpha: design.gamma.mapv(|g| mix(m0.alpha, m1.alpha, g)),
    }
}

/// `d theta / d gamma` for c, rho and alpha.
pub fn mixture_derivative(design: &DesignVariable) -> [Array3<f64>; 3] {
    let (m0, m1) = (design.pair.material0, design.pair.material1);
    let ds = design.gamma.mapv(sigmoid_derivative);
    [
        ds.mapv(|d| (m1.c - m0.c) * d),
        ds.mapv(|d| (m1.rho - m0.rho) * d),
        ds.mapv(|d| (m1.alpha - m0.alpha) * d),
    ]
}

/// Chain `(c_bar, rho_bar, alpha_bar)` through the mixture to `gamma_bar`.
pub fn mixture_vjp(design: &DesignVariable, bar: [&Array3<f64>; 3]) -> Array3<f64> {
    let (m0, m1) = (design.pair.material0, design.pair.material1);
    Zip::from(&design.gamma)
        .and(bar[0])
        .and(bar[1])
        .and(bar[2])
        .map_collect(|&g, &bc, &br, &ba| {
            sigmoid_derivative(g) * ((m1.c - m0.c) * bc + (m1.rho - m0.rho) * br + (m1.alpha - m0.alpha) * ba)
        })
}

/// Material index per voxel: 1 where `gamma > threshold`.
pub fn threshold_indices(design: &DesignVariable, threshold: f64) -> Array3<u8> {
    design.gamma.mapv(|g| u8::from(g > threshold))
}

/// Two-valued medium: material1 where `gamma > threshold`, material0 elsewhere.
pub fn binarize(design: &DesignVariable, threshold: f64) -> MaterialBlock {
    block_from_indices(&threshold_indices(design, threshold), &design.pair)
}

pub fn block_from_indices(indices: &Array3<u8>, pair: &MaterialPair) -> MaterialBlock {
    let pick = |f: fn(&Material) -> f64| indices.mapv(|i| f(&pair.get(i)));
    MaterialBlock {
        c: pick(|m| m.c),
        rho: pick(|m| m.rho),
        alpha: pick(|m| m.alpha),
    }
}

/// Saturated design (`gamma = -+big`) that reproduces a thresholded one.
pub fn saturate(design: &DesignVariable, threshold: f64, big: f64) -> Result<DesignVariable> {
    design.with_gamma(design.gamma.mapv(|g| if g > threshold { big } else { -big }))
}

/// Fraction of voxels with `|sigma(gamma) - 0.5| > 0.45`.
pub fn binarization_fraction(gamma: &Array3<f64>) -> f64 {
    if gamma.is_empty() {
        return 0.0;
    }
    let n = gamma.iter().filter(|&&g| (sigmoid(g) - 0.5).abs() > 0.45).count();
    n as f64 / gamma.len() as f64
}

/// `|corr(q_cont, q0) - corr(q_bin, q0)|` from two full forward solves.
pub fn binarization_error(design: &DesignVariable, scenario: &Scenario) -> Result<f64> {
    let cont = scenario.medium_with(&mixture(design))?;
    let bin = scenario.medium_with(&binarize(design, 0.0))?;
    if cont.props == bin.props {
        return Ok(0.0);
    }
    let q0 = &scenario.target.q0;
    let qc = scenario.target_field(&cont)?.amplitude();
    let qb = scenario.target_field(&bin)?.amplitude();
    Ok((correlation(&qc, q0)? - correlation(&qb, q0)?).abs())
}
