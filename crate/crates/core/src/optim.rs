//! Adam descent on the design variable, with checkpoints.

use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result};
use crate::gradient::loss_and_gradient;
use crate::material::{binarization_error, binarization_fraction, DesignVariable};
use crate::objective::{loss, LossConfig};
use crate::scenario::Scenario;

/// Iterations that are always checkpointed when the run reaches them.
pub const NAMED_CHECKPOINTS: [usize; 5] = [30, 50, 110, 190, 450];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub n_iterations: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.9,
            learning_rate: 0.4,
            epsilon: 1e-8,
            n_iterations: 500,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(HoloError::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(HoloError::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(HoloError::InvalidArgument("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub gamma: Array3<f64>,
    pub first_moment: Array3<f64>,
    pub second_moment: Array3<f64>,
    pub step_count: usize,
    pub loss_history: Vec<f64>,
}

impl OptimState {
    pub fn new(gamma: Array3<f64>) -> Self {
        Self {
            first_moment: Array3::zeros(gamma.raw_dim()),
            second_moment: Array3::zeros(gamma.raw_dim()),
            gamma,
            step_count: 0,
            loss_history: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update, descending along `gradient`.
pub fn adam_step(state: &OptimState, gradient: &Array3<f64>, cfg: &AdamConfig) -> Result<OptimState> {
    if gradient.shape() != state.gamma.shape() {
        return Err(HoloError::ShapeMismatch {
            expected: state.gamma.shape().to_vec(),
            found: gradient.shape().to_vec(),
        });
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(HoloError::NonFinite("gradient"));
    }
    let t = state.step_count + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let mut next = state.clone();
    next.step_count = t;
    Zip::from(&mut next.gamma)
        .and(&mut next.first_moment)
        .and(&mut next.second_moment)
        .and(gradient)
        .for_each(|x, m, v, &g| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *x -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        });
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Number of Adam steps taken before the snapshot.
    pub iteration: usize,
    pub gamma: Array3<f64>,
    pub loss: f64,
    pub binarization_error: Option<f64>,
}

fn is_checkpoint(i: usize, every: usize) -> bool {
    (every > 0 && i.is_multiple_of(every)) || NAMED_CHECKPOINTS.contains(&i)
}

#[derive(Debug)]
pub struct OptimizeOutput {
    pub design: DesignVariable,
    pub checkpoints: Vec<Checkpoint>,
    pub state: OptimState,
}

/// Run `cfg.n_iterations` Adam steps from `initial`.
///
/// Checkpoints are taken after every `checkpoint_every` steps, at the named
/// iterations and after the last step. On a solver failure the error is
/// returned together with the checkpoints written so far.
pub fn optimize(
    initial: &DesignVariable,
    scenario: &Scenario,
    cfg: &AdamConfig,
    checkpoint_every: usize,
) -> std::result::Result<OptimizeOutput, (HoloError, Vec<Checkpoint>)> {
    optimize_with(initial, scenario, cfg, checkpoint_every, |_, _| {})
}

/// [`optimize`] with a callback invoked on each new checkpoint.
pub fn optimize_with(
    initial: &DesignVariable,
    scenario: &Scenario,
    cfg: &AdamConfig,
    checkpoint_every: usize,
    mut on_checkpoint: impl FnMut(&Checkpoint, &OptimState),
) -> std::result::Result<OptimizeOutput, (HoloError, Vec<Checkpoint>)> {
    let mut checkpoints = Vec::new();
    if let Err(e) = cfg.validate() {
        return Err((e, checkpoints));
    }
    let loss_cfg = scenario.loss;
    let mut state = OptimState::new(initial.gamma.clone());
    let mut design = initial.clone();
    for it in 0..cfg.n_iterations {
        let (value, grad) = match loss_and_gradient(&design, scenario, &loss_cfg) {
            Ok(v) => v,
            Err(e) => return Err((e, checkpoints)),
        };
        state.loss_history.push(value);
        if it > 0 && is_checkpoint(it, checkpoint_every) {
            let cp = Checkpoint {
                iteration: it,
                gamma: state.gamma.clone(),
                loss: value,
                binarization_error: None,
            };
            on_checkpoint(&cp, &state);
            checkpoints.push(cp);
        }
        state = match adam_step(&state, &grad, cfg) {
            Ok(s) => s,
            Err(e) => return Err((e, checkpoints)),
        };
        design = match design.with_gamma(state.gamma.clone()) {
            Ok(d) => d,
            Err(e) => return Err((e, checkpoints)),
        };
    }
    if cfg.n_iterations > 0 {
        let value = match final_loss(&design, scenario, &loss_cfg) {
            Ok(v) => v,
            Err(e) => return Err((e, checkpoints)),
        };
        state.loss_history.push(value);
        let cp = Checkpoint {
            iteration: cfg.n_iterations,
            gamma: state.gamma.clone(),
            loss: value,
            binarization_error: None,
        };
        on_checkpoint(&cp, &state);
        checkpoints.push(cp);
    }
    Ok(OptimizeOutput {
        design,
        checkpoints,
        state,
    })
}

fn final_loss(design: &DesignVariable, scenario: &Scenario, cfg: &LossConfig) -> Result<f64> {
    let q = scenario.target_field(&scenario.medium(design)?)?.amplitude();
    loss(&q, &scenario.target, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinarizationPoint {
    pub iteration: usize,
    pub binarization_error: f64,
    pub fraction: f64,
}

/// Binarization error and saturated fraction per checkpoint.
pub fn binarization_trajectory(
    checkpoints: &[Checkpoint],
    initial: &DesignVariable,
    scenario: &Scenario,
) -> Result<Vec<BinarizationPoint>> {
    if checkpoints.is_empty() {
        return Err(HoloError::InvalidArgument("no checkpoints".into()));
    }
    checkpoints
        .iter()
        .map(|cp| {
            let d = initial.with_gamma(cp.gamma.clone())?;
            Ok(BinarizationPoint {
                iteration: cp.iteration,
                binarization_error: binarization_error(&d, scenario)?,
                fraction: binarization_fraction(&cp.gamma),
            })
        })
        .collect()
}
