//! Full forward model: lens medium, Helmholtz solve, plane extraction and
//! angular-spectrum propagation to the target.

use ndarray::{Array3, Axis};

use crate::error::{HoloError, Result, SolveStage};
use crate::grid::{embed_region, MaterialBlock, Medium, PlaneField, Region, SourcePlane, C64};
use crate::helmholtz::{HelmholtzOperator, HelmholtzSettings};
use crate::material::{mixture, DesignVariable, MaterialPair};
use crate::objective::{cnr, correlation, loss, LossConfig, TargetSpec};
use crate::propagation::AsPlan;

/// Everything needed to map a lens design to a target-plane field.
///
/// Propagation runs along the last grid axis. `base` holds the background
/// and any aberrator; the lens region is overwritten per design.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub base: Medium,
    pub source: SourcePlane,
    pub lens: Region,
    pub pair: MaterialPair,
    pub extraction_index: usize,
    pub target: TargetSpec,
    pub plan: AsPlan,
    pub settings: HelmholtzSettings,
    pub loss: LossConfig,
}

/// Forward solve kept for the adjoint pass.
pub struct ForwardSolution {
    pub op: HelmholtzOperator,
    pub u: Array3<C64>,
    /// Complex field on the target plane.
    pub q: PlaneField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub correlation: f64,
    pub cnr: f64,
    pub loss: f64,
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base: Medium,
        source: SourcePlane,
        lens: Region,
        pair: MaterialPair,
        extraction_index: usize,
        target: TargetSpec,
        plan: AsPlan,
        settings: HelmholtzSettings,
        loss: LossConfig,
    ) -> Result<Self> {
        let sc = Self {
            base,
            source,
            lens,
            pair,
            extraction_index,
            target,
            plan,
            settings,
            loss,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn axis(&self) -> usize {
        self.base.grid.ndim() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let grid = &self.base.grid;
        let axis = self.axis();
        self.base.props.validate()?;
        self.pair.validate()?;
        self.settings.validate()?;
        self.loss.validate()?;
        if self.source.axis != axis {
            return Err(HoloError::InvalidSource("the source plane must be perpendicular to the last axis".into()));
        }
        grid.check_interior(axis, self.source.index)?;
        grid.check_interior(axis, self.extraction_index)?;
        self.lens.storage(grid)?;
        let w = grid.absorber_width();
        for (i, (&o, &n)) in self.lens.offset.iter().zip(&self.lens.shape).enumerate() {
            if o < w || o + n + w > grid.shape()[i] {
                return Err(HoloError::InvalidArgument(format!(
                    "lens region overlaps the absorbing layer on axis {i}"
                )));
            }
        }
        let (lo, n) = (self.lens.offset[axis], self.lens.shape[axis]);
        if (lo..lo + n).contains(&self.source.index) {
            return Err(HoloError::InvalidArgument("the lens region must not contain the source plane".into()));
        }
        let plane = grid.plane_shape(axis)?;
        if self.target.q0.shape() != plane {
            return Err(HoloError::ShapeMismatch {
                expected: plane.to_vec(),
                found: self.target.q0.shape().to_vec(),
            });
        }
        if self.plan.shape() != plane || (self.plan.dx() - grid.dx()).abs() > 1e-12 * grid.dx() {
            return Err(HoloError::InvalidArgument("propagation plan does not match the grid planes".into()));
        }
        if (self.plan.frequency() - self.source.frequency).abs() > 1e-9 * self.source.frequency {
            return Err(HoloError::InvalidArgument("propagation plan and source frequency differ".into()));
        }
        Ok(())
    }

    /// Lens region in storage layout: `(offset, dims)`.
    pub fn lens_storage(&self) -> ([usize; 3], [usize; 3]) {
        self.lens.storage(&self.base.grid).expect("validated lens region")
    }

    pub fn initial_design(&self, seed: u64) -> Result<DesignVariable> {
        DesignVariable::random(seed, self.pair, self.lens.clone())
    }

    pub fn medium_with(&self, block: &MaterialBlock) -> Result<Medium> {
        embed_region(&self.base, block, &self.lens.offset)
    }

    pub fn medium(&self, design: &DesignVariable) -> Result<Medium> {
        if design.region != self.lens {
            return Err(HoloError::InvalidArgument("design region differs from the scenario lens".into()));
        }
        self.medium_with(&mixture(design))
    }

    pub fn solve(&self, medium: &Medium) -> Result<ForwardSolution> {
        let op = HelmholtzOperator::new(medium, self.source.frequency, &self.settings)?;
        let rhs = op.source_rhs(&self.source)?;
        let u = op.solve(&rhs, SolveStage::Forward)?.u;
        let q = self.project(&op, &u)?;
        Ok(ForwardSolution { op, u, q })
    }

    /// `A_d S_r` applied to the pressure `sqrt(rho) u`.
    pub(crate) fn project(&self, op: &HelmholtzOperator, u: &Array3<C64>) -> Result<PlaneField> {
        let grid = &self.base.grid;
        let a3 = grid.axis3(self.axis())?;
        let k = self.extraction_index;
        let plane = &u.index_axis(Axis(a3), k) * &op.sqrt_rho().index_axis(Axis(a3), k);
        let p = PlaneField::new(grid.dx(), plane)?;
        self.plan.propagate(&p, self.target.depth)
    }

    pub fn target_field(&self, medium: &Medium) -> Result<PlaneField> {
        Ok(self.solve(medium)?.q)
    }

    pub fn evaluate(&self, medium: &Medium) -> Result<Evaluation> {
        let q = self.target_field(medium)?.amplitude();
        Ok(Evaluation {
            correlation: correlation(&q, &self.target.q0)?,
            cnr: cnr(&q, &self.target.mask)?,
            loss: loss(&q, &self.target, &self.loss)?,
        })
    }
}
