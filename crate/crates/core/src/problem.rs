//! A fully configured design problem and its forward evaluation.

use rayon::prelude::*;

use crate::alopt::{objective_value, ObjectiveKind, OptimizerConfig};
use crate::criteria::{
    fatigue_params, von_mises, CycleEvaluation, PlaneGrid, StressCriterion,
};
use crate::field::{build_filter, DesignField, FilterOperator, Projection};
use crate::homogenize::{CellSolution, HomogenizedTensor, Homogenizer, LoadCase, Simp, SolverChoice, StressCycle};
use crate::material::Material;
use crate::mesh::RucMesh;
use crate::{Error, Result};

pub use crate::criteria::Criterion;

/// Density above which an element counts as solid when reporting stresses.
pub const SOLID_THRESHOLD: f64 = 0.5;

/// Everything needed to evaluate a design: discretization, material,
/// objective, constraints and loads.
#[derive(Debug, Clone)]
pub struct Problem {
    pub homogenizer: Homogenizer,
    pub filter: FilterOperator,
    pub material: Material,
    pub simp: Simp,
    pub eta: f64,
    pub objective: ObjectiveKind,
    pub volume_fraction: f64,
    /// Criterion used for constraints, or for reporting when unconstrained.
    pub criterion: StressCriterion,
    /// Whether stress constraints enter the AL function.
    pub stress_constrained: bool,
    pub loads: Vec<LoadCase>,
}

/// Forward quantities at one design.
pub struct Evaluation {
    pub field: DesignField,
    pub solution: CellSolution,
    pub tensor: HomogenizedTensor,
    /// Raw objective `c`.
    pub objective: f64,
    /// Volume fraction of the projected design.
    pub volume: f64,
    /// Stress cycles, one per load case.
    pub cycles: Vec<StressCycle>,
    /// Criterion values and gradients, `[load][element]`.
    pub constraints: Vec<Vec<CycleEvaluation>>,
}

impl Problem {
    /// Builds the problem. `criterion = None` gives a compliance-driven run
    /// (von Mises is still evaluated for reporting).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: RucMesh,
        material: Material,
        objective: ObjectiveKind,
        volume_fraction: f64,
        criterion: Option<Criterion>,
        loads: Vec<LoadCase>,
        config: &OptimizerConfig,
        solver: SolverChoice,
    ) -> Result<Self> {
        config.validate()?;
        if !(volume_fraction > 0.0 && volume_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "volume fraction must lie in (0, 1], got {volume_fraction}"
            )));
        }
        if loads.is_empty() {
            return Err(Error::InvalidInput("at least one load case is required".into()));
        }
        for l in &loads {
            l.validate(mesh.dim())?;
        }
        let dim = mesh.dim();
        let filter = build_filter(
            &mesh,
            config.filter_radius_cells * mesh.cell_size(),
            config.filter_exponent,
            true,
        )?;
        let homogenizer = Homogenizer::new(mesh, &material, solver)?;
        let grid = || PlaneGrid::default_for(dim);
        let (crit, constrained) = match criterion {
            None => (StressCriterion::von_mises(material.yield_mpa), false),
            Some(Criterion::VonMises) => (StressCriterion::von_mises(material.yield_mpa), true),
            Some(Criterion::Fatigue(f)) => (
                StressCriterion::fatigue(
                    fatigue_params(f, material.f_minus1_mpa, material.t_minus1_mpa)?,
                    grid(),
                ),
                true,
            ),
        };
        Ok(Problem {
            homogenizer,
            filter,
            material,
            simp: config.simp,
            eta: config.eta,
            objective,
            volume_fraction,
            criterion: crit,
            stress_constrained: constrained,
            loads,
        })
    }

    /// Replaces the critical-plane grid of a fatigue criterion.
    pub fn with_plane_grid(mut self, grid: PlaneGrid) -> Self {
        if let StressCriterion::Fatigue { params, .. } = self.criterion {
            self.criterion = StressCriterion::fatigue(params, grid);
        }
        self
    }

    pub fn mesh(&self) -> &RucMesh {
        self.homogenizer.mesh()
    }

    pub fn num_elements(&self) -> usize {
        self.mesh().num_elements()
    }

    /// Number of stress constraints (`elements x load cases`).
    pub fn num_stress_constraints(&self) -> usize {
        self.num_elements() * self.loads.len()
    }

    /// `|c|` of the fully solid cell, used to normalize the objective.
    pub fn objective_scale(&self) -> Result<f64> {
        let solid = HomogenizedTensor {
            dim: self.mesh().dim(),
            c: self.material.constitutive(self.mesh().dim()),
        };
        let c = objective_value(&solid, self.objective)?.abs();
        Ok(if c > 1e-12 { c } else { 1.0 })
    }

    pub fn uses_isotropy(&self) -> bool {
        self.objective == ObjectiveKind::PoissonMin
    }

    pub fn design_field(&self, rho: &[f64], beta: f64) -> Result<DesignField> {
        DesignField::new(
            &self.filter,
            rho.to_vec(),
            Projection {
                beta,
                eta: self.eta,
            },
        )
    }

    /// Filters, projects, homogenizes and evaluates the stress criterion.
    pub fn evaluate(&self, rho: &[f64], beta: f64) -> Result<Evaluation> {
        let field = self.design_field(rho, beta)?;
        self.evaluate_field(field)
    }

    pub fn evaluate_field(&self, field: DesignField) -> Result<Evaluation> {
        let solution = self.homogenizer.solve_unit_cells(&field.rho_bar, &self.simp)?;
        let tensor = self.homogenizer.homogenized_matrix(&solution);
        let objective = objective_value(&tensor, self.objective)?;
        let volume = field.rho_bar.iter().sum::<f64>() / field.rho_bar.len() as f64;
        let cycles: Vec<StressCycle> = self
            .loads
            .iter()
            .map(|l| self.homogenizer.element_stress_cycle(&solution, l))
            .collect();
        let constraints = cycles
            .iter()
            .map(|c| {
                (0..c.num_elements())
                    .into_par_iter()
                    .map(|e| self.criterion.evaluate(c.mean_of(e), c.amp_of(e)))
                    .collect()
            })
            .collect();
        Ok(Evaluation {
            field,
            solution,
            tensor,
            objective,
            volume,
            cycles,
            constraints,
        })
    }
}

impl Evaluation {
    /// Relaxed constraint values `m_e (g^3 + g)`, load-major.
    pub fn relaxed_constraints(&self) -> Vec<f64> {
        self.constraints
            .iter()
            .flat_map(|per_load| {
                per_load
                    .iter()
                    .zip(&self.solution.scale)
                    .map(|(c, m)| m * (c.g * c.g * c.g + c.g))
            })
            .collect()
    }

    /// Largest relaxed constraint value.
    pub fn max_relaxed_constraint(&self) -> f64 {
        self.relaxed_constraints()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest criterion value `g` over solid elements.
    pub fn max_solid_g(&self) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for per_load in &self.constraints {
            for (c, r) in per_load.iter().zip(&self.field.rho_bar) {
                if *r >= SOLID_THRESHOLD {
                    best = best.max(c.g);
                }
            }
        }
        best
    }

    /// Peak von Mises stress over the cycle in element `e` for load `l`.
    pub fn element_von_mises(&self, l: usize, e: usize) -> f64 {
        let c = &self.cycles[l];
        let (m, a) = (c.mean_of(e), c.amp_of(e));
        let plus: Vec<f64> = m.iter().zip(a).map(|(x, y)| x + y).collect();
        let minus: Vec<f64> = m.iter().zip(a).map(|(x, y)| x - y).collect();
        von_mises(&plus).max(von_mises(&minus))
    }

    /// Largest von Mises stress over solid elements and all load cases (MPa).
    pub fn max_solid_von_mises(&self) -> f64 {
        let mut best = 0.0f64;
        for l in 0..self.cycles.len() {
            for (e, r) in self.field.rho_bar.iter().enumerate() {
                if *r >= SOLID_THRESHOLD {
                    best = best.max(self.element_von_mises(l, e));
                }
            }
        }
        best
    }

    /// Criterion values `g`, load-major.
    pub fn g_values(&self) -> Vec<f64> {
        self.constraints
            .iter()
            .flat_map(|p| p.iter().map(|c| c.g))
            .collect()
    }
}
