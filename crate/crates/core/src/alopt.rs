//! Augmented Lagrangian outer loop with an MMA inner solver.
//!
//! The AL function is
//! `J = c/|c0| + P_s/N_s + P_v + P_iso`, with each penalty
//! `P = sum lambda h + mu/2 h^2` over its clamped equality constraints
//! `h = max(value, -lambda/mu)`.

use nalgebra::DMatrix;

use crate::adjoint::al_gradient;
use crate::homogenize::{HomogenizedTensor, Simp};
use crate::mesh::{Dim, RucMesh};
use crate::problem::{Evaluation, Problem};
use crate::{Error, Result};

/// Design objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveKind {
    /// Maximize the bulk modulus: `c = -sum_{i,j <= D} C_ij`.
    BulkMax,
    /// Maximize the shear moduli: `c = -sum_{i > D} C_ii`.
    ShearMax,
    /// Minimize the Poisson's ratio: `c = C_12 / C_11`.
    PoissonMin,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::BulkMax => "bulk",
            ObjectiveKind::ShearMax => "shear",
            ObjectiveKind::PoissonMin => "poisson",
        }
    }
}

fn spatial_of(t: &HomogenizedTensor) -> usize {
    t.dim.spatial()
}

/// Raw objective value of a homogenized tensor.
pub fn objective_value(t: &HomogenizedTensor, kind: ObjectiveKind) -> Result<f64> {
    let d = spatial_of(t);
    let c = &t.c;
    Ok(match kind {
        ObjectiveKind::BulkMax => -(0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| c[(i, j)])
            .sum::<f64>(),
        ObjectiveKind::ShearMax => -(d..c.nrows()).map(|i| c[(i, i)]).sum::<f64>(),
        ObjectiveKind::PoissonMin => {
            if !(c[(0, 0)] > 0.0) {
                return Err(Error::NonFinite(format!(
                    "Poisson objective needs C11 > 0, got {}",
                    c[(0, 0)]
                )));
            }
            c[(0, 1)] / c[(0, 0)]
        }
    })
}

/// `dc/dC` as a matrix over the entries of `C`.
pub fn objective_derivative(t: &HomogenizedTensor, kind: ObjectiveKind) -> DMatrix<f64> {
    let d = spatial_of(t);
    let n = t.c.nrows();
    let mut g = DMatrix::zeros(n, n);
    match kind {
        ObjectiveKind::BulkMax => {
            for i in 0..d {
                for j in 0..d {
                    g[(i, j)] = -1.0;
                }
            }
        }
        ObjectiveKind::ShearMax => {
            for i in d..n {
                g[(i, i)] = -1.0;
            }
        }
        ObjectiveKind::PoissonMin => {
            let c11 = t.c[(0, 0)];
            g[(0, 1)] = 1.0 / c11;
            g[(0, 0)] = -t.c[(0, 1)] / (c11 * c11);
        }
    }
    g
}

/// Isotropic target built from `C`.
pub fn isotropic_target(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    let mut t = DMatrix::zeros(n, n);
    if n == 3 {
        let diag = 0.5 * (c[(0, 0)] + c[(1, 1)]);
        t[(0, 0)] = diag;
        t[(1, 1)] = diag;
        t[(0, 1)] = c[(0, 1)];
        t[(1, 0)] = c[(1, 0)];
        t[(2, 2)] = 0.5 * (diag - c[(0, 1)]);
    } else {
        let diag = (c[(0, 0)] + c[(1, 1)] + c[(2, 2)]) / 3.0;
        let off = (c[(0, 1)] + c[(0, 2)] + c[(1, 2)]) / 3.0;
        for i in 0..3 {
            for j in 0..3 {
                t[(i, j)] = if i == j { diag } else { off };
            }
        }
        for i in 3..6 {
            t[(i, i)] = 0.5 * (diag - off);
        }
    }
    t
}

/// Relative floor of the isotropy misfit denominators, as a fraction of `C_iso_11`.
pub const ISOTROPY_FLOOR: f64 = 0.1;

/// Denominators `C_iso_ij^2 + (floor C_iso_11)^2`.
fn isotropy_denominators(t: &DMatrix<f64>) -> DMatrix<f64> {
    let f = ISOTROPY_FLOOR * t[(0, 0)];
    t.map(|v| v * v + f * f)
}

/// `sum_ij (C_ij - C_iso_ij)^2 / d_ij`.
pub fn isotropy_misfit(c: &DMatrix<f64>) -> f64 {
    let t = isotropic_target(c);
    let d = isotropy_denominators(&t);
    let r = c - &t;
    r.iter().zip(d.iter()).map(|(r, d)| r * r / d).sum()
}

/// Gradient of [`isotropy_misfit`] with respect to the entries of `C`.
pub fn isotropy_misfit_gradient(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    let t = isotropic_target(c);
    let d = isotropy_denominators(&t);
    let r = c - &t;
    // Adjoint of the linear target map, applied to `w`.
    let target_adjoint = |w: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(n, n);
        for k in 0..n {
            for l in 0..n {
                let mut unit = DMatrix::zeros(n, n);
                unit[(k, l)] = 1.0;
                out[(k, l)] = isotropic_target(&unit).dot(w);
            }
        }
        out
    };
    let a = r.zip_map(&d, |r, d| 2.0 * r / d);
    let b = r.zip_map(&d, |r, d| r * r / (d * d));
    // d d_ij / d t_ij = 2 t_ij, plus the floor term through t_11.
    let floor_sq = ISOTROPY_FLOOR * ISOTROPY_FLOOR;
    let mut w = a.clone() + b.zip_map(&t, |b, t| 2.0 * b * t);
    w[(0, 0)] += 2.0 * floor_sq * t[(0, 0)] * b.sum();
    a - target_adjoint(&w)
}

/// Multipliers and penalty of the AL method.
#[derive(Debug, Clone, PartialEq)]
pub struct ALState {
    pub lambda_s: Vec<f64>,
    pub lambda_v: f64,
    pub lambda_iso: f64,
    pub mu: f64,
    /// Outer iteration index.
    pub k: usize,
}

impl ALState {
    pub fn new(num_stress: usize, config: &OptimizerConfig) -> Self {
        ALState {
            lambda_s: vec![config.lambda0; num_stress],
            lambda_v: config.lambda0,
            lambda_iso: config.lambda0,
            mu: config.mu0,
            k: 0,
        }
    }
}

/// Stress penalty `P_s = sum lambda h + mu/2 h^2` with
/// `h = max(m (g^3 + g), -lambda/mu)`; returns `(P_s, h)`.
pub fn stress_penalty(scale: &[f64], g: &[f64], lambda: &[f64], mu: f64) -> (f64, Vec<f64>) {
    let ne = scale.len();
    let h: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(j, g)| (scale[j % ne] * (g * g * g + g)).max(-lambda[j] / mu))
        .collect();
    let p = h
        .iter()
        .zip(lambda)
        .map(|(h, l)| l * h + 0.5 * mu * h * h)
        .sum();
    (p, h)
}

/// Volume penalty with `h_v = max(volume / V_f - 1, -lambda_v/mu)`.
pub fn volume_penalty(volume: f64, volume_fraction: f64, lambda_v: f64, mu: f64) -> (f64, f64) {
    let h = (volume / volume_fraction - 1.0).max(-lambda_v / mu);
    (lambda_v * h + 0.5 * mu * h * h, h)
}

/// Isotropy penalty with `h_iso = max(misfit, -lambda_iso/mu)`.
pub fn isotropy_penalty(c: &DMatrix<f64>, lambda_iso: f64, mu: f64) -> (f64, f64) {
    let h = isotropy_misfit(c).max(-lambda_iso / mu);
    (lambda_iso * h + 0.5 * mu * h * h, h)
}

/// `lambda += mu h`, then `mu = min(alpha mu, mu_max)`.
pub fn update_multipliers(
    state: &mut ALState,
    h_s: &[f64],
    h_v: f64,
    h_iso: f64,
    alpha: f64,
    mu_max: f64,
) {
    let mu = state.mu;
    for (l, h) in state.lambda_s.iter_mut().zip(h_s) {
        *l += mu * h;
    }
    state.lambda_v += mu * h_v;
    state.lambda_iso += mu * h_iso;
    state.mu = (alpha * mu).min(mu_max);
    state.k += 1;
}

/// Terms of the AL function at one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AlTerms {
    /// `c / |c0|`.
    pub objective: f64,
    /// `P_s / N_s`.
    pub stress: f64,
    pub volume: f64,
    pub isotropy: f64,
    pub h_s: Vec<f64>,
    pub h_v: f64,
    pub h_iso: f64,
}

impl AlTerms {
    pub fn total(&self) -> f64 {
        self.objective + self.stress + self.volume + self.isotropy
    }
}

/// Evaluates the AL function terms; `normalization` is `|c0|`.
pub fn al_terms(problem: &Problem, eval: &Evaluation, state: &ALState, normalization: f64) -> AlTerms {
    let (stress, h_s) = if problem.stress_constrained {
        let (p, h) = stress_penalty(&eval.solution.scale, &eval.g_values(), &state.lambda_s, state.mu);
        (p / problem.num_stress_constraints() as f64, h)
    } else {
        (0.0, Vec::new())
    };
    let (volume, h_v) = volume_penalty(eval.volume, problem.volume_fraction, state.lambda_v, state.mu);
    let (isotropy, h_iso) = if problem.uses_isotropy() {
        isotropy_penalty(&eval.tensor.c, state.lambda_iso, state.mu)
    } else {
        (0.0, 0.0)
    };
    AlTerms {
        objective: eval.objective / normalization,
        stress,
        volume,
        isotropy,
        h_s,
        h_v,
        h_iso,
    }
}

/// Optimizer parameters; [`OptimizerConfig::defaults`] gives the reference values.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub simp: Simp,
    pub beta0: f64,
    pub beta_max: f64,
    /// AL steps between unit increments of `beta`.
    pub beta_interval: usize,
    pub eta: f64,
    pub mu0: f64,
    pub mu_max: f64,
    pub lambda0: f64,
    /// Penalty growth factor.
    pub alpha: f64,
    pub filter_exponent: f64,
    /// Filter radius in element widths.
    pub filter_radius_cells: f64,
    /// Design change tolerance.
    pub design_tol: f64,
    /// Constraint tolerance.
    pub constraint_tol: f64,
    pub move_limit: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl OptimizerConfig {
    pub fn defaults(dim: Dim) -> Self {
        OptimizerConfig {
            simp: Simp::default(),
            beta0: 1.0,
            beta_max: 10.0,
            beta_interval: 5,
            eta: 0.5,
            mu0: match dim {
                Dim::Two => 10.0,
                Dim::Three => 100.0,
            },
            mu_max: 10_000.0,
            lambda0: 0.0,
            alpha: 1.1,
            filter_exponent: 3.5,
            filter_radius_cells: 2.5,
            design_tol: 0.005,
            constraint_tol: 0.005,
            move_limit: 0.15,
            max_outer: 100,
            max_inner: 15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.simp.validate()?;
        let positive = [
            ("beta_max", self.beta_max),
            ("mu0", self.mu0),
            ("mu_max", self.mu_max),
            ("filter_radius_cells", self.filter_radius_cells),
            ("design_tol", self.design_tol),
            ("constraint_tol", self.constraint_tol),
            ("move_limit", self.move_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.beta0 >= 0.0 && self.beta0 <= self.beta_max) {
            return Err(Error::InvalidInput(format!(
                "beta0 must lie in [0, beta_max], got {}",
                self.beta0
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidInput(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::InvalidInput(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if self.mu0 > self.mu_max {
            return Err(Error::InvalidInput("mu0 exceeds mu_max".into()));
        }
        if !(self.filter_exponent >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "filter exponent must be at least 1, got {}",
                self.filter_exponent
            )));
        }
        if self.move_limit > 1.0 {
            return Err(Error::InvalidInput("move limit must not exceed 1".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.beta_interval == 0 {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Method of moving asymptotes for box-constrained minimization on `[0, 1]^n`.
#[derive(Debug, Clone)]
pub struct Mma {
    move_limit: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x1: Vec<f64>,
    x2: Vec<f64>,
    iter: usize,
}

const ASY_INIT: f64 = 0.5;
const ASY_INCR: f64 = 1.2;
const ASY_DECR: f64 = 0.7;
const RAA0: f64 = 1e-5;
/// Closest an asymptote may approach the current point.
const ASY_MIN: f64 = 1e-5;

impl Mma {
    pub fn new(n: usize, move_limit: f64) -> Self {
        Mma {
            move_limit,
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            x1: vec![0.0; n],
            x2: vec![0.0; n],
            iter: 0,
        }
    }

    /// Forgets the asymptote history.
    pub fn reset(&mut self) {
        self.iter = 0;
    }

    /// Minimizes the separable convex approximation at `x` and returns the new point.
    pub fn step(&mut self, x: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
        if let Some((i, g)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i} is {g}")));
        }
        self.iter += 1;
        let mut out = vec![0.0; x.len()];
        for i in 0..x.len() {
            let xi = x[i];
            let (l, u) = if self.iter <= 2 {
                (xi - ASY_INIT, xi + ASY_INIT)
            } else {
                let osc = (xi - self.x1[i]) * (self.x1[i] - self.x2[i]);
                let f = if osc < 0.0 {
                    ASY_DECR
                } else if osc > 0.0 {
                    ASY_INCR
                } else {
                    1.0
                };
                let l = xi - f * (self.x1[i] - self.lower[i]);
                let u = xi + f * (self.upper[i] - self.x1[i]);
                (l.clamp(xi - 10.0, xi - ASY_MIN), u.clamp(xi + ASY_MIN, xi + 10.0))
            };
            self.lower[i] = l;
            self.upper[i] = u;
            let lo = (l + 0.1 * (xi - l)).max(xi - self.move_limit).max(0.0);
            let hi = (u - 0.1 * (u - xi)).min(xi + self.move_limit).min(1.0);
            let (gp, gm) = (grad[i].max(0.0), (-grad[i]).max(0.0));
            let p = (u - xi).powi(2) * (1.001 * gp + 0.001 * gm + RAA0);
            let q = (xi - l).powi(2) * (0.001 * gp + 1.001 * gm + RAA0);
            let (sp, sq) = (p.sqrt(), q.sqrt());
            out[i] = ((l * sp + u * sq) / (sp + sq)).clamp(lo, hi);
        }
        self.x2.copy_from_slice(&self.x1);
        self.x1.copy_from_slice(x);
        Ok(out)
    }
}

/// Initial design: uniform `V_f` with a soft central inclusion at half the
/// density, rebalanced to mean `V_f`.
pub fn initial_design(mesh: &RucMesh, volume_fraction: f64) -> Vec<f64> {
    let ne = mesh.num_elements();
    if volume_fraction >= 1.0 {
        return vec![1.0; ne];
    }
    let side = mesh.side_mm();
    let h = mesh.cell_size();
    let r = 0.25 * side;
    let sd = mesh.dim().spatial();
    let w: Vec<f64> = (0..ne)
        .map(|e| {
            let c = mesh.element_centroid(e);
            let d = (0..sd).map(|k| (c[k] - 0.5 * side).powi(2)).sum::<f64>().sqrt();
            ((r - d) / h + 0.5).clamp(0.0, 1.0)
        })
        .collect();
    let mean_w = w.iter().sum::<f64>() / ne as f64;
    let dip = 0.5 * volume_fraction;
    let base = volume_fraction + dip * mean_w;
    w.iter().map(|w| (base - dip * w).clamp(0.0, 1.0)).collect()
}

/// State after one inner iteration of the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub outer_k: usize,
    pub objective: f64,
    pub normalized_objective: f64,
    /// Largest relaxed stress constraint `m (g^3 + g)`.
    pub max_g: f64,
    pub volume_fraction: f64,
    pub mu: f64,
    pub beta: f64,
    pub dmax: f64,
}

/// Outcome of [`run_optimization`].
pub struct OptimizationResult {
    pub rho: Vec<f64>,
    pub beta: f64,
    pub history: Vec<HistoryRow>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub normalization: f64,
    pub state: ALState,
    /// Evaluation of the returned design.
    pub evaluation: Evaluation,
}

/// Whether the evaluated design satisfies every constraint within `tol`.
pub fn is_feasible(problem: &Problem, eval: &Evaluation, tol: f64) -> bool {
    let stress_ok = !problem.stress_constrained || eval.max_relaxed_constraint() <= tol;
    let volume_ok = (eval.volume / problem.volume_fraction - 1.0).abs() <= tol;
    let iso_ok = !problem.uses_isotropy() || isotropy_misfit(&eval.tensor.c) <= tol;
    stress_ok && volume_ok && iso_ok
}

/// Runs the optimizer from [`initial_design`].
pub fn run_optimization(problem: &Problem, config: &OptimizerConfig) -> Result<OptimizationResult> {
    let rho0 = initial_design(problem.mesh(), problem.volume_fraction);
    run_optimization_from(problem, config, rho0, &mut |_| {})
}

/// Runs the optimizer from `rho0`, reporting each history row to `observer`.
pub fn run_optimization_from(
    problem: &Problem,
    config: &OptimizerConfig,
    rho0: Vec<f64>,
    observer: &mut dyn FnMut(&HistoryRow),
) -> Result<OptimizationResult> {
    config.validate()?;
    let n = problem.num_elements();
    if rho0.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            actual: rho0.len(),
        });
    }
    let mut rho = rho0;
    let mut beta = config.beta0;
    let mut state = ALState::new(problem.num_stress_constraints(), config);
    let mut mma = Mma::new(n, config.move_limit);
    let mut history = Vec::new();

    let normalization = problem.objective_scale()?;
    let mut eval = problem.evaluate(&rho, beta)?;
    let mut converged = false;
    let mut iter = 0;

    for k in 0..config.max_outer {
        let mut dmax = f64::INFINITY;
        for _ in 0..config.max_inner {
            let grad = al_gradient(problem, &eval, &state, normalization)?;
            let next = mma.step(&rho, &grad.total)?;
            dmax = next
                .iter()
                .zip(&rho)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            rho = next;
            eval = problem.evaluate(&rho, beta)?;
            iter += 1;
            let row = HistoryRow {
                iter,
                outer_k: k,
                objective: eval.objective,
                normalized_objective: eval.objective / normalization,
                max_g: eval.max_relaxed_constraint(),
                volume_fraction: eval.volume,
                mu: state.mu,
                beta,
                dmax,
            };
            observer(&row);
            history.push(row);
            if dmax < config.design_tol {
                break;
            }
        }
        let terms = al_terms(problem, &eval, &state, normalization);
        if dmax < config.design_tol
            && beta >= config.beta_max
            && is_feasible(problem, &eval, config.constraint_tol)
        {
            converged = true;
            state.k = k + 1;
            break;
        }
        update_multipliers(
            &mut state,
            &terms.h_s,
            terms.h_v,
            terms.h_iso,
            config.alpha,
            config.mu_max,
        );
        let last = k + 1 == config.max_outer;
        if !last && (k + 1) % config.beta_interval == 0 && beta < config.beta_max {
            beta = (beta + 1.0).min(config.beta_max);
            eval = problem.evaluate(&rho, beta)?;
        }
    }
    Ok(OptimizationResult {
        rho,
        beta,
        history,
        converged,
        outer_iterations: state.k,
        normalization,
        state,
        evaluation: eval,
    })
}
