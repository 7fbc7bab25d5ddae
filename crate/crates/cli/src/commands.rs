//! Subcommand implementations. Each returns the exit code on success paths
//! that are not errors (convergence and gradient-check verdicts).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use metatopo::adjoint::{al_gradient, finite_difference_check, FdReport};
use metatopo::alopt::{initial_design, run_optimization_from, ALState, OptimizationResult};
use metatopo::criteria::PlaneGrid;
use metatopo::field::DesignField;
use metatopo::homogenize::{HomogenizedTensor, Homogenizer};
use metatopo::problem::{Evaluation, Problem};
use metatopo::Dim;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::output::{self, DensityFile, Summary};
use crate::{CliError, EXIT_GRAD_CHECK, EXIT_NOT_CONVERGED, EXIT_OK};

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Builds the design problem described by `cfg`.
pub fn build_problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    let mesh = cfg.mesh()?;
    let mut problem = Problem::new(
        mesh,
        cfg.material,
        cfg.objective,
        cfg.volume_fraction,
        cfg.criterion,
        cfg.loads.clone(),
        &cfg.optimizer,
        cfg.solver,
    )?;
    if let Some(d) = cfg.plane_increment_deg {
        let grid = match cfg.dim {
            Dim::Two => PlaneGrid::planar(d),
            Dim::Three => PlaneGrid::hemisphere(d, d),
        }
        .map_err(|e| CliError::config(format!("run.plane_increment_deg: {e}")))?;
        problem = problem.with_plane_grid(grid);
    }
    Ok(problem)
}

fn load_ids(cfg: &RunConfig) -> Vec<String> {
    cfg.loads.iter().map(|l| l.id.clone()).collect()
}

fn criterion_name(cfg: &RunConfig) -> String {
    cfg.criterion.map_or("none", |c| c.name()).to_string()
}

/// Outcome of `optimize`.
pub struct OptimizeOutcome {
    pub exit_code: i32,
    pub result: OptimizationResult,
    pub summary: Summary,
    pub out_dir: PathBuf,
}

/// Runs the optimizer and writes every output file into `out_dir`.
pub fn optimize(cfg: &RunConfig, out_dir: &Path, verbose: bool) -> Result<OptimizeOutcome, CliError> {
    let problem = build_problem(cfg)?;
    prepare_dir(out_dir)?;
    let start = Instant::now();
    let rho0 = initial_design(problem.mesh(), cfg.volume_fraction);
    let mut observer = |row: &metatopo::alopt::HistoryRow| {
        if verbose && (row.iter == 1 || row.iter % 25 == 0) {
            eprintln!(
                "iter {:5}  outer {:3}  c {:.6e}  max_g {:.4}  vol {:.4}  beta {}  dmax {:.4}",
                row.iter, row.outer_k, row.objective, row.max_g, row.volume_fraction, row.beta, row.dmax
            );
        }
    };
    let result = run_optimization_from(&problem, &cfg.optimizer, rho0, &mut observer)?;
    let wall = start.elapsed().as_secs_f64();
    let eval = &result.evaluation;
    let mesh = problem.mesh();

    DensityFile::from_mesh(mesh, eval.field.rho_bar.clone()).write(&out_dir.join("density.txt"))?;
    let gmax = per_element_max_g(eval);
    output::write_vtk(
        &out_dir.join("density.vtk"),
        mesh,
        &[
            ("rho_bar", &eval.field.rho_bar),
            ("rho", &result.rho),
            ("g_max", &gmax),
        ],
    )?;
    output::write_tensor(&out_dir.join("ch.txt"), &eval.tensor)?;
    output::write_history(&out_dir.join("history.csv"), &result.history)?;
    output::write_gmap(&out_dir.join("gmap.csv"), mesh, eval, &load_ids(cfg))?;
    if cfg.dim == Dim::Two {
        output::write_png(&out_dir.join("density.png"), mesh, &eval.field.rho_bar)?;
    }
    let summary = Summary {
        objective_kind: cfg.objective.name().to_string(),
        criterion: criterion_name(cfg),
        objective: eval.objective,
        normalized_objective: eval.objective / result.normalization,
        volume_fraction: eval.volume,
        target_volume_fraction: cfg.volume_fraction,
        max_relaxed_constraint: eval.max_relaxed_constraint(),
        max_solid_g: eval.max_solid_g(),
        max_solid_von_mises_mpa: eval.max_solid_von_mises(),
        converged: result.converged,
        iterations: result.history.len(),
        outer_iterations: result.outer_iterations,
        beta: result.beta,
        wall_time_s: wall,
        homogenized_matrix_mpa: output::matrix_rows(&eval.tensor),
    };
    output::write_summary(&out_dir.join("summary.json"), &summary)?;
    Ok(OptimizeOutcome {
        exit_code: if result.converged { EXIT_OK } else { EXIT_NOT_CONVERGED },
        result,
        summary,
        out_dir: out_dir.to_path_buf(),
    })
}

fn per_element_max_g(eval: &Evaluation) -> Vec<f64> {
    let ne = eval.field.rho_bar.len();
    (0..ne)
        .map(|e| {
            eval.constraints
                .iter()
                .map(|l| l[e].g)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn read_density(path: &Path, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let mesh = cfg.mesh()?;
    let d = DensityFile::read(path)?;
    d.check_mesh(&mesh)?;
    Ok(d.values)
}

/// Homogenizes a physical density field (all solid without `density`) and
/// writes `ch.txt`.
pub fn homogenize(cfg: &RunConfig, density: Option<&Path>, out_dir: &Path) -> Result<HomogenizedTensor, CliError> {
    let mesh = cfg.mesh()?;
    let rho_bar = match density {
        Some(p) => read_density(p, cfg)?,
        None => vec![1.0; mesh.num_elements()],
    };
    let hz = Homogenizer::new(mesh, &cfg.material, cfg.solver)?;
    let sol = hz.solve_unit_cells(&rho_bar, &cfg.optimizer.simp)?;
    let t = hz.homogenized_matrix(&sol);
    prepare_dir(out_dir)?;
    output::write_tensor(&out_dir.join("ch.txt"), &t)?;
    Ok(t)
}

/// Evaluates the stress criterion on a physical density field and writes
/// `gmap.csv` and `evaluation.json`.
pub fn evaluate(cfg: &RunConfig, density: &Path, out_dir: &Path) -> Result<Evaluation, CliError> {
    let problem = build_problem(cfg)?;
    let rho_bar = read_density(density, cfg)?;
    let eval = problem.evaluate_field(DesignField::from_physical(rho_bar))?;
    prepare_dir(out_dir)?;
    output::write_gmap(&out_dir.join("gmap.csv"), problem.mesh(), &eval, &load_ids(cfg))?;
    let report = serde_json::json!({
        "criterion": problem.criterion.kind().name(),
        "objective": eval.objective,
        "volume_fraction": eval.volume,
        "max_g": eval.g_values().into_iter().fold(f64::NEG_INFINITY, f64::max),
        "max_relaxed_constraint": eval.max_relaxed_constraint(),
        "max_solid_g": eval.max_solid_g(),
        "max_solid_von_mises_mpa": eval.max_solid_von_mises(),
        "homogenized_matrix_mpa": output::matrix_rows(&eval.tensor),
    });
    let path = out_dir.join("evaluation.json");
    fs::write(&path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
        .map_err(|e| CliError::io(&path, e))?;
    Ok(eval)
}

/// Extra switches of `grad-check`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheckOptions {
    /// Negative control: perturbs the analytic gradient by 1 %.
    pub corrupt_gradient: bool,
}

/// Compares the adjoint gradient with central differences on a seeded
/// random design and writes `gradcheck.txt`.
pub fn grad_check(cfg: &RunConfig, out_dir: &Path, opts: GradCheckOptions) -> Result<(i32, FdReport), CliError> {
    let problem = build_problem(cfg)?;
    let gc = &cfg.gradcheck;
    let ne = problem.num_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rho: Vec<f64> = (0..ne).map(|_| rng.random_range(gc.density_min..gc.density_max)).collect();
    let mut state = ALState::new(problem.num_stress_constraints(), &cfg.optimizer);
    for l in state.lambda_s.iter_mut() {
        *l = rng.random_range(0.0..1.0);
    }
    state.lambda_v = 0.3;
    state.lambda_iso = 0.2;
    let norm = problem.objective_scale()?;
    let eval = problem.evaluate(&rho, gc.beta)?;
    let mut grad = al_gradient(&problem, &eval, &state, norm)?.total;
    if opts.corrupt_gradient {
        grad.iter_mut().for_each(|g| *g *= 1.01);
    }
    let report = finite_difference_check(
        &problem, &rho, gc.beta, &state, norm, &grad, gc.probes, gc.step, cfg.seed,
    )?;
    prepare_dir(out_dir)?;
    let path = out_dir.join("gradcheck.txt");
    fs::write(&path, report.to_text()).map_err(|e| CliError::io(&path, e))?;
    let code = if report.passes(gc.tolerance) { EXIT_OK } else { EXIT_GRAD_CHECK };
    Ok((code, report))
}
