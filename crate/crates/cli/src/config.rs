//! Run configuration: TOML schema, defaults and unit conversion.
//!
//! Material moduli are given in GPa and strains in percent; both are
//! converted to MPa and absolute strain on load.

use std::path::{Path, PathBuf};

use metatopo::alopt::{ObjectiveKind, OptimizerConfig};
use metatopo::criteria::{Criterion, FatigueCriterion};
use metatopo::homogenize::{LoadCase, SolverChoice};
use metatopo::mesh::{build_mesh, Dim};
use metatopo::{Material, RucMesh};
use serde::Deserialize;

use crate::presets;
use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mesh: RawMesh,
    #[serde(default)]
    material: RawMaterial,
    problem: RawProblem,
    #[serde(rename = "load")]
    loads: Vec<RawLoad>,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    gradcheck: RawGradCheck,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    dim: usize,
    resolution: Vec<usize>,
    #[serde(default = "default_side")]
    side_mm: f64,
}

fn default_side() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    young_gpa: Option<f64>,
    poisson: Option<f64>,
    yield_mpa: Option<f64>,
    f_minus1_mpa: Option<f64>,
    t_minus1_mpa: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    objective: String,
    volume_fraction: f64,
    criterion: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    id: Option<String>,
    kind: String,
    strain_percent: Option<Vec<f64>>,
    mean_percent: Option<Vec<f64>>,
    amplitude_percent: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    penalty: Option<f64>,
    ersatz: Option<f64>,
    beta0: Option<f64>,
    beta_max: Option<f64>,
    beta_interval: Option<usize>,
    eta: Option<f64>,
    mu0: Option<f64>,
    mu_max: Option<f64>,
    lambda0: Option<f64>,
    alpha: Option<f64>,
    filter_exponent: Option<f64>,
    filter_radius_cells: Option<f64>,
    design_tol: Option<f64>,
    constraint_tol: Option<f64>,
    move_limit: Option<f64>,
    max_outer: Option<usize>,
    max_inner: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    solver: Option<String>,
    plane_increment_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGradCheck {
    probes: Option<usize>,
    step: Option<f64>,
    tolerance: Option<f64>,
    beta: Option<f64>,
    density_min: Option<f64>,
    density_max: Option<f64>,
}

/// Finite-difference check settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub probes: usize,
    pub step: f64,
    pub tolerance: f64,
    pub beta: f64,
    pub density_min: f64,
    pub density_max: f64,
}

/// A validated run configuration in solver units (MPa, absolute strain).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dim: Dim,
    pub resolution: Vec<usize>,
    pub side_mm: f64,
    pub material: Material,
    pub objective: ObjectiveKind,
    pub volume_fraction: f64,
    /// `None` for a compliance-driven run.
    pub criterion: Option<Criterion>,
    pub loads: Vec<LoadCase>,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub solver: SolverChoice,
    pub plane_increment_deg: Option<f64>,
    pub gradcheck: GradCheckConfig,
}

impl RunConfig {
    pub fn mesh(&self) -> Result<RucMesh, CliError> {
        build_mesh(self.dim, &self.resolution, self.side_mm).map_err(|e| CliError::config(e.to_string()))
    }
}

/// Nearest double to `x` percent, so `1.4` becomes the literal `0.014`.
fn percent(x: f64) -> f64 {
    format!("{x:e}")
        .split_once('e')
        .and_then(|(m, e)| format!("{m}e{}", e.parse::<i32>().ok()? - 2).parse().ok())
        .unwrap_or(x / 100.0)
}

/// Loads a config from a file path or from `preset:NAME`.
pub fn load(source: &str) -> Result<RunConfig, CliError> {
    let text = match source.strip_prefix("preset:") {
        Some(name) => presets::get(name)
            .ok_or_else(|| {
                CliError::config(format!(
                    "unknown preset '{name}'; available: {}",
                    presets::names().join(", ")
                ))
            })?
            .to_string(),
        None => std::fs::read_to_string(Path::new(source))
            .map_err(|e| CliError::config(format!("cannot read config {source}: {e}")))?,
    };
    parse(&text)
}

/// Parses and validates config text.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::config(e.to_string()))?;
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(format!("{path}: {}", e.into_inner().message()))
    })?;
    convert(raw)
}

fn convert(raw: RawConfig) -> Result<RunConfig, CliError> {
    let dim = Dim::from_usize(raw.mesh.dim).map_err(|e| CliError::config(format!("mesh.dim: {e}")))?;
    if raw.mesh.resolution.len() != dim.spatial() {
        return Err(CliError::config(format!(
            "mesh.resolution: expected {} entries, got {}",
            dim.spatial(),
            raw.mesh.resolution.len()
        )));
    }

    let base = Material::TI6AL4V;
    let m = &raw.material;
    let material = Material {
        young_mpa: m.young_gpa.map_or(base.young_mpa, |e| e * 1000.0),
        poisson: m.poisson.unwrap_or(base.poisson),
        yield_mpa: m.yield_mpa.unwrap_or(base.yield_mpa),
        f_minus1_mpa: m.f_minus1_mpa.unwrap_or(base.f_minus1_mpa),
        t_minus1_mpa: m.t_minus1_mpa.unwrap_or(base.t_minus1_mpa),
    };
    material
        .validate()
        .map_err(|e| CliError::config(format!("material: {e}")))?;

    let objective = match raw.problem.objective.as_str() {
        "bulk" => ObjectiveKind::BulkMax,
        "shear" => ObjectiveKind::ShearMax,
        "poisson" => ObjectiveKind::PoissonMin,
        other => {
            return Err(CliError::config(format!(
                "problem.objective: expected bulk, shear or poisson, got '{other}'"
            )))
        }
    };
    let criterion = match raw.problem.criterion.as_str() {
        "none" => None,
        "vonmises" => Some(Criterion::VonMises),
        "findley" => Some(Criterion::Fatigue(FatigueCriterion::Findley)),
        "matake" => Some(Criterion::Fatigue(FatigueCriterion::Matake)),
        "dangvan" => Some(Criterion::Fatigue(FatigueCriterion::DangVan)),
        other => {
            return Err(CliError::config(format!(
                "problem.criterion: expected vonmises, findley, matake, dangvan or none, got '{other}'"
            )))
        }
    };
    let vf = raw.problem.volume_fraction;
    if !(vf > 0.0 && vf <= 1.0) {
        return Err(CliError::config(format!(
            "problem.volume_fraction: must lie in (0, 1], got {vf}"
        )));
    }

    if raw.loads.is_empty() {
        return Err(CliError::config("load: at least one load case is required"));
    }
    let nv = dim.voigt();
    let mut loads = Vec::with_capacity(raw.loads.len());
    for (i, l) in raw.loads.iter().enumerate() {
        let id = l.id.clone().unwrap_or_else(|| format!("load{i}"));
        let strain = |name: &str, v: &Option<Vec<f64>>| -> Result<Vec<f64>, CliError> {
            let v = v
                .as_ref()
                .ok_or_else(|| CliError::config(format!("load[{i}].{name}: missing")))?;
            if v.len() != nv {
                return Err(CliError::config(format!(
                    "load[{i}].{name}: expected {nv} Voigt components for a {}D cell, got {}",
                    dim.spatial(),
                    v.len()
                )));
            }
            Ok(v.iter().map(|&x| percent(x)).collect())
        };
        let case = match l.kind.as_str() {
            "static" => {
                if l.mean_percent.is_some() || l.amplitude_percent.is_some() {
                    return Err(CliError::config(format!(
                        "load[{i}]: a static load takes only strain_percent"
                    )));
                }
                LoadCase::fixed(id, strain("strain_percent", &l.strain_percent)?)
            }
            "sinusoid" => {
                if l.strain_percent.is_some() {
                    return Err(CliError::config(format!(
                        "load[{i}]: a sinusoid load takes mean_percent and amplitude_percent"
                    )));
                }
                let mean = match &l.mean_percent {
                    Some(_) => strain("mean_percent", &l.mean_percent)?,
                    None => vec![0.0; nv],
                };
                LoadCase::sinusoid(id, mean, strain("amplitude_percent", &l.amplitude_percent)?)
            }
            other => {
                return Err(CliError::config(format!(
                    "load[{i}].kind: expected static or sinusoid, got '{other}'"
                )))
            }
        };
        case.validate(dim)
            .map_err(|e| CliError::config(format!("load[{i}]: {e}")))?;
        loads.push(case);
    }

    let o = &raw.optimizer;
    let mut opt = OptimizerConfig::defaults(dim);
    if let Some(v) = o.penalty {
        opt.simp.penalty = v;
    }
    if let Some(v) = o.ersatz {
        opt.simp.eps = v;
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = o.$f { opt.$f = v; } )* };
    }
    set!(
        beta0, beta_max, beta_interval, eta, mu0, mu_max, lambda0, alpha, filter_exponent,
        filter_radius_cells, design_tol, constraint_tol, move_limit, max_outer, max_inner
    );
    opt.validate()
        .map_err(|e| CliError::config(format!("optimizer: {e}")))?;

    let solver = match raw.run.solver.as_deref().unwrap_or("auto") {
        "auto" => SolverChoice::Auto,
        "direct" => SolverChoice::Direct,
        "pcg" => SolverChoice::Pcg,
        other => {
            return Err(CliError::config(format!(
                "run.solver: expected auto, direct or pcg, got '{other}'"
            )))
        }
    };

    let fatigue = matches!(criterion, Some(Criterion::Fatigue(_)));
    let g = &raw.gradcheck;
    let gradcheck = GradCheckConfig {
        probes: g.probes.unwrap_or(40),
        step: g.step.unwrap_or(1e-6),
        tolerance: g.tolerance.unwrap_or(if fatigue { 5e-4 } else { 1e-4 }),
        beta: g.beta.unwrap_or(3.0),
        density_min: g.density_min.unwrap_or(0.2),
        density_max: g.density_max.unwrap_or(0.95),
    };
    if !(gradcheck.step > 0.0 && gradcheck.tolerance > 0.0 && gradcheck.probes > 0) {
        return Err(CliError::config("gradcheck: probes, step and tolerance must be positive"));
    }
    if !(0.0 <= gradcheck.density_min && gradcheck.density_min < gradcheck.density_max && gradcheck.density_max <= 1.0) {
        return Err(CliError::config("gradcheck: need 0 <= density_min < density_max <= 1"));
    }

    Ok(RunConfig {
        dim,
        resolution: raw.mesh.resolution,
        side_mm: raw.mesh.side_mm,
        material,
        objective,
        volume_fraction: vf,
        criterion,
        loads,
        optimizer: opt,
        seed: raw.run.seed.unwrap_or(0),
        output_dir: raw.run.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        solver,
        plane_increment_deg: raw.run.plane_increment_deg,
        gradcheck,
    })
}
