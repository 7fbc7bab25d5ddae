//! SIMP stiffness assembly, periodic unit-strain cell problems, the
//! homogenized constitutive matrix and element stress recovery.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::linalg::{Factorization, SolverKind, StiffnessPattern, SystemMatrix};
use crate::material::Material;
use crate::mesh::{element_stiffness_and_b, periodic_dof_map, Dim, DofMap, ElementMatrices, RucMesh};
use crate::{Error, Result};

/// Modified SIMP interpolation `m = eps + (1 - eps) rho^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simp {
    pub penalty: f64,
    pub eps: f64,
}

impl Default for Simp {
    fn default() -> Self {
        Simp {
            penalty: 5.0,
            eps: 1e-9,
        }
    }
}

impl Simp {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "SIMP penalty must be >= 1, got {}",
                self.penalty
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidInput(format!(
                "void stiffness ratio must lie in (0, 1), got {}",
                self.eps
            )));
        }
        Ok(())
    }

    pub fn factor(&self, rho_bar: f64) -> f64 {
        self.eps + (1.0 - self.eps) * rho_bar.max(0.0).powf(self.penalty)
    }

    pub fn slope(&self, rho_bar: f64) -> f64 {
        self.penalty * (1.0 - self.eps) * rho_bar.max(0.0).powf(self.penalty - 1.0)
    }
}

/// Solver selection; `Auto` uses the direct solver in 2D and for small 3D
/// systems, conjugate gradients otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverChoice {
    #[default]
    Auto,
    Direct,
    Pcg,
}

/// Free-DOF count above which `Auto` switches to conjugate gradients in 3D.
pub const AUTO_DIRECT_LIMIT_3D: usize = 20_000;

impl SolverChoice {
    pub fn resolve(self, dim: Dim, free_dofs: usize) -> SolverKind {
        match self {
            SolverChoice::Direct => SolverKind::Direct,
            SolverChoice::Pcg => SolverKind::DEFAULT_PCG,
            SolverChoice::Auto => match dim {
                Dim::Three if free_dofs > AUTO_DIRECT_LIMIT_3D => SolverKind::DEFAULT_PCG,
                _ => SolverKind::Direct,
            },
        }
    }
}

/// Time profile of a macroscopic strain load.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadProfile {
    Static { strain: Vec<f64> },
    /// `strain(t) = mean + amplitude * sin(wt)`.
    Sinusoid { mean: Vec<f64>, amplitude: Vec<f64> },
}

/// A named macroscopic strain load (absolute Voigt strains, engineering shear).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadCase {
    pub id: String,
    pub profile: LoadProfile,
}

impl LoadCase {
    pub fn fixed(id: impl Into<String>, strain: Vec<f64>) -> Self {
        LoadCase {
            id: id.into(),
            profile: LoadProfile::Static { strain },
        }
    }

    pub fn sinusoid(id: impl Into<String>, mean: Vec<f64>, amplitude: Vec<f64>) -> Self {
        LoadCase {
            id: id.into(),
            profile: LoadProfile::Sinusoid { mean, amplitude },
        }
    }

    /// Mean and amplitude strain vectors.
    pub fn mean_and_amplitude(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.profile {
            LoadProfile::Static { strain } => (strain.clone(), vec![0.0; strain.len()]),
            LoadProfile::Sinusoid { mean, amplitude } => (mean.clone(), amplitude.clone()),
        }
    }

    pub fn is_cyclic(&self) -> bool {
        matches!(self.profile, LoadProfile::Sinusoid { .. })
    }

    pub fn validate(&self, dim: Dim) -> Result<()> {
        let (m, a) = self.mean_and_amplitude();
        let nv = dim.voigt();
        if m.len() != nv || a.len() != nv {
            return Err(Error::InvalidInput(format!(
                "load case '{}' needs {nv} strain components",
                self.id
            )));
        }
        if m.iter().chain(&a).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "load case '{}' has non-finite strain",
                self.id
            )));
        }
        if m.iter().chain(&a).all(|v| *v == 0.0) {
            return Err(Error::InvalidInput(format!(
                "load case '{}' has no nonzero strain component",
                self.id
            )));
        }
        Ok(())
    }
}

/// Per-element stress cycle `sigma(t) = mean + amp sin(wt)`, row-major
/// `num_elements x voigt` (MPa).
#[derive(Debug, Clone, PartialEq)]
pub struct StressCycle {
    pub voigt: usize,
    pub mean: Vec<f64>,
    pub amp: Vec<f64>,
}

impl StressCycle {
    pub fn num_elements(&self) -> usize {
        self.mean.len() / self.voigt
    }

    pub fn mean_of(&self, e: usize) -> &[f64] {
        &self.mean[e * self.voigt..(e + 1) * self.voigt]
    }

    pub fn amp_of(&self, e: usize) -> &[f64] {
        &self.amp[e * self.voigt..(e + 1) * self.voigt]
    }
}

/// Homogenized constitutive matrix (MPa).
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizedTensor {
    pub dim: Dim,
    pub c: DMatrix<f64>,
}

impl HomogenizedTensor {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)]
    }

    /// `max |C - C^T| / max |C|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.c.amax();
        if scale == 0.0 {
            return 0.0;
        }
        (&self.c - self.c.transpose()).amax() / scale
    }
}

/// Solved unit-strain cell problems of one design.
pub struct CellSolution {
    /// Projected densities the solution belongs to.
    pub rho_bar: Vec<f64>,
    /// SIMP factors `m_e`.
    pub scale: Vec<f64>,
    /// Fluctuation fields `u_i` over the free DOFs, one per unit strain.
    pub displacements: Vec<Vec<f64>>,
    /// Factorized (or preconditioned) stiffness shared by adjoint solves.
    pub factorization: Factorization,
    /// Row-major `voigt x voigt` maps from applied strain to element stress.
    stress_maps: Vec<f64>,
}

impl CellSolution {
    /// Stress in element `e` for applied macroscopic strain `strain`.
    pub fn element_stress(&self, e: usize, strain: &[f64], out: &mut [f64]) {
        let nv = strain.len();
        let t = &self.stress_maps[e * nv * nv..(e + 1) * nv * nv];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..nv).map(|c| t[r * nv + c] * strain[c]).sum();
        }
    }
}

/// Mesh, periodic map and element matrices of a unit cell with a given base material.
#[derive(Debug, Clone)]
pub struct Homogenizer {
    mesh: RucMesh,
    dofs: DofMap,
    element: ElementMatrices,
    pattern: Arc<StiffnessPattern>,
    k0: Vec<f64>,
    young: f64,
    solver: SolverKind,
}

impl Homogenizer {
    pub fn new(mesh: RucMesh, material: &Material, solver: SolverChoice) -> Result<Self> {
        material.validate()?;
        let dofs = periodic_dof_map(&mesh);
        let element = element_stiffness_and_b(mesh.dim(), mesh.cell_size(), material.poisson)?;
        let pattern = Arc::new(StiffnessPattern::new(&mesh, &dofs));
        let nd = mesh.dim().dofs_per_element();
        let k0 = (0..nd * nd)
            .map(|i| element.k0[(i / nd, i % nd)])
            .collect();
        let solver = solver.resolve(mesh.dim(), dofs.num_free_dofs());
        Ok(Homogenizer {
            mesh,
            dofs,
            element,
            pattern,
            k0,
            young: material.young_mpa,
            solver,
        })
    }

    pub fn mesh(&self) -> &RucMesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn element(&self) -> &ElementMatrices {
        &self.element
    }

    pub fn young(&self) -> f64 {
        self.young
    }

    pub fn solver(&self) -> SolverKind {
        self.solver
    }

    pub fn dim(&self) -> Dim {
        self.mesh.dim()
    }

    pub fn voigt(&self) -> usize {
        self.mesh.dim().voigt()
    }

    fn check_densities(&self, rho_bar: &[f64]) -> Result<()> {
        let ne = self.mesh.num_elements();
        if rho_bar.len() != ne {
            return Err(Error::ShapeMismatch {
                expected: ne,
                actual: rho_bar.len(),
            });
        }
        if let Some(r) = rho_bar.iter().find(|r| !(-1e-12..=1.0 + 1e-12).contains(*r)) {
            return Err(Error::InvalidInput(format!(
                "density {r} outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// SIMP factors of the projected densities.
    pub fn simp_factors(&self, rho_bar: &[f64], simp: &Simp) -> Vec<f64> {
        rho_bar.iter().map(|&r| simp.factor(r)).collect()
    }

    /// `K = sum_e m_e E k0` over the free DOFs.
    pub fn assemble_stiffness(&self, rho_bar: &[f64], simp: &Simp) -> Result<SystemMatrix> {
        self.check_densities(rho_bar)?;
        simp.validate()?;
        let scale: Vec<f64> = self
            .simp_factors(rho_bar, simp)
            .into_iter()
            .map(|m| m * self.young)
            .collect();
        Ok(self.pattern.assemble(&self.k0, &scale))
    }

    /// Right-hand sides `f_i = sum_e m_e E int B^T C e_i` for every unit strain.
    pub fn unit_strain_rhs(&self, scale: &[f64]) -> Vec<Vec<f64>> {
        let nv = self.voigt();
        let nd = self.dim().dofs_per_element();
        let n = self.dofs.num_free_dofs();
        let mut out = vec![vec![0.0; n]; nv];
        let mut local = vec![0.0; nd];
        for (i, f) in out.iter_mut().enumerate() {
            let col = self.element.unit_strain_loads.column(i);
            for (e, &m) in scale.iter().enumerate() {
                let s = m * self.young;
                for (l, c) in local.iter_mut().zip(col.iter()) {
                    *l = s * c;
                }
                self.dofs.scatter_add(e, &local, f);
            }
        }
        out
    }

    /// Assembles, factorizes and solves the unit-strain cell problems.
    pub fn solve_unit_cells(&self, rho_bar: &[f64], simp: &Simp) -> Result<CellSolution> {
        let k = self.assemble_stiffness(rho_bar, simp)?;
        let scale = self.simp_factors(rho_bar, simp);
        let rhs = self.unit_strain_rhs(&scale);
        let fact = Factorization::new(k, self.solver, self.mesh.num_elements())?;
        let displacements = fact.solve_many(&rhs)?;
        for (u, f) in displacements.iter().zip(&rhs) {
            let res = fact.matrix().relative_residual(u, f);
            if res > 1e-9 {
                return Err(Error::SolverDiverged {
                    residual: res,
                    iterations: 0,
                });
            }
        }
        let stress_maps = self.stress_maps(&displacements);
        Ok(CellSolution {
            rho_bar: rho_bar.to_vec(),
            scale,
            displacements,
            factorization: fact,
            stress_maps,
        })
    }

    fn stress_maps(&self, displacements: &[Vec<f64>]) -> Vec<f64> {
        let nv = self.voigt();
        let nd = self.dim().dofs_per_element();
        let ec = &self.element.constitutive;
        let b = &self.element.b_centroid;
        let e_mod = self.young;
        (0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                // Column i of the strain map is e_i - B u_i.
                let mut s = DMatrix::<f64>::identity(nv, nv);
                let mut ue = vec![0.0; nd];
                for (i, u) in displacements.iter().enumerate() {
                    self.dofs.gather(e, u, &mut ue);
                    for r in 0..nv {
                        let bu: f64 = (0..nd).map(|k| b[(r, k)] * ue[k]).sum();
                        s[(r, i)] -= bu;
                    }
                }
                let t = ec * s * e_mod;
                (0..nv * nv).map(|k| t[(k / nv, k % nv)]).collect::<Vec<_>>()
            })
            .flatten()
            .collect()
    }

    /// Element fluctuation vectors `chi0_i - u_i` (row `i`, length `dofs_per_element`).
    pub fn element_fluctuations(&self, sol: &CellSolution, e: usize) -> Vec<Vec<f64>> {
        let nd = self.dim().dofs_per_element();
        let chi = &self.element.unit_strain_displacements;
        sol.displacements
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let mut w = vec![0.0; nd];
                self.dofs.gather(e, u, &mut w);
                for (k, wk) in w.iter_mut().enumerate() {
                    *wk = chi[(k, i)] - *wk;
                }
                w
            })
            .collect()
    }

    /// Row-major `voigt x voigt` mutual energies `w_i^T k0 w_j` of element `e`
    /// (unit Young's modulus, no SIMP factor).
    pub fn element_energies(&self, sol: &CellSolution, e: usize) -> Vec<f64> {
        let nv = self.voigt();
        let nd = self.dim().dofs_per_element();
        let w = self.element_fluctuations(sol, e);
        let kw: Vec<Vec<f64>> = w
            .iter()
            .map(|wi| {
                (0..nd)
                    .map(|r| (0..nd).map(|c| self.k0[r * nd + c] * wi[c]).sum())
                    .collect()
            })
            .collect();
        let mut out = vec![0.0; nv * nv];
        for i in 0..nv {
            for j in 0..nv {
                out[i * nv + j] = w[i].iter().zip(&kw[j]).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// `C^H = (E/|Y|) sum_e m_e W_e`.
    pub fn homogenized_matrix(&self, sol: &CellSolution) -> HomogenizedTensor {
        let nv = self.voigt();
        let per_elem: Vec<Vec<f64>> = (0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| self.element_energies(sol, e))
            .collect();
        let mut c = DMatrix::zeros(nv, nv);
        for (w, m) in per_elem.iter().zip(&sol.scale) {
            for k in 0..nv * nv {
                c[(k / nv, k % nv)] += m * w[k];
            }
        }
        c *= self.young / self.mesh.cell_volume();
        HomogenizedTensor { dim: self.dim(), c }
    }

    /// `dF/drho_bar_e = (E/|Y|) m'_e sum_ij G_ij W_e,ij` for `G = dF/dC^H` (row-major).
    pub fn homogenized_sensitivity(&self, sol: &CellSolution, simp: &Simp, g: &[f64]) -> Vec<f64> {
        let factor = self.young / self.mesh.cell_volume();
        (0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let w = self.element_energies(sol, e);
                let s: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
                factor * simp.slope(sol.rho_bar[e]) * s
            })
            .collect()
    }

    /// Element stresses for the mean and amplitude strains of `load`.
    pub fn element_stress_cycle(&self, sol: &CellSolution, load: &LoadCase) -> StressCycle {
        let nv = self.voigt();
        let (mean, amp) = load.mean_and_amplitude();
        let ne = self.mesh.num_elements();
        let mut sm = vec![0.0; ne * nv];
        let mut sa = vec![0.0; ne * nv];
        let amp_zero = amp.iter().all(|a| *a == 0.0);
        sm.par_chunks_mut(nv)
            .zip(sa.par_chunks_mut(nv))
            .enumerate()
            .for_each(|(e, (m, a))| {
                sol.element_stress(e, &mean, m);
                if !amp_zero {
                    sol.element_stress(e, &amp, a);
                }
            });
        StressCycle {
            voigt: nv,
            mean: sm,
            amp: sa,
        }
    }
}
