//! Adjoint gradient of the AL function and a finite-difference check.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alopt::{al_terms, isotropy_misfit_gradient, objective_derivative, ALState, AlTerms};
use crate::problem::{Evaluation, Problem};
use crate::Result;

/// Gradient of the AL function with respect to the raw design variables,
/// split by penalty term.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub total: Vec<f64>,
    pub objective: Vec<f64>,
    pub stress: Vec<f64>,
    pub volume: Vec<f64>,
    pub isotropy: Vec<f64>,
    /// Adjoint vectors, one per independent reference strain.
    pub adjoints: Vec<Vec<f64>>,
}

/// Reference strains spanning the mean and amplitude of a load:
/// `mean = sum a_r eps_r`, `amp = sum b_r eps_r`.
fn reference_strains(mean: &[f64], amp: &[f64]) -> Vec<(Vec<f64>, f64, f64)> {
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let (mm, aa) = (norm2(mean), norm2(amp));
    if aa == 0.0 {
        return vec![(mean.to_vec(), 1.0, 0.0)];
    }
    if mm == 0.0 {
        return vec![(amp.to_vec(), 0.0, 1.0)];
    }
    let k = mean.iter().zip(amp).map(|(m, a)| m * a).sum::<f64>() / mm;
    let residual: f64 = mean.iter().zip(amp).map(|(m, a)| (a - k * m).powi(2)).sum();
    if residual <= 1e-28 * aa {
        vec![(mean.to_vec(), 1.0, k)]
    } else {
        vec![(mean.to_vec(), 1.0, 0.0), (amp.to_vec(), 0.0, 1.0)]
    }
}

/// `dJ/drho` by the adjoint method.
pub fn al_gradient(
    problem: &Problem,
    eval: &Evaluation,
    state: &ALState,
    normalization: f64,
) -> Result<GradientBundle> {
    let terms = al_terms(problem, eval, state, normalization);
    let hom = &problem.homogenizer;
    let ne = problem.num_elements();
    let simp = &problem.simp;
    let sol = &eval.solution;

    // Objective and isotropy: functions of C^H only.
    let dc = objective_derivative(&eval.tensor, problem.objective) / normalization;
    let obj_bar = hom.homogenized_sensitivity(sol, simp, dc.as_slice_row_major().as_slice());
    let iso_bar = if problem.uses_isotropy() && !clamped(terms.h_iso, state.lambda_iso, state.mu) {
        let g = isotropy_misfit_gradient(&eval.tensor.c) * (state.lambda_iso + state.mu * terms.h_iso);
        hom.homogenized_sensitivity(sol, simp, g.as_slice_row_major().as_slice())
    } else {
        vec![0.0; ne]
    };

    let vol_bar = if clamped(terms.h_v, state.lambda_v, state.mu) {
        vec![0.0; ne]
    } else {
        let c = (state.lambda_v + state.mu * terms.h_v) / (problem.volume_fraction * ne as f64);
        vec![c; ne]
    };

    let (stress_bar, adjoints) = if problem.stress_constrained {
        stress_sensitivity(problem, eval, state, &terms)?
    } else {
        (vec![0.0; ne], Vec::new())
    };

    let objective = eval.field.backprop_chain(&problem.filter, &obj_bar);
    let stress = eval.field.backprop_chain(&problem.filter, &stress_bar);
    let volume = eval.field.backprop_chain(&problem.filter, &vol_bar);
    let isotropy = eval.field.backprop_chain(&problem.filter, &iso_bar);
    let total = (0..ne)
        .map(|i| objective[i] + stress[i] + volume[i] + isotropy[i])
        .collect();
    Ok(GradientBundle {
        total,
        objective,
        stress,
        volume,
        isotropy,
        adjoints,
    })
}

trait RowMajor {
    fn as_slice_row_major(&self) -> Vec<f64>;
}

impl RowMajor for nalgebra::DMatrix<f64> {
    fn as_slice_row_major(&self) -> Vec<f64> {
        self.transpose().as_slice().to_vec()
    }
}

/// The constraint sits on its `-lambda/mu` branch and contributes no gradient.
fn clamped(h: f64, lambda: f64, mu: f64) -> bool {
    h == -lambda / mu
}

/// Stress penalty gradient with respect to `rho_bar` and the adjoint vectors.
fn stress_sensitivity(
    problem: &Problem,
    eval: &Evaluation,
    state: &ALState,
    terms: &AlTerms,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let hom = &problem.homogenizer;
    let mesh = hom.mesh();
    let dofs = hom.dofs();
    let em = hom.element();
    let ne = mesh.num_elements();
    let nv = hom.voigt();
    let nd = hom.dim().dofs_per_element();
    let sol = &eval.solution;
    let simp = &problem.simp;
    let young = hom.young();
    let ns = problem.num_stress_constraints() as f64;
    let mu = state.mu;

    // E C B at the centroid, voigt x dofs.
    let ecb = &em.constitutive * &em.b_centroid * young;
    let mut explicit = vec![0.0; ne];
    let mut refs = Vec::new();
    let mut loads = Vec::new();

    for (l, load) in problem.loads.iter().enumerate() {
        let (mean, amp) = load.mean_and_amplitude();
        // dP/dsigma_mean and dP/dsigma_amp per element.
        let mut d_mean = vec![0.0; ne * nv];
        let mut d_amp = vec![0.0; ne * nv];
        for e in 0..ne {
            let j = l * ne + e;
            let h = terms.h_s[j];
            let lam = state.lambda_s[j];
            if clamped(h, lam, mu) {
                continue;
            }
            let c = &eval.constraints[l][e];
            let w = (lam + mu * h) / ns;
            if w == 0.0 {
                continue;
            }
            let m = sol.scale[e];
            explicit[e] += w * simp.slope(sol.rho_bar[e]) * (c.g * c.g * c.g + c.g);
            let s = w * m * (3.0 * c.g * c.g + 1.0);
            for k in 0..nv {
                d_mean[e * nv + k] = s * c.d_mean[k];
                d_amp[e * nv + k] = s * c.d_amp[k];
            }
        }
        for (eps, a, b) in reference_strains(&mean, &amp) {
            // dP/dU_r = -sum_e (E C B)^T (a dP/dsigma_mean + b dP/dsigma_amp).
            let mut rhs = vec![0.0; dofs.num_free_dofs()];
            let mut local = vec![0.0; nd];
            for e in 0..ne {
                let v: Vec<f64> = (0..nv)
                    .map(|k| a * d_mean[e * nv + k] + b * d_amp[e * nv + k])
                    .collect();
                if v.iter().all(|x| *x == 0.0) {
                    continue;
                }
                for (c, lc) in local.iter_mut().enumerate() {
                    *lc = -(0..nv).map(|r| ecb[(r, c)] * v[r]).sum::<f64>();
                }
                dofs.scatter_add(e, &local, &mut rhs);
            }
            refs.push(eps);
            loads.push(rhs);
        }
    }

    let adjoints = sol.factorization.solve_many(&loads)?;
    let mut bar = explicit;
    for (eps, eta) in refs.iter().zip(&adjoints) {
        // U_r and chi0(eps_r) by superposition of the unit-strain fields.
        let n = dofs.num_free_dofs();
        let mut u = vec![0.0; n];
        for (i, ui) in sol.displacements.iter().enumerate() {
            if eps[i] != 0.0 {
                for (a, b) in u.iter_mut().zip(ui) {
                    *a += eps[i] * b;
                }
            }
        }
        let chi: Vec<f64> = (0..nd)
            .map(|k| (0..nv).map(|i| em.unit_strain_displacements[(k, i)] * eps[i]).sum())
            .collect();
        let contrib: Vec<f64> = (0..ne)
            .into_par_iter()
            .map(|e| {
                let mut ue = vec![0.0; nd];
                let mut he = vec![0.0; nd];
                dofs.gather(e, &u, &mut ue);
                dofs.gather(e, eta, &mut he);
                let w: Vec<f64> = chi.iter().zip(&ue).map(|(c, u)| c - u).collect();
                let mut s = 0.0;
                for r in 0..nd {
                    let kw: f64 = (0..nd).map(|c| em.k0[(r, c)] * w[c]).sum();
                    s += he[r] * kw;
                }
                simp.slope(sol.rho_bar[e]) * young * s
            })
            .collect();
        for (b, c) in bar.iter_mut().zip(contrib) {
            *b += c;
        }
    }
    Ok((bar, adjoints))
}

fn clamp_pattern(terms: &AlTerms, state: &ALState) -> Vec<bool> {
    let mu = state.mu;
    let mut p: Vec<bool> = terms
        .h_s
        .iter()
        .zip(&state.lambda_s)
        .map(|(h, l)| *h == -l / mu)
        .collect();
    p.push(terms.h_v == -state.lambda_v / mu);
    p.push(terms.h_iso == -state.lambda_iso / mu);
    p
}

/// One finite-difference probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub index: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
    /// The probe straddles a branch switch and is excluded from the maximum.
    pub skipped: bool,
}

/// Result of [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub probes: Vec<ProbeResult>,
    pub max_rel_error: f64,
    pub step: f64,
}

impl FdReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }

    /// Plain-text report, one row per probe.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# step {:e}\n# max_rel_error {:e}\n# index analytic finite_difference rel_error skipped\n",
            self.step, self.max_rel_error
        );
        for p in &self.probes {
            s.push_str(&format!(
                "{} {:.12e} {:.12e} {:.6e} {}\n",
                p.index, p.analytic, p.finite_difference, p.rel_error, p.skipped
            ));
        }
        s
    }
}

/// Components below this fraction of the largest gradient entry are not
/// compared relatively.
pub const FD_SMALL_FRACTION: f64 = 1e-3;

/// Compares `analytic` to central differences of the AL function in
/// `n_probes` seeded random design variables.
///
/// The relative error of a probe is `|a - fd| / max(|a|, |fd|, s)`, where
/// `s` is [`FD_SMALL_FRACTION`] of the largest analytic entry.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_check(
    problem: &Problem,
    rho: &[f64],
    beta: f64,
    state: &ALState,
    normalization: f64,
    analytic: &[f64],
    n_probes: usize,
    step: f64,
    seed: u64,
) -> Result<FdReport> {
    let n = rho.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, n_probes.min(n)).into_vec();
    idx.sort_unstable();
    let base = problem.evaluate(rho, beta)?;
    let base_terms = al_terms(problem, &base, state, normalization);
    let base_sig = signature(&base_terms, &base, state);
    let scale = analytic.iter().fold(0.0f64, |a, g| a.max(g.abs())) * FD_SMALL_FRACTION;

    let mut probes = Vec::with_capacity(idx.len());
    for &i in &idx {
        let eval_at = |delta: f64| -> Result<(f64, Signature)> {
            let mut r = rho.to_vec();
            r[i] += delta;
            let ev = problem.evaluate(&r, beta)?;
            let t = al_terms(problem, &ev, state, normalization);
            let sig = signature(&t, &ev, state);
            Ok((t.total(), sig))
        };
        let (jp, sp) = eval_at(step)?;
        let (jm, sm) = eval_at(-step)?;
        let fd = (jp - jm) / (2.0 * step);
        let a = analytic[i];
        let skipped = sp.branches != base_sig.branches
            || sm.branches != base_sig.branches
            || sp.clamps != base_sig.clamps
            || sm.clamps != base_sig.clamps;
        let denom = a.abs().max(fd.abs()).max(scale).max(f64::MIN_POSITIVE);
        probes.push(ProbeResult {
            index: i,
            analytic: a,
            finite_difference: fd,
            rel_error: (a - fd).abs() / denom,
            skipped,
        });
    }
    let max_rel_error = probes
        .iter()
        .filter(|p| !p.skipped)
        .fold(0.0f64, |a, p| a.max(p.rel_error));
    Ok(FdReport {
        probes,
        max_rel_error,
        step,
    })
}

struct Signature {
    branches: Vec<u64>,
    clamps: Vec<bool>,
}

/// Non-smooth branches attained at an evaluation.
fn signature(terms: &AlTerms, eval: &Evaluation, state: &ALState) -> Signature {
    Signature {
        branches: eval
            .constraints
            .iter()
            .flat_map(|p| p.iter().map(|c| c.branch))
            .collect(),
        clamps: clamp_pattern(terms, state),
    }
}
