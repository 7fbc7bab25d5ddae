//! Normalized stress constraints: von Mises for static loads and the
//! Findley, Matake and Dang Van critical-plane criteria for sinusoidal
//! cycles.
//!
//! Every criterion returns `g = measure / limit - 1`, so `g <= 0` means the
//! criterion is satisfied. Stress histories are affine in a single scalar
//! sinusoid, `sigma(t) = mean + amp * sin(wt)`, so all cycle extremes are
//! reached at `sin = +-1` and are explicit functions of `(mean, amp)`.
//!
//! Stress vectors use Voigt order `[xx, yy, xy]` (2D, plane stress) or
//! `[xx, yy, zz, xy, yz, xz]` (3D) with tensor shear components.

use crate::mesh::Dim;
use crate::{Error, Result};

/// Fatigue criteria supported by the critical-plane search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FatigueCriterion {
    Findley,
    Matake,
    DangVan,
}

impl FatigueCriterion {
    pub fn name(self) -> &'static str {
        match self {
            FatigueCriterion::Findley => "findley",
            FatigueCriterion::Matake => "matake",
            FatigueCriterion::DangVan => "dangvan",
        }
    }
}

/// Stress constraint kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    VonMises,
    Fatigue(FatigueCriterion),
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::VonMises => "vonmises",
            Criterion::Fatigue(f) => f.name(),
        }
    }
}

/// Calibrated constants of a fatigue criterion: `measure <= beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatigueParams {
    pub criterion: FatigueCriterion,
    pub alpha: f64,
    pub beta: f64,
    pub f_minus1: f64,
    pub t_minus1: f64,
}

/// Calibrates `alpha` and `beta` from the fully reversed bending (`f_minus1`)
/// and torsion (`t_minus1`) fatigue limits.
pub fn fatigue_params(
    criterion: FatigueCriterion,
    f_minus1: f64,
    t_minus1: f64,
) -> Result<FatigueParams> {
    if !(f_minus1 > 0.0 && t_minus1 > 0.0) {
        return Err(Error::InvalidInput(
            "fatigue limits must be positive".into(),
        ));
    }
    let ratio = f_minus1 / t_minus1;
    if !(ratio > 1.0 && ratio < 2.0) {
        return Err(Error::InvalidInput(format!(
            "{} criterion needs 1 < f-1/t-1 < 2, got {ratio:.4}",
            criterion.name()
        )));
    }
    let (alpha, beta) = match criterion {
        FatigueCriterion::Findley => {
            let root = 2.0 * (ratio - 1.0).sqrt();
            ((2.0 - ratio) / root, f_minus1 / root)
        }
        FatigueCriterion::Matake => (2.0 * t_minus1 / f_minus1 - 1.0, t_minus1),
        FatigueCriterion::DangVan => (3.0 * t_minus1 / f_minus1 - 1.5, t_minus1),
    };
    Ok(FatigueParams {
        criterion,
        alpha,
        beta,
        f_minus1,
        t_minus1,
    })
}

/// Equivalent von Mises stress of a 2D (plane stress) or 3D Voigt vector.
pub fn von_mises(sigma: &[f64]) -> f64 {
    von_mises_sq(sigma).max(0.0).sqrt()
}

fn von_mises_sq(s: &[f64]) -> f64 {
    match s.len() {
        3 => s[0] * s[0] + s[1] * s[1] - s[0] * s[1] + 3.0 * s[2] * s[2],
        6 => {
            s[0] * s[0] + s[1] * s[1] + s[2] * s[2]
                - s[0] * s[1]
                - s[1] * s[2]
                - s[0] * s[2]
                + 3.0 * (s[3] * s[3] + s[4] * s[4] + s[5] * s[5])
        }
        n => panic!("Voigt vector of length {n}"),
    }
}

/// `M sigma`, the gradient of `sigma_vm^2 / 2`.
fn von_mises_m_sigma(s: &[f64], out: &mut [f64]) {
    match s.len() {
        3 => {
            out[0] = s[0] - 0.5 * s[1];
            out[1] = s[1] - 0.5 * s[0];
            out[2] = 3.0 * s[2];
        }
        _ => {
            out[0] = s[0] - 0.5 * (s[1] + s[2]);
            out[1] = s[1] - 0.5 * (s[0] + s[2]);
            out[2] = s[2] - 0.5 * (s[0] + s[1]);
            for k in 3..6 {
                out[k] = 3.0 * s[k];
            }
        }
    }
}

/// Normalized von Mises constraint `sigma_vm / sigma_bar - 1`.
pub fn von_mises_g(sigma: &[f64], sigma_bar: f64) -> f64 {
    von_mises(sigma) / sigma_bar - 1.0
}

/// Orthonormal local basis `(n, a, b)` of a material plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneBasis {
    pub theta: f64,
    pub phi: f64,
    pub n: [f64; 3],
    pub a: [f64; 3],
    pub b: [f64; 3],
}

impl PlaneBasis {
    /// In-plane (2D) orientation: `n` at angle `theta` from the x axis.
    pub fn planar(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        PlaneBasis {
            theta,
            phi: 0.0,
            n: [c, s, 0.0],
            a: [0.0, 0.0, 1.0],
            b: [-s, c, 0.0],
        }
    }

    /// Spherical orientation: `theta` from the z axis, `phi` from x in the xy plane.
    pub fn spatial(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        PlaneBasis {
            theta,
            phi,
            n: [st * cp, st * sp, ct],
            a: [sp, -cp, 0.0],
            b: [ct * cp, ct * sp, -st],
        }
    }

    /// Row `r` with `r . sigma = u^T S v` for the 3D Voigt stress vector.
    fn traction_row(u: &[f64; 3], v: &[f64; 3]) -> [f64; 6] {
        [
            u[0] * v[0],
            u[1] * v[1],
            u[2] * v[2],
            u[0] * v[1] + v[0] * u[1],
            u[1] * v[2] + v[1] * u[2],
            u[0] * v[2] + v[0] * u[2],
        ]
    }

    /// Linear rows mapping a Voigt stress to `sigma_n` and the plane shear
    /// components (`tau_nb` in 2D; `tau_na, tau_nb` in 3D).
    pub fn rows(&self, dim: Dim) -> PlaneRows {
        match dim {
            Dim::Two => {
                let (s2, c2) = (2.0 * self.theta).sin_cos();
                PlaneRows {
                    normal: [0.5 * (1.0 + c2), 0.5 * (1.0 - c2), s2, 0.0, 0.0, 0.0],
                    shear: [[-0.5 * s2, 0.5 * s2, c2, 0.0, 0.0, 0.0], [0.0; 6]],
                    num_shear: 1,
                }
            }
            Dim::Three => PlaneRows {
                normal: Self::traction_row(&self.n, &self.n),
                shear: [
                    Self::traction_row(&self.n, &self.a),
                    Self::traction_row(&self.n, &self.b),
                ],
                num_shear: 2,
            },
        }
    }
}

/// Precomputed projection rows of one plane.
#[derive(Debug, Clone, Copy)]
pub struct PlaneRows {
    pub normal: [f64; 6],
    pub shear: [[f64; 6]; 2],
    pub num_shear: usize,
}

fn dot(r: &[f64; 6], s: &[f64]) -> f64 {
    r.iter().zip(s).map(|(a, b)| a * b).sum()
}

/// Stress components acting on a plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneStress {
    pub sigma_n: f64,
    /// `[tau_nb]` in 2D or `[tau_na, tau_nb]` in 3D.
    pub tau: [f64; 2],
}

/// Projects a Voigt stress onto `plane`.
pub fn transform_stress(sigma: &[f64], plane: &PlaneBasis, dim: Dim) -> PlaneStress {
    let rows = plane.rows(dim);
    PlaneStress {
        sigma_n: dot(&rows.normal, sigma),
        tau: [
            dot(&rows.shear[0], sigma),
            if rows.num_shear == 2 {
                dot(&rows.shear[1], sigma)
            } else {
                0.0
            },
        ],
    }
}

/// Shear amplitude and peak normal stress on one plane for a cycle whose
/// plane projections are `sigma_n_mean + sigma_n_amp sin`, `tau_mean + tau_amp sin`.
pub fn plane_cycle_extremes(sigma_n_mean: f64, sigma_n_amp: f64, tau_amp: &[f64]) -> (f64, f64) {
    let tau_a = tau_amp.iter().map(|t| t * t).sum::<f64>().sqrt();
    (tau_a, sigma_n_mean + sigma_n_amp.abs())
}

/// Peak hydrostatic stress over the cycle (`sigma_zz = 0` in plane stress).
pub fn hydrostatic_max(mean: &[f64], amp: &[f64]) -> f64 {
    let tr = |s: &[f64]| match s.len() {
        3 => s[0] + s[1],
        _ => s[0] + s[1] + s[2],
    };
    tr(mean) / 3.0 + (tr(amp) / 3.0).abs()
}

/// Discrete set of candidate planes.
#[derive(Debug, Clone)]
pub struct PlaneGrid {
    dim: Dim,
    planes: Vec<PlaneBasis>,
    rows: Vec<PlaneRows>,
    tie_band: f64,
}

impl PlaneGrid {
    /// `theta in {0, d, ..., 180 - d}` degrees (semicircle).
    pub fn planar(dtheta_deg: f64) -> Result<Self> {
        let n = steps(180.0, dtheta_deg)?;
        let planes: Vec<PlaneBasis> = (0..n)
            .map(|k| PlaneBasis::planar((k as f64 * dtheta_deg).to_radians()))
            .collect();
        Ok(Self::from_planes(Dim::Two, planes, dtheta_deg))
    }

    /// `theta in {0, ..., 90}` and `phi in {0, ..., 360 - dphi}` degrees (hemisphere),
    /// without the repeated planes at the pole and on the equator.
    pub fn hemisphere(dtheta_deg: f64, dphi_deg: f64) -> Result<Self> {
        let nt = steps(90.0, dtheta_deg)?;
        let np = steps(360.0, dphi_deg)?;
        let mut planes = Vec::with_capacity((nt + 1) * np);
        for i in 0..=nt {
            // The pole is a single plane and the equator repeats after half a turn.
            let count = match i {
                0 => 1,
                _ if i == nt => np.div_ceil(2),
                _ => np,
            };
            for j in 0..count {
                planes.push(PlaneBasis::spatial(
                    (i as f64 * dtheta_deg).to_radians(),
                    (j as f64 * dphi_deg).to_radians(),
                ));
            }
        }
        Ok(Self::from_planes(Dim::Three, planes, dtheta_deg.max(dphi_deg)))
    }

    /// Default search grids: 1 degree in 2D, 5 x 5 degrees in 3D.
    pub fn default_for(dim: Dim) -> Self {
        match dim {
            Dim::Two => Self::planar(1.0),
            Dim::Three => Self::hemisphere(5.0, 5.0),
        }
        .expect("default increments divide the search domain")
    }

    fn from_planes(dim: Dim, planes: Vec<PlaneBasis>, increment_deg: f64) -> Self {
        let rows = planes.iter().map(|p| p.rows(dim)).collect();
        let reach = match dim {
            Dim::Two => 1.0,
            Dim::Three => std::f64::consts::SQRT_2,
        };
        let tie_band = (1.0 - (reach * increment_deg.to_radians()).cos()).max(TIE_TOL);
        PlaneGrid {
            dim,
            planes,
            rows,
            tie_band,
        }
    }

    /// Relative shear-amplitude band treated as a tie: the largest shortfall
    /// of the nearest grid plane below a continuous maximum.
    pub fn tie_band(&self) -> f64 {
        self.tie_band
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn plane(&self, i: usize) -> &PlaneBasis {
        &self.planes[i]
    }
}

fn steps(span: f64, inc: f64) -> Result<usize> {
    if !(inc > 0.0 && inc <= span) {
        return Err(Error::InvalidInput(format!(
            "angular increment {inc} must lie in (0, {span}]"
        )));
    }
    let n = (span / inc).round();
    if (n * inc - span).abs() > 1e-9 * span {
        return Err(Error::InvalidInput(format!(
            "angular increment {inc} does not divide {span} degrees"
        )));
    }
    Ok(n as usize)
}

/// Result of the critical-plane search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPlaneResult {
    /// Index into the plane grid of the critical plane.
    pub plane: usize,
    pub theta: f64,
    pub phi: f64,
    pub tau_a: f64,
    /// `sigma_n,max` on the critical plane (Findley, Matake) or
    /// `sigma_H,max` (Dang Van).
    pub normal_term: f64,
    pub measure: f64,
    pub g: f64,
}

/// Smallest relative band within which two shear amplitudes count as tied.
const TIE_TOL: f64 = 1e-12;

/// A configured stress constraint ready for per-element evaluation.
#[derive(Debug, Clone)]
pub enum StressCriterion {
    VonMises { limit: f64 },
    Fatigue { params: FatigueParams, grid: PlaneGrid },
}

/// Criterion value with its gradient with respect to the cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleEvaluation {
    pub g: f64,
    pub d_mean: [f64; 6],
    pub d_amp: [f64; 6],
    /// Identifies the attained branch (critical plane and sign pattern);
    /// the gradient is exact as long as this does not change.
    pub branch: u64,
}

impl StressCriterion {
    pub fn von_mises(limit: f64) -> Self {
        StressCriterion::VonMises { limit }
    }

    pub fn fatigue(params: FatigueParams, grid: PlaneGrid) -> Self {
        StressCriterion::Fatigue { params, grid }
    }

    pub fn kind(&self) -> Criterion {
        match self {
            StressCriterion::VonMises { .. } => Criterion::VonMises,
            StressCriterion::Fatigue { params, .. } => Criterion::Fatigue(params.criterion),
        }
    }

    /// Limit the measure is normalized by.
    pub fn limit(&self) -> f64 {
        match self {
            StressCriterion::VonMises { limit } => *limit,
            StressCriterion::Fatigue { params, .. } => params.beta,
        }
    }

    /// Evaluates `g` for the cycle `mean + amp sin(wt)` and its gradient.
    pub fn evaluate(&self, mean: &[f64], amp: &[f64]) -> CycleEvaluation {
        match self {
            StressCriterion::VonMises { limit } => von_mises_cycle(mean, amp, *limit),
            StressCriterion::Fatigue { params, grid } => fatigue_cycle(params, grid, mean, amp),
        }
    }

    /// Full critical-plane report (fatigue criteria only).
    pub fn critical_plane(&self, mean: &[f64], amp: &[f64]) -> Option<CriticalPlaneResult> {
        match self {
            StressCriterion::VonMises { .. } => None,
            StressCriterion::Fatigue { params, grid } => {
                Some(critical_plane_search(params, grid, mean, amp).0)
            }
        }
    }
}

fn von_mises_cycle(mean: &[f64], amp: &[f64], limit: f64) -> CycleEvaluation {
    let nv = mean.len();
    let mut plus = [0.0; 6];
    let mut minus = [0.0; 6];
    for k in 0..nv {
        plus[k] = mean[k] + amp[k];
        minus[k] = mean[k] - amp[k];
    }
    let (vp, vm) = (von_mises_sq(&plus[..nv]), von_mises_sq(&minus[..nv]));
    let (peak, sign, branch) = if vp >= vm { (&plus, 1.0, 0) } else { (&minus, -1.0, 1) };
    let v = vp.max(vm).max(0.0).sqrt();
    let mut d_mean = [0.0; 6];
    let mut d_amp = [0.0; 6];
    if v > 0.0 {
        let mut ms = [0.0; 6];
        von_mises_m_sigma(&peak[..nv], &mut ms[..nv]);
        for k in 0..nv {
            d_mean[k] = ms[k] / (v * limit);
            d_amp[k] = sign * d_mean[k];
        }
    }
    CycleEvaluation {
        g: v / limit - 1.0,
        d_mean,
        d_amp,
        branch,
    }
}

/// Per-plane quantities of the cycle.
struct PlaneCycle {
    sn_amp: f64,
    tau_amp: [f64; 2],
    tau_a: f64,
    sn_max: f64,
}

fn plane_cycle(rows: &PlaneRows, mean: &[f64], amp: &[f64]) -> PlaneCycle {
    let sn_mean = dot(&rows.normal, mean);
    let sn_amp = dot(&rows.normal, amp);
    let mut tau_amp = [0.0; 2];
    for k in 0..rows.num_shear {
        tau_amp[k] = dot(&rows.shear[k], amp);
    }
    let (tau_a, sn_max) = plane_cycle_extremes(sn_mean, sn_amp, &tau_amp[..rows.num_shear]);
    PlaneCycle {
        sn_amp,
        tau_amp,
        tau_a,
        sn_max,
    }
}

/// Returns the critical-plane result and the index of the plane where the
/// maximum shear amplitude is attained (used by Dang Van).
fn critical_plane_search(
    params: &FatigueParams,
    grid: &PlaneGrid,
    mean: &[f64],
    amp: &[f64],
) -> (CriticalPlaneResult, usize) {
    let alpha = params.alpha;
    let best = match params.criterion {
        FatigueCriterion::Findley | FatigueCriterion::DangVan => {
            let findley = params.criterion == FatigueCriterion::Findley;
            let mut best = 0usize;
            let mut best_key = f64::NEG_INFINITY;
            for (i, rows) in grid.rows.iter().enumerate() {
                let pc = plane_cycle(rows, mean, amp);
                let m = if findley { pc.tau_a + alpha * pc.sn_max } else { pc.tau_a };
                if m > best_key {
                    best_key = m;
                    best = i;
                }
            }
            best
        }
        FatigueCriterion::Matake => {
            let tau_max = grid
                .rows
                .iter()
                .map(|r| plane_cycle(r, mean, amp).tau_a)
                .fold(f64::NEG_INFINITY, f64::max);
            let floor = tau_max - grid.tie_band * tau_max.abs().max(f64::MIN_POSITIVE);
            let mut best = 0usize;
            let mut best_sn = f64::NEG_INFINITY;
            for (i, rows) in grid.rows.iter().enumerate() {
                let c = plane_cycle(rows, mean, amp);
                if c.tau_a >= floor && c.sn_max > best_sn {
                    best_sn = c.sn_max;
                    best = i;
                }
            }
            best
        }
    };
    let pc = plane_cycle(&grid.rows[best], mean, amp);
    let normal_term = match params.criterion {
        FatigueCriterion::DangVan => hydrostatic_max(mean, amp),
        _ => pc.sn_max,
    };
    let measure = pc.tau_a + alpha * normal_term;
    let p = &grid.planes[best];
    (
        CriticalPlaneResult {
            plane: best,
            theta: p.theta,
            phi: p.phi,
            tau_a: pc.tau_a,
            normal_term,
            measure,
            g: measure / params.beta - 1.0,
        },
        best,
    )
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn fatigue_cycle(
    params: &FatigueParams,
    grid: &PlaneGrid,
    mean: &[f64],
    amp: &[f64],
) -> CycleEvaluation {
    let nv = mean.len();
    let (res, best) = critical_plane_search(params, grid, mean, amp);
    let rows = &grid.rows[best];
    let pc = plane_cycle(rows, mean, amp);
    let inv_beta = 1.0 / params.beta;
    let alpha = params.alpha;

    let mut d_mean = [0.0; 6];
    let mut d_amp = [0.0; 6];
    // Shear amplitude term.
    if pc.tau_a > 0.0 {
        for s in 0..rows.num_shear {
            let w = pc.tau_amp[s] / pc.tau_a;
            for k in 0..nv {
                d_amp[k] += w * rows.shear[s][k];
            }
        }
    }
    // Normal / hydrostatic term.
    let mut bits = 0u64;
    match params.criterion {
        FatigueCriterion::Findley | FatigueCriterion::Matake => {
            let s = sign(pc.sn_amp);
            bits |= (s > 0.0) as u64;
            for k in 0..nv {
                d_mean[k] += alpha * rows.normal[k];
                d_amp[k] += alpha * s * rows.normal[k];
            }
        }
        FatigueCriterion::DangVan => {
            let ntr = if nv == 3 { 2 } else { 3 };
            let tr_amp: f64 = amp[..ntr].iter().sum();
            let s = sign(tr_amp);
            bits |= (s > 0.0) as u64;
            for k in 0..ntr {
                d_mean[k] += alpha / 3.0;
                d_amp[k] += alpha * s / 3.0;
            }
        }
    }
    for k in 0..nv {
        d_mean[k] *= inv_beta;
        d_amp[k] *= inv_beta;
    }
    if rows.num_shear == 1 {
        bits |= ((pc.tau_amp[0] >= 0.0) as u64) << 1;
    }
    CycleEvaluation {
        g: res.g,
        d_mean,
        d_amp,
        branch: ((best as u64) << 4) | bits,
    }
}

/// Critical-plane value of a fatigue criterion on a fresh grid with the
/// given increments (degrees). `dphi_deg` is ignored in 2D.
pub fn critical_plane_g(
    mean: &[f64],
    amp: &[f64],
    params: &FatigueParams,
    dtheta_deg: f64,
    dphi_deg: f64,
) -> Result<CriticalPlaneResult> {
    let grid = match mean.len() {
        3 => PlaneGrid::planar(dtheta_deg)?,
        6 => PlaneGrid::hemisphere(dtheta_deg, dphi_deg)?,
        n => {
            return Err(Error::InvalidInput(format!(
                "stress vector must have 3 or 6 components, got {n}"
            )))
        }
    };
    Ok(critical_plane_search(params, &grid, mean, amp).0)
}

/// Rotates a 2D Voigt stress by `psi` radians about z.
pub fn rotate_plane_stress(s: &[f64], psi: f64) -> [f64; 3] {
    let (sn, c) = psi.sin_cos();
    let (c2, s2, cs) = (c * c, sn * sn, c * sn);
    [
        c2 * s[0] + s2 * s[1] - 2.0 * cs * s[2],
        s2 * s[0] + c2 * s[1] + 2.0 * cs * s[2],
        cs * (s[0] - s[1]) + (c2 - s2) * s[2],
    ]
}
