//! Design variable chain `rho -> rho_tilde -> rho_bar` and its reverse-mode
//! chain rule.
//!
//! The filter is the density-weighted polynomial kernel
//!
//! ```text
//! rho_tilde_I = sum_J L_IJ rho_J^2 / (sum_K L_IK rho_K + DEN_GUARD)
//! L_IJ        = max(0, 1 - d(x_I, x_J) / R)^s
//! ```
//!
//! with periodic (minimum-image) centroid distances, followed by the smooth
//! Heaviside projection with slope `beta` and threshold `eta`.

use crate::mesh::{Dim, RucMesh};
use crate::{Error, Result};

/// Added to the filter denominator so an all-void neighbourhood stays finite.
pub const DEN_GUARD: f64 = 1e-12;

/// Sparse polynomial kernel weights `L_IJ` in CSR layout.
#[derive(Debug, Clone)]
pub struct FilterOperator {
    radius: f64,
    exponent: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    identity: bool,
}

/// Builds the kernel for radius `radius` (mm) and exponent `exponent`.
///
/// A radius that reaches no neighbouring centroid yields the identity
/// filter; callers may want to warn about that.
pub fn build_filter(
    mesh: &RucMesh,
    radius: f64,
    exponent: f64,
    periodic: bool,
) -> Result<FilterOperator> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "filter radius must be positive, got {radius}"
        )));
    }
    if !(exponent >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "filter exponent must be at least 1, got {exponent}"
        )));
    }
    let h = mesh.cell_size();
    let res = mesh.resolution();
    let reach = (radius / h).ceil() as isize;
    let axes = match mesh.dim() {
        Dim::Two => 2,
        Dim::Three => 3,
    };

    // Distinct neighbour cells per axis with their signed offsets.
    let axis_offsets = |n: usize| -> Vec<isize> {
        let n = n as isize;
        if periodic && 2 * reach + 1 >= n {
            // Every cell is reachable; use the minimum-image offset of each.
            (0..n).map(|k| if k > n / 2 { k - n } else { k }).collect()
        } else {
            (-reach..=reach).collect()
        }
    };
    let offsets: Vec<Vec<isize>> = (0..3)
        .map(|a| if a < axes { axis_offsets(res[a]) } else { vec![0] })
        .collect();

    let n_el = mesh.num_elements();
    let mut row_ptr = Vec::with_capacity(n_el + 1);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    row_ptr.push(0);
    for e in 0..n_el {
        let c = mesh.element_cell(e);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for &dz in &offsets[2] {
            for &dy in &offsets[1] {
                for &dx in &offsets[0] {
                    let d = [dx, dy, dz];
                    let mut target = [0usize; 3];
                    let mut inside = true;
                    for a in 0..3 {
                        let n = res[a] as isize;
                        let t = c[a] as isize + d[a];
                        if periodic {
                            target[a] = t.rem_euclid(n) as usize;
                        } else if t < 0 || t >= n {
                            inside = false;
                        } else {
                            target[a] = t as usize;
                        }
                    }
                    if !inside {
                        continue;
                    }
                    let dist = h * ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                    let w = (1.0 - dist / radius).max(0.0).powf(exponent);
                    if w > 0.0 {
                        row.push((mesh.element_index(target), w));
                    }
                }
            }
        }
        row.sort_by_key(|&(j, _)| j);
        for (j, w) in row {
            cols.push(j);
            weights.push(w);
        }
        row_ptr.push(cols.len());
    }
    let identity = cols.len() == n_el;

    Ok(FilterOperator {
        radius,
        exponent,
        row_ptr,
        cols,
        weights,
        identity,
    })
}

impl FilterOperator {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// True when every element only sees itself.
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn num_elements(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Kernel weights `(J, L_IJ)` of row `I`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    /// Effective row-stochastic weights `F_IJ` at density `rho`.
    pub fn effective_weights(&self, rho: &[f64], i: usize) -> Vec<(usize, f64)> {
        if self.identity {
            return vec![(i, 1.0)];
        }
        let den: f64 = self.row(i).map(|(j, l)| l * rho[j]).sum::<f64>() + DEN_GUARD;
        self.row(i).map(|(j, l)| (j, l * rho[j] / den)).collect()
    }

    /// Filtered densities and the per-row denominators used by [`Self::backprop`].
    pub fn apply(&self, rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if self.identity {
            return (rho.to_vec(), vec![1.0; rho.len()]);
        }
        let mut out = Vec::with_capacity(rho.len());
        let mut dens = Vec::with_capacity(rho.len());
        for i in 0..self.num_elements() {
            let (mut num, mut den) = (0.0, DEN_GUARD);
            for (j, l) in self.row(i) {
                num += l * rho[j] * rho[j];
                den += l * rho[j];
            }
            out.push(num / den);
            dens.push(den);
        }
        (out, dens)
    }

    /// `dJ/drho` from `dJ/drho_tilde` via the quotient-rule Jacobian
    /// `d rho_tilde_I / d rho_J = L_IJ (2 rho_J - rho_tilde_I) / den_I`.
    pub fn backprop(&self, rho: &[f64], rho_tilde: &[f64], dens: &[f64], grad: &[f64]) -> Vec<f64> {
        if self.identity {
            return grad.to_vec();
        }
        let mut out = vec![0.0; rho.len()];
        for i in 0..self.num_elements() {
            let gi = grad[i] / dens[i];
            if gi == 0.0 {
                continue;
            }
            for (j, l) in self.row(i) {
                out[j] += gi * l * (2.0 * rho[j] - rho_tilde[i]);
            }
        }
        out
    }
}

/// Smooth Heaviside projection; `beta = 0` is the identity.
pub fn project(rho_tilde: f64, beta: f64, eta: f64) -> f64 {
    if beta == 0.0 {
        return rho_tilde;
    }
    let a = (beta * eta).tanh();
    (a + (beta * (rho_tilde - eta)).tanh()) / (a + (beta * (1.0 - eta)).tanh())
}

/// `d rho_bar / d rho_tilde`.
pub fn project_slope(rho_tilde: f64, beta: f64, eta: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    let t = (beta * (rho_tilde - eta)).tanh();
    beta * (1.0 - t * t) / ((beta * eta).tanh() + (beta * (1.0 - eta)).tanh())
}

/// Projection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub beta: f64,
    pub eta: f64,
}

/// One evaluated design: raw, filtered, and projected densities.
#[derive(Debug, Clone)]
pub struct DesignField {
    pub rho: Vec<f64>,
    pub rho_tilde: Vec<f64>,
    pub rho_bar: Vec<f64>,
    pub projection: Projection,
    filter_den: Vec<f64>,
}

impl DesignField {
    pub fn new(filter: &FilterOperator, rho: Vec<f64>, projection: Projection) -> Result<Self> {
        if rho.len() != filter.num_elements() {
            return Err(Error::ShapeMismatch {
                expected: filter.num_elements(),
                actual: rho.len(),
            });
        }
        if let Some(v) = rho.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("density {v} outside [0, 1]")));
        }
        let (rho_tilde, filter_den) = filter.apply(&rho);
        let rho_bar = rho_tilde
            .iter()
            .map(|&t| project(t, projection.beta, projection.eta))
            .collect();
        Ok(DesignField {
            rho,
            rho_tilde,
            rho_bar,
            projection,
            filter_den,
        })
    }

    /// A field whose projected densities are given directly (no filtering).
    pub fn from_physical(rho_bar: Vec<f64>) -> Self {
        DesignField {
            rho: rho_bar.clone(),
            rho_tilde: rho_bar.clone(),
            filter_den: vec![1.0; rho_bar.len()],
            rho_bar,
            projection: Projection { beta: 0.0, eta: 0.5 },
        }
    }

    /// `d rho_bar / d rho_tilde` per element.
    pub fn projection_slopes(&self) -> Vec<f64> {
        self.rho_tilde
            .iter()
            .map(|&t| project_slope(t, self.projection.beta, self.projection.eta))
            .collect()
    }

    /// Pulls a gradient with respect to `rho_tilde` back to `rho`.
    pub fn backprop_tilde(&self, filter: &FilterOperator, d_rho_tilde: &[f64]) -> Vec<f64> {
        filter.backprop(&self.rho, &self.rho_tilde, &self.filter_den, d_rho_tilde)
    }

    /// Pulls a gradient with respect to `rho_bar` back to `rho`.
    pub fn backprop_chain(&self, filter: &FilterOperator, d_rho_bar: &[f64]) -> Vec<f64> {
        let d_tilde: Vec<f64> = d_rho_bar
            .iter()
            .zip(self.projection_slopes())
            .map(|(g, s)| g * s)
            .collect();
        self.backprop_tilde(filter, &d_tilde)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_radius_is_identity() {
        let mesh = build_mesh(Dim::Two, &[5, 5], 10.0).unwrap();
        let f = build_filter(&mesh, 1.5, 3.5, true).unwrap();
        assert!(f.is_identity());
        let rho: Vec<f64> = (0..25).map(|i| i as f64 / 25.0).collect();
        assert_eq!(f.apply(&rho).0, rho);
    }

    #[test]
    fn uniform_density_is_preserved_and_rows_are_stochastic() {
        let mesh = build_mesh(Dim::Three, &[4, 4, 4], 1.0).unwrap();
        let f = build_filter(&mesh, 0.6, 3.5, true).unwrap();
        let rho = vec![0.37; mesh.num_elements()];
        let (t, _) = f.apply(&rho);
        assert!(t.iter().all(|v| (v - 0.37).abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
        for i in 0..64 {
            let s: f64 = f.effective_weights(&rho, i).iter().map(|w| w.1).sum();
            assert!((s - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn periodic_wraparound_weights() {
        let mesh = build_mesh(Dim::Two, &[6, 6], 6.0).unwrap();
        let f = build_filter(&mesh, 2.5, 1.0, true).unwrap();
        // Element 0 sees element 5 (its periodic left neighbour) at distance 1.
        let w: Vec<(usize, f64)> = f.row(0).collect();
        let left = w.iter().find(|(j, _)| *j == 5).unwrap().1;
        assert!((left - 0.6).abs() < 1e-14);
        let nf = build_filter(&mesh, 2.5, 1.0, false).unwrap();
        assert!(nf.row(0).all(|(j, _)| j != 5));
    }

    #[test]
    fn projection_fixed_points() {
        for beta in [0.5, 1.0, 4.0, 10.0] {
            assert!((project(0.5, beta, 0.5) - 0.5).abs() < 1e-15);
            assert!(project(0.0, beta, 0.5).abs() < 1e-15);
            assert!((project(1.0, beta, 0.5) - 1.0).abs() < 1e-15);
        }
        assert_eq!(project(0.3, 0.0, 0.5), 0.3);
    }

    #[test]
    fn projection_slope_matches_central_difference() {
        for &(t, beta) in &[(0.2, 1.0), (0.55, 10.0), (0.9, 4.0)] {
            let h = 1e-6;
            let fd = (project(t + h, beta, 0.5) - project(t - h, beta, 0.5)) / (2.0 * h);
            assert!((fd - project_slope(t, beta, 0.5)).abs() < 1e-7 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn identity_filter_without_projection_passes_gradient() {
        let mesh = build_mesh(Dim::Two, &[4, 4], 4.0).unwrap();
        let f = build_filter(&mesh, 0.5, 3.5, true).unwrap();
        let rho = vec![0.4; 16];
        let field = DesignField::new(&f, rho, Projection { beta: 0.0, eta: 0.5 }).unwrap();
        let g: Vec<f64> = (0..16).map(|i| i as f64 - 3.0).collect();
        assert_eq!(field.backprop_chain(&f, &g), g);
    }

    #[test]
    fn uniform_gradient_on_uniform_design_stays_uniform() {
        let mesh = build_mesh(Dim::Two, &[6, 6], 6.0).unwrap();
        let f = build_filter(&mesh, 2.5, 3.5, true).unwrap();
        let field = DesignField::new(&f, vec![0.6; 36], Projection { beta: 3.0, eta: 0.5 }).unwrap();
        let g = field.backprop_chain(&f, &vec![1.0; 36]);
        assert!(g.iter().all(|v| (v - g[0]).abs() < 1e-12 * g[0].abs()));
    }

    #[test]
    fn rejects_bad_parameters() {
        let mesh = build_mesh(Dim::Two, &[4, 4], 4.0).unwrap();
        assert!(build_filter(&mesh, 0.0, 3.5, true).is_err());
        assert!(build_filter(&mesh, 1.0, 0.5, true).is_err());
        let f = build_filter(&mesh, 1.0, 3.5, true).unwrap();
        assert!(DesignField::new(&f, vec![0.5; 15], Projection { beta: 1.0, eta: 0.5 }).is_err());
        assert!(DesignField::new(&f, vec![1.5; 16], Projection { beta: 1.0, eta: 0.5 }).is_err());
    }

    proptest! {
        #[test]
        fn projection_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, beta in 0.0f64..20.0, eta in 0.05f64..0.95) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (pl, ph) = (project(lo, beta, eta), project(hi, beta, eta));
            prop_assert!(pl <= ph + 1e-15);
            prop_assert!((-1e-15..=1.0 + 1e-15).contains(&pl));
        }

        #[test]
        fn filtered_density_stays_in_unit_interval(seed in 0u64..1000) {
            let mesh = build_mesh(Dim::Two, &[5, 5], 5.0).unwrap();
            let f = build_filter(&mesh, 2.2, 3.5, true).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..1.0)).collect();
            let (t, _) = f.apply(&rho);
            for v in t {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }
}
