//! Independent oracles for the element, homogenization and filter kernels.

use metatopo::alopt::{objective_derivative, objective_value, ObjectiveKind};
use metatopo::field::{build_filter, project, DesignField, Projection};
use metatopo::homogenize::{Homogenizer, Simp, SolverChoice};
use metatopo::mesh::{build_mesh, element_stiffness_and_b, Dim};
use metatopo::Material;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_design(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Five-point Gauss-Legendre rule on [-1, 1].
fn gauss5() -> [(f64, f64); 5] {
    let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
    [(-b, wb), (-a, wa), (0.0, 128.0 / 225.0), (a, wa), (b, wb)]
}

#[test]
fn q4_stiffness_matches_high_order_quadrature() {
    let (h, nu) = (1.0, 0.3);
    let em = element_stiffness_and_b(Dim::Two, h, nu).unwrap();
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let d = 1.0 / (1.0 - nu * nu);
    let c = [[d, d * nu, 0.0], [d * nu, d, 0.0], [0.0, 0.0, d * (1.0 - nu) / 2.0]];
    let mut k = [[0.0; 8]; 8];
    for (xi, wx) in gauss5() {
        for (eta, wy) in gauss5() {
            let mut b = [[0.0; 8]; 3];
            for (a, (ca, cb)) in corners.iter().enumerate() {
                let dx = 0.25 * ca * (1.0 + cb * eta) * 2.0 / h;
                let dy = 0.25 * cb * (1.0 + ca * xi) * 2.0 / h;
                b[0][2 * a] = dx;
                b[1][2 * a + 1] = dy;
                b[2][2 * a] = dy;
                b[2][2 * a + 1] = dx;
            }
            let w = wx * wy * (h / 2.0) * (h / 2.0);
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            s += b[p][i] * c[p][q] * b[q][j];
                        }
                    }
                    k[i][j] += w * s;
                }
            }
        }
    }
    for i in 0..8 {
        for j in 0..8 {
            assert!(
                (em.k0[(i, j)] - k[i][j]).abs() < 1e-12,
                "k0[{i}][{j}] = {} vs {}",
                em.k0[(i, j)],
                k[i][j]
            );
        }
    }
    // Closed-form leading entry for the unit square: (3 - nu) / (6 (1 - nu^2)).
    assert!((em.k0[(0, 0)] - (3.0 - nu) / (6.0 * (1.0 - nu * nu))).abs() < 1e-12);
}

fn homogenizer_2d(n: usize) -> Homogenizer {
    let mesh = build_mesh(Dim::Two, &[n, n], 1.0).unwrap();
    Homogenizer::new(mesh, &Material::TI6AL4V, SolverChoice::Direct).unwrap()
}

#[test]
fn unit_strain_rhs_matches_element_sum_of_k0_times_uniform_field() {
    let hz = homogenizer_2d(6);
    let simp = Simp::default();
    let rho = random_design(36, 0.0, 1.0, 3);
    let scale = hz.simp_factors(&rho, &simp);
    let rhs = hz.unit_strain_rhs(&scale);
    let em = hz.element();
    let nd = 8;
    for (i, f) in rhs.iter().enumerate() {
        let mut oracle = vec![0.0; f.len()];
        for (e, m) in scale.iter().enumerate() {
            let local: Vec<f64> = (0..nd)
                .map(|r| {
                    (0..nd)
                        .map(|c| em.k0[(r, c)] * em.unit_strain_displacements[(c, i)])
                        .sum::<f64>()
                        * m
                        * hz.young()
                })
                .collect();
            hz.dofs().scatter_add(e, &local, &mut oracle);
        }
        let norm = oracle.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in f.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12 * norm);
        }
    }
}

#[test]
fn homogenized_matrix_matches_load_work_identity() {
    // C_ij = (sum_e m_e E chi_i^T k0 chi_j - u_i . f_j) / |Y|, with K u = f.
    let hz = homogenizer_2d(8);
    let simp = Simp::default();
    let rho = random_design(64, 0.0, 1.0, 11);
    let sol = hz.solve_unit_cells(&rho, &simp).unwrap();
    let tensor = hz.homogenized_matrix(&sol);
    let rhs = hz.unit_strain_rhs(&sol.scale);
    let em = hz.element();
    let chi = &em.unit_strain_displacements;
    let solid = (chi.transpose() * &em.k0 * chi) * hz.young();
    let msum: f64 = sol.scale.iter().sum();
    let vol = hz.mesh().cell_volume();
    let mut max_abs = 0.0f64;
    let mut max_diff = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let work: f64 = sol.displacements[i].iter().zip(&rhs[j]).map(|(a, b)| a * b).sum();
            let oracle = (msum * solid[(i, j)] - work) / vol;
            max_abs = max_abs.max(oracle.abs());
            max_diff = max_diff.max((tensor.get(i, j) - oracle).abs());
        }
    }
    assert!(max_diff <= 1e-10 * max_abs, "diff {max_diff} vs scale {max_abs}");
    assert!(tensor.asymmetry() < 1e-10);
}

#[test]
fn homogenized_sensitivity_matches_central_differences() {
    let hz = homogenizer_2d(6);
    let simp = Simp::default();
    let rho = random_design(36, 0.1, 0.9, 5);
    let sol = hz.solve_unit_cells(&rho, &simp).unwrap();
    let t = hz.homogenized_matrix(&sol);
    let g = objective_derivative(&t, ObjectiveKind::BulkMax);
    let g_row: Vec<f64> = (0..9).map(|k| g[(k / 3, k % 3)]).collect();
    let analytic = hz.homogenized_sensitivity(&sol, &simp, &g_row);
    let c = |r: &[f64]| {
        let s = hz.solve_unit_cells(r, &simp).unwrap();
        objective_value(&hz.homogenized_matrix(&s), ObjectiveKind::BulkMax).unwrap()
    };
    let h = 1e-6;
    let scale = analytic.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for e in [0, 7, 14, 21, 35] {
        let mut p = rho.clone();
        p[e] += h;
        let mut m = rho.clone();
        m[e] -= h;
        let fd = (c(&p) - c(&m)) / (2.0 * h);
        assert!(
            (fd - analytic[e]).abs() <= 1e-5 * scale,
            "element {e}: {fd} vs {}",
            analytic[e]
        );
    }
}

#[test]
fn sensitivity_is_uniform_on_solid_and_vanishes_at_void() {
    let hz = homogenizer_2d(5);
    let simp = Simp::default();
    let g_row = vec![1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    let sol = hz.solve_unit_cells(&vec![1.0; 25], &simp).unwrap();
    let s = hz.homogenized_sensitivity(&sol, &simp, &g_row);
    for v in &s {
        assert!((v - s[0]).abs() <= 1e-10 * s[0].abs());
    }
    let mut rho = vec![1.0; 25];
    rho[12] = 0.0;
    let sol = hz.solve_unit_cells(&rho, &simp).unwrap();
    let s = hz.homogenized_sensitivity(&sol, &simp, &g_row);
    assert_eq!(s[12], 0.0);
}

#[test]
fn filter_matches_direct_kernel_evaluation() {
    let n = 10;
    let mesh = build_mesh(Dim::Two, &[n, n], 1.0).unwrap();
    let h = mesh.cell_size();
    let (radius, s) = (2.5 * h, 3.5);
    let filter = build_filter(&mesh, radius, s, true).unwrap();
    // Density varies along x only, so each row of cells is a 1D profile.
    let profile: Vec<f64> = (0..n).map(|i| 0.1 + 0.8 * ((i * 7) % n) as f64 / n as f64).collect();
    let rho: Vec<f64> = (0..n * n).map(|e| profile[e % n]).collect();
    let (tilde, _) = filter.apply(&rho);
    let wrap = |d: f64| {
        let l = n as f64 * h;
        d - l * (d / l).round()
    };
    for i in 0..n * n {
        let ci = mesh.element_centroid(i);
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..n * n {
            let cj = mesh.element_centroid(j);
            let d = (wrap(ci[0] - cj[0]).powi(2) + wrap(ci[1] - cj[1]).powi(2)).sqrt();
            let l = if d < radius { (1.0 - d / radius).powf(s) } else { 0.0 };
            num += l * rho[j] * rho[j];
            den += l * rho[j];
        }
        assert!((tilde[i] - num / den).abs() < 1e-12, "element {i}");
    }
    // A 1D profile stays 1D.
    for e in 0..n * n {
        assert!((tilde[e] - tilde[e % n]).abs() < 1e-12);
    }
}

#[test]
fn projection_at_beta_ten_sharpens_point_seven() {
    let (beta, eta, x): (f64, f64, f64) = (10.0, 0.5, 0.7);
    let oracle = ((beta * eta).tanh() + (beta * (x - eta)).tanh())
        / ((beta * eta).tanh() + (beta * (1.0 - eta)).tanh());
    let v = project(x, beta, eta);
    assert!((v - oracle).abs() < 1e-14);
    assert!(v > 0.95);
}

#[test]
fn chain_backprop_matches_central_differences() {
    let mesh = build_mesh(Dim::Two, &[6, 6], 1.0).unwrap();
    let filter = build_filter(&mesh, 2.5 * mesh.cell_size(), 3.5, true).unwrap();
    let rho = random_design(36, 0.05, 0.95, 21);
    let weights = random_design(36, -1.0, 1.0, 22);
    let proj = Projection { beta: 4.0, eta: 0.5 };
    let j = |r: &[f64]| -> f64 {
        let f = DesignField::new(&filter, r.to_vec(), proj).unwrap();
        f.rho_bar.iter().zip(&weights).map(|(a, w)| w * a * a).sum()
    };
    let field = DesignField::new(&filter, rho.clone(), proj).unwrap();
    let d_bar: Vec<f64> = field.rho_bar.iter().zip(&weights).map(|(a, w)| 2.0 * w * a).collect();
    let grad = field.backprop_chain(&filter, &d_bar);
    let h = 1e-6;
    for e in 0..36 {
        let mut p = rho.clone();
        p[e] += h;
        let mut m = rho.clone();
        m[e] -= h;
        let fd = (j(&p) - j(&m)) / (2.0 * h);
        let rel = (fd - grad[e]).abs() / grad[e].abs().max(fd.abs()).max(1e-8);
        assert!(rel < 1e-6, "element {e}: {fd} vs {}", grad[e]);
    }
}
