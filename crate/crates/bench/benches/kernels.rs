use criterion::{criterion_group, criterion_main, Criterion};
use metatopo::adjoint::al_gradient;
use metatopo::alopt::{ALState, ObjectiveKind, OptimizerConfig};
use metatopo::criteria::{fatigue_params, Criterion as StressKind, FatigueCriterion, PlaneGrid, StressCriterion};
use metatopo::field::build_filter;
use metatopo::homogenize::{Homogenizer, LoadCase, SolverChoice};
use metatopo::mesh::{build_mesh, Dim};
use metatopo::problem::Problem;
use metatopo::Material;

fn wavy(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.55 + 0.4 * ((i as f64) * 0.731).sin()).collect()
}

fn homogenization(c: &mut Criterion) {
    let m = Material::TI6AL4V;
    for (dim, n) in [(Dim::Two, 60), (Dim::Three, 16)] {
        let mesh = build_mesh(dim, &vec![n; dim.spatial()], 1.0).unwrap();
        let hz = Homogenizer::new(mesh, &m, SolverChoice::Auto).unwrap();
        let simp = OptimizerConfig::defaults(dim).simp;
        let rho = wavy(hz.mesh().num_elements());
        c.bench_function(&format!("unit_cells_{}d_{n}", dim.spatial()), |b| {
            b.iter(|| hz.solve_unit_cells(&rho, &simp).unwrap())
        });
    }
}

fn filtering(c: &mut Criterion) {
    let mesh = build_mesh(Dim::Two, &[60, 60], 1.0).unwrap();
    let f = build_filter(&mesh, 2.5 * mesh.cell_size(), 3.5, true).unwrap();
    let rho = wavy(mesh.num_elements());
    c.bench_function("filter_2d_60", |b| b.iter(|| f.apply(&rho)));
}

fn critical_plane(c: &mut Criterion) {
    let m = Material::TI6AL4V;
    let cycles = [
        (Dim::Two, vec![40.0, -10.0, 25.0], vec![120.0, 60.0, -200.0]),
        (
            Dim::Three,
            vec![40.0, -10.0, 5.0, 25.0, 0.0, -15.0],
            vec![120.0, 60.0, -30.0, -200.0, 40.0, 10.0],
        ),
    ];
    for (dim, mean, amp) in &cycles {
        for fc in [FatigueCriterion::Findley, FatigueCriterion::Matake, FatigueCriterion::DangVan] {
            let p = fatigue_params(fc, m.f_minus1_mpa, m.t_minus1_mpa).unwrap();
            let crit = StressCriterion::fatigue(p, PlaneGrid::default_for(*dim));
            c.bench_function(&format!("{}_{}d", fc.name(), dim.spatial()), |b| {
                b.iter(|| crit.evaluate(mean, amp))
            });
        }
    }
}

fn adjoint(c: &mut Criterion) {
    let mesh = build_mesh(Dim::Two, &[30, 30], 1.0).unwrap();
    let config = OptimizerConfig::defaults(Dim::Two);
    for (name, kind, load) in [
        ("vonmises", StressKind::VonMises, LoadCase::fixed("s", vec![-0.005, -0.005, 0.0])),
        (
            "findley",
            StressKind::Fatigue(FatigueCriterion::Findley),
            LoadCase::sinusoid("c", vec![0.0; 3], vec![0.0, 0.0, 0.008]),
        ),
    ] {
        let problem = Problem::new(
            mesh.clone(),
            Material::TI6AL4V,
            ObjectiveKind::BulkMax,
            0.6,
            Some(kind),
            vec![load],
            &config,
            SolverChoice::Direct,
        )
        .unwrap();
        let rho = wavy(problem.num_elements());
        let mut state = ALState::new(problem.num_stress_constraints(), &config);
        state.lambda_s.iter_mut().for_each(|l| *l = 0.5);
        let norm = problem.objective_scale().unwrap();
        c.bench_function(&format!("evaluate_and_gradient_{name}_2d_30"), |b| {
            b.iter(|| {
                let eval = problem.evaluate(&rho, 4.0).unwrap();
                al_gradient(&problem, &eval, &state, norm).unwrap()
            })
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = homogenization, filtering, critical_plane, adjoint
}
criterion_main!(benches);
