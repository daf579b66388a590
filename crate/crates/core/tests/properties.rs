use std::sync::Arc;

use approx::assert_relative_eq;
use escapekit::basis::{BasisSpec, NoiseKind};
use escapekit::generator::{apply_generator, FiniteDifferenceField};
use escapekit::learn::{build_regression, fit_least_squares, FitOptions};
use escapekit::oracle::{estimate_exit, OracleOptions};
use escapekit::pde::{build_grid, AverageRule, Domain, FieldSolver, Grid, SolverOptions};
use escapekit::sde::{
    builtin_model, euler_maruyama, sample_brownian, simulate_ensemble, Builtin, DiffusionSpec,
    Drift, JetParams, NoiseParams, PolynomialDrift, SdeModel,
};
use escapekit::{FieldSolution64, SdeModel32, SdeModel64};
use proptest::prelude::*;

fn heat(dim: usize) -> SdeModel64 {
    SdeModel::new(
        Drift::Polynomial(PolynomialDrift::zero(dim)),
        DiffusionSpec::additive(vec![1.0; dim]),
        "heat",
    )
    .unwrap()
}

fn linear3d() -> SdeModel64 {
    builtin_model(Builtin::Linear3d, NoiseParams::new(0.9)).unwrap()
}

fn jet(which: Builtin, sigma: f64) -> SdeModel64 {
    builtin_model(which, NoiseParams::new(sigma)).unwrap()
}

fn eddy() -> Domain<f64> {
    Domain::eddy(JetParams::default()).unwrap()
}

fn solver(model: &SdeModel64, grid: &Arc<Grid<f64>>) -> FieldSolver<f64> {
    FieldSolver::new(model, grid.clone(), SolverOptions::default()).unwrap()
}

fn max_error(grid: &Grid<f64>, u: &[f64], exact: impl Fn(&[f64]) -> f64) -> f64 {
    (0..grid.node_count())
        .filter(|&n| !u[n].is_nan())
        .map(|n| (u[n] - exact(&grid.coords(n))).abs())
        .fold(0.0, f64::max)
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn generator_of_linear_observables() {
    let m = linear3d();
    for x in [[0.3, -1.2, 0.7], [1.5, 0.2, 0.1], [-0.4, -0.9, 0.95]] {
        let z = FiniteDifferenceField::new(|p: &[f64]| p[2], 1e-4);
        assert_relative_eq!(
            apply_generator(&m, &z, &x).unwrap(),
            -0.3 * x[2],
            epsilon = 1e-9
        );
        let r2 = FiniteDifferenceField::new(|p: &[f64]| p.iter().map(|v| v * v).sum(), 1e-3);
        let expected = -0.2 * (x[0] * x[0] + x[1] * x[1]) - 0.6 * x[2] * x[2] + 3.0 * 0.9;
        assert_relative_eq!(
            apply_generator(&m, &r2, &x).unwrap(),
            expected,
            epsilon = 1e-6
        );
    }
}

// E g(X_t) - g(x) = E int A g ds with g = z and A g = -0.3 z: the Euler mean
// decays by exactly (1 - 0.3 dt) per step.
#[test]
fn dynkin_mean_of_linear_observable() {
    let m = linear3d();
    let (steps, dt) = (100, 0.01);
    let x0 = vec![vec![0.5, -0.5, 1.0]; 4000];
    let paths = simulate_ensemble(&m, &x0, steps, dt, 3).unwrap();
    let z: Vec<f64> = paths.iter().map(|p| p.state(steps)[2]).collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = (1.0 - 0.3 * dt).powi(steps as i32);
    assert!((mean - expected).abs() < 4.0 * (var / n).sqrt());
}

#[test]
fn manufactured_solution_square_is_second_order() {
    let pi = std::f64::consts::PI;
    let exact = |p: &[f64]| (pi * p[0]).sin() * (pi * p[1]).sin();
    let m = heat(2);
    let errors: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&res| {
            let grid =
                build_grid(Domain::cuboid(vec![0.0; 2], vec![1.0; 2]).unwrap(), res).unwrap();
            let u = solver(&m, &grid)
                .solve_dirichlet(|p| -pi * pi * exact(p), exact)
                .unwrap();
            max_error(&grid, &u, exact)
        })
        .collect();
    for o in orders(&errors) {
        assert!(o >= 1.8, "order {o}, errors {errors:?}");
    }
}

#[test]
fn manufactured_solution_cube_is_second_order() {
    let exact = |p: &[f64]| (p[0] + 2.0 * p[1]).exp() * (5f64.sqrt() * p[2]).cos();
    let m = heat(3);
    let errors: Vec<f64> = [9, 17, 33]
        .iter()
        .map(|&res| {
            let grid =
                build_grid(Domain::cuboid(vec![0.0; 3], vec![1.0; 3]).unwrap(), res).unwrap();
            let u = solver(&m, &grid).solve_dirichlet(|_| 0.0, exact).unwrap();
            max_error(&grid, &u, exact)
        })
        .collect();
    for o in orders(&errors) {
        assert!(o >= 1.8, "order {o}, errors {errors:?}");
    }
}

// Harmonic data on the curved eddy boundary exercises the cut links.
#[test]
fn manufactured_solution_on_eddy_converges() {
    let exact = |p: &[f64]| p[0].exp() * p[1].cos() + 0.3 * p[0] * p[1];
    let m = heat(2);
    let errors: Vec<f64> = [33, 65, 129]
        .iter()
        .map(|&res| {
            let grid = build_grid(eddy(), res).unwrap();
            let u = solver(&m, &grid).solve_dirichlet(|_| 0.0, exact).unwrap();
            max_error(&grid, &u, exact)
        })
        .collect();
    for o in orders(&errors) {
        assert!(o >= 1.8, "order {o}, errors {errors:?}");
    }
}

#[test]
fn escape_fields_partition_unity_on_eddy() {
    let m = jet(Builtin::JetMultiplicative, 0.3f64.sqrt());
    let grid = build_grid(eddy(), 128).unwrap();
    let s = solver(&m, &grid);
    let crest = s.escape_probability(&[0]).unwrap();
    let trough = s.escape_probability(&[1]).unwrap();
    let worst = crest
        .values
        .iter()
        .zip(&trough.values)
        .filter(|(a, _)| !a.is_nan())
        .map(|(a, b)| (a + b - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-3, "partition defect {worst}");
    let total = crest.average_with(AverageRule::Cell) + trough.average_with(AverageRule::Cell);
    assert_relative_eq!(total, 1.0, epsilon = 1e-6);
}

#[test]
fn mrt_residual_on_eddy() {
    let grid = build_grid(eddy(), 128).unwrap();
    let u = solver(&jet(Builtin::JetAdditive, 0.3f64.sqrt()), &grid)
        .mean_residence_time()
        .unwrap();
    assert!(u.residual <= 1e-10, "residual {}", u.residual);
    assert!(u.min_interior() > 0.0);
}

fn check_maximum_principle(u: &FieldSolution64, escape: &[FieldSolution64]) {
    assert!(u.min_value() >= 0.0 && u.min_interior() > 0.0);
    for p in escape {
        assert!(p.min_value() >= 0.0 && p.max_value() <= 1.0, "{}", p.tag());
    }
}

#[test]
fn maximum_principle_on_cuboid_and_eddy() {
    let grid = build_grid(
        Domain::cuboid(vec![-2.0, -2.0, 0.0], vec![2.0, 2.0, 1.0]).unwrap(),
        24,
    )
    .unwrap();
    let s = solver(&linear3d(), &grid);
    let faces: Vec<_> = (0..6)
        .map(|f| s.escape_probability(&[f]).unwrap())
        .collect();
    check_maximum_principle(&s.mean_residence_time().unwrap(), &faces);

    let grid = build_grid(eddy(), 96).unwrap();
    let s = solver(&jet(Builtin::JetAdditive, 0.2), &grid);
    let arcs: Vec<_> = (0..2)
        .map(|f| s.escape_probability(&[f]).unwrap())
        .collect();
    check_maximum_principle(&s.mean_residence_time().unwrap(), &arcs);
}

// The linear drift commutes with the rotation (x, y) -> (-x, -y), and so does
// the box.
#[test]
fn linear3d_fields_are_point_symmetric() {
    let grid = build_grid(
        Domain::cuboid(vec![-2.0, -2.0, 0.0], vec![2.0, 2.0, 1.0]).unwrap(),
        33,
    )
    .unwrap();
    let s = solver(&linear3d(), &grid);
    let u = s.mean_residence_time().unwrap();
    let top = s.escape_probability(&[5]).unwrap();
    let d = grid.dims().to_vec();
    for node in 0..grid.node_count() {
        let idx = grid.multi_index(node);
        let mirror = grid.node_index(&[d[0] - 1 - idx[0], d[1] - 1 - idx[1], idx[2]]);
        assert!((u.values[node] - u.values[mirror]).abs() <= 1e-8);
        assert!((top.values[node] - top.values[mirror]).abs() <= 1e-8);
    }
    // x-faces map to each other under the rotation.
    let xmin = s.escape_probability(&[0]).unwrap();
    let xmax = s.escape_probability(&[1]).unwrap();
    assert_relative_eq!(
        xmin.average_with(AverageRule::Cell),
        xmax.average_with(AverageRule::Cell),
        epsilon = 1e-8
    );
}

/// Max-norm difference between successive nested grids at shared nodes.
fn refinement_differences(model: &SdeModel64, domain: Domain<f64>, res: &[usize]) -> Vec<f64> {
    let fields: Vec<(Arc<Grid<f64>>, Vec<f64>)> = res
        .iter()
        .map(|&r| {
            let grid = build_grid(domain.clone(), r).unwrap();
            let u = solver(model, &grid).mean_residence_time().unwrap();
            (grid, u.values)
        })
        .collect();
    fields
        .windows(2)
        .map(|w| {
            let ((coarse, uc), (fine, uf)) = (&w[0], &w[1]);
            (0..coarse.node_count())
                .filter_map(|n| {
                    let idx: Vec<usize> = coarse.multi_index(n).iter().map(|i| 2 * i).collect();
                    let (a, b) = (uc[n], uf[fine.node_index(&idx)]);
                    (!a.is_nan() && !b.is_nan()).then(|| (a - b).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

#[test]
fn mrt_converges_under_refinement() {
    let cube = Domain::cuboid(vec![-2.0, -2.0, 0.0], vec![2.0, 2.0, 1.0]).unwrap();
    let d = refinement_differences(&linear3d(), cube, &[9, 17, 33]);
    assert!(d[0] >= 3.0 * d[1], "cuboid differences {d:?}");
    let m = jet(Builtin::JetAdditive, 0.3f64.sqrt());
    let d = refinement_differences(&m, eddy(), &[65, 129, 257]);
    assert!(d[0] >= 3.0 * d[1], "eddy differences {d:?}");
}

#[test]
fn noise_intensity_recovered_from_one_long_path() {
    let m = linear3d();
    let path = sample_brownian(20_000, 3, 0.01, 17).unwrap();
    let rec = euler_maruyama(&m, &[1.0, 1.0, 1.0], &path).unwrap();
    let basis = BasisSpec::with_noise_kinds(3, 2, &[NoiseKind::Additive; 3]).unwrap();
    let reg = build_regression(&[rec], &basis).unwrap();
    let (table, _) = fit_least_squares(&reg, &FitOptions::default()).unwrap();
    for k in 0..3 {
        let s = table.get(&format!("dB{}/dt", k + 1), k).unwrap();
        assert_relative_eq!(s, 0.9f64.sqrt(), max_relative = 0.02);
    }
}

#[test]
fn single_precision_pipeline() {
    let m: SdeModel32 =
        builtin_model(Builtin::JetAdditive, NoiseParams::new(0.3f32.sqrt())).unwrap();
    let path = sample_brownian(20_000, 2, 0.01f32, 5).unwrap();
    let rec = euler_maruyama(&m, &[-0.2, 0.8], &path).unwrap();
    let basis = BasisSpec::with_noise_kinds(2, 3, &[NoiseKind::Additive; 2]).unwrap();
    let reg = build_regression(&[rec], &basis).unwrap();
    let (table, _) = fit_least_squares(&reg, &FitOptions::default()).unwrap();
    for k in 0..2 {
        let s = table.get(&format!("dB{}/dt", k + 1), k).unwrap();
        assert!((s / 0.3f32.sqrt() - 1.0).abs() < 0.02, "{s}");
    }
    let grid = build_grid(Domain::eddy(JetParams::default()).unwrap(), 64).unwrap();
    // Single precision stalls near 1e-5 relative residual.
    let opts = SolverOptions {
        tol: 1e-4,
        max_iter: 2000,
    };
    let s = FieldSolver::new(&m, grid, opts).unwrap();
    let u = s.mean_residence_time().unwrap();
    assert!(u.min_interior() > 0.0 && u.max_value().is_finite());
}

#[test]
fn oracle_interval_shrinks_with_paths() {
    let m = linear3d();
    let domain = Domain::cuboid(vec![-2.0, -2.0, 0.0], vec![2.0, 2.0, 1.0]).unwrap();
    let se = |paths| {
        let opts = OracleOptions {
            paths,
            dt: 1e-3,
            horizon: 50.0,
            seed: 9,
        };
        let e = estimate_exit(&m, &domain, &[0.0, 0.0, 0.5], &opts).unwrap();
        (e.exit_time_se, e.frequency_of(&[5]).1)
    };
    let (t1, p1) = se(1000);
    let (t4, p4) = se(4000);
    for ratio in [t4 / t1, p4 / p1] {
        assert!((0.4..0.6).contains(&ratio), "ratio {ratio}");
    }
}

fn stable_linear_model(a: [f64; 4], s: [f64; 2]) -> SdeModel64 {
    let basis = BasisSpec::polynomial(2, 1).unwrap();
    let ix = basis.term_index(&[1, 0]).unwrap();
    let iy = basis.term_index(&[0, 1]).unwrap();
    let mut cx = vec![0.0; basis.polynomial_len()];
    let mut cy = cx.clone();
    cx[ix] = -1.0 - a[0];
    cx[iy] = a[1];
    cy[ix] = -a[1];
    cy[iy] = -1.0 - a[2];
    cy[0] = a[3];
    SdeModel::new(
        Drift::Polynomial(PolynomialDrift::new(basis, vec![cx, cy]).unwrap()),
        DiffusionSpec::additive(s.to_vec()),
        "linear2d",
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Euler data with recorded increments satisfies the regression identity
    // exactly, so a library containing the true drift recovers it.
    #[test]
    fn learning_recovers_polynomial_drift(
        a in prop::array::uniform4(0.0f64..1.0),
        s in prop::array::uniform2(0.1f64..1.0),
        seed in any::<u64>(),
    ) {
        let m = stable_linear_model(a, s);
        let path = sample_brownian(500, 2, 0.01, seed).unwrap();
        let rec = euler_maruyama(&m, &[0.5, -0.5], &path).unwrap();
        let basis = BasisSpec::with_noise_kinds(2, 2, &[NoiseKind::Additive; 2]).unwrap();
        let reg = build_regression(&[rec], &basis).unwrap();
        let (table, _) = fit_least_squares(&reg, &FitOptions::default()).unwrap();
        let Drift::Polynomial(p) = &m.drift else { unreachable!() };
        let truth = p.basis().labels();
        for (k, coeffs) in p.coeffs().iter().enumerate() {
            for (label, c) in truth.iter().zip(coeffs) {
                prop_assert!((table.get(label, k).unwrap() - c).abs() < 1e-8);
            }
            let noise = table.get(&format!("dB{}/dt", k + 1), k).unwrap();
            prop_assert!((noise - s[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn escape_partition_on_random_boxes(
        a in prop::array::uniform4(0.0f64..1.0),
        s in prop::array::uniform2(0.1f64..1.0),
        lo in prop::array::uniform2(-1.0f64..0.0),
        width in prop::array::uniform2(0.5f64..2.0),
    ) {
        let m = stable_linear_model(a, s);
        let hi = [lo[0] + width[0], lo[1] + width[1]];
        let grid = build_grid(Domain::cuboid(lo.to_vec(), hi.to_vec()).unwrap(), 24).unwrap();
        let solver = solver(&m, &grid);
        let fields: Vec<_> = (0..4).map(|f| solver.escape_probability(&[f]).unwrap()).collect();
        for node in 0..grid.node_count() {
            let sum: f64 = fields.iter().map(|f| f.values[node]).sum();
            if grid.unknown_of_node(node).is_some() {
                prop_assert!((sum - 1.0).abs() <= 1e-8);
            }
            for f in &fields {
                prop_assert!((0.0..=1.0).contains(&f.values[node]));
            }
        }
        let union = solver.escape_probability(&[0, 1, 2, 3]).unwrap();
        prop_assert!(union.values.iter().all(|v| (v - 1.0).abs() <= 1e-8));
    }
}
