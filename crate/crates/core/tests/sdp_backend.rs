use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smf_core::sdp::{lmi_eigen_max, PiBlock, ThetaBlock};
use smf_core::{solve, verify, DenseIpm, SdpBackend, SdpProblem, SdpStatus, SolverOptions};

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn schur(a: f64, theta: f64) -> SdpProblem<f64> {
    SdpProblem::new(
        "schur",
        1,
        None,
        0,
        vec![PiBlock::constant("a", scalar(a))],
        vec![ThetaBlock::new("theta", scalar(theta))],
    )
    .unwrap()
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * floor
}

/// Two coupled blocks sharing three multipliers plus a budget block bounding them.
fn random_family(rng: &mut ChaCha8Rng, drop: Option<usize>) -> SdpProblem<f64> {
    let n = 2;
    let c1 = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let c2 = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let m: Vec<_> = (0..3).map(|_| random_pd(rng, n, 0.2)).collect();
    let w: Vec<_> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
    let v: Vec<_> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
    let mut first = ThetaBlock::new("first", DMatrix::zeros(n, n));
    let mut second = ThetaBlock::new("second", DMatrix::zeros(1, 1));
    let mut cap = ThetaBlock::new("cap", scalar(1.0));
    for i in 0..3 {
        if drop == Some(i) {
            continue;
        }
        first = first.term(i, m[i].clone());
        second = second.term(i, scalar(v[i]));
        cap = cap.term(i, scalar(-w[i]));
    }
    SdpProblem::new(
        "family",
        n,
        None,
        3,
        vec![
            PiBlock::constant("first", c1),
            PiBlock::constant("second", c2),
            PiBlock::constant("cap", DMatrix::zeros(n, 1)),
        ],
        vec![first, second, cap],
    )
    .unwrap()
}

#[test]
fn schur_grid_matches_closed_form() {
    let opts = SolverOptions::default();
    for i in 1..=10 {
        for j in 1..=10 {
            let (a, theta) = (0.5 * i as f64, 0.5 * j as f64);
            let s = solve(&schur(a, theta), &opts).unwrap();
            assert_eq!(s.status, SdpStatus::Optimal, "a = {a}, theta = {theta}");
            let oracle = a * a / theta;
            assert!(
                (s.objective - oracle).abs() <= 1e-6,
                "a = {a}, theta = {theta}: {} vs {oracle}",
                s.objective
            );
        }
    }
}

#[test]
fn zero_coupling_gives_floor_solution() {
    let s = solve(&schur(0.0, 1.0), &SolverOptions::default()).unwrap();
    assert!(s.status.is_optimal());
    assert!(s.objective <= 1e-6);
    assert!(s.verification.unwrap().passed());
}

#[test]
fn solutions_verify_and_shrunk_shapes_do_not() {
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let prob = random_family(&mut rng, None);
        let s = solve(&prob, &opts).unwrap();
        assert!(s.status.is_optimal(), "{:?}", s.status);
        let rep = verify(&prob, &s, 1e-7).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let mut shrunk = s.clone();
        shrunk.p *= 0.5;
        assert!(!verify(&prob, &shrunk, 1e-7).unwrap().lmi_ok());
    }
}

#[test]
fn restricting_a_multiplier_never_improves_the_optimum() {
    let opts = SolverOptions::default();
    for seed in 0..8 {
        let full = solve(&random_family(&mut ChaCha8Rng::seed_from_u64(seed), None), &opts).unwrap();
        assert!(full.status.is_optimal());
        for j in 0..3 {
            let restricted = solve(&random_family(&mut ChaCha8Rng::seed_from_u64(seed), Some(j)), &opts).unwrap();
            if restricted.status.is_optimal() {
                assert!(
                    restricted.objective >= full.objective - 1e-6 * (1.0 + full.objective),
                    "seed {seed}, tau {j}: {} < {}",
                    restricted.objective,
                    full.objective
                );
            } else {
                assert_eq!(restricted.status, SdpStatus::Infeasible);
            }
        }
    }
}

#[test]
fn prepared_problem_can_be_resolved_with_other_options() {
    let prob = schur(2.0, 1.0);
    let handle = DenseIpm.build(&prob).unwrap();
    let loose = SolverOptions {
        gap_tol: 1e-5,
        feas_tol: 1e-5,
        ..SolverOptions::default()
    };
    let tight = DenseIpm.solve(&handle, &SolverOptions::default()).unwrap();
    let coarse = DenseIpm.solve(&handle, &loose).unwrap();
    assert!(tight.status.is_optimal() && coarse.status.is_optimal());
    assert!(coarse.stats.iterations <= tight.stats.iterations);
    assert!((coarse.objective - 4.0).abs() < 1e-3);
    assert_eq!(SdpBackend::<f64>::name(&DenseIpm), "dense-ipm");
}

#[test]
fn contradictory_budget_is_infeasible() {
    let prob = SdpProblem::<f64>::new(
        "contradiction",
        1,
        None,
        1,
        vec![
            PiBlock::constant("a", scalar(1.0)),
            PiBlock::constant("z", DMatrix::zeros(1, 1)),
        ],
        vec![
            ThetaBlock::new("low", scalar(-1.0)).term(0, scalar(1.0)),
            ThetaBlock::new("high", scalar(0.5)).term(0, scalar(-1.0)),
        ],
    )
    .unwrap();
    assert_eq!(
        solve(&prob, &SolverOptions::default()).unwrap().status,
        SdpStatus::Infeasible
    );
}

#[test]
fn lmi_is_affine_and_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 3;
    let e = random_pd(&mut rng, n, 0.1);
    let g = DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
    let prob = SdpProblem::<f64>::new(
        "gain",
        n,
        Some(2),
        2,
        vec![
            PiBlock::with_gain("shape", e.clone(), -&g * &e),
            PiBlock::with_gain("noise", DMatrix::zeros(n, 2), -DMatrix::identity(2, 2)),
        ],
        vec![
            ThetaBlock::new("shape", DMatrix::zeros(n, n)).term(0, DMatrix::identity(n, n)),
            ThetaBlock::new("noise", DMatrix::zeros(2, 2)).term(1, DMatrix::identity(2, 2) * 4.0),
        ],
    )
    .unwrap();
    for _ in 0..50 {
        let draw = |rng: &mut ChaCha8Rng| {
            let p = random_pd(rng, n, 0.0);
            let l = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
            let tau = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            (p, l, tau)
        };
        let (p1, l1, t1) = draw(&mut rng);
        let (p2, l2, t2) = draw(&mut rng);
        let alpha: f64 = rng.random_range(-1.0..2.0);
        let mix = |a: &DMatrix<f64>, b: &DMatrix<f64>| a * alpha + b * (1.0 - alpha);
        let tm: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let f1 = prob.evaluate_lmi(&p1, Some(&l1), &t1).unwrap();
        let f2 = prob.evaluate_lmi(&p2, Some(&l2), &t2).unwrap();
        let fm = prob.evaluate_lmi(&mix(&p1, &p2), Some(&mix(&l1, &l2)), &tm).unwrap();
        assert!((&fm - mix(&f1, &f2)).amax() <= 1e-10 * (1.0 + fm.amax()));
        assert!((&fm - fm.transpose()).amax() == 0.0);
        assert_eq!(fm.nrows(), prob.lmi_dim());
        lmi_eigen_max(&fm).unwrap();
    }
}

#[test]
fn asymmetric_matrix_is_rejected() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(lmi_eigen_max(&m).is_err());
}

#[test]
fn f32_problem_is_solved_in_double_precision() {
    let prob = SdpProblem::<f32>::new(
        "schur32",
        1,
        None,
        0,
        vec![PiBlock::constant("a", DMatrix::from_element(1, 1, 3.0f32))],
        vec![ThetaBlock::new("theta", DMatrix::from_element(1, 1, 2.0f32))],
    )
    .unwrap();
    let opts = SolverOptions {
        verify_tol: 1e-5,
        ..SolverOptions::default()
    };
    let s = solve(&prob, &opts).unwrap();
    assert!(s.status.is_optimal());
    assert!((s.objective - 4.5).abs() < 1e-5);
}
