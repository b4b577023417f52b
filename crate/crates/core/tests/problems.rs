use drifttrack::problems::{
    LeastSquares, LeastSquaresParams, Logistic, LogisticParams, Performative, PerformativeParams,
    SparseLeastSquares, SparseParams, TimeVaryingProblem,
};
use drifttrack::RngStream;

/// `μ̄‖ref_i − ref_t‖ ≤ ‖∇f_i(ref_t) − ∇f_t(ref_t)‖` on a driven instance.
fn lemma_check(mut p: Box<dyn TimeVaryingProblem>, steps: usize, tol: f64) {
    let c = p.constants();
    let mut drift = RngStream::new(9, 2);
    for _ in 0..steps {
        p.advance(&mut drift).unwrap();
    }
    let mut pick = RngStream::new(9, 3);
    for _ in 0..40 {
        let (i, t) = (pick.index(steps + 1), pick.index(steps + 1));
        let ri = p.reference(i).unwrap().point;
        let rt = p.reference(t).unwrap().point;
        let lhs = c.mu_bar() * (&ri - &rt).norm();
        let rhs = p.gradient_drift_norm(i, t, &rt).unwrap();
        assert!(lhs <= rhs + tol, "{}: i={i} t={t}: {lhs} > {rhs}", p.name());
    }
}

#[test]
fn minimizer_drift_is_bounded_by_gradient_drift() {
    lemma_check(
        Box::new(
            LeastSquares::new(
                LeastSquaresParams {
                    d: 8,
                    n: 12,
                    mu: 0.2,
                    l: 5.0,
                    ..Default::default()
                },
                1,
            )
            .unwrap(),
        ),
        30,
        1e-9,
    );
    lemma_check(
        Box::new(
            SparseLeastSquares::new(
                SparseParams {
                    d: 12,
                    n: 20,
                    mu: 0.5,
                    l: 2.0,
                    delta_drift: 0.3,
                    ..Default::default()
                },
                2,
            )
            .unwrap(),
        ),
        20,
        1e-6,
    );
    lemma_check(
        Box::new(
            Logistic::new(
                LogisticParams {
                    d: 5,
                    n: 30,
                    mu: 0.5,
                },
                3,
            )
            .unwrap(),
        ),
        20,
        1e-8,
    );
    lemma_check(
        Box::new(
            Performative::new(
                PerformativeParams {
                    epsilon: 0.3,
                    ..Default::default()
                },
                4,
            )
            .unwrap(),
        ),
        20,
        1e-9,
    );
}

#[test]
fn references_are_first_order_stationary() {
    let problems: Vec<Box<dyn TimeVaryingProblem>> = vec![
        Box::new(LeastSquares::new(LeastSquaresParams::default(), 5).unwrap()),
        Box::new(SparseLeastSquares::new(SparseParams::default(), 6).unwrap()),
        Box::new(Logistic::new(LogisticParams::default(), 7).unwrap()),
        Box::new(Performative::new(PerformativeParams::default(), 8).unwrap()),
    ];
    for mut p in problems {
        let mut drift = RngStream::new(1, 2);
        for t in 0..5 {
            let r = p.reference(t).unwrap();
            let res = p.first_order_residual(t, &r.point).unwrap();
            assert!(res < 1e-6, "{} t={t}: residual {res}", p.name());
            assert!(p.gap(t, &r.point).unwrap().abs() < 1e-9);
            p.advance(&mut drift).unwrap();
        }
    }
}

#[test]
fn instances_are_reproducible_from_seed() {
    let a = Logistic::new(LogisticParams::default(), 11).unwrap();
    let b = Logistic::new(LogisticParams::default(), 11).unwrap();
    assert_eq!(a.rows(), b.rows());
    assert_eq!(a.initial_point(), b.initial_point());
    let c = Logistic::new(LogisticParams::default(), 12).unwrap();
    assert_ne!(a.rows(), c.rows());
}
