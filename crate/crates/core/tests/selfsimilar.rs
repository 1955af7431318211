use dyadic_core::dynamics::{integrate_system, CascadeSystem, Closure, SolverOptions};
use dyadic_core::params::alpha_tilde;
use dyadic_core::selfsimilar::*;
use dyadic_core::sum::sum_of_squares;
use dyadic_core::{pow2, Error, NodeId, TreeShape, TreeState};
use proptest::prelude::*;

/// Independent oracle for `b_0`. In `B_n = 2^{βn/3} b_n` the backward recurrence
/// `B_{n-1} = sqrt(B_n (B_{n+1} − 2^{-2β(n+1)/3}))` contracts errors; starting
/// from a flat tail `B_N = B_{N+1} = w`, `w` is bisected until `B_1` hits its
/// forced value `2^{-2β/3}`.
fn backward_b0(beta: f64) -> f64 {
    let top = 200;
    let run = |w: f64| -> Option<(f64, f64)> {
        let (mut cur, mut next) = (w, w);
        for n in (1..=top).rev() {
            let arg = cur * (next - pow2(-2.0 * beta * (n + 1) as f64 / 3.0));
            if !(arg > 0.0) {
                return None;
            }
            next = cur;
            cur = arg.sqrt();
        }
        Some((cur, next))
    };
    let target = pow2(-2.0 * beta / 3.0);
    let (mut lo, mut hi) = (1e-30f64, 1e3f64);
    for _ in 0..3000 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        match run(mid) {
            Some((_, b1)) if b1 >= target => hi = mid,
            _ => lo = mid,
        }
    }
    run(lo).unwrap().0
}

fn profile(beta: f64) -> SelfSimilarProfile {
    solve_selfsimilar_classic(-1.0, beta, 25, 1e-12).unwrap()
}

fn opts(rel: f64, dt: f64) -> SolverOptions {
    SolverOptions {
        output_interval: Some(dt),
        record_steps: false,
        ..SolverOptions::with_tolerances(rel, 1e-16)
    }
}

#[test]
fn b0_matches_backward_oracle() {
    for beta in [0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0] {
        let p = profile(beta);
        let oracle = backward_b0(beta);
        assert!((p.b0() - oracle).abs() <= 1e-12 * oracle, "beta {beta}: {} vs {oracle}", p.b0());
    }
    assert!((profile(2.0).b0() - 0.325_043_384_589_635_9).abs() < 1e-15);
}

#[test]
fn coefficients_do_not_depend_on_the_pole() {
    let a = solve_selfsimilar_classic(-1.0, 2.0, 25, 1e-12).unwrap();
    let b = solve_selfsimilar_classic(-2.0, 2.0, 25, 1e-12).unwrap();
    assert_eq!(a.b, b.b);
    let ya = a.classic_state_at(0.0, 10).unwrap();
    let yb = b.classic_state_at(0.0, 10).unwrap();
    for (x, y) in ya.values().iter().zip(yb.values()) {
        assert!((0.5 * x - y).abs() <= 1e-16 * x);
    }
    assert!(matches!(a.classic_state_at(-1.0, 3), Err(Error::DomainError(_))));
}

#[test]
fn tail_decay() {
    let p = profile(2.0);
    let q = pow2(-2.0 / 3.0);
    for n in 20..25 {
        let r = p.b[n + 1] / p.b[n];
        assert!((r / q - 1.0).abs() < 1e-3, "n = {n}: {r}");
    }
    assert!((p.w[25] - 0.441_014_948).abs() < 1e-6);
    assert!(p.b.iter().all(|&b| b > 0.0));
}

#[test]
fn first_value_is_forced() {
    // With b_{-1} = 0, b_1 = 2^{-β} whatever b_0 is.
    for beta in [0.5, 2.0, 7.0] {
        let p = profile(beta);
        assert!((p.b[1] - pow2(-beta)).abs() <= 1e-15 * pow2(-beta));
    }
}

#[test]
fn invalid_inputs() {
    assert!(matches!(solve_selfsimilar_classic(1.0, 2.0, 25, 1e-12), Err(Error::DomainError(_))));
    assert!(matches!(solve_selfsimilar_classic(-1.0, 0.0, 25, 1e-12), Err(Error::DomainError(_))));
    let bad = SelfSimilarOptions {
        initial_bracket: Some((0.5, 0.6)),
        ..SelfSimilarOptions::default()
    };
    assert!(matches!(solve_selfsimilar_with(-1.0, 2.0, &bad), Err(Error::BracketFailure(_))));
    let good = SelfSimilarOptions {
        initial_bracket: Some((0.3, 0.33)),
        ..SelfSimilarOptions::default()
    };
    let p = solve_selfsimilar_with(-1.0, 2.0, &good).unwrap();
    assert!((p.b0() - profile(2.0).b0()).abs() < 1e-11);
}

#[test]
fn classic_trajectory_tracks_exact_solution() {
    let p = profile(2.0);
    let depth = 12;
    let params = p.model_params(depth).unwrap();
    let system = CascadeSystem::new(params, p.tail_closure(depth).unwrap()).unwrap();
    let y0 = p.classic_state_at(0.0, depth).unwrap();
    let traj = integrate_system(&system, y0.values(), 0.0, 3.0, &opts(1e-10, 0.05)).unwrap();
    let e_coef = p.energy_coefficient(depth).unwrap();
    let mut worst: f64 = 0.0;
    for (t, y) in traj.times.iter().zip(&traj.states) {
        for n in 0..=10 {
            let exact = p.b[n] / (t + 1.0);
            worst = worst.max((y[n] - exact).abs() / exact);
        }
        let e: f64 = y.iter().map(|v| v * v).sum();
        assert!(((t + 1.0).powi(2) * e / e_coef - 1.0).abs() <= 1e-3);
    }
    assert!(worst <= 1e-4, "max relative deviation {worst}");
}

#[test]
fn lift_coefficients() {
    let p = profile(2.0);
    let same = lift_selfsimilar(&p, 0.0, 10).unwrap();
    assert_eq!(same.coefficients(10).unwrap(), p.b[..=10].to_vec());

    let l = lift_selfsimilar(&p, 0.5, 10).unwrap();
    assert_eq!(l.branching(), 2);
    assert_eq!(l.alpha(), 2.5);
    // Generation 1 by hand: a_1 + c_1 a_0² = N c_2 a_1 a_2.
    let a: Vec<f64> = (0..3).map(|g| pow2(-((g + 2) as f64) * 0.5) * p.b[g]).collect();
    let lhs = a[1] + pow2(2.5) * a[0] * a[0];
    let rhs = 2.0 * pow2(5.0) * a[1] * a[2];
    assert!((lhs - rhs).abs() <= 1e-10 * rhs);
    assert!(l.algebraic_residual() <= 1e-10);
    // At t = 0 the state equals the coefficients since t0 = -1.
    let coeffs = l.tree_state_at(0.0, 6).unwrap();
    assert!(tree_algebraic_residual(&coeffs, l.alpha()) <= 1e-10);

    assert!(matches!(lift_selfsimilar(&p, 0.3, 5), Err(Error::ParameterMismatch(_))));
    assert!(matches!(lift_selfsimilar(&l, 1.0, 5), Err(Error::ParameterMismatch(_))));
    assert!(matches!(lift_selfsimilar(&p, 0.5, 40), Err(Error::DepthMismatch { .. })));
}

#[test]
fn lifted_energy_decays_like_inverse_square() {
    let p = lift_selfsimilar(&profile(1.5), 1.0, 6).unwrap();
    let coef = p.energy_coefficient(6).unwrap();
    for t in [0.0, 1.0, 10.0, 1e3] {
        let x = p.tree_state_at(t, 6).unwrap();
        let e = sum_of_squares(x.values());
        assert!(((t + 1.0).powi(2) * e / coef - 1.0).abs() < 1e-13, "t = {t}: {}", (t + 1.0).powi(2) * e / coef);
    }
}

#[test]
fn pole_translation_on_the_tree() {
    let p = lift_selfsimilar(&profile(2.0), 0.5, 9).unwrap();
    let depth = 8;
    let system = CascadeSystem::new(p.model_params(depth).unwrap(), p.tail_closure(depth).unwrap()).unwrap();
    let (t, s) = (0.5, 1.25);
    let x0 = p.tree_state_at(t, depth).unwrap();
    let traj = integrate_system(&system, x0.values(), t, t + s, &opts(1e-11, s)).unwrap();
    let exact = p.tree_state_at(t + s, depth).unwrap();
    for (a, b) in traj.final_state.iter().zip(exact.values()) {
        assert!((a - b).abs() <= 1e-7 * b, "{a} vs {b}");
    }
}

#[test]
fn single_graft_at_root() {
    let shape = TreeShape::new(2, 6).unwrap();
    let classic = solve_selfsimilar_with(
        -1.0,
        2.0,
        &SelfSimilarOptions {
            n0: 1,
            ..SelfSimilarOptions::default()
        },
    )
    .unwrap();
    assert_eq!(classic.b[0], 0.0);
    let p = lift_selfsimilar(&classic, 0.5, 6).unwrap();
    let x = graft_selfsimilar(&TreeState::zeros(shape.clone()), &p, NodeId::ROOT).unwrap();
    assert_eq!(x.values()[0], 0.0);
    for g in 1..=6 {
        for v in x.generation(g) {
            assert_eq!(*v, p.coefficient(g).unwrap());
        }
    }
    assert!(tree_algebraic_residual(&x, p.alpha()) <= 1e-10);
    assert!(matches!(
        graft_selfsimilar(&x, &p, NodeId(2)),
        Err(Error::OverlapError { .. })
    ));
}

fn graft_profile(n0: usize, t0: f64) -> SelfSimilarProfile {
    let c = solve_selfsimilar_with(
        t0,
        2.0,
        &SelfSimilarOptions {
            n0,
            ..SelfSimilarOptions::default()
        },
    )
    .unwrap();
    lift_selfsimilar(&c, alpha_tilde(2), 10).unwrap()
}

#[test]
fn graft_errors() {
    let shape = TreeShape::new(2, 6).unwrap();
    let p2 = graft_profile(2, -1.0);
    let mut tree = GraftedTree::new(shape.clone());
    // Node 3 is the first node of generation 2.
    tree.graft(&p2, NodeId(3)).unwrap();
    assert!(matches!(tree.graft(&p2, NodeId(3)), Err(Error::OverlapError { .. })));
    assert!(matches!(tree.graft(&p2, NodeId(1)), Err(Error::OverlapError { .. })));
    assert!(matches!(
        tree.graft(&graft_profile(2, -2.0), NodeId(5)),
        Err(Error::PoleMismatch { .. })
    ));
    assert!(matches!(
        tree.graft(&graft_profile(1, -1.0), NodeId(7)),
        Err(Error::GenerationMismatch { profile: 1, node: 3 })
    ));
    let other = TreeShape::new(4, 3).unwrap();
    assert!(matches!(
        GraftedTree::new(other).graft(&p2, NodeId(5)),
        Err(Error::ParameterMismatch(_))
    ));
}

#[test]
fn disjoint_grafts_keep_the_complement_zero() {
    let depth = 7;
    let shape = TreeShape::new(2, depth).unwrap();
    let p = graft_profile(2, -1.0);
    let mut tree = GraftedTree::new(shape.clone());
    tree.graft(&p, NodeId(3)).unwrap();
    tree.graft(&p, NodeId(6)).unwrap();
    let coeffs = tree.coefficients().unwrap();
    assert!(tree_algebraic_residual(&coeffs, p.alpha()) <= 1e-10);

    let system = CascadeSystem::new(tree.model_params().unwrap(), tree.tail_closure().unwrap()).unwrap();
    let x0 = tree.state_at(0.0).unwrap();
    let traj = integrate_system(&system, x0.values(), 0.0, 2.0, &opts(1e-10, 0.5)).unwrap();
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let exact = tree.state_at(*t).unwrap();
        for i in 0..shape.len() {
            if tree.covers(NodeId(i)) {
                let e = exact.values()[i];
                assert!((x[i] - e).abs() <= 1e-6 * e, "node {i} at t = {t}");
            } else {
                assert_eq!(x[i], 0.0, "node {i} at t = {t}");
            }
        }
    }

    // The same holds under Galerkin truncation, where the grafted part is no
    // longer exact.
    let galerkin = CascadeSystem::new(tree.model_params().unwrap(), Closure::Galerkin).unwrap();
    let traj = integrate_system(&galerkin, x0.values(), 0.0, 2.0, &opts(1e-8, 1.0)).unwrap();
    for i in (0..shape.len()).filter(|&i| !tree.covers(NodeId(i))) {
        assert_eq!(traj.final_state[i], 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lifted_profiles_satisfy_the_algebraic_system(beta in 0.3f64..6.0, k in 0usize..4) {
        let p = solve_selfsimilar_classic(-1.0, beta, 20, 1e-12).unwrap();
        prop_assert!(p.algebraic_residual() <= 1e-10);
        let l = lift_selfsimilar(&p, alpha_tilde(1 << k), 4).unwrap();
        prop_assert!(l.algebraic_residual() <= 1e-10);
        let x = l.tree_state_at(0.0, 4).unwrap();
        prop_assert!(tree_algebraic_residual(&x, l.alpha()) <= 1e-10);
    }
}
