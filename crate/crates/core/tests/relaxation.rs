use reach_sos::moments::DomainGeometry;
use reach_sos::poly::{Exponent, Polynomial};
use reach_sos::relax::{
    assemble_dual, assemble_primal, solve_dual, solve_primal, Component, RelaxError,
};
use reach_sos::sdp::{Cone, InteriorPoint, SolverOptions, Status};
use reach_sos::semialg::{DynamicalSystem, Horizon, ReachProblem, SemialgebraicSet};

fn var(n: usize, i: usize) -> Polynomial<f64> {
    Polynomial::variable(n, i)
}

fn c(n: usize, v: f64) -> Polynomial<f64> {
    Polynomial::constant(n, v)
}

fn disk(center: [f64; 2], radius: f64) -> Polynomial<f64> {
    let dx = &var(2, 0) - &c(2, center[0]);
    let dy = &var(2, 1) - &c(2, center[1]);
    &(&c(2, radius * radius) - &dx.pow(2)) - &dy.pow(2)
}

fn toy(horizon: Horizon) -> ReachProblem<f64> {
    let (x1, x2) = (var(2, 0), var(2, 1));
    let f1 = (&x1 + &(&x1 * &x2).scale(2.0)).scale(0.5);
    let f2 = (&x2 - &x1.pow(3).scale(2.0)).scale(0.5);
    ReachProblem::new(
        "toy",
        vec!["x1".into(), "x2".into()],
        SemialgebraicSet::new(2, vec![disk([0.5, 0.5], 0.25)]).unwrap(),
        SemialgebraicSet::new(2, vec![disk([0.0, 0.0], 1.0)]).unwrap(),
        DynamicalSystem::new(vec![f1, f2]).unwrap(),
        horizon,
        DomainGeometry::unit_ball(2),
        true,
    )
    .unwrap()
}

/// `X⁰ = [lo, hi]`, `X = [0, 1]`, `f(x) = a x`.
fn one_dim(lo: f64, hi: f64, a: f64) -> ReachProblem<f64> {
    let x = var(1, 0);
    let init = vec![&x - &c(1, lo), &c(1, hi) - &x];
    let state = vec![x.clone(), &c(1, 1.0) - &x];
    ReachProblem::new(
        "line",
        vec!["x".into()],
        SemialgebraicSet::new(1, init).unwrap(),
        SemialgebraicSet::new(1, state).unwrap(),
        DynamicalSystem::new(vec![x.scale(a)]).unwrap(),
        Horizon::UZero,
        DomainGeometry::new_box(vec![0.0], vec![1.0]).unwrap(),
        true,
    )
    .unwrap()
}

#[test]
fn toy_program_sizes() {
    let p = toy(Horizon::UZero);
    let (prog, layout) = assemble_primal(&p, 2).unwrap();
    assert_eq!(layout.y.len(), 15);
    let y_moment = layout
        .psd
        .iter()
        .find(|b| b.component == Component::Target && b.multiplier == 0)
        .unwrap();
    assert_eq!(y_moment.size, 6);
    // u = 0 drops the mass row and the scalar a
    assert!(layout.a.is_none());
    assert!(!prog.cones.contains(&Cone::Nonneg(1)));
    let (_, dual_layout) = assemble_dual(&p, 2).unwrap();
    let liouville = dual_layout
        .grams
        .iter()
        .find(|b| b.component == Component::Occupation && b.multiplier == 0)
        .unwrap();
    assert_eq!(liouville.order, 6);
    assert!(dual_layout.u.is_none());
    let (_, with_u) = assemble_dual(&toy(Horizon::Steps(100)), 2).unwrap();
    assert!(with_u.u.is_some());
}

#[test]
fn order_below_minimum_is_refused() {
    assert!(matches!(
        assemble_dual(&toy(Horizon::UZero), 0),
        Err(RelaxError::OrderTooLow { r: 0, r_min: 1 })
    ));
}

#[test]
fn trivial_dual_point_has_volume_objective() {
    let p = toy(Horizon::Steps(100));
    let (prog, layout) = assemble_dual(&p, 2).unwrap();
    let mut x = vec![0.0; prog.n_cols()];
    x[layout.w.start] = 1.0;
    let obj: f64 = prog.c.iter().zip(&x).map(|(a, b)| a * b).sum();
    // scaled frame of the unit ball is the identity
    assert!((obj - std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn toy_dual_solves_and_reconstructs() {
    // without the mass term the SOS side has no strictly feasible point
    let p = toy(Horizon::UZero);
    let cert = solve_dual(&p, 2, &InteriorPoint, &SolverOptions::default()).unwrap();
    assert!(cert.stats.unwrap().status.is_converged());
    assert_eq!(cert.u, 0.0);
    assert!(cert.reconstruction_residual() < 1e-6);
    assert!(cert.objective <= std::f64::consts::PI + 1e-6);
    for m in &cert.memberships {
        assert!(m.min_gram_eigenvalue() > -1e-7, "{:?}", m.component);
    }
    // the initial disk centre is reachable
    assert!(cert.margin(&[0.5, 0.5], 0) >= -1e-6);
}

#[test]
fn toy_dual_with_horizon_is_optimal() {
    let cert = solve_dual(
        &toy(Horizon::Steps(100)),
        2,
        &InteriorPoint,
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(cert.stats.unwrap().status, Status::Optimal);
    assert!(cert.u >= -1e-9);
    assert!(cert.reconstruction_residual() < 1e-6);
}

#[test]
fn toy_primal_and_dual_agree() {
    let p = toy(Horizon::Steps(100));
    for r in [2, 3] {
        let d = solve_dual(&p, r, &InteriorPoint, &SolverOptions::default()).unwrap();
        let pr = solve_primal(&p, r, &InteriorPoint, &SolverOptions::default()).unwrap();
        assert_eq!(d.stats.unwrap().status, Status::Optimal);
        assert_eq!(pr.stats.status, Status::Optimal);
        let rel = (d.objective - pr.objective).abs() / d.objective.abs().max(1.0);
        assert!(
            rel < 1e-6,
            "r = {r}: dual {} primal {}",
            d.objective,
            pr.objective
        );
    }
}

#[test]
fn contraction_on_the_line_bounds_volume() {
    // f = x/2 from [1/2, 1]: every point of [0, 1] is a limit or image
    let p = one_dim(0.5, 1.0, 0.5);
    let pr = solve_primal(&p, 1, &InteriorPoint, &SolverOptions::default()).unwrap();
    assert!(pr.objective <= 1.0 + 1e-7);
    let d = solve_dual(&p, 1, &InteriorPoint, &SolverOptions::default()).unwrap();
    assert!(d.objective >= pr.objective - 1e-6);
    assert!(d.v.coefficient(&Exponent::zero(1)).is_finite());
}
