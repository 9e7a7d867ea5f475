use nalgebra::DMatrix;
use proptest::prelude::*;

use reach_sos::io::{grid, inside_flag, CertificateFile, GridAxis, GridFile};
use reach_sos::moments::{geometry_moment, moment_vector, DomainGeometry};
use reach_sos::poly::{Exponent, MonomialBasis, Polynomial};
use reach_sos::relax::Certificate;
use reach_sos::sdp::{mat_to_svec, svec_to_mat};
use reach_sos::semialg::{ball_radius_squared, validate_archimedean, Horizon, SemialgebraicSet};
use reach_sos::{DynamicalSystem, ReachProblem};

fn poly(n: usize, max_deg: u32) -> impl Strategy<Value = Polynomial<f64>> {
    let basis = MonomialBasis::new(n, max_deg);
    let len = basis.len();
    prop::collection::vec((0..len, -2.0f64..2.0), 1..8).prop_map(move |terms| {
        let mut p = Polynomial::zero(n);
        for (k, c) in terms {
            p.add_term(basis.monomials()[k].clone(), c);
        }
        p
    })
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, n)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn n_and_polys() -> impl Strategy<Value = (Polynomial<f64>, Polynomial<f64>, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|n| (poly(n, 4), poly(n, 4), point(n)))
}

fn map_and_point() -> impl Strategy<Value = (Polynomial<f64>, Vec<Polynomial<f64>>, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|n| (poly(n, 3), prop::collection::vec(poly(n, 2), n), point(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn product_evaluates_to_product((p, q, x) in n_and_polys()) {
        let lhs = (&p * &q).evaluate(&x).unwrap();
        let rhs = p.evaluate(&x).unwrap() * q.evaluate(&x).unwrap();
        prop_assert!(rel_close(lhs, rhs, 1e-10), "{lhs} vs {rhs}");
    }

    #[test]
    fn composing_with_identity_is_exact(p in (1usize..=3).prop_flat_map(|n| poly(n, 5))) {
        let n = p.n_vars();
        let id: Vec<_> = (0..n).map(|i| Polynomial::variable(n, i)).collect();
        prop_assert_eq!(p.compose(&id).unwrap(), p);
    }

    #[test]
    fn composition_evaluates_pointwise((p, f, x) in map_and_point()) {
        let fx: Vec<f64> = f.iter().map(|fi| fi.evaluate(&x).unwrap()).collect();
        let lhs = p.compose(&f).unwrap().evaluate(&x).unwrap();
        let rhs = p.evaluate(&fx).unwrap();
        prop_assert!(rel_close(lhs, rhs, 1e-9), "{lhs} vs {rhs}");
    }

    #[test]
    fn box_moments_are_homogeneous(
        n in 1usize..=3,
        s in 0.2f64..3.0,
        raw in prop::collection::vec(0u32..=3, 3),
    ) {
        let beta = Exponent::new(raw[..n].to_vec());
        let unit = DomainGeometry::new_box(vec![0.0; n], vec![1.0; n]).unwrap();
        let scaled = DomainGeometry::new_box(vec![0.0; n], vec![s; n]).unwrap();
        let k = n as i32 + beta.degree() as i32;
        let expected = geometry_moment::<f64>(&unit, &beta) * s.powi(k);
        prop_assert!(rel_close(geometry_moment::<f64>(&scaled, &beta), expected, 1e-12));
    }

    #[test]
    fn lebesgue_moment_matrices_are_psd(
        n in 1usize..=3,
        c in prop::collection::vec(-1.0f64..1.0, 3),
        radius in 0.3f64..2.0,
        use_ball in any::<bool>(),
    ) {
        let center = c[..n].to_vec();
        let g = if use_ball {
            DomainGeometry::new_ball(center, radius).unwrap()
        } else {
            let lo: Vec<f64> = center.iter().map(|v| v - radius).collect();
            let hi: Vec<f64> = center.iter().map(|v| v + radius).collect();
            DomainGeometry::new_box(lo, hi).unwrap()
        };
        let m = moment_vector(&g, 6).moment_matrix(3).unwrap();
        let scale = m.abs().max();
        let min = m.symmetric_eigenvalues().min() / scale;
        prop_assert!(min >= -1e-8, "min eigenvalue {min}");
    }

    #[test]
    fn svec_preserves_inner_products(k in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut sym = || {
            let a = DMatrix::<f64>::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            &a + a.transpose()
        };
        let (a, b) = (sym(), sym());
        let (va, vb) = (mat_to_svec(&a), mat_to_svec(&b));
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        prop_assert!(rel_close(dot, a.dot(&b), 1e-12));
        prop_assert!((svec_to_mat(&va, k) - &a).amax() <= 1e-15 * a.amax().max(1.0));
    }

    #[test]
    fn archimedean_check_leaves_one_ball(n in 1usize..=3, hint in 0.5f64..10.0, twice in any::<bool>()) {
        let g = DomainGeometry::new_box(vec![-1.0; n], vec![1.0; n]).unwrap();
        let set = SemialgebraicSet::new(n, g.constraints()).unwrap();
        let (mut out, _) = validate_archimedean(&set, Some(hint)).unwrap();
        if twice {
            out = validate_archimedean(&out, Some(hint)).unwrap().0;
        }
        let balls: Vec<_> = out.inequalities().iter().filter_map(ball_radius_squared).collect();
        prop_assert_eq!(balls.len(), 1);
        prop_assert!(out.inequalities().iter().any(|p| ball_radius_squared(p).is_some() && p.evaluate(&vec![0.0; n]).unwrap() > 0.0));
    }

    #[test]
    fn certificate_files_round_trip_bitwise(
        v in poly(2, 6),
        w in poly(2, 6),
        u in -1e-3f64..1e-3,
        t in prop::option::of(1u32..1000),
    ) {
        let horizon = t.map_or(Horizon::UZero, Horizon::Steps);
        let cert = Certificate {
            variables: vec!["x1".into(), "x2".into()],
            order: 3,
            horizon,
            u,
            v,
            w,
            objective: 1.0 / 3.0,
            memberships: Vec::new(),
            stats: None,
        };
        let file = CertificateFile::new(&cert, &problem(horizon), "h");
        let back = CertificateFile::from_json(&file.to_json()).unwrap().certificate().unwrap();
        prop_assert_eq!(back.u.to_bits(), cert.u.to_bits());
        prop_assert_eq!(back.horizon, cert.horizon);
        for (a, b) in [(&cert.v, &back.v), (&cert.w, &back.w)] {
            let a: Vec<_> = a.terms().map(|(e, c)| (e.clone(), c.to_bits())).collect();
            let b: Vec<_> = b.terms().map(|(e, c)| (e.clone(), c.to_bits())).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn grid_flags_recompute_from_columns(
        v in poly(2, 4),
        u in -1e-2f64..1e-2,
        t in 1u32..200,
        res in 1usize..15,
    ) {
        let cert = Certificate {
            variables: vec!["a".into(), "b".into()],
            order: 2,
            horizon: Horizon::Steps(t),
            u,
            w: &v + &Polynomial::one(2),
            v,
            objective: 0.0,
            memberships: Vec::new(),
            stats: None,
        };
        let axes = [
            GridAxis { index: 0, min: -1.0, max: 1.0, res },
            GridAxis { index: 1, min: -1.0, max: 1.0, res: res + 1 },
        ];
        let g = grid(&cert, &axes, &[0.0, 0.0]).unwrap();
        prop_assert_eq!(g.rows.len(), res * (res + 1));
        let back = GridFile::from_text(&g.to_text()).unwrap();
        prop_assert_eq!(&back.rows, &g.rows);
        prop_assert!(back.rows.iter().all(|r| r.inside == inside_flag(r.v, back.u, back.t)));
    }
}

fn problem(horizon: Horizon) -> ReachProblem {
    let g = DomainGeometry::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let half = |i| Polynomial::variable(2, i).scale(0.5);
    ReachProblem::new(
        "p",
        vec!["x1".into(), "x2".into()],
        SemialgebraicSet::from_geometry(&DomainGeometry::new_ball(vec![0.0, 0.0], 0.5).unwrap()),
        SemialgebraicSet::from_geometry(&g),
        DynamicalSystem::new(vec![half(0), half(1)]).unwrap(),
        horizon,
        g,
        false,
    )
    .unwrap()
}
