mod common;

use std::sync::Arc;

use diffarb_core::arb_classifier::{check_nip, check_nip_zero_rate, classify, classify_view, Status};
use diffarb_core::diffusion_model::derive_natural_scale;
use diffarb_core::measure_kit::{
    decide_l2_local, decide_weighted_l2_boundary, second_derivative_decomposition, DecomposedMeasure, Expr,
    IntegrabilityStatus, LocalBehavior, Mass, QuadOptions, Side, SmoothPiece1D,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn opts() -> QuadOptions {
    QuadOptions::new(1e-11, 1e-14)
}

/// Strictly increasing test functions on `[0.1, 3]`.
fn increasing_expr() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.2f64..5.0, -3.0f64..3.0).prop_map(|(a, b)| Expr::affine(a, b)),
        (0.3f64..3.0).prop_map(|p| Expr::power_signed(0.0, p)),
        (-1.0f64..1.0).prop_map(|c| Expr::ExpIntegral { mu: Box::new(Expr::constant(c)), anchor: 1.0 }),
        (0.5f64..2.0, 0.1f64..1.0).prop_map(|(p, a)| Expr::power_signed(0.0, p).plus(Expr::affine(a, 0.0))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inversion_round_trip(e in increasing_expr(), t in 0.0f64..1.0) {
        let f = SmoothPiece1D::from_expr(e, 0.1, 3.0).unwrap();
        let x = 0.1 + 2.9 * t;
        let y = f.value(x).unwrap();
        let back = f.invert(y).unwrap();
        prop_assert!((back - x).abs() <= 1e-10 * x.abs().max(1.0), "{back} vs {x}");
    }

    #[test]
    fn pushforward_conserves_mass(
        e in increasing_expr(),
        dens in proptest::collection::vec(0.1f64..3.0, 3),
        atom in 0.2f64..2.9,
        w in 0.0f64..2.0,
        cuts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 10),
    ) {
        let s = SmoothPiece1D::from_expr(e, 0.1, 3.0).unwrap();
        let q = Arc::new(s.inverse().unwrap());
        let m = DecomposedMeasure::new((0.1, 3.0), common::piecewise_handle(vec![1.0, 2.0], dens), vec![1.0, 2.0])
            .with_atom(atom, Mass::Finite(w))
            .unwrap();
        let image = m.pushforward(&s, &q, &[]).unwrap();
        for (a, b) in cuts {
            let (a, b) = (0.1 + 2.9 * a.min(b), 0.1 + 2.9 * a.max(b));
            let lhs = m.mass(a, b, opts()).unwrap();
            let rhs = image.mass(s.value(a).unwrap(), s.value(b).unwrap(), opts()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1e-6), "[{a}, {b}]: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn second_derivative_reconstructs_slopes(
        slopes in proptest::collection::vec(0.2f64..4.0, 3),
        curv in 0.0f64..1.0,
        cuts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 20),
    ) {
        // q = piecewise affine with two kinks plus a smooth convex part
        let lin = Expr::Piecewise {
            breakpoints: vec![1.0, 2.0],
            pieces: vec![
                Expr::affine(slopes[0], 0.0),
                Expr::affine(slopes[1], (slopes[0] - slopes[1]) * 1.0),
                Expr::affine(slopes[2], (slopes[0] - slopes[1]) + (slopes[1] - slopes[2]) * 2.0),
            ],
        };
        let q = Arc::new(SmoothPiece1D::from_expr(lin.plus(Expr::power_signed(0.0, 2.0).scaled(curv)), 0.1, 3.0).unwrap());
        let qpp = second_derivative_decomposition(&q, &[], 1e-9).unwrap();
        for (a, b) in cuts {
            let (a, b) = (0.1 + 2.9 * a.min(b), 0.1 + 2.9 * a.max(b));
            if a == b {
                continue;
            }
            // ν((a, b]) = q'_+(b) - q'_+(a)
            let atom_at_a = qpp.atom_at(a, 0.0).map_or(0.0, |m| m.as_f64());
            let nu = qpp.mass(a, b, opts()).unwrap() - atom_at_a;
            let want = q.d_plus(b).unwrap() - q.d_plus(a).unwrap();
            prop_assert!((nu - want).abs() <= 1e-8 * want.abs().max(1e-3), "({a}, {b}]: {nu} vs {want}");
        }
    }

    #[test]
    fn exp_integral_derivative(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, x in 0.0f64..2.0) {
        let mu = Expr::Piecewise { breakpoints: vec![1.0], pieces: vec![Expr::constant(c1), Expr::constant(c2)] };
        let f = SmoothPiece1D::from_expr(Expr::ExpIntegral { mu: Box::new(mu), anchor: 0.0 }, 0.0, 2.0).unwrap();
        let integral = if x < 1.0 { c1 * x } else { c1 + c2 * (x - 1.0) };
        let want = integral.exp();
        let got = f.d_plus(x).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
    }

    #[test]
    fn scale_shift_invariance(seed in 0u64..1000, a in 0.25f64..4.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::fuzz_spec(&mut rng, seed as usize);
        let base = classify(&spec).unwrap();
        let moved = classify(&spec.with_affine_scale(a, b).unwrap()).unwrap();
        prop_assert_eq!(base.triple(), moved.triple(), "{}", spec.model_id);
        prop_assert_eq!(base.rp, moved.rp);
    }
}

fn quarter_grid() -> Vec<f64> {
    (0..=12).map(|k| -2.0 + 0.25 * k as f64).collect()
}

#[test]
fn exponent_rule_local() {
    for p in quarter_grid() {
        let f = move |x: f64| x.abs().powf(p);
        let b = [LocalBehavior::new(0.0, Side::Both, p, 1.0)];
        let v = decide_l2_local(&f, (-1.0, 1.0), &b, &[]);
        let want = if p > -0.5 { IntegrabilityStatus::Finite } else { IntegrabilityStatus::Divergent };
        assert_eq!(v.status, want, "p = {p}");
    }
}

#[test]
fn exponent_rule_weighted_boundary() {
    for p in quarter_grid() {
        let f = move |x: f64| x.abs().powf(p);
        let b = [LocalBehavior::new(0.0, Side::Right, p, 1.0)];
        let v = decide_weighted_l2_boundary(&f, 0.0, (0.0, 1.0), &b, &[]);
        let want = if 2.0 * p + 1.0 > -1.0 { IntegrabilityStatus::Finite } else { IntegrabilityStatus::Divergent };
        assert_eq!(v.status, want, "p = {p}");
    }
}

/// The orderings every verdict must respect, on 100 seeded random models.
#[test]
fn implication_chain_on_fuzzed_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut seen = std::collections::BTreeMap::new();
    for id in 0..100 {
        let spec = common::fuzz_spec(&mut rng, id);
        let view = derive_natural_scale(&spec).unwrap_or_else(|e| panic!("{}: {e}", spec.model_id));
        let v = classify_view(&spec.model_id, &view, Vec::new());
        if v.nupbr == Status::Holds {
            assert_eq!(v.nsa, Status::Holds, "{}", spec.model_id);
        }
        if v.nsa == Status::Holds {
            assert_eq!(v.nip, Status::Holds, "{}", spec.model_id);
        }
        if !common::has_absorbing(&view) {
            assert_eq!(v.nsa, v.nupbr, "{}", spec.model_id);
        }
        if view.r == 0.0 {
            assert_eq!(check_nip(&view).0, check_nip_zero_rate(&view).unwrap().0, "{}", spec.model_id);
        }
        *seen.entry(v.symbols()).or_insert(0) += 1;
    }
    // the generator exercises both outcomes
    assert!(seen.keys().any(|k| k.starts_with('✓')) && seen.keys().any(|k| k.starts_with('✗')), "{seen:?}");
}
