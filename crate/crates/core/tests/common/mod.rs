#![allow(dead_code)]

use std::sync::Arc;

use diffarb_core::diffusion_model::{BoundaryKind, DiffusionSpec, Endpoint, ScaleInput, SpeedInput, StateInterval};
use diffarb_core::measure_kit::{DecomposedMeasure, Expr, FnHandle, Mass};
use diffarb_core::model_catalog::{build_model, Params};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn const_handle(c: f64) -> FnHandle {
    Arc::new(move |_| c)
}

pub fn piecewise_handle(breaks: Vec<f64>, values: Vec<f64>) -> FnHandle {
    Arc::new(move |x| {
        let k = breaks.partition_point(|&b| b <= x);
        values[k]
    })
}

/// Random model with a piecewise-affine scale, piecewise-constant speed density and
/// random speed atoms.
///
/// Roughly a third of the atoms, stickinesses and rates are tuned so that the
/// no-increasing-profit identities hold exactly, so both verdicts show up.
pub fn fuzz_piecewise(rng: &mut impl Rng, id: usize) -> DiffusionSpec {
    let shape = rng.gen_range(0..4);
    let (lo, hi, lclosed, rclosed) = match shape {
        0 => (f64::NEG_INFINITY, f64::INFINITY, false, false),
        1 => (rng.gen_range(0..3) as f64 * 0.5, f64::INFINITY, true, false),
        2 => (f64::NEG_INFINITY, rng.gen_range(2..5) as f64, false, true),
        _ => (0.5, 4.0, true, true),
    };
    let interval = StateInterval::new(lo, hi, lclosed, rclosed).unwrap();
    let left = if lo.is_finite() { lo } else { 0.25 };
    let right = if hi.is_finite() { hi } else { 4.0 };
    let n_breaks = rng.gen_range(0..4);
    let mut breaks: Vec<f64> = (0..n_breaks).map(|_| (rng.gen_range(left..right) * 8.0).round() / 8.0).collect();
    breaks.retain(|&b| b > left && b < right);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let slopes: Vec<f64> = (0..=breaks.len()).map(|_| *[0.5, 1.0, 2.0, 0.75, 1.5].choose(rng).unwrap()).collect();
    // continuous piecewise affine s with s(left) = 0
    let mut pieces = Vec::new();
    let mut value_at = 0.0;
    let mut start = left;
    for (k, &a) in slopes.iter().enumerate() {
        pieces.push(Expr::affine(a, value_at - a * start));
        if k < breaks.len() {
            value_at += a * (breaks[k] - start);
            start = breaks[k];
        }
    }
    let scale = if breaks.is_empty() { pieces.pop().unwrap() } else { Expr::Piecewise { breakpoints: breaks.clone(), pieces } };

    let r = match rng.gen_range(0..3) {
        0 => 0.0,
        1 => 0.5,
        _ => rng.gen_range(1..8) as f64 / 8.0,
    };
    let dens: Vec<f64> = (0..=breaks.len()).map(|_| rng.gen_range(1..5) as f64 / 2.0).collect();
    let mut m = DecomposedMeasure::new((lo, hi), piecewise_handle(breaks.clone(), dens), breaks.clone());
    for (k, &b) in breaks.iter().enumerate() {
        let jump = 1.0 / slopes[k + 1] - 1.0 / slopes[k];
        let tuned = r > 0.0 && b != 0.0 && jump / (2.0 * r * b) > 0.0 && rng.gen_bool(0.5);
        if tuned {
            m = m.with_atom(b, Mass::Finite(jump / (2.0 * r * b))).unwrap();
        } else if rng.gen_bool(0.3) {
            m = m.with_atom(b, Mass::Finite(rng.gen_range(1..4) as f64 / 4.0)).unwrap();
        }
    }
    let x0 = match shape {
        0 => 1.0,
        1 => left + 1.0,
        2 => right - 1.0,
        _ => 2.0,
    };
    let x0 = if breaks.contains(&x0) { x0 + 1.0 / 16.0 } else { x0 };
    let mut decl = Vec::new();
    for (e, closed, b, slope) in [(Endpoint::Left, lclosed, lo, slopes[0]), (Endpoint::Right, rclosed, hi, *slopes.last().unwrap())] {
        if !closed {
            continue;
        }
        let kind = if rng.gen_bool(0.3) { BoundaryKind::Absorbing } else { BoundaryKind::Reflecting };
        match kind {
            BoundaryKind::Absorbing => m = m.with_atom(b, Mass::Infinite).unwrap(),
            _ => {
                let qprime = 1.0 / slope;
                let target = if e == Endpoint::Left { 0.5 * qprime } else { -0.5 * qprime };
                let stick = target / (r * b);
                if r > 0.0 && b != 0.0 && stick > 0.0 && rng.gen_bool(0.6) {
                    m = m.with_atom(b, Mass::Finite(stick)).unwrap();
                } else if rng.gen_bool(0.3) {
                    m = m.with_atom(b, Mass::Finite(0.5)).unwrap();
                }
            }
        }
        decl.push((e, kind));
    }
    let mut spec = DiffusionSpec::new(format!("fuzz_{id}"), interval, ScaleInput::Scale(scale), SpeedInput::State(m), x0, r, 1.0)
        .unwrap_or_else(|e| panic!("fuzz_{id}: {e}"));
    for (e, k) in decl {
        spec = spec.with_boundary(e, k);
    }
    spec
}

/// Catalog model with random parameters from its valid range.
pub fn fuzz_catalog(rng: &mut impl Rng) -> DiffusionSpec {
    let r = *["0", "1/10", "1/2", "1"].choose(rng).unwrap();
    let (name, p) = match rng.gen_range(0..6) {
        0 => ("brownian_motion", format!("r={r}")),
        1 => ("squared_bessel", format!("r={r},delta={}", ["1/4", "1/2", "1", "3/2", "7/4"].choose(rng).unwrap())),
        2 => ("sticky_reflected_bm", format!("r={r},rho={}", ["0", "1/2", "1", "2"].choose(rng).unwrap())),
        3 => ("cubed_bm", format!("r={r}")),
        4 => ("sticky_skew", format!("r={r},kappa={},c={}", ["1/4", "1/2", "2/3"].choose(rng).unwrap(), ["0", "1", "3/2"].choose(rng).unwrap())),
        _ => ("gen_squared_bessel", format!("r={r},nu={},m0={}", ["-1/4", "-1/2", "-3/4"].choose(rng).unwrap(), ["0", "1", "inf"].choose(rng).unwrap())),
    };
    build_model(name, &Params::parse(&p).unwrap()).unwrap_or_else(|e| panic!("{name}({p}): {e}"))
}

pub fn fuzz_spec(rng: &mut impl Rng, id: usize) -> DiffusionSpec {
    if rng.gen_bool(0.75) {
        fuzz_piecewise(rng, id)
    } else {
        fuzz_catalog(rng)
    }
}

pub fn has_absorbing(view: &diffarb_core::NaturalScaleView) -> bool {
    view.boundaries.iter().any(|b| b.behavior.kind == BoundaryKind::Absorbing)
}
