//! Deciding local integrability of singular integrands.
//!
//! Annotated singularities are settled by the exponent rule: near a point
//! `x0` with `f ≈ C |x - x0|^p` the integral of `|x - x0|^p` converges iff
//! `p > -1`. Other suspicious points are probed numerically with collars
//! shrinking by a factor 32 per level.

use serde::{Deserialize, Serialize};

use super::quad::{integrate, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Both,
}

/// `f(x) ≈ coefficient · |x - point|^exponent` as `x → point` from `side`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalBehavior {
    pub point: f64,
    pub side: Side,
    pub exponent: f64,
    pub coefficient: f64,
}

impl LocalBehavior {
    pub fn new(point: f64, side: Side, exponent: f64, coefficient: f64) -> Self {
        Self { point, side, exponent, coefficient }
    }

    /// Whether this annotation speaks about the window `[a, b]`.
    fn applies(&self, a: f64, b: f64) -> bool {
        let from_left = self.point > a && self.point <= b;
        let from_right = self.point >= a && self.point < b;
        match self.side {
            Side::Left => from_left,
            Side::Right => from_right,
            Side::Both => from_left || from_right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrabilityStatus {
    Finite,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExponentRule,
    NumericRefinement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityVerdict {
    pub status: IntegrabilityStatus,
    pub method: Method,
    /// Collar integrals of the last refinement levels (numeric path only).
    pub diagnostics: Vec<f64>,
}

impl IntegrabilityVerdict {
    fn exponent(status: IntegrabilityStatus) -> Self {
        Self { status, method: Method::ExponentRule, diagnostics: Vec::new() }
    }

    pub fn is_finite(&self) -> bool {
        self.status == IntegrabilityStatus::Finite
    }
}

const LEVELS: usize = 6;
const SHRINK: f64 = 1.0 / 32.0;
const DIVERGENCE_RATIO: f64 = 0.9;
const TAIL_REL: f64 = 1e-8;

/// A singular point of the integrand together with the integrand's exponent.
#[derive(Debug, Clone, Copy)]
struct Singularity {
    point: f64,
    exponent: f64,
}

/// Is `∫_window g` finite, where `g ≥ 0` is the integrand itself?
///
/// `behaviors` annotate `g` directly; `hints` are extra points where `g` may
/// blow up without annotation.
pub fn decide_integrable(
    g: &dyn Fn(f64) -> f64,
    window: (f64, f64),
    behaviors: &[LocalBehavior],
    hints: &[f64],
) -> IntegrabilityVerdict {
    let sing: Vec<Singularity> = behaviors
        .iter()
        .filter(|b| b.applies(window.0, window.1))
        .map(|b| Singularity { point: b.point, exponent: b.exponent })
        .collect();
    decide(g, window, &sing, hints)
}

/// Is `f` square integrable on `window`? Annotated behaviors describe `f`.
pub fn decide_l2_local(
    f: &dyn Fn(f64) -> f64,
    window: (f64, f64),
    behaviors: &[LocalBehavior],
    hints: &[f64],
) -> IntegrabilityVerdict {
    let sing: Vec<Singularity> = behaviors
        .iter()
        .filter(|b| b.applies(window.0, window.1))
        .map(|b| Singularity { point: b.point, exponent: 2.0 * b.exponent })
        .collect();
    decide(&|x| f(x) * f(x), window, &sing, hints)
}

/// Is `∫_window |x - b_image| f(x)^2 dx` finite? The window must touch `b_image`.
pub fn decide_weighted_l2_boundary(
    f: &dyn Fn(f64) -> f64,
    b_image: f64,
    window: (f64, f64),
    behaviors: &[LocalBehavior],
    hints: &[f64],
) -> IntegrabilityVerdict {
    let sing: Vec<Singularity> = behaviors
        .iter()
        .filter(|b| b.applies(window.0, window.1))
        .map(|b| {
            let weight = if b.point == b_image { 1.0 } else { 0.0 };
            Singularity { point: b.point, exponent: 2.0 * b.exponent + weight }
        })
        .collect();
    let mut hints = hints.to_vec();
    hints.push(b_image);
    decide(&|x| (x - b_image).abs() * f(x) * f(x), window, &sing, &hints)
}

fn decide(
    g: &dyn Fn(f64) -> f64,
    window: (f64, f64),
    sing: &[Singularity],
    hints: &[f64],
) -> IntegrabilityVerdict {
    let (a, b) = window;
    if sing.iter().any(|s| s.exponent <= -1.0) {
        return IntegrabilityVerdict::exponent(IntegrabilityStatus::Divergent);
    }
    let width = b - a;
    let annotated: Vec<f64> = sing.iter().map(|s| s.point).collect();
    let mut suspicious: Vec<f64> = hints
        .iter()
        .copied()
        .filter(|&x| x >= a && x <= b && !annotated.iter().any(|&p| (p - x).abs() <= 1e-12 * (1.0 + x.abs())))
        .collect();
    suspicious.sort_by(f64::total_cmp);
    suspicious.dedup();

    // Collars: tiny cut-outs around annotated points (settled by the rule),
    // probe-sized ones around suspicious points.
    let eps = 1e-9 * width;
    let mut cuts: Vec<(f64, f64, f64)> = annotated.iter().map(|&p| (p, eps, eps)).collect();
    let mut all_points: Vec<f64> = annotated.iter().chain(suspicious.iter()).copied().collect();
    all_points.push(a);
    all_points.push(b);
    all_points.sort_by(f64::total_cmp);
    let gap = |x: f64| {
        all_points
            .iter()
            .filter(|&&p| p != x)
            .map(|&p| (p - x).abs())
            .fold(width, f64::min)
    };
    for &c in &suspicious {
        let d = gap(c).min(width) / 4.0;
        cuts.push((c, if c > a { d } else { 0.0 }, if c < b { d } else { 0.0 }));
    }

    // Bulk integral over the window minus all collars.
    let mut edges: Vec<(f64, f64)> = Vec::new();
    let mut pts: Vec<f64> = vec![a, b];
    for &(c, l, r) in &cuts {
        pts.push((c - l).max(a));
        pts.push((c + r).min(b));
        edges.push(((c - l).max(a), (c + r).min(b)));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let opts = QuadOptions::new(1e-8, 1e-14);
    let mut bulk = 0.0;
    for w in pts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let mid = 0.5 * (x0 + x1);
        if edges.iter().any(|&(l, r)| mid > l && mid < r) {
            continue;
        }
        match integrate(|x| g(x).abs(), x0, x1, &[], opts) {
            Ok(r) => bulk += r.value,
            Err(_) => {
                return IntegrabilityVerdict {
                    status: IntegrabilityStatus::Inconclusive,
                    method: Method::NumericRefinement,
                    diagnostics: Vec::new(),
                }
            }
        }
    }
    if suspicious.is_empty() {
        let status = if bulk.is_finite() {
            IntegrabilityStatus::Finite
        } else {
            IntegrabilityStatus::Divergent
        };
        let method = if sing.is_empty() { Method::NumericRefinement } else { Method::ExponentRule };
        return IntegrabilityVerdict { status, method, diagnostics: Vec::new() };
    }

    // Refinement levels: level k integrates the shell between radii d·32^{-k-1} and d·32^{-k}.
    let mut levels = vec![0.0; LEVELS];
    for &(c, l, r) in cuts.iter().skip(annotated.len()) {
        for (side_len, dir) in [(l, -1.0), (r, 1.0)] {
            if side_len == 0.0 {
                continue;
            }
            let mut outer = side_len;
            for level in levels.iter_mut() {
                let inner = outer * SHRINK;
                let (x0, x1) = if dir > 0.0 { (c + inner, c + outer) } else { (c - outer, c - inner) };
                let v = integrate(|x| g(x).abs(), x0, x1, &[], opts)
                    .map(|q| q.value)
                    .unwrap_or(f64::INFINITY);
                *level += v;
                outer = inner;
            }
        }
    }
    let total = bulk + levels.iter().sum::<f64>();
    let ratios: Vec<f64> = levels.windows(2).map(|w| w[1] / w[0]).collect();
    let k = ratios.len();
    let status = if levels.iter().any(|v| !v.is_finite()) {
        IntegrabilityStatus::Divergent
    } else if levels[LEVELS - 1] == 0.0 {
        IntegrabilityStatus::Finite
    } else if ratios[k - 1] >= DIVERGENCE_RATIO && ratios[k - 2] >= DIVERGENCE_RATIO {
        IntegrabilityStatus::Divergent
    } else {
        let rho = ratios[k - 1].max(ratios[k - 2]);
        if rho < 1.0 && levels[LEVELS - 1] * rho / (1.0 - rho) < TAIL_REL * total {
            IntegrabilityStatus::Finite
        } else {
            IntegrabilityStatus::Inconclusive
        }
    };
    IntegrabilityVerdict { status, method: Method::NumericRefinement, diagnostics: levels }
}
