//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Subintervals are kept in a max-heap keyed by their error estimate and the
//! worst one is bisected until the summed error meets the tolerance. Known
//! breakpoints (kinks, jumps, integrable singularities) should be passed so
//! that no rule straddles them. Infinite endpoints are mapped to a finite
//! range with `x = a + t / (1 - t)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Options for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 4000,
        }
    }
}

impl QuadOptions {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64, bool) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut finite = fc.is_finite();
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        finite &= s.is_finite();
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    let value = resk * half;
    let err = ((resk - resg) * half).abs();
    (value, err, finite)
}

fn integrate_finite<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    points: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evals = 0;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (value, error, finite) = kronrod(f, a, b);
        evals += 15;
        if !finite {
            return Err(Error::Quadrature {
                a,
                b,
                value: f64::NAN,
                error: f64::INFINITY,
            });
        }
        total += value;
        total_err += error;
        heap.push(Segment { a, b, value, error });
    }
    let (lo, hi) = (points[0], points[points.len() - 1]);
    let mut splits = 0;
    while total_err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if splits >= opts.max_subdivisions {
            return Err(Error::Quadrature {
                a: lo,
                b: hi,
                value: total,
                error: total_err,
            });
        }
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval can no longer be split in floating point.
            return Err(Error::Quadrature {
                a: lo,
                b: hi,
                value: total,
                error: total_err,
            });
        }
        let (v1, e1, ok1) = kronrod(f, seg.a, mid);
        let (v2, e2, ok2) = kronrod(f, mid, seg.b);
        evals += 30;
        if !(ok1 && ok2) {
            return Err(Error::Quadrature {
                a: seg.a,
                b: seg.b,
                value: total,
                error: f64::INFINITY,
            });
        }
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
        splits += 1;
    }
    // Re-sum to wash out drift from the incremental updates.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(QuadResult {
        value,
        error,
        evaluations: evals,
    })
}

/// Integrate `f` over `[a, b]` (either end may be infinite), splitting at `breaks`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    integrate_dyn(&f, a, b, breaks, opts)
}

fn integrate_dyn(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if a > b {
        let r = integrate_dyn(f, b, a, breaks, opts)?;
        return Ok(QuadResult {
            value: -r.value,
            ..r
        });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => {
            let pts = split_points(a, b, breaks);
            integrate_finite(f, &pts, opts)
        }
        (true, false) => {
            // x = a + t/(1-t), t in [0, 1)
            let g = |t: f64| {
                let x = a + t / (1.0 - t);
                let j = 1.0 / ((1.0 - t) * (1.0 - t));
                let v = f(x) * j;
                if t >= 1.0 { 0.0 } else { v }
            };
            let tb: Vec<f64> = breaks
                .iter()
                .filter(|&&x| x > a)
                .map(|&x| (x - a) / (1.0 + x - a))
                .collect();
            integrate_finite(&g, &split_points(0.0, 1.0, &tb), opts)
        }
        (false, true) => {
            let g = |t: f64| {
                let x = b - t / (1.0 - t);
                let j = 1.0 / ((1.0 - t) * (1.0 - t));
                if t >= 1.0 { 0.0 } else { f(x) * j }
            };
            let tb: Vec<f64> = breaks
                .iter()
                .filter(|&&x| x < b)
                .map(|&x| (b - x) / (1.0 + b - x))
                .collect();
            integrate_finite(&g, &split_points(0.0, 1.0, &tb), opts)
        }
        (false, false) => {
            let left = integrate_dyn(f, f64::NEG_INFINITY, 0.0, breaks, opts)?;
            let right = integrate_dyn(f, 0.0, f64::INFINITY, breaks, opts)?;
            Ok(QuadResult {
                value: left.value + right.value,
                error: left.error + right.error,
                evaluations: left.evaluations + right.evaluations,
            })
        }
    }
}

fn split_points(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b && x.is_finite())
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);
    pts
}
