//! Expression grammar for scale functions, densities and multipliers.
//!
//! Every node evaluates to a [`Jet`]: the value, both one-sided first
//! derivatives and the density of the absolutely continuous part of the
//! second-derivative measure. Jumps of the first derivative (kinks) are
//! recovered by comparing `d_plus` and `d_minus` at candidate points.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use super::quad::{integrate, QuadOptions};
use crate::error::{Error, Result};

/// A node of the function grammar. The JSON tag names are part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    Const {
        c: f64,
    },
    /// `a * x + b`
    Affine {
        a: f64,
        b: f64,
    },
    /// `sign(x - center) * |x - center|^p`; negative `p` gives a pole at `center`.
    PowerSigned {
        center: f64,
        p: f64,
    },
    /// `x -> ∫_anchor^x exp(∫_anchor^y mu(z) dz) dy`
    ExpIntegral {
        mu: Box<Expr>,
        #[serde(default)]
        anchor: f64,
    },
    Sum {
        terms: Vec<Expr>,
    },
    Product {
        factors: Vec<Expr>,
    },
    /// `outer(inner(x))`
    Compose {
        outer: Box<Expr>,
        inner: Box<Expr>,
    },
    /// Piece `k` applies on `[breakpoints[k-1], breakpoints[k])`.
    Piecewise {
        breakpoints: Vec<f64>,
        pieces: Vec<Expr>,
    },
    /// Piecewise-linear interpolation of `(x, f(x))` samples.
    Tabulated {
        samples: Vec<[f64; 2]>,
    },
}

/// Value and derivative data of a function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    /// Density of the absolutely continuous part of the second-derivative measure.
    pub d2: f64,
}

impl Jet {
    fn constant(c: f64) -> Self {
        Jet {
            value: c,
            d_plus: 0.0,
            d_minus: 0.0,
            d2: 0.0,
        }
    }
}

fn mul_or_zero(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Const { c }
    }

    pub fn identity() -> Self {
        Expr::Affine { a: 1.0, b: 0.0 }
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Expr::Affine { a, b }
    }

    pub fn power_signed(center: f64, p: f64) -> Self {
        Expr::PowerSigned { center, p }
    }

    pub fn scaled(self, k: f64) -> Self {
        Expr::Product {
            factors: vec![Expr::Const { c: k }, self],
        }
    }

    pub fn plus(self, other: Expr) -> Self {
        Expr::Sum {
            terms: vec![self, other],
        }
    }

    /// Structural checks: piece counts, ordering and continuity at breakpoints.
    pub fn validate(&self) -> Result<()> {
        self.check(true)
    }

    /// Structural checks without continuity, for densities and drift rates.
    pub fn validate_structure(&self) -> Result<()> {
        self.check(false)
    }

    fn check(&self, continuous: bool) -> Result<()> {
        match self {
            Expr::Const { c } if !c.is_finite() => {
                Err(Error::InvalidExpr(format!("non-finite constant {c}")))
            }
            Expr::Affine { a, b } if !(a.is_finite() && b.is_finite()) => {
                Err(Error::InvalidExpr("non-finite affine coefficients".into()))
            }
            Expr::PowerSigned { center, p } => {
                if !center.is_finite() || !p.is_finite() || *p == 0.0 {
                    Err(Error::InvalidExpr(format!(
                        "power_signed needs finite center and nonzero finite p, got center={center}, p={p}"
                    )))
                } else {
                    Ok(())
                }
            }
            Expr::ExpIntegral { mu, anchor } => {
                if !anchor.is_finite() {
                    return Err(Error::InvalidExpr("non-finite exp_integral anchor".into()));
                }
                mu.check(false)
            }
            Expr::Sum { terms } => terms.iter().try_for_each(|e| e.check(continuous)),
            Expr::Product { factors } => factors.iter().try_for_each(|e| e.check(continuous)),
            Expr::Compose { outer, inner } => {
                outer.check(continuous)?;
                inner.check(true)
            }
            Expr::Piecewise { breakpoints, pieces } => {
                if pieces.len() != breakpoints.len() + 1 {
                    return Err(Error::InvalidExpr(format!(
                        "piecewise has {} breakpoints but {} pieces",
                        breakpoints.len(),
                        pieces.len()
                    )));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1])
                    || breakpoints.iter().any(|b| !b.is_finite())
                {
                    return Err(Error::InvalidExpr(
                        "piecewise breakpoints must be finite and strictly increasing".into(),
                    ));
                }
                pieces.iter().try_for_each(|e| e.check(continuous))?;
                if !continuous {
                    return Ok(());
                }
                let opts = QuadOptions::default();
                for (k, &b) in breakpoints.iter().enumerate() {
                    let left = pieces[k].jet(b, opts)?.value;
                    let right = pieces[k + 1].jet(b, opts)?.value;
                    if (left - right).abs() > 1e-9 * (1.0 + left.abs().max(right.abs())) {
                        return Err(Error::InvalidExpr(format!(
                            "piecewise discontinuous at {b}: {left} vs {right}"
                        )));
                    }
                }
                Ok(())
            }
            Expr::Tabulated { samples } => {
                if samples.len() < 2 {
                    return Err(Error::InvalidExpr("tabulated needs at least two samples".into()));
                }
                if samples.windows(2).any(|w| w[0][0] >= w[1][0]) {
                    return Err(Error::InvalidExpr(
                        "tabulated samples must be strictly increasing in x".into(),
                    ));
                }
                if samples.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidExpr("tabulated samples must be finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Closed natural domain `[lo, hi]` (infinite for most nodes).
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Expr::Tabulated { samples } => (samples[0][0], samples[samples.len() - 1][0]),
            Expr::Sum { terms: list } | Expr::Product { factors: list } => {
                list.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), e| {
                    let (a, b) = e.domain();
                    (lo.max(a), hi.min(b))
                })
            }
            Expr::Piecewise { pieces, breakpoints } => {
                let lo = pieces.first().map_or(f64::NEG_INFINITY, |p| p.domain().0);
                let hi = pieces.last().map_or(f64::INFINITY, |p| p.domain().1);
                // Inner pieces must at least cover their own span; that is checked on evaluation.
                let _ = breakpoints;
                (lo, hi)
            }
            Expr::Compose { inner, .. } => inner.domain(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Function value at `x`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.jet(x, QuadOptions::new(1e-10, 1e-14))?.value)
    }

    /// Value, one-sided derivatives and second-derivative density at `x`.
    pub fn jet(&self, x: f64, opts: QuadOptions) -> Result<Jet> {
        match self {
            Expr::Const { c } => Ok(Jet::constant(*c)),
            Expr::Affine { a, b } => Ok(Jet {
                value: a * x + b,
                d_plus: *a,
                d_minus: *a,
                d2: 0.0,
            }),
            Expr::PowerSigned { center, p } => power_jet(x - center, *p, x),
            Expr::ExpIntegral { mu, anchor } => exp_integral_jet(mu, *anchor, x, opts),
            Expr::Sum { terms } => {
                let mut acc = Jet::constant(0.0);
                for t in terms {
                    let j = t.jet(x, opts)?;
                    acc.value += j.value;
                    acc.d_plus += j.d_plus;
                    acc.d_minus += j.d_minus;
                    acc.d2 += j.d2;
                }
                Ok(acc)
            }
            Expr::Product { factors } => {
                let mut acc = Jet::constant(1.0);
                for f in factors {
                    let j = f.jet(x, opts)?;
                    acc = Jet {
                        value: acc.value * j.value,
                        d_plus: mul_or_zero(acc.d_plus, j.value) + mul_or_zero(acc.value, j.d_plus),
                        d_minus: mul_or_zero(acc.d_minus, j.value)
                            + mul_or_zero(acc.value, j.d_minus),
                        d2: mul_or_zero(acc.d2, j.value)
                            + 2.0 * mul_or_zero(acc.d_plus, j.d_plus)
                            + mul_or_zero(acc.value, j.d2),
                    };
                }
                Ok(acc)
            }
            Expr::Compose { outer, inner } => {
                let g = inner.jet(x, opts)?;
                let f = outer.jet(g.value, opts)?;
                let side = |gd: f64, f_up: f64, f_down: f64| {
                    if gd > 0.0 {
                        f_up * gd
                    } else if gd < 0.0 {
                        f_down * gd
                    } else {
                        0.0
                    }
                };
                Ok(Jet {
                    value: f.value,
                    d_plus: side(g.d_plus, f.d_plus, f.d_minus),
                    d_minus: side(g.d_minus, f.d_minus, f.d_plus),
                    d2: mul_or_zero(f.d2, g.d_plus * g.d_plus) + mul_or_zero(f.d_plus, g.d2),
                })
            }
            Expr::Piecewise { breakpoints, pieces } => {
                let k = breakpoints.partition_point(|&b| b <= x);
                let mut j = pieces[k].jet(x, opts)?;
                if k > 0 && breakpoints[k - 1] == x {
                    j.d_minus = pieces[k - 1].jet(x, opts)?.d_minus;
                }
                Ok(j)
            }
            Expr::Tabulated { samples } => tabulated_jet(samples, x),
        }
    }

    /// Candidate points in `[lo, hi]` where derivatives may jump, vanish or blow up.
    pub fn critical_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_critical(lo, hi, &mut out);
        out.retain(|&x| x >= lo && x <= hi && x.is_finite());
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_critical(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        match self {
            Expr::PowerSigned { center, .. } => out.push(*center),
            Expr::ExpIntegral { mu, .. } => mu.collect_critical(lo, hi, out),
            Expr::Sum { terms: list } | Expr::Product { factors: list } => {
                list.iter().for_each(|e| e.collect_critical(lo, hi, out))
            }
            Expr::Piecewise { breakpoints, pieces } => {
                out.extend_from_slice(breakpoints);
                pieces.iter().for_each(|p| p.collect_critical(lo, hi, out));
            }
            Expr::Tabulated { samples } => out.extend(samples.iter().map(|s| s[0])),
            Expr::Compose { outer, inner } => {
                inner.collect_critical(lo, hi, out);
                let (a, b) = (lo.max(inner.domain().0), hi.min(inner.domain().1));
                if !(a.is_finite() && b.is_finite()) || a >= b {
                    return;
                }
                let targets = outer.critical_points(f64::NEG_INFINITY, f64::INFINITY);
                if targets.is_empty() {
                    return;
                }
                // Preimages of the outer critical points, located by scanning for sign changes.
                let n = 2048;
                let xs: Vec<f64> = (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).min(b)).collect();
                let ys: Vec<Option<f64>> = xs.iter().map(|&x| inner.eval(x).ok()).collect();
                for &t in &targets {
                    for i in 0..n {
                        let (Some(y0), Some(y1)) = (ys[i], ys[i + 1]) else { continue };
                        if (y0 - t) * (y1 - t) <= 0.0 {
                            if let Some(r) = bisect_root(|x| inner.eval(x).map(|v| v - t), xs[i], xs[i + 1]) {
                                out.push(r);
                            }
                        }
                    }
                }
            }
            Expr::Const { .. } | Expr::Affine { .. } => {}
        }
    }
}

fn bisect_root<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64) -> Option<f64> {
    let mut fa = f(a).ok()?;
    if fa == 0.0 {
        return Some(a);
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m).ok()?;
        if fm == 0.0 {
            return Some(m);
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

fn power_jet(t: f64, p: f64, x: f64) -> Result<Jet> {
    if t == 0.0 {
        if p < 0.0 {
            return Err(Error::Domain {
                x,
                lo: x,
                hi: x,
            });
        }
        let d = if p > 1.0 {
            0.0
        } else if p == 1.0 {
            1.0
        } else {
            f64::INFINITY
        };
        return Ok(Jet {
            value: 0.0,
            d_plus: d,
            d_minus: d,
            d2: 0.0,
        });
    }
    let a = t.abs();
    let s = t.signum();
    let d = p * a.powf(p - 1.0);
    Ok(Jet {
        value: s * a.powf(p),
        d_plus: d,
        d_minus: d,
        d2: if p == 1.0 {
            0.0
        } else {
            p * (p - 1.0) * s * a.powf(p - 2.0)
        },
    })
}

fn tabulated_jet(samples: &[[f64; 2]], x: f64) -> Result<Jet> {
    let n = samples.len();
    let (lo, hi) = (samples[0][0], samples[n - 1][0]);
    if !(x >= lo && x <= hi) {
        return Err(Error::Domain { x, lo, hi });
    }
    let slope = |k: usize| (samples[k + 1][1] - samples[k][1]) / (samples[k + 1][0] - samples[k][0]);
    // k: index of the segment [x_k, x_{k+1}) containing x
    let k = samples.partition_point(|s| s[0] <= x).saturating_sub(1).min(n - 2);
    let value = samples[k][1] + slope(k) * (x - samples[k][0]);
    let at_node = samples[k][0] == x;
    let d_plus = if x == hi { slope(n - 2) } else { slope(k) };
    let d_minus = if at_node && k > 0 {
        slope(k - 1)
    } else if x == hi {
        slope(n - 2)
    } else {
        slope(k)
    };
    Ok(Jet {
        value: if x == hi { samples[n - 1][1] } else { value },
        d_plus,
        d_minus,
        d2: 0.0,
    })
}

fn exp_integral_jet(mu: &Expr, anchor: f64, x: f64, opts: QuadOptions) -> Result<Jet> {
    let breaks = mu.critical_points(anchor.min(x), anchor.max(x));
    let failure: Cell<Option<Error>> = Cell::new(None);
    let inner = |y: f64| -> f64 {
        let r = integrate(
            |z| mu.jet(z, opts).map(|j| j.value).unwrap_or(f64::NAN),
            anchor,
            y,
            &breaks,
            opts,
        );
        match r {
            Ok(v) => v.value,
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };
    let outer = integrate(|y| inner(y).exp(), anchor, x, &breaks, opts);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let value = outer?.value;
    let m_x = if x == anchor { 0.0 } else { inner(x) };
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let e = m_x.exp();
    let mu_x = mu.jet(x, opts)?.value;
    Ok(Jet {
        value,
        d_plus: e,
        d_minus: e,
        d2: mu_x * e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o() -> QuadOptions {
        QuadOptions::new(1e-10, 1e-14)
    }

    #[test]
    fn affine_identity() {
        assert_eq!(Expr::affine(1.0, 0.0).eval(2.0).unwrap(), 2.0);
    }

    #[test]
    fn odd_power() {
        assert_eq!(Expr::power_signed(0.0, 3.0).eval(-2.0).unwrap(), -8.0);
    }

    #[test]
    fn exp_integral_of_zero_is_identity() {
        let e = Expr::ExpIntegral {
            mu: Box::new(Expr::constant(0.0)),
            anchor: 0.0,
        };
        for x in [-1.5, 0.0, 0.7, 3.0] {
            assert!((e.eval(x).unwrap() - x).abs() < 1e-12);
        }
    }

    #[test]
    fn exp_integral_constant_mu() {
        // mu = 1: ∫_0^x e^y dy = e^x - 1
        let e = Expr::ExpIntegral {
            mu: Box::new(Expr::constant(1.0)),
            anchor: 0.0,
        };
        let j = e.jet(1.3, o()).unwrap();
        assert!((j.value - (1.3f64.exp() - 1.0)).abs() < 1e-9);
        assert!((j.d_plus - 1.3f64.exp()).abs() < 1e-9);
        assert!((j.d2 - 1.3f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn power_signed_derivatives_at_center() {
        let cube = Expr::power_signed(0.0, 3.0).jet(0.0, o()).unwrap();
        assert_eq!(cube.d_plus, 0.0);
        let root = Expr::power_signed(0.0, 1.0 / 3.0).jet(0.0, o()).unwrap();
        assert!(root.d_plus.is_infinite());
        assert!(Expr::power_signed(0.0, -0.5).eval(0.0).is_err());
        let j = Expr::power_signed(1.0, 2.0).jet(0.0, o()).unwrap();
        assert_eq!(j.value, -1.0);
        assert_eq!(j.d_plus, 2.0);
        assert_eq!(j.d2, -2.0);
    }

    #[test]
    fn piecewise_kink_one_sided() {
        let e = Expr::Piecewise {
            breakpoints: vec![0.0],
            pieces: vec![Expr::affine(4.0, 0.0), Expr::affine(2.0, 0.0)],
        };
        e.validate().unwrap();
        let j = e.jet(0.0, o()).unwrap();
        assert_eq!((j.d_minus, j.d_plus), (4.0, 2.0));
        assert_eq!(e.critical_points(-1.0, 1.0), vec![0.0]);
    }

    #[test]
    fn piecewise_discontinuity_rejected() {
        let e = Expr::Piecewise {
            breakpoints: vec![0.0],
            pieces: vec![Expr::constant(0.0), Expr::constant(1.0)],
        };
        assert!(e.validate().is_err());
    }

    #[test]
    fn tabulated_interpolates_and_reports_domain() {
        let e = Expr::Tabulated {
            samples: vec![[0.0, 0.0], [1.0, 2.0], [2.0, 3.0]],
        };
        e.validate().unwrap();
        assert_eq!(e.eval(0.5).unwrap(), 1.0);
        let j = e.jet(1.0, o()).unwrap();
        assert_eq!((j.d_minus, j.d_plus), (2.0, 1.0));
        assert_eq!(e.eval(2.0).unwrap(), 3.0);
        assert!(matches!(e.eval(2.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn compose_chain_rule() {
        // (2x+1)^3 at x=1: value 27, derivative 3*9*2=54, second 6*3*4=72
        let e = Expr::Compose {
            outer: Box::new(Expr::power_signed(0.0, 3.0)),
            inner: Box::new(Expr::affine(2.0, 1.0)),
        };
        let j = e.jet(1.0, o()).unwrap();
        assert_eq!(j.value, 27.0);
        assert_eq!(j.d_plus, 54.0);
        assert_eq!(j.d2, 72.0);
        // preimage of the outer center: 2x + 1 = 0
        let cp = e.critical_points(-2.0, 2.0);
        assert!(cp.iter().any(|&x| (x + 0.5).abs() < 1e-12), "{cp:?}");
    }

    #[test]
    fn product_rule() {
        // x * x^2 = x^3
        let e = Expr::Product {
            factors: vec![Expr::identity(), Expr::power_signed(0.0, 2.0)],
        };
        let j = e.jet(2.0, o()).unwrap();
        assert_eq!(j.value, 8.0);
        assert_eq!(j.d_plus, 12.0);
        assert_eq!(j.d2, 12.0);
    }

    #[test]
    fn json_tags_are_stable() {
        let e = Expr::Sum {
            terms: vec![Expr::constant(1.0), Expr::power_signed(0.0, 2.0)],
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(
            s,
            r#"{"type":"sum","terms":[{"type":"const","c":1.0},{"type":"power_signed","center":0.0,"p":2.0}]}"#
        );
        let back: Expr = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<Expr>(r#"{"type":"const","c":1,"extra":2}"#).is_err());
    }
}
