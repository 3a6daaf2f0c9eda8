//! Monotone piecewise-smooth functions on an interval and their inverses.

use std::sync::Arc;

use super::expr::{Expr, Jet};
use super::quad::QuadOptions;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Kind {
    Expr(Arc<Expr>),
    Inverse(Arc<SmoothPiece1D>),
}

/// A function on `[lo, hi]` with one-sided derivatives and an a.c. second derivative.
///
/// Either built from an [`Expr`] or as the inverse of another strictly
/// increasing piece. Endpoint values at infinite ends are limits.
#[derive(Debug, Clone)]
pub struct SmoothPiece1D {
    lo: f64,
    hi: f64,
    kind: Kind,
    opts: QuadOptions,
    /// Critical points paired with their values.
    critical: Arc<Vec<(f64, f64)>>,
    range: (f64, f64),
}

fn recip(d: f64) -> f64 {
    if d == 0.0 {
        f64::INFINITY
    } else if d.is_infinite() {
        0.0
    } else {
        1.0 / d
    }
}

impl SmoothPiece1D {
    pub fn from_expr(expr: Expr, lo: f64, hi: f64) -> Result<Self> {
        expr.validate()?;
        if !(lo < hi) {
            return Err(Error::InvalidExpr(format!("empty domain [{lo}, {hi}]")));
        }
        let (dlo, dhi) = expr.domain();
        if lo < dlo || hi > dhi {
            return Err(Error::Domain { x: if lo < dlo { lo } else { hi }, lo: dlo, hi: dhi });
        }
        let mut out = Self {
            lo,
            hi,
            kind: Kind::Expr(Arc::new(expr)),
            opts: QuadOptions::new(1e-10, 1e-14),
            critical: Arc::new(Vec::new()),
            range: (f64::NAN, f64::NAN),
        };
        out.refresh()?;
        Ok(out)
    }

    fn refresh(&mut self) -> Result<()> {
        if let Kind::Expr(e) = &self.kind {
            let pts = e.critical_points(self.lo, self.hi);
            let mut crit = Vec::with_capacity(pts.len());
            for x in pts {
                crit.push((x, e.jet(x, self.opts).map(|j| j.value).unwrap_or(f64::NAN)));
            }
            self.critical = Arc::new(crit);
            self.range = (self.limit(self.lo, -1.0)?, self.limit(self.hi, 1.0)?);
        }
        Ok(())
    }

    /// Tolerances for the nested quadrature of `exp_integral` nodes.
    pub fn with_quad(mut self, opts: QuadOptions) -> Result<Self> {
        self.opts = opts;
        self.refresh()?;
        Ok(self)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.kind {
            Kind::Expr(e) => Some(e),
            Kind::Inverse(_) => None,
        }
    }

    /// The inverse function, defined on the range of `self`.
    pub fn inverse(&self) -> Result<SmoothPiece1D> {
        if let Kind::Inverse(of) = &self.kind {
            return Ok((**of).clone());
        }
        let (a, b) = self.range;
        if !(a < b) {
            return Err(Error::InvalidExpr("function is not strictly increasing".into()));
        }
        let mut critical: Vec<(f64, f64)> = self
            .critical
            .iter()
            .filter(|c| c.1.is_finite())
            .map(|&(x, u)| (u, x))
            .collect();
        critical.dedup_by(|p, q| p.0 == q.0);
        Ok(Self {
            lo: a,
            hi: b,
            kind: Kind::Inverse(Arc::new(self.clone())),
            opts: self.opts,
            critical: Arc::new(critical),
            range: (self.lo, self.hi),
        })
    }

    /// `(f(lo), f(hi))`, with limits at infinite endpoints.
    pub fn range(&self) -> Result<(f64, f64)> {
        Ok(self.range)
    }

    fn limit(&self, x: f64, dir: f64) -> Result<f64> {
        if x.is_finite() {
            return self.value(x);
        }
        match &self.kind {
            Kind::Inverse(of) => Ok(if dir < 0.0 { of.lo } else { of.hi }),
            Kind::Expr(e) => match e.jet(x, self.opts) {
                Ok(j) if !j.value.is_nan() => Ok(j.value),
                // A divergent tail integral means the limit is infinite.
                _ => Ok(dir * f64::INFINITY),
            },
        }
    }

    pub fn jet(&self, x: f64) -> Result<Jet> {
        if !(x >= self.lo && x <= self.hi) {
            return Err(Error::Domain { x, lo: self.lo, hi: self.hi });
        }
        match &self.kind {
            Kind::Expr(e) => e.jet(x, self.opts),
            Kind::Inverse(of) => {
                if x.is_infinite() {
                    let v = if x < 0.0 { of.lo } else { of.hi };
                    return Ok(Jet { value: v, d_plus: 0.0, d_minus: 0.0, d2: 0.0 });
                }
                let y = of.invert(x)?;
                let j = of.jet(y)?;
                let d2 = if j.d_plus.is_finite() && j.d_plus > 0.0 {
                    -j.d2 / (j.d_plus * j.d_plus * j.d_plus)
                } else {
                    0.0
                };
                Ok(Jet {
                    value: y,
                    d_plus: recip(j.d_plus),
                    d_minus: recip(j.d_minus),
                    d2,
                })
            }
        }
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        if x.is_infinite() && (x == self.lo || x == self.hi) {
            return Ok(if x < 0.0 { self.range.0 } else { self.range.1 });
        }
        Ok(self.jet(x)?.value)
    }

    pub fn d_plus(&self, x: f64) -> Result<f64> {
        Ok(self.jet(x)?.d_plus)
    }

    pub fn d_minus(&self, x: f64) -> Result<f64> {
        Ok(self.jet(x)?.d_minus)
    }

    pub fn d2_ac(&self, x: f64) -> Result<f64> {
        Ok(self.jet(x)?.d2)
    }

    /// Points where derivatives may jump, vanish or blow up, inside the domain.
    pub fn critical_points(&self) -> Vec<f64> {
        self.critical.iter().map(|c| c.0).collect()
    }

    /// Solve `f(x) = y` for strictly increasing `f`.
    ///
    /// Bisection on a bracket, accelerated by Newton steps where the
    /// derivative is not too small.
    pub fn invert(&self, y: f64) -> Result<f64> {
        let (flo, fhi) = self.range()?;
        if !(y >= flo && y <= fhi) {
            return Err(Error::Range { y, lo: flo, hi: fhi });
        }
        if y == flo {
            return Ok(self.lo);
        }
        if y == fhi {
            return Ok(self.hi);
        }
        if let Some(&(c, _)) = self.critical.iter().find(|c| c.1 == y) {
            return Ok(c);
        }
        let (mut a, mut b) = self.bracket(y)?;
        let tol = 1e-12 * (1.0 + y.abs());
        let mut x = 0.5 * (a + b);
        for _ in 0..400 {
            let j = self.jet(x)?;
            let res = j.value - y;
            if res == 0.0 {
                return Ok(x);
            }
            if res < 0.0 {
                a = x;
            } else {
                b = x;
            }
            let width_done = b - a <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE);
            if width_done {
                return self.polish(a, b, y);
            }
            let mut next = 0.5 * (a + b);
            if j.d_plus.is_finite() && j.d_plus.abs() >= 1e-6 {
                let step = res / j.d_plus;
                let cand = x - step;
                if cand > a && cand < b {
                    if res.abs() <= tol && step.abs() <= 1e-15 * x.abs().max(1e-300) {
                        let w = 4.0 * step.abs() + 8.0 * f64::EPSILON * cand.abs();
                        let (lo, hi) = ((cand - w).max(a), (cand + w).min(b));
                        if self.value(lo)? <= y && self.value(hi)? >= y {
                            return self.polish(lo, hi, y);
                        }
                        return Ok(cand);
                    }
                    next = cand;
                }
            }
            x = next;
        }
        let r = self.value(x)? - y;
        if r.abs() <= tol {
            Ok(x)
        } else {
            Err(Error::Range { y, lo: flo, hi: fhi })
        }
    }

    /// Bisect `f(a) <= y <= f(b)` down to adjacent floats, preferring an exact hit.
    ///
    /// One-sided derivatives at a flat point are sensitive to the last bit.
    fn polish(&self, mut a: f64, mut b: f64, y: f64) -> Result<f64> {
        loop {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let v = self.value(m)?;
            if v == y {
                return Ok(m);
            }
            if v < y {
                a = m;
            } else {
                b = m;
            }
        }
        let (fa, fb) = (self.value(a)?, self.value(b)?);
        Ok(if fb == y || (fa != y && (fb - y).abs() < (y - fa).abs()) { b } else { a })
    }

    fn bracket(&self, y: f64) -> Result<(f64, f64)> {
        let start = if self.lo.is_finite() && self.hi.is_finite() {
            return Ok((self.lo, self.hi));
        } else if self.lo.is_finite() {
            self.lo
        } else if self.hi.is_finite() {
            self.hi
        } else {
            0.0
        };
        let f0 = self.value(start)?;
        let dir = if y > f0 { 1.0 } else { -1.0 };
        let mut step = 1.0;
        let mut inner = start;
        loop {
            let outer = start + dir * step;
            let outer = outer.clamp(self.lo, self.hi);
            let f = self.value(outer)?;
            if (dir > 0.0 && f >= y) || (dir < 0.0 && f <= y) {
                return Ok(if dir > 0.0 { (inner, outer) } else { (outer, inner) });
            }
            inner = outer;
            step *= 2.0;
            if step > 1e300 {
                return Err(Error::Range { y, lo: f0, hi: f });
            }
        }
    }

    /// Check strict increase on a sample grid, tolerating flats inside `allowed_flat`.
    pub fn check_strictly_increasing(&self, n: usize, allowed_flat: &[(f64, f64)]) -> Result<()> {
        let a = if self.lo.is_finite() { self.lo } else { self.hi.min(0.0) - 100.0 };
        let b = if self.hi.is_finite() { self.hi } else { self.lo.max(0.0) + 100.0 };
        let a = a.max(self.lo);
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=n {
            let x = if i == n { b } else { (a + (b - a) * i as f64 / n as f64).min(b) };
            let v = self.value(x)?;
            if !v.is_finite() {
                return Err(Error::InvalidExpr(format!("non-finite value {v} at {x}")));
            }
            if let Some((px, pv)) = prev {
                let flat_ok = allowed_flat.iter().any(|&(l, h)| px >= l && x <= h);
                if v < pv || (v == pv && !flat_ok) {
                    return Err(Error::InvalidExpr(format!(
                        "function is not strictly increasing between {px} and {x}"
                    )));
                }
            }
            prev = Some((x, v));
        }
        Ok(())
    }
}
