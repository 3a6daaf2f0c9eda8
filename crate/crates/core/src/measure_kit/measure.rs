//! Measures given by their Lebesgue decomposition.

use std::fmt;
use std::sync::Arc;

use super::piece::SmoothPiece1D;
use super::quad::{integrate, QuadOptions};
use crate::error::{Error, Result};

pub type FnHandle = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Mass of an atom. Infinite masses only sit at state-interval boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mass {
    Finite(f64),
    Infinite,
}

impl Mass {
    pub fn finite(self) -> Option<f64> {
        match self {
            Mass::Finite(m) => Some(m),
            Mass::Infinite => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Mass::Finite(m) => m,
            Mass::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub point: f64,
    pub mass: Mass,
}

/// Singular-continuous part `multiplier(x) dBase(x)` on a named base measure.
#[derive(Clone)]
pub struct ScPart {
    pub base_id: String,
    pub base_cdf: FnHandle,
    pub multiplier: FnHandle,
    pub support: (f64, f64),
}

impl fmt::Debug for ScPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScPart")
            .field("base_id", &self.base_id)
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

impl ScPart {
    /// `∫_{[a,b]} g dμ_sc` by a Riemann-Stieltjes sum on the base cdf.
    pub fn integrate(&self, g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let lo = a.max(self.support.0);
        let hi = b.min(self.support.1);
        if !(lo < hi) {
            return 0.0;
        }
        let n = 4096;
        let mut total = 0.0;
        let mut prev = (self.base_cdf)(lo);
        for i in 1..=n {
            let x1 = lo + (hi - lo) * i as f64 / n as f64;
            let xm = lo + (hi - lo) * (i as f64 - 0.5) / n as f64;
            let c = (self.base_cdf)(x1);
            total += g(xm) * (self.multiplier)(xm) * (c - prev);
            prev = c;
        }
        total
    }

    fn pushforward(&self, s: &SmoothPiece1D, q: &Arc<SmoothPiece1D>) -> Result<ScPart> {
        let (cdf, mult) = (self.base_cdf.clone(), self.multiplier.clone());
        let (q1, q2) = (q.clone(), q.clone());
        Ok(ScPart {
            base_id: self.base_id.clone(),
            base_cdf: Arc::new(move |u| q1.value(u).map_or(f64::NAN, |x| cdf(x))),
            multiplier: Arc::new(move |u| q2.value(u).map_or(f64::NAN, |x| mult(x))),
            support: (s.value(self.support.0)?, s.value(self.support.1)?),
        })
    }
}

/// `ac(x) dx + Σ mass_k δ_{x_k} + sc` on `support`; signed masses are allowed.
#[derive(Clone)]
pub struct DecomposedMeasure {
    pub support: (f64, f64),
    ac: FnHandle,
    ac_breaks: Vec<f64>,
    ac_is_zero: bool,
    pub atoms: Vec<Atom>,
    pub sc: Option<ScPart>,
}

impl fmt::Debug for DecomposedMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DecomposedMeasure")
            .field("support", &self.support)
            .field("ac_breaks", &self.ac_breaks)
            .field("atoms", &self.atoms)
            .field("sc", &self.sc)
            .finish_non_exhaustive()
    }
}

impl DecomposedMeasure {
    pub fn new(support: (f64, f64), ac: FnHandle, ac_breaks: Vec<f64>) -> Self {
        let mut ac_breaks = ac_breaks;
        ac_breaks.retain(|x| x.is_finite());
        ac_breaks.sort_by(f64::total_cmp);
        ac_breaks.dedup();
        Self {
            support,
            ac,
            ac_breaks,
            ac_is_zero: false,
            atoms: Vec::new(),
            sc: None,
        }
    }

    pub fn zero(support: (f64, f64)) -> Self {
        let mut m = Self::new(support, Arc::new(|_| 0.0), Vec::new());
        m.ac_is_zero = true;
        m
    }

    pub fn lebesgue(support: (f64, f64)) -> Self {
        Self::new(support, Arc::new(|_| 1.0), Vec::new())
    }

    /// Add an atom, keeping the list sorted. Duplicate locations are rejected.
    pub fn with_atom(mut self, point: f64, mass: Mass) -> Result<Self> {
        if !(point >= self.support.0 && point <= self.support.1) {
            return Err(Error::InvalidMeasure(format!("atom at {point} outside the support")));
        }
        if let Mass::Finite(m) = mass {
            if !m.is_finite() {
                return Err(Error::InvalidMeasure(format!("atom mass {m} at {point}")));
            }
        }
        if self.atoms.iter().any(|a| a.point == point) {
            return Err(Error::InvalidMeasure(format!("duplicate atom at {point}")));
        }
        self.atoms.push(Atom { point, mass });
        self.atoms.sort_by(|a, b| a.point.total_cmp(&b.point));
        Ok(self)
    }

    pub fn with_sc(mut self, sc: ScPart) -> Self {
        self.sc = Some(sc);
        self
    }

    /// `k · μ` for `k > 0`; infinite atoms stay infinite.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        if !self.ac_is_zero {
            let ac = self.ac.clone();
            out.ac = Arc::new(move |x| k * ac(x));
        }
        for a in &mut out.atoms {
            if let Mass::Finite(m) = a.mass {
                a.mass = Mass::Finite(k * m);
            }
        }
        if let Some(sc) = &mut out.sc {
            let mult = sc.multiplier.clone();
            sc.multiplier = Arc::new(move |x| k * mult(x));
        }
        out
    }

    pub fn ac_density(&self, x: f64) -> f64 {
        if self.ac_is_zero {
            0.0
        } else {
            (self.ac)(x)
        }
    }

    pub fn ac_handle(&self) -> FnHandle {
        self.ac.clone()
    }

    pub fn ac_is_zero(&self) -> bool {
        self.ac_is_zero
    }

    pub fn ac_breaks(&self) -> &[f64] {
        &self.ac_breaks
    }

    /// Atom mass at `point` (within `tol`), if any.
    pub fn atom_at(&self, point: f64, tol: f64) -> Option<Mass> {
        self.atoms
            .iter()
            .find(|a| (a.point - point).abs() <= tol)
            .map(|a| a.mass)
    }

    /// `∫_{[a,b]} g dμ` over the closed interval (atoms at `a` and `b` included).
    pub fn integrate_against(
        &self,
        g: &(dyn Fn(f64) -> f64 + Sync),
        a: f64,
        b: f64,
        opts: QuadOptions,
    ) -> Result<f64> {
        let lo = a.max(self.support.0);
        let hi = b.min(self.support.1);
        if lo > hi {
            return Ok(0.0);
        }
        let mut total = 0.0;
        if !self.ac_is_zero && lo < hi {
            total += integrate(|x| g(x) * (self.ac)(x), lo, hi, &self.ac_breaks, opts)?.value;
        }
        for atom in self.atoms.iter().filter(|at| at.point >= lo && at.point <= hi) {
            let w = g(atom.point);
            total += match atom.mass {
                Mass::Finite(m) => w * m,
                Mass::Infinite if w == 0.0 => 0.0,
                Mass::Infinite => w.signum() * f64::INFINITY,
            };
        }
        if let Some(sc) = &self.sc {
            total += sc.integrate(g, lo, hi);
        }
        Ok(total)
    }

    /// Mass of the closed interval `[a, b]`.
    pub fn mass(&self, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
        self.integrate_against(&|_| 1.0, a, b, opts)
    }

    /// Image measure under the increasing map `s` with inverse `q`.
    ///
    /// The a.c. density becomes `ac(q(u)) q'(u)`. Where `q' = 0` on a set of
    /// positive length the a.c. part would have to become singular; that is
    /// only accepted inside `allowed_flat` (natural coordinates).
    pub fn pushforward(
        &self,
        s: &SmoothPiece1D,
        q: &Arc<SmoothPiece1D>,
        allowed_flat: &[(f64, f64)],
    ) -> Result<DecomposedMeasure> {
        let support = (s.value(self.support.0)?, s.value(self.support.1)?);
        if !(support.0 < support.1) {
            return Err(Error::Pushforward("image of the support is degenerate".into()));
        }
        let mut breaks: Vec<f64> = self
            .ac_breaks
            .iter()
            .filter(|&&x| x > self.support.0 && x < self.support.1)
            .filter_map(|&x| s.value(x).ok())
            .collect();
        breaks.extend(q.critical_points());
        let mut out = if self.ac_is_zero {
            DecomposedMeasure::zero(support)
        } else {
            self.check_flat_derivative(q, support, allowed_flat)?;
            let ac = self.ac.clone();
            let qh = q.clone();
            DecomposedMeasure::new(
                support,
                Arc::new(move |u| match qh.jet(u) {
                    Ok(j) if j.d_plus == 0.0 => 0.0,
                    Ok(j) => ac(j.value) * j.d_plus,
                    Err(_) => f64::NAN,
                }),
                breaks,
            )
        };
        for atom in &self.atoms {
            out = out.with_atom(s.value(atom.point)?, atom.mass)?;
        }
        if let Some(sc) = &self.sc {
            out.sc = Some(sc.pushforward(s, q)?);
        }
        Ok(out)
    }

    fn check_flat_derivative(
        &self,
        q: &SmoothPiece1D,
        support: (f64, f64),
        allowed_flat: &[(f64, f64)],
    ) -> Result<()> {
        let a = if support.0.is_finite() { support.0 } else { support.1.min(0.0) - 50.0 };
        let b = if support.1.is_finite() { support.1 } else { support.0.max(0.0) + 50.0 };
        let n = 1000;
        let mut run = 0;
        for i in 1..n {
            let u = (a + (b - a) * i as f64 / n as f64).min(b);
            let flat = q.d_plus(u).map(|d| d == 0.0).unwrap_or(false)
                && (self.ac)(q.value(u).unwrap_or(f64::NAN)) > 0.0
                && !allowed_flat.iter().any(|&(l, h)| u >= l && u <= h);
            run = if flat { run + 1 } else { 0 };
            if run >= 3 {
                return Err(Error::Pushforward(format!(
                    "inverse has zero derivative on an interval near {u} that is not annotated"
                )));
            }
        }
        Ok(())
    }
}

/// Signed measure `q''(dx)`: a.c. density plus atoms at the kinks of `q`.
///
/// `kinks` lists declared `(point, q'_+(point) - q'_-(point))`; each is checked
/// against the one-sided derivatives. Kinks found among the critical points of
/// `q` are added even when not declared.
pub fn second_derivative_decomposition(
    q: &Arc<SmoothPiece1D>,
    kinks: &[(f64, f64)],
    rel_tol: f64,
) -> Result<DecomposedMeasure> {
    let (lo, hi) = q.domain();
    let qh = q.clone();
    let mut breaks = q.critical_points();
    breaks.extend(kinks.iter().map(|k| k.0));
    let mut out = DecomposedMeasure::new(
        (lo, hi),
        Arc::new(move |x| qh.d2_ac(x).unwrap_or(f64::NAN)),
        breaks.clone(),
    );
    for &(point, declared) in kinks {
        if !(point > lo && point < hi) {
            return Err(Error::InvalidMeasure(format!("kink at {point} outside the interior")));
        }
        let j = q.jet(point)?;
        let computed = j.d_plus - j.d_minus;
        if !((declared - computed).abs() <= rel_tol * declared.abs().max(computed.abs())
            || (declared - computed).abs() <= 1e-14)
        {
            return Err(Error::KinkMismatch { point, declared, computed });
        }
    }
    let mut pts: Vec<f64> = breaks.into_iter().filter(|&x| x > lo && x < hi).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    for x in pts {
        let j = q.jet(x)?;
        let jump = j.d_plus - j.d_minus;
        if jump.is_finite() && jump.abs() > 1e-13 * (1.0 + j.d_plus.abs()) {
            out = out.with_atom(x, Mass::Finite(jump))?;
        }
    }
    Ok(out)
}

/// Sampled total variation of `f` on `[a, b]` with `n` cells plus `extra` nodes.
pub fn total_variation(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    n: usize,
    extra: &[f64],
) -> Result<f64> {
    let mut xs: Vec<f64> = (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).min(b)).collect();
    xs.extend(extra.iter().copied().filter(|&x| x > a && x < b));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut tv = 0.0;
    let mut prev = f(xs[0])?;
    for &x in &xs[1..] {
        let v = f(x)?;
        tv += (v - prev).abs();
        prev = v;
    }
    Ok(tv)
}
