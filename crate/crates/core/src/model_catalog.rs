//! Named example markets with exact parameters and their known verdicts.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::arb_classifier::Status;
use crate::diffusion_model::{
    BoundaryKind, DiffusionSpec, Endpoint, ScaleInput, SpeedInput, StateInterval, ZeroSetComponent,
};
use crate::error::{Error, Result};
use crate::measure_kit::{DecomposedMeasure, Expr, LocalBehavior, Mass, Side};

/// Exact rational parameter value.
pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Exact(Rational),
    Infinite,
}

impl Param {
    pub fn to_f64(self) -> f64 {
        match self {
            Param::Exact(q) => q.to_f64().unwrap_or(f64::NAN),
            Param::Infinite => f64::INFINITY,
        }
    }

    /// Parse `3/4`, `-1.25`, `2` or `inf`. Decimals are read exactly.
    pub fn parse(text: &str) -> Result<Param> {
        let t = text.trim();
        if matches!(t, "inf" | "+inf" | "infinity") {
            return Ok(Param::Infinite);
        }
        let bad = || Error::Parse(format!("`{t}` is not an exact number"));
        if let Some((n, d)) = t.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| bad())?;
            let d: i128 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Param::Exact(Rational::new(n, d)));
        }
        let (mantissa, exp) = match t.split_once(['e', 'E']) {
            Some((m, e)) => (m, e.parse::<i32>().map_err(|_| bad())?),
            None => (t, 0),
        };
        let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        let negative = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.len() > 30 {
            return Err(bad());
        }
        let mut value = Rational::from_integer(digits.parse::<i128>().map_err(|_| bad())?);
        let shift = exp - frac.len() as i32;
        if shift.abs() > 30 {
            return Err(bad());
        }
        let ten = Rational::from_integer(10);
        for _ in 0..shift.abs() {
            value = if shift > 0 { value * ten } else { value / ten };
        }
        Ok(Param::Exact(if negative { -value } else { value }))
    }

    /// Exact value of a finite float via its shortest decimal form.
    pub fn from_f64(x: f64) -> Result<Param> {
        if x == f64::INFINITY {
            return Ok(Param::Infinite);
        }
        if !x.is_finite() {
            return Err(Error::Parse(format!("parameter value {x}")));
        }
        Param::parse(&format!("{x:e}"))
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Exact(q) if q.is_integer() => write!(f, "{}", q.numer()),
            Param::Exact(q) => write!(f, "{}/{}", q.numer(), q.denom()),
            Param::Infinite => write!(f, "inf"),
        }
    }
}

/// Named parameters of a catalog model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params(pub BTreeMap<String, Param>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.0.insert(key.to_string(), Param::parse(value).expect("valid literal"));
        self
    }

    /// Parse `k=v,k=v`.
    pub fn parse(text: &str) -> Result<Params> {
        let mut out = Params::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("parameter `{item}` is not of the form key=value")))?;
            out.0.insert(k.trim().to_string(), Param::parse(v)?);
        }
        Ok(out)
    }

    fn get(&self, key: &str) -> Option<Param> {
        self.0.get(key).copied()
    }
}

impl fmt::Display for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Range {
    /// Any real number.
    Real,
    /// Open interval `(lo, hi)`.
    Open(f64, f64),
    /// `[lo, ∞)`, or `[lo, ∞]` when `infinite` is allowed.
    AtLeast { lo: f64, infinite: bool },
}

impl Range {
    fn admits(&self, p: Param) -> bool {
        match (self, p) {
            (Range::AtLeast { infinite: true, .. }, Param::Infinite) => true,
            (_, Param::Infinite) => false,
            (Range::Real, _) => true,
            (Range::Open(lo, hi), p) => p.to_f64() > *lo && p.to_f64() < *hi,
            (Range::AtLeast { lo, .. }, p) => p.to_f64() >= *lo,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamSchema {
    pub name: &'static str,
    pub default: &'static str,
    pub range: Range,
    pub meaning: &'static str,
}

/// Verdicts a catalog model is known to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Expected {
    pub nip: Status,
    pub nsa: Status,
    pub nupbr: Status,
    pub rp: Status,
}

impl Expected {
    fn new(nip: bool, nsa: bool, nupbr: bool, rp: bool) -> Self {
        let s = |b: bool| if b { Status::Holds } else { Status::Fails };
        Self { nip: s(nip), nsa: s(nsa), nupbr: s(nupbr), rp: s(rp) }
    }

    pub fn triple(&self) -> (Status, Status, Status) {
        (self.nip, self.nsa, self.nupbr)
    }
}

type Builder = fn(&Resolved) -> Result<DiffusionSpec>;
type Predicate = fn(&Resolved) -> Expected;

pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Why the expected verdicts hold.
    pub rationale: &'static str,
    pub params: Vec<ParamSchema>,
    build: Builder,
    expect: Predicate,
}

impl fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CatalogEntry").field("name", &self.name).finish_non_exhaustive()
    }
}

#[derive(Serialize)]
struct EntryView<'a> {
    name: &'a str,
    summary: &'a str,
    rationale: &'a str,
    params: &'a [ParamSchema],
}

impl CatalogEntry {
    /// JSON description of the entry: parameters, ranges and rationale.
    pub fn describe(&self) -> serde_json::Value {
        serde_json::to_value(EntryView {
            name: self.name,
            summary: self.summary,
            rationale: self.rationale,
            params: &self.params,
        })
        .expect("serializable")
    }

    fn resolve(&self, params: &Params) -> Result<Resolved> {
        let mut values = BTreeMap::new();
        for key in params.0.keys() {
            if !self.params.iter().any(|p| p.name == key) {
                return Err(Error::Catalog(format!("{}: unknown parameter `{key}`", self.name)));
            }
        }
        for schema in &self.params {
            let v = match params.get(schema.name) {
                Some(v) => v,
                None => Param::parse(schema.default)?,
            };
            if !schema.range.admits(v) {
                return Err(Error::Catalog(format!(
                    "{}: parameter {} = {v} is out of range {:?}",
                    self.name, schema.name, schema.range
                )));
            }
            values.insert(schema.name, v);
        }
        Ok(Resolved(values))
    }
}

/// Parameters after defaults and range checks.
pub struct Resolved(BTreeMap<&'static str, Param>);

impl Resolved {
    fn exact(&self, k: &str) -> Rational {
        match self.0[k] {
            Param::Exact(q) => q,
            Param::Infinite => unreachable!("range check admits infinity only where handled"),
        }
    }

    fn f(&self, k: &str) -> f64 {
        self.0[k].to_f64()
    }

    fn param(&self, k: &str) -> Param {
        self.0[k]
    }
}

fn schema(name: &'static str, default: &'static str, range: Range, meaning: &'static str) -> ParamSchema {
    ParamSchema { name, default, range, meaning }
}

fn rate() -> ParamSchema {
    schema("r", "0", Range::Real, "interest rate")
}

fn line() -> (f64, f64) {
    (f64::NEG_INFINITY, f64::INFINITY)
}

fn half_line() -> StateInterval {
    StateInterval::new(0.0, f64::INFINITY, true, false).expect("valid interval")
}

/// All catalog entries.
pub fn entries() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "brownian_motion",
            summary: "Brownian motion on the real line: s(x) = x, m = Lebesgue",
            rationale: "no boundaries and no singular parts; phi(u) = -r u is locally bounded, so all notions hold",
            params: vec![rate(), schema("x0", "0", Range::Real, "starting value")],
            build: build_bm,
            expect: |_| Expected::new(true, true, true, true),
        },
        CatalogEntry {
            name: "squared_bessel",
            summary: "squared Bessel process of dimension delta in (0, 2), instantaneously reflecting at 0; \
                      s(x) = x^(1 - delta/2), m(dx) = x^(delta/2 - 1) dx / (4 (1 - delta/2))",
            rationale: "q'(0) = 0 at the reflecting origin gives NIP; phi ~ (p - 1)/(2u) near 0 is not square \
                        integrable on the boundary collar, so NSA and NUPBR fail",
            params: vec![
                schema("delta", "1", Range::Open(0.0, 2.0), "dimension"),
                rate(),
                schema("x0", "1", Range::AtLeast { lo: 0.0, infinite: false }, "starting value"),
            ],
            build: build_squared_bessel,
            expect: |_| Expected::new(true, false, false, true),
        },
        CatalogEntry {
            name: "sticky_reflected_bm",
            summary: "Brownian motion on [1, inf) reflecting at 1 with stickiness rho: m = dx + rho delta_1",
            rationale: "the reflection condition r * 1 * rho = q'(1)/2 = 1/2 decides all three notions",
            params: vec![
                rate(),
                schema("rho", "1", Range::AtLeast { lo: 0.0, infinite: false }, "speed atom at 1"),
                schema("x0", "3/2", Range::AtLeast { lo: 1.0, infinite: false }, "starting value"),
            ],
            build: build_sticky_reflected,
            expect: |p| {
                let ok = Rational::from_integer(2) * p.exact("r") * p.exact("rho") == Rational::from_integer(1);
                Expected::new(ok, ok, ok, true)
            },
        },
        CatalogEntry {
            name: "cubed_bm",
            summary: "cube of a Brownian motion, Y = W^3: q(u) = u^3, natural speed Lebesgue",
            rationale: "q' vanishes only at 0 and q'' is absolutely continuous, so NIP holds; phi ~ 1/u near 0 \
                        is not locally square integrable, so NSA and NUPBR fail; the zero set {0} is null",
            params: vec![rate(), schema("x0", "1", Range::Real, "starting value")],
            build: build_cubed,
            expect: |_| Expected::new(true, false, false, true),
        },
        CatalogEntry {
            name: "fat_cantor",
            summary: "q(u) = integral of the distance to a fat Cantor set F in [0, 1]; natural speed Lebesgue",
            rationale: "for r = 0 q' is absolutely continuous and NIP holds, phi ~ 1/(2 dist(u, F)) breaks local \
                        square integrability; for r != 0 the identity r q mU = q''/2 fails on F; F has positive \
                        measure, so the representation property fails",
            params: vec![
                rate(),
                schema("generation", "8", Range::Open(0.0, 65.0), "number of removed intervals"),
                schema("a", "1/2", Range::Open(0.0, 1.0), "total removed length bound"),
            ],
            build: build_fat_cantor,
            expect: |p| {
                let zero = p.exact("r").is_zero();
                Expected::new(zero, false, false, false)
            },
        },
        CatalogEntry {
            name: "sticky_skew",
            summary: "skew Brownian motion with parameter kappa and a sticky point xi: \
                      s(x) = (x - xi) v(x), v = 1 - kappa above xi and kappa below, m = dx / v + c delta_xi",
            rationale: "the drift atom r q(0) c against half the jump of q' at the skew point decides all three \
                        notions: r xi c = (2 kappa - 1) / (2 kappa (1 - kappa))",
            params: vec![
                schema("kappa", "3/4", Range::Open(0.0, 1.0), "skewness"),
                schema("c", "1", Range::AtLeast { lo: 0.0, infinite: false }, "stickiness at xi"),
                schema("xi", "4/3", Range::Real, "skew and sticky point"),
                schema("r", "1", Range::Real, "interest rate"),
            ],
            build: build_sticky_skew,
            expect: |p| {
                let k = p.exact("kappa");
                let one = Rational::from_integer(1);
                let two = Rational::from_integer(2);
                let target = (two * k - one) / (two * k * (one - k));
                let ok = p.exact("r") * p.exact("xi") * p.exact("c") == target;
                Expected::new(ok, ok, ok, true)
            },
        },
        CatalogEntry {
            name: "gen_squared_bessel",
            summary: "generalized squared Bessel process with index nu in (-1, 0) on [0, inf): \
                      s(x) = x^(-nu), m = x^nu dx / (4|nu|) + m0 delta_0",
            rationale: "q'(0) = 0 and the boundary is 0, so NIP holds for every m0 and r; phi ~ (p - 1)/(2u) with p = 1/|nu| \
                        is square integrable away from 0 but not on a reflecting collar, and u phi^2 is not \
                        integrable at an absorbing origin: NSA holds iff m0 = inf, NUPBR always fails",
            params: vec![
                schema("nu", "-1/2", Range::Open(-1.0, 0.0), "index"),
                schema("m0", "inf", Range::AtLeast { lo: 0.0, infinite: true }, "speed atom at 0 (inf = absorbing)"),
                rate(),
                schema("x0", "1", Range::AtLeast { lo: 0.0, infinite: false }, "starting value"),
            ],
            build: build_gen_squared_bessel,
            expect: |p| {
                let absorbing = p.param("m0") == Param::Infinite;
                Expected::new(true, absorbing, false, true)
            },
        },
    ]
}

pub fn entry(name: &str) -> Result<CatalogEntry> {
    entries()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Catalog(format!("unknown model `{name}`")))
}

/// Build the fully annotated model `name` with `params` (missing ones take defaults).
pub fn build_model(name: &str, params: &Params) -> Result<DiffusionSpec> {
    let e = entry(name)?;
    let p = e.resolve(params)?;
    let mut spec = (e.build)(&p)?;
    spec.model_id = format!("{name}({})", params_label(&e, &p));
    Ok(spec)
}

/// Known verdicts of `name` at `params`, evaluated in exact arithmetic.
pub fn expected_verdict(name: &str, params: &Params) -> Result<Expected> {
    let e = entry(name)?;
    let p = e.resolve(params)?;
    Ok((e.expect)(&p))
}

fn params_label(e: &CatalogEntry, p: &Resolved) -> String {
    e.params.iter().map(|s| format!("{}={}", s.name, p.param(s.name))).collect::<Vec<_>>().join(",")
}

/// Fixed parameter sweep over every entry.
pub fn golden_sweep() -> Vec<(&'static str, Params)> {
    let mut out = Vec::new();
    let mut push = |name: &'static str, kv: &[(&str, &str)]| {
        let mut p = Params::new();
        for (k, v) in kv {
            p = p.with(k, v);
        }
        out.push((name, p));
    };
    for r in ["0", "1/5", "-1/2", "1"] {
        push("brownian_motion", &[("r", r)]);
    }
    for d in ["1/2", "1", "3/2", "1/4", "7/4"] {
        push("squared_bessel", &[("delta", d)]);
    }
    push("squared_bessel", &[("delta", "1"), ("r", "3/10")]);
    for (r, rho) in [
        ("1/2", "1"),
        ("1/2", "9/10"),
        ("0", "1"),
        ("1", "1/2"),
        ("1/4", "2"),
        ("2", "1/4"),
        ("1", "1"),
        ("0", "0"),
        ("1/2", "0"),
        ("-1/2", "1"),
    ] {
        push("sticky_reflected_bm", &[("r", r), ("rho", rho)]);
    }
    for r in ["0", "1/10"] {
        push("cubed_bm", &[("r", r)]);
    }
    for r in ["0", "1/2"] {
        push("fat_cantor", &[("r", r)]);
    }
    for (k, c, xi, r) in [
        ("3/4", "1", "4/3", "1"),
        ("3/4", "1", "4/3", "9/10"),
        ("3/4", "1", "4/3", "0"),
        ("1/2", "1", "1", "0"),
        ("1/2", "1", "1", "1/10"),
        ("2/3", "1", "3/2", "1/2"),
        ("1/4", "1", "-4/3", "1"),
        ("3/4", "2", "2/3", "1"),
        ("1/4", "1", "1", "1"),
    ] {
        push("sticky_skew", &[("kappa", k), ("c", c), ("xi", xi), ("r", r)]);
    }
    for m0 in ["inf", "0", "1"] {
        for r in ["0", "1/10"] {
            push("gen_squared_bessel", &[("nu", "-1/2"), ("m0", m0), ("r", r)]);
        }
    }
    push("gen_squared_bessel", &[("nu", "-1/4"), ("m0", "inf")]);
    push("gen_squared_bessel", &[("nu", "-3/4"), ("m0", "0")]);
    push("gen_squared_bessel", &[("nu", "-3/4"), ("m0", "inf"), ("r", "1")]);
    out
}

fn build_bm(p: &Resolved) -> Result<DiffusionSpec> {
    DiffusionSpec::new(
        "brownian_motion",
        StateInterval::real_line(),
        ScaleInput::Scale(Expr::identity()),
        SpeedInput::State(DecomposedMeasure::lebesgue(line())),
        p.f("x0"),
        p.f("r"),
        1.0,
    )
}

/// `q(u) = u^p` on `[0, ∞)` with natural speed density `p^2 u^(p-2) / 4`.
///
/// This is `s(x) = x^(-ν)`, `m(dx) = x^ν dx / (4|ν|)` with `p = 1/|ν|`.
fn bessel_like(id: &str, p: f64, x0: f64, r: f64, m0: Option<Mass>) -> Result<DiffusionSpec> {
    let density = if p == 2.0 {
        Expr::constant(1.0)
    } else {
        Expr::power_signed(0.0, p - 2.0).scaled(p * p / 4.0)
    };
    let mut m = DecomposedMeasure::new(line(), expr_handle(density), vec![0.0]);
    if let Some(mass) = m0 {
        m = m.with_atom(0.0, mass)?;
    }
    let kind = match m0 {
        Some(Mass::Infinite) => BoundaryKind::Absorbing,
        _ => BoundaryKind::Reflecting,
    };
    let spec = DiffusionSpec::new(
        id,
        half_line(),
        ScaleInput::InverseScale(Expr::power_signed(0.0, p)),
        SpeedInput::Natural(m),
        x0,
        r,
        1.0,
    )?
    .with_boundary(Endpoint::Left, kind)
    .with_phi_behaviors(vec![LocalBehavior::new(0.0, Side::Right, -1.0, 0.5 * (p - 1.0))]);
    Ok(spec)
}

pub(crate) fn expr_handle(e: Expr) -> crate::measure_kit::FnHandle {
    std::sync::Arc::new(move |x| e.eval(x).unwrap_or(f64::NAN))
}

fn build_squared_bessel(p: &Resolved) -> Result<DiffusionSpec> {
    let delta = p.exact("delta");
    let nu = (delta / Rational::from_integer(2) - Rational::from_integer(1)).abs();
    let power = (Rational::from_integer(1) / nu).to_f64().unwrap_or(f64::NAN);
    bessel_like("squared_bessel", power, p.f("x0"), p.f("r"), None)
}

fn build_gen_squared_bessel(p: &Resolved) -> Result<DiffusionSpec> {
    let nu = p.exact("nu").abs();
    let power = (Rational::from_integer(1) / nu).to_f64().unwrap_or(f64::NAN);
    let m0 = match p.param("m0") {
        Param::Infinite => Some(Mass::Infinite),
        Param::Exact(q) if q.is_zero() => None,
        Param::Exact(q) => Some(Mass::Finite(q.to_f64().unwrap_or(f64::NAN))),
    };
    bessel_like("gen_squared_bessel", power, p.f("x0"), p.f("r"), m0)
}

fn build_sticky_reflected(p: &Resolved) -> Result<DiffusionSpec> {
    let j = StateInterval::new(1.0, f64::INFINITY, true, false)?;
    let rho = p.f("rho");
    let mut m = DecomposedMeasure::lebesgue((1.0, f64::INFINITY));
    if rho > 0.0 {
        m = m.with_atom(1.0, Mass::Finite(rho))?;
    }
    Ok(DiffusionSpec::new(
        "sticky_reflected_bm",
        j,
        ScaleInput::Scale(Expr::identity()),
        SpeedInput::State(m),
        p.f("x0"),
        p.f("r"),
        1.0,
    )?
    .with_boundary(Endpoint::Left, BoundaryKind::Reflecting))
}

fn build_cubed(p: &Resolved) -> Result<DiffusionSpec> {
    let x0 = p.f("x0");
    Ok(DiffusionSpec::new(
        "cubed_bm",
        StateInterval::real_line(),
        ScaleInput::InverseScale(Expr::power_signed(0.0, 3.0)),
        SpeedInput::Natural(DecomposedMeasure::lebesgue(line())),
        x0,
        p.f("r"),
        1.0,
    )?
    .with_phi_behaviors(vec![LocalBehavior::new(0.0, Side::Both, -1.0, 1.0)]))
}

fn build_sticky_skew(p: &Resolved) -> Result<DiffusionSpec> {
    let k = p.f("kappa");
    let xi = p.f("xi");
    let c = p.f("c");
    let s = Expr::Piecewise {
        breakpoints: vec![xi],
        pieces: vec![Expr::affine(k, -k * xi), Expr::affine(1.0 - k, -(1.0 - k) * xi)],
    };
    let density = Expr::Piecewise {
        breakpoints: vec![xi],
        pieces: vec![Expr::constant(1.0 / k), Expr::constant(1.0 / (1.0 - k))],
    };
    let mut m = DecomposedMeasure::new(line(), expr_handle(density), vec![xi]);
    if c > 0.0 {
        m = m.with_atom(xi, Mass::Finite(c))?;
    }
    let jump = 1.0 / (1.0 - k) - 1.0 / k;
    let mut spec = DiffusionSpec::new(
        "sticky_skew",
        StateInterval::real_line(),
        ScaleInput::Scale(s),
        SpeedInput::State(m),
        xi,
        p.f("r"),
        1.0,
    )?;
    if jump != 0.0 {
        spec = spec.with_kinks(vec![(0.0, jump)]);
    }
    Ok(spec)
}

/// Closed intervals making up the generation-`n` approximant of the fat Cantor set.
///
/// Removed intervals are `(q_k - r_k, q_k + r_k)` for the first `n` rationals
/// `q_k` of `[0, 1]` ordered by denominator and then numerator, with
/// `r_k = a 2^(-k-2)`, `k = 1, 2, ...`.
pub fn fat_cantor_intervals(generation: usize, a: f64) -> Vec<[f64; 2]> {
    let mut gaps: Vec<(f64, f64)> = Vec::new();
    let mut k = 0;
    'outer: for den in 1i64.. {
        for num in 0..=den {
            let reduced = gcd(num, den) == 1 || (num == 0 && den == 1);
            if !reduced || (num == 0 && den > 1) {
                continue;
            }
            k += 1;
            if k > generation {
                break 'outer;
            }
            let q = num as f64 / den as f64;
            let r = a * 2f64.powi(-(k as i32) - 2);
            gaps.push((q - r, q + r));
        }
    }
    gaps.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = Vec::new();
    let mut start = 0.0;
    for (lo, hi) in gaps {
        if lo > start {
            out.push([start, lo.min(1.0)]);
        }
        start = start.max(hi);
        if start >= 1.0 {
            break;
        }
    }
    if start < 1.0 {
        out.push([start, 1.0]);
    }
    out
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// `q(u) = ∫_0^u dist(z, F) dz` as an exact piecewise quadratic, flat on `F`.
pub fn fat_cantor_inverse_scale(f: &[[f64; 2]]) -> Expr {
    let sq = |center: f64, base: f64| Expr::power_signed(center, 2.0).scaled(0.5).plus(Expr::constant(base));
    let c0 = f[0][0];
    let mut level = 0.5 * c0 * c0;
    let mut breakpoints = vec![c0];
    let mut pieces = vec![sq(c0, level)];
    for (j, iv) in f.iter().enumerate() {
        pieces.push(Expr::constant(level));
        breakpoints.push(iv[1]);
        if let Some(next) = f.get(j + 1) {
            let g = next[0] - iv[1];
            let mid = iv[1] + 0.5 * g;
            pieces.push(sq(iv[1], level));
            breakpoints.push(mid);
            let top = level + 0.25 * g * g;
            pieces.push(sq(next[0], top));
            breakpoints.push(next[0]);
            level = top;
        }
    }
    pieces.push(sq(f[f.len() - 1][1], level));
    Expr::Piecewise { breakpoints, pieces }
}

fn build_fat_cantor(p: &Resolved) -> Result<DiffusionSpec> {
    let generation = p.exact("generation");
    if !generation.is_integer() {
        return Err(Error::Catalog("fat_cantor: generation must be an integer".into()));
    }
    let f = fat_cantor_intervals(generation.to_integer() as usize, p.f("a"));
    let q = fat_cantor_inverse_scale(&f);
    let r = p.f("r");
    let x0 = q.eval(-0.5)?;
    let q_at = |u: f64| q.eval(u);
    let mut behaviors = Vec::new();
    for iv in &f {
        let left = -0.5 - r * q_at(iv[0])?;
        let right = 0.5 - r * q_at(iv[1])?;
        if left != 0.0 {
            behaviors.push(LocalBehavior::new(iv[0], Side::Left, -1.0, left));
        }
        if right != 0.0 {
            behaviors.push(LocalBehavior::new(iv[1], Side::Right, -1.0, right));
        }
    }
    let measure: f64 = f.iter().map(|iv| iv[1] - iv[0]).sum();
    Ok(DiffusionSpec::new(
        "fat_cantor",
        StateInterval::real_line(),
        ScaleInput::InverseScale(q.clone()),
        SpeedInput::Natural(DecomposedMeasure::lebesgue(line())),
        x0,
        r,
        1.0,
    )?
    .with_zero_set(vec![ZeroSetComponent::FatSet { intervals: f, measure }])
    .with_phi_behaviors(behaviors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_parse_exactly() {
        assert_eq!(Param::parse("3/4").unwrap(), Param::Exact(Rational::new(3, 4)));
        assert_eq!(Param::parse("0.9").unwrap(), Param::Exact(Rational::new(9, 10)));
        assert_eq!(Param::parse("-1.25e1").unwrap(), Param::Exact(Rational::new(-25, 2)));
        assert_eq!(Param::parse("inf").unwrap(), Param::Infinite);
        assert_eq!(Param::from_f64(0.1).unwrap(), Param::Exact(Rational::new(1, 10)));
        assert!(Param::parse("x").is_err());
        let p = Params::parse("r=1/2, rho=1").unwrap();
        assert_eq!(p.to_string(), "r=1/2,rho=1");
    }

    #[test]
    fn sticky_skew_expectation_is_exact() {
        let base = Params::new().with("kappa", "3/4").with("c", "1").with("xi", "4/3");
        let e = expected_verdict("sticky_skew", &base.clone().with("r", "1")).unwrap();
        assert_eq!(e.triple(), (Status::Holds, Status::Holds, Status::Holds));
        let e = expected_verdict("sticky_skew", &base.with("r", "0.9")).unwrap();
        assert_eq!(e.triple(), (Status::Fails, Status::Fails, Status::Fails));
        let e = expected_verdict("sticky_reflected_bm", &Params::new().with("r", "0").with("rho", "2")).unwrap();
        assert_eq!(e.nip, Status::Fails);
    }

    #[test]
    fn out_of_range_and_unknown() {
        assert!(build_model("squared_bessel", &Params::new().with("delta", "2")).is_err());
        assert!(build_model("nope", &Params::new()).is_err());
        assert!(build_model("cubed_bm", &Params::new().with("zeta", "1")).is_err());
    }

    #[test]
    fn fat_cantor_set() {
        let f = fat_cantor_intervals(8, 0.5);
        assert_eq!(f.len(), 7);
        assert_eq!(f[0][0], 1.0 / 16.0);
        assert_eq!(f[6][1], 31.0 / 32.0);
        let measure: f64 = f.iter().map(|iv| iv[1] - iv[0]).sum();
        assert!((measure - 0.8447265625).abs() < 1e-15);
        let q = fat_cantor_inverse_scale(&f);
        q.validate().unwrap();
        assert_eq!(q.eval(0.0).unwrap(), 0.0);
        // q' = dist(u, F)
        let opts = crate::measure_kit::QuadOptions::default();
        for u in [-0.3, 0.02, 0.1, 0.2, 0.2003, 0.49, 0.6, 0.97, 1.5] {
            let dist = f.iter().map(|iv| (iv[0] - u).max(u - iv[1]).max(0.0)).fold(f64::INFINITY, f64::min);
            assert!((q.jet(u, opts).unwrap().d_plus - dist).abs() < 1e-14, "u = {u}");
        }
    }

    #[test]
    fn sweep_is_large_enough() {
        let sweep = golden_sweep();
        assert!(sweep.len() >= 40);
        for (name, p) in &sweep {
            build_model(name, p).unwrap();
            expected_verdict(name, p).unwrap();
        }
    }
}
