//! Market model, natural-scale view, boundary classification and the
//! semimartingale standing assumption.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::measure_kit::measure::total_variation;
use crate::measure_kit::{
    decide_integrable, second_derivative_decomposition, DecomposedMeasure, Expr,
    IntegrabilityStatus, LocalBehavior, Mass, QuadOptions, ScPart, SmoothPiece1D,
};

/// The state interval `J` with endpoints `alpha < beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateInterval {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_closed: bool,
    pub beta_closed: bool,
}

impl StateInterval {
    pub fn new(alpha: f64, beta: f64, alpha_closed: bool, beta_closed: bool) -> Result<Self> {
        if !(alpha < beta) || alpha.is_nan() || beta.is_nan() {
            return Err(Error::validation("interval", format!("need alpha < beta, got [{alpha}, {beta}]")));
        }
        if (alpha_closed && !alpha.is_finite()) || (beta_closed && !beta.is_finite()) {
            return Err(Error::validation("interval", "an infinite endpoint cannot be closed"));
        }
        Ok(Self { alpha, beta, alpha_closed, beta_closed })
    }

    pub fn real_line() -> Self {
        Self { alpha: f64::NEG_INFINITY, beta: f64::INFINITY, alpha_closed: false, beta_closed: false }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x > self.alpha || (self.alpha_closed && x == self.alpha))
            && (x < self.beta || (self.beta_closed && x == self.beta))
    }

    pub fn endpoint(&self, e: Endpoint) -> (f64, bool) {
        match e {
            Endpoint::Left => (self.alpha, self.alpha_closed),
            Endpoint::Right => (self.beta, self.beta_closed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Left,
    Right,
}

impl Endpoint {
    pub fn name(self) -> &'static str {
        match self {
            Endpoint::Left => "left",
            Endpoint::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Inaccessible,
    Absorbing,
    Reflecting,
}

/// Behavior at an endpoint; `stickiness` is the speed atom of a reflecting boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBehavior {
    pub kind: BoundaryKind,
    pub stickiness: f64,
}

impl BoundaryBehavior {
    pub fn inaccessible() -> Self {
        Self { kind: BoundaryKind::Inaccessible, stickiness: 0.0 }
    }
}

/// Component of the zero set `{q' = 0}` in natural coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZeroSetComponent {
    Point { at: f64 },
    Interval { lo: f64, hi: f64 },
    /// A closed nowhere-dense set of positive measure, covered by `intervals`
    /// (an approximant); `measure` is its Lebesgue measure (or a lower bound).
    FatSet { intervals: Vec<[f64; 2]>, measure: f64 },
}

impl ZeroSetComponent {
    pub fn lebesgue_measure(&self) -> f64 {
        match self {
            ZeroSetComponent::Point { .. } => 0.0,
            ZeroSetComponent::Interval { lo, hi } => hi - lo,
            ZeroSetComponent::FatSet { measure, .. } => *measure,
        }
    }

    fn contains(&self, u: f64) -> bool {
        match self {
            ZeroSetComponent::Point { at } => u == *at,
            ZeroSetComponent::Interval { lo, hi } => u >= *lo && u <= *hi,
            ZeroSetComponent::FatSet { intervals, .. } => {
                let k = intervals.partition_point(|iv| iv[1] < u);
                k < intervals.len() && intervals[k][0] <= u
            }
        }
    }

    /// Intervals of positive length on which `q' = 0` is allowed.
    pub fn flats(&self) -> Vec<(f64, f64)> {
        match self {
            ZeroSetComponent::Point { .. } => Vec::new(),
            ZeroSetComponent::Interval { lo, hi } => vec![(*lo, *hi)],
            ZeroSetComponent::FatSet { intervals, .. } => intervals.iter().map(|iv| (iv[0], iv[1])).collect(),
        }
    }

    fn endpoints(&self) -> Vec<f64> {
        match self {
            ZeroSetComponent::Point { at } => vec![*at],
            ZeroSetComponent::Interval { lo, hi } => vec![*lo, *hi],
            ZeroSetComponent::FatSet { intervals, .. } => intervals.iter().flat_map(|iv| [iv[0], iv[1]]).collect(),
        }
    }

    /// `n` points spread over the component proportionally to length.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let spans = self.flats();
        let total: f64 = spans.iter().map(|s| s.1 - s.0).sum();
        if total <= 0.0 {
            return Vec::new();
        }
        (0..n)
            .filter_map(|i| {
                let mut t = (i as f64 + 0.5) / n as f64 * total;
                for &(a, b) in &spans {
                    if t <= b - a {
                        return Some(a + t);
                    }
                    t -= b - a;
                }
                None
            })
            .collect()
    }
}

/// How the scale function is supplied.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleInput {
    /// `s` on the state interval.
    Scale(Expr),
    /// `q = s^{-1}` on the natural interval.
    InverseScale(Expr),
}

/// Speed measure in state coordinates or already in natural coordinates.
#[derive(Debug, Clone)]
pub enum SpeedInput {
    State(DecomposedMeasure),
    Natural(DecomposedMeasure),
}

/// A one-dimensional general diffusion market.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub model_id: String,
    pub interval: StateInterval,
    pub scale_input: ScaleInput,
    pub scale: Arc<SmoothPiece1D>,
    pub inverse_scale: Arc<SmoothPiece1D>,
    pub speed: SpeedInput,
    pub x0: f64,
    pub r: f64,
    pub horizon: f64,
    /// Declared kinks of `q` in natural coordinates: `(u, q'_+(u) - q'_-(u))`.
    pub kinks: Vec<(f64, f64)>,
    pub qprime_zero_set: Vec<ZeroSetComponent>,
    /// Local behavior of `φ` near singular points, in natural coordinates.
    pub phi_behaviors: Vec<LocalBehavior>,
    pub declared: [Option<BoundaryKind>; 2],
    /// Declared singular-continuous part of `q''`.
    pub qpp_sc: Option<ScPart>,
    pub tol: Tolerances,
}

impl DiffusionSpec {
    pub fn new(
        model_id: impl Into<String>,
        interval: StateInterval,
        scale: ScaleInput,
        speed: SpeedInput,
        x0: f64,
        r: f64,
        horizon: f64,
    ) -> Result<Self> {
        let (s, q) = build_scale(&interval, &scale)?;
        if !r.is_finite() {
            return Err(Error::validation("r", "interest rate must be finite"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::validation("horizon", "horizon must be positive"));
        }
        if !interval.contains(x0) {
            return Err(Error::validation("x0", format!("{x0} is not in the state interval")));
        }
        Ok(Self {
            model_id: model_id.into(),
            interval,
            scale_input: scale,
            scale: Arc::new(s),
            inverse_scale: Arc::new(q),
            speed,
            x0,
            r,
            horizon,
            kinks: Vec::new(),
            qprime_zero_set: Vec::new(),
            phi_behaviors: Vec::new(),
            declared: [None, None],
            qpp_sc: None,
            tol: Tolerances::default(),
        })
    }

    pub fn with_kinks(mut self, kinks: Vec<(f64, f64)>) -> Self {
        self.kinks = kinks;
        self
    }

    pub fn with_zero_set(mut self, zs: Vec<ZeroSetComponent>) -> Self {
        self.qprime_zero_set = zs;
        self
    }

    pub fn with_phi_behaviors(mut self, b: Vec<LocalBehavior>) -> Self {
        self.phi_behaviors = b;
        self
    }

    pub fn with_boundary(mut self, e: Endpoint, kind: BoundaryKind) -> Self {
        self.declared[e as usize] = Some(kind);
        self
    }

    pub fn with_qpp_sc(mut self, sc: ScPart) -> Self {
        self.qpp_sc = Some(sc);
        self
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_rate(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn quad(&self) -> QuadOptions {
        QuadOptions::new(self.tol.quad_rel, self.tol.quad_abs)
    }

    /// Natural interval `s(J)`.
    pub fn natural_interval(&self) -> (f64, f64) {
        self.inverse_scale.domain()
    }

    /// The same market with scale `a·s + b` (`a > 0`) and speed `m / a`.
    ///
    /// Annotations are transported to the new natural coordinates.
    pub fn with_affine_scale(&self, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::validation("scale", "affine factor must be positive"));
        }
        let scale = match &self.scale_input {
            ScaleInput::Scale(e) => ScaleInput::Scale(e.clone().scaled(a).plus(Expr::constant(b))),
            ScaleInput::InverseScale(e) => ScaleInput::InverseScale(Expr::Compose {
                outer: Box::new(e.clone()),
                // (u - b) / a, exactly zero at u = b
                inner: Box::new(Expr::identity().plus(Expr::constant(-b)).scaled(1.0 / a)),
            }),
        };
        let speed = match &self.speed {
            SpeedInput::State(m) => SpeedInput::State(m.scaled(1.0 / a)),
            SpeedInput::Natural(m) => {
                let (lo, hi) = m.support;
                let f = SmoothPiece1D::from_expr(Expr::affine(a, b), lo, hi)?;
                let g = Arc::new(f.inverse()?);
                SpeedInput::Natural(m.pushforward(&f, &g, &[])?.scaled(1.0 / a))
            }
        };
        let map = |u: f64| a * u + b;
        let mut out = DiffusionSpec::new(
            self.model_id.clone(),
            self.interval,
            scale,
            speed,
            self.x0,
            self.r,
            self.horizon,
        )?;
        out.kinks = self.kinks.iter().map(|&(u, j)| (map(u), j / a)).collect();
        out.qprime_zero_set = self
            .qprime_zero_set
            .iter()
            .map(|z| match z {
                ZeroSetComponent::Point { at } => ZeroSetComponent::Point { at: map(*at) },
                ZeroSetComponent::Interval { lo, hi } => ZeroSetComponent::Interval { lo: map(*lo), hi: map(*hi) },
                ZeroSetComponent::FatSet { intervals, measure } => ZeroSetComponent::FatSet {
                    intervals: intervals.iter().map(|iv| [map(iv[0]), map(iv[1])]).collect(),
                    measure: measure * a,
                },
            })
            .collect();
        out.phi_behaviors = self
            .phi_behaviors
            .iter()
            .map(|lb| LocalBehavior {
                point: map(lb.point),
                coefficient: lb.coefficient * a.powf(-1.0 - lb.exponent),
                ..*lb
            })
            .collect();
        out.declared = self.declared;
        out.tol = self.tol;
        Ok(out)
    }
}

fn build_scale(interval: &StateInterval, scale: &ScaleInput) -> Result<(SmoothPiece1D, SmoothPiece1D)> {
    match scale {
        ScaleInput::Scale(e) => {
            let s = SmoothPiece1D::from_expr(e.clone(), interval.alpha, interval.beta)
                .map_err(|err| Error::validation("scale", err.to_string()))?;
            let q = s.inverse().map_err(|err| Error::validation("scale", err.to_string()))?;
            Ok((s, q))
        }
        ScaleInput::InverseScale(e) => {
            let (dlo, dhi) = e.domain();
            let full = SmoothPiece1D::from_expr(e.clone(), dlo, dhi)
                .map_err(|err| Error::validation("inverse_scale", err.to_string()))?;
            let (rlo, rhi) = full.range()?;
            let end = |x: f64, d: f64, r: f64| -> Result<f64> {
                if x.is_finite() {
                    full.invert(x).map_err(|err| Error::validation("inverse_scale", err.to_string()))
                } else if x == r {
                    Ok(d)
                } else {
                    Err(Error::validation("inverse_scale", format!("range does not reach {x}")))
                }
            };
            let ulo = end(interval.alpha, dlo, rlo)?;
            let uhi = end(interval.beta, dhi, rhi)?;
            let q = SmoothPiece1D::from_expr(e.clone(), ulo, uhi)
                .map_err(|err| Error::validation("inverse_scale", err.to_string()))?;
            let s = q.inverse().map_err(|err| Error::validation("inverse_scale", err.to_string()))?;
            Ok((s, q))
        }
    }
}

/// Resolved data of one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryInfo {
    pub endpoint: Endpoint,
    /// Endpoint in state coordinates.
    pub state: f64,
    /// Endpoint in natural coordinates.
    pub image: f64,
    pub behavior: BoundaryBehavior,
}

/// Derived natural-scale data `U = s(Y)`.
#[derive(Debug, Clone)]
pub struct NaturalScaleView {
    pub interval: (f64, f64),
    pub s: Arc<SmoothPiece1D>,
    pub q: Arc<SmoothPiece1D>,
    pub qpp: DecomposedMeasure,
    pub qpp_sc: Option<ScPart>,
    pub m_u: DecomposedMeasure,
    pub r: f64,
    pub u0: f64,
    pub boundaries: [BoundaryInfo; 2],
    pub zero_set: Vec<ZeroSetComponent>,
    pub phi_behaviors: Vec<LocalBehavior>,
    /// Points where `φ`, `q'` or the speed density may be irregular.
    pub hints: Vec<f64>,
    pub tol: Tolerances,
}

impl NaturalScaleView {
    pub fn quad(&self) -> QuadOptions {
        QuadOptions::new(self.tol.quad_rel, self.tol.quad_abs)
    }

    pub fn boundary(&self, e: Endpoint) -> &BoundaryInfo {
        &self.boundaries[e as usize]
    }

    pub fn is_boundary_image(&self, u: f64) -> bool {
        self.boundaries.iter().any(|b| b.image == u && b.behavior.kind != BoundaryKind::Inaccessible)
    }

    pub fn in_zero_set(&self, u: f64) -> bool {
        self.zero_set.iter().any(|z| z.contains(u))
    }

    /// `½ q''(u) - r q(u) mU_ac(u)`, the common numerator of `φ` and `γ`.
    fn numerator(&self, u: f64) -> Result<(f64, f64)> {
        let j = self.q.jet(u)?;
        let num = 0.5 * j.d2 - self.r * j.value * self.m_u.ac_density(u);
        Ok((num, j.d_plus))
    }

    /// `φ = (½q'' - r q mU_ac) / q'` on `{q' ≠ 0}`, zero elsewhere.
    pub fn phi(&self, u: f64) -> f64 {
        if self.in_zero_set(u) || self.is_boundary_image(u) {
            return 0.0;
        }
        match self.numerator(u) {
            Ok((_, 0.0)) => 0.0,
            Ok((num, d)) => num / d,
            Err(_) => f64::NAN,
        }
    }

    /// `γ = (½q'' - r q mU_ac) / q'^2` on `{q' ≠ 0}`; zero at boundary images.
    pub fn gamma(&self, u: f64) -> f64 {
        if self.in_zero_set(u) || self.is_boundary_image(u) {
            return 0.0;
        }
        match self.numerator(u) {
            Ok((_, 0.0)) => 0.0,
            Ok((num, d)) => num / (d * d),
            Err(_) => f64::NAN,
        }
    }

    /// Fixed boundary collar length `min(1, |s(J°)|/4)`.
    pub fn collar(&self) -> f64 {
        let w = self.interval.1 - self.interval.0;
        if w.is_finite() {
            (w / 4.0).min(1.0)
        } else {
            1.0
        }
    }

    /// Window `[u_b, u_b + collar]` (or mirrored) adjacent to a finite boundary image.
    pub fn collar_window(&self, e: Endpoint) -> (f64, f64) {
        let b = self.boundary(e).image;
        match e {
            Endpoint::Left => (b, b + self.collar()),
            Endpoint::Right => (b - self.collar(), b),
        }
    }

    /// A compact part of the interior holding all the interesting points.
    pub fn core(&self) -> (f64, f64) {
        let (lo, hi) = self.interval;
        let inner = 1e-3 * self.collar();
        let finite: Vec<f64> = self.hints.iter().copied().chain([self.u0]).filter(|x| x.is_finite()).collect();
        let min = finite.iter().copied().fold(self.u0, f64::min);
        let max = finite.iter().copied().fold(self.u0, f64::max);
        let a = if lo.is_finite() { lo + inner } else { min - 10.0 };
        let b = if hi.is_finite() { hi - inner } else { max + 10.0 };
        (a, b)
    }
}

/// Build the natural-scale view, classifying both boundaries.
pub fn derive_natural_scale(spec: &DiffusionSpec) -> Result<NaturalScaleView> {
    let tol = spec.tol;
    let quad = spec.quad();
    let q = spec.inverse_scale.clone();
    let s = spec.scale.clone();
    let (ulo, uhi) = q.domain();
    let mut zero_set = spec.qprime_zero_set.clone();
    for c in q.critical_points() {
        if c > ulo && c < uhi && q.d_plus(c)? == 0.0 && !zero_set.iter().any(|z| z.contains(c)) {
            zero_set.push(ZeroSetComponent::Point { at: c });
        }
    }
    for z in &mut zero_set {
        if let ZeroSetComponent::FatSet { intervals, .. } = z {
            intervals.sort_by(|a, b| a[0].total_cmp(&b[0]));
        }
    }
    let flats: Vec<(f64, f64)> = zero_set.iter().flat_map(|z| z.flats()).collect();
    q.check_strictly_increasing(2048, &flats)
        .map_err(|e| Error::validation("scale", e.to_string()))?;

    let m_u = match &spec.speed {
        SpeedInput::State(m) => {
            if m.support != (spec.interval.alpha, spec.interval.beta) {
                return Err(Error::validation("speed", "support must be the state interval"));
            }
            m.pushforward(&s, &q, &flats).map_err(|e| Error::validation("speed", e.to_string()))?
        }
        SpeedInput::Natural(m) => {
            let mut m = m.clone();
            m.support = (ulo, uhi);
            m
        }
    };
    validate_speed(&m_u, (ulo, uhi), &spec.interval)?;
    let qpp = second_derivative_decomposition(&q, &spec.kinks, tol.equality_rel)
        .map_err(|e| Error::validation("kinks", e.to_string()))?;

    let u0 = s.value(spec.x0)?;
    let mut hints: Vec<f64> = q.critical_points();
    hints.extend(m_u.atoms.iter().map(|a| a.point));
    hints.extend(m_u.ac_breaks().iter().copied());
    hints.extend(qpp.atoms.iter().map(|a| a.point));
    hints.extend(spec.kinks.iter().map(|k| k.0));
    hints.extend(zero_set.iter().flat_map(|z| z.endpoints()));
    hints.extend(spec.phi_behaviors.iter().map(|b| b.point));
    hints.retain(|x| x.is_finite() && *x >= ulo && *x <= uhi);
    hints.sort_by(f64::total_cmp);
    hints.dedup();

    let placeholder = BoundaryInfo {
        endpoint: Endpoint::Left,
        state: spec.interval.alpha,
        image: ulo,
        behavior: BoundaryBehavior::inaccessible(),
    };
    let mut view = NaturalScaleView {
        interval: (ulo, uhi),
        s,
        q,
        qpp,
        qpp_sc: spec.qpp_sc.clone(),
        m_u,
        r: spec.r,
        u0,
        boundaries: [placeholder, BoundaryInfo { endpoint: Endpoint::Right, state: spec.interval.beta, image: uhi, ..placeholder }],
        zero_set,
        phi_behaviors: spec.phi_behaviors.clone(),
        hints,
        tol,
    };
    for e in [Endpoint::Left, Endpoint::Right] {
        let behavior = boundary_behavior(&view, spec, e, quad)?;
        view.boundaries[e as usize].behavior = behavior;
    }
    for e in [Endpoint::Left, Endpoint::Right] {
        let b = view.boundaries[e as usize];
        if spec.x0 == b.state && b.behavior.kind == BoundaryKind::Absorbing {
            return Err(Error::validation("x0", "starting value absorbing"));
        }
    }
    Ok(view)
}

fn validate_speed(m: &DecomposedMeasure, support: (f64, f64), j: &StateInterval) -> Result<()> {
    for a in &m.atoms {
        match a.mass {
            Mass::Finite(v) if v > 0.0 => {}
            Mass::Finite(v) => return Err(Error::validation("speed", format!("atom mass {v} at {} is not positive", a.point))),
            Mass::Infinite => {
                let at_closed = (a.point == support.0 && j.alpha_closed) || (a.point == support.1 && j.beta_closed);
                if !at_closed {
                    return Err(Error::validation(
                        "speed",
                        "infinite atoms are only allowed at closed boundary points",
                    ));
                }
            }
        }
    }
    let (lo, hi) = support;
    let a = if lo.is_finite() { lo } else { hi.min(0.0) - 50.0 };
    let b = if hi.is_finite() { hi } else { lo.max(0.0) + 50.0 };
    if !m.ac_is_zero() {
        for i in 1..256 {
            let u = a + (b - a) * i as f64 / 256.0;
            let d = m.ac_density(u);
            if !(d >= 0.0) {
                return Err(Error::validation("speed", format!("density {d} at natural point {u}")));
            }
        }
    }
    Ok(())
}

fn boundary_behavior(
    view: &NaturalScaleView,
    spec: &DiffusionSpec,
    e: Endpoint,
    quad: QuadOptions,
) -> Result<BoundaryBehavior> {
    let (state, closed) = spec.interval.endpoint(e);
    let image = view.boundary(e).image;
    let declared = spec.declared[e as usize];
    let err = |msg: String| Error::Boundary { endpoint: e.name().into(), msg };
    let atom = view.m_u.atom_at(image, 0.0);

    let accessible = if !state.is_finite() || !image.is_finite() {
        IntegrabilityStatus::Divergent
    } else {
        let (a, b) = view.collar_window(e);
        let g = |u: f64| (u - image).abs() * view.m_u.ac_density(u);
        let hints: Vec<f64> = view.hints.iter().copied().filter(|&h| h >= a && h <= b).chain([image]).collect();
        let ac = decide_integrable(&g, (a, b), &[], &hints).status;
        // Interior atoms and sc mass on the collar are finite by construction.
        let _ = quad;
        ac
    };
    let kind = match accessible {
        IntegrabilityStatus::Finite => {
            if !closed {
                return Err(err(format!("{state} is accessible but not part of the state interval")));
            }
            if atom == Some(Mass::Infinite) {
                BoundaryKind::Absorbing
            } else {
                BoundaryKind::Reflecting
            }
        }
        IntegrabilityStatus::Divergent => {
            if closed {
                return Err(err(format!("{state} is inaccessible but the interval is closed there")));
            }
            BoundaryKind::Inaccessible
        }
        IntegrabilityStatus::Inconclusive => match declared {
            None => return Err(err("accessibility test inconclusive; declare the boundary behavior".into())),
            Some(d) => {
                let consistent = match d {
                    BoundaryKind::Inaccessible => !closed,
                    BoundaryKind::Absorbing => closed && atom == Some(Mass::Infinite),
                    BoundaryKind::Reflecting => closed && atom != Some(Mass::Infinite),
                };
                if !consistent {
                    return Err(err(format!("declared {d:?} is inconsistent with the interval and speed atoms")));
                }
                d
            }
        },
    };
    if let Some(d) = declared {
        if d != kind {
            return Err(err(format!("declared {d:?} but the model is {kind:?}")));
        }
    }
    let stickiness = match (kind, atom) {
        (BoundaryKind::Reflecting, Some(Mass::Finite(m))) => m,
        _ => 0.0,
    };
    Ok(BoundaryBehavior { kind, stickiness })
}

/// Classify one endpoint of the model.
pub fn classify_boundary(spec: &DiffusionSpec, e: Endpoint) -> Result<BoundaryBehavior> {
    Ok(derive_natural_scale(spec)?.boundary(e).behavior)
}

/// Outcome of the semimartingale standing-assumption check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemimartingaleReport {
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Check that `q` is a difference of convex functions with the boundary integrability required for `S`.
pub fn check_semimartingale_assumption(view: &NaturalScaleView) -> SemimartingaleReport {
    let mut notes = Vec::new();
    let mut pass = true;
    let (a, b) = view.core();
    let interior: Vec<f64> = view.hints.iter().copied().filter(|&h| h > view.interval.0 && h < view.interval.1).collect();
    for &c in &interior {
        match view.q.jet(c) {
            Ok(j) if j.d_plus.is_finite() && j.d_minus.is_finite() => {}
            _ => {
                pass = false;
                notes.push(format!("one-sided derivative of the inverse scale is not finite at {c}"));
            }
        }
    }
    if pass {
        let f = |u: f64| view.q.d_plus(u);
        let crit: Vec<f64> = interior.iter().copied().filter(|&h| h > a && h < b).collect();
        match (total_variation(&f, a, b, 512, &crit), total_variation(&f, a, b, 2048, &crit)) {
            (Ok(t1), Ok(t4)) if t1.is_finite() && t4.is_finite() && t4 <= 1.5 * t1 + 1e-9 => {}
            (Ok(t1), Ok(t4)) => {
                pass = false;
                notes.push(format!("variation of q'_+ on [{a}, {b}] is unstable under refinement ({t1} vs {t4})"));
            }
            _ => {
                pass = false;
                notes.push("q'_+ could not be evaluated on the core window".into());
            }
        }
    }
    for bd in &view.boundaries {
        let weight = match bd.behavior.kind {
            BoundaryKind::Inaccessible => continue,
            BoundaryKind::Absorbing => 1.0,
            BoundaryKind::Reflecting => 0.0,
        };
        let (lo, hi) = view.collar_window(bd.endpoint);
        let image = bd.image;
        let g = |u: f64| (u - image).abs().powf(weight) * view.qpp.ac_density(u).abs();
        let hints: Vec<f64> = view.hints.iter().copied().filter(|&h| h >= lo && h <= hi).chain([image]).collect();
        match decide_integrable(&g, (lo, hi), &[], &hints).status {
            IntegrabilityStatus::Finite => {}
            IntegrabilityStatus::Divergent => {
                pass = false;
                notes.push(format!("|q''| is not integrable near the {} boundary", bd.endpoint.name()));
            }
            IntegrabilityStatus::Inconclusive => {
                notes.push(format!("integrability of |q''| near the {} boundary is inconclusive", bd.endpoint.name()))
            }
        }
    }
    SemimartingaleReport { pass, notes }
}

/// Reflection coefficient of the discounted price at a reflecting boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryTerm {
    pub endpoint: Endpoint,
    /// `±½ q'_±(s(b))`, the coefficient against the boundary local time.
    pub local_time_coefficient: f64,
    /// `r · b · mU({s(b)})`.
    pub sticky_drift: f64,
}

impl BoundaryTerm {
    /// Net drift per unit of boundary local time; zero iff the boundary admits an IMPR.
    pub fn net(&self) -> f64 {
        self.local_time_coefficient - self.sticky_drift
    }
}

/// Pieces of the decomposition `dS = dM + dA` in natural coordinates.
pub struct DecompositionFields {
    /// `[q'_+(u)]^2`, the factor of `d<U,U>` in `d<M,M>`.
    pub qv_factor: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `½ q''(du) - r q(u) mU(du)` on the interior.
    pub drift_measure: DecomposedMeasure,
    pub boundary_terms: Vec<BoundaryTerm>,
}

pub fn semimartingale_decomposition_fields(view: &NaturalScaleView) -> Result<DecompositionFields> {
    let q = view.q.clone();
    let q2 = view.q.clone();
    let qpp_ac = view.qpp.ac_handle();
    let qpp_zero = view.qpp.ac_is_zero();
    let m = view.m_u.clone();
    let r = view.r;
    let mut breaks: Vec<f64> = view.hints.clone();
    breaks.extend(view.m_u.ac_breaks().iter().copied());
    let mut drift = DecomposedMeasure::new(
        view.interval,
        Arc::new(move |u| {
            let a = if qpp_zero { 0.0 } else { 0.5 * qpp_ac(u) };
            let b = if r == 0.0 { 0.0 } else { r * q2.value(u).unwrap_or(f64::NAN) * m.ac_density(u) };
            a - b
        }),
        breaks,
    );
    let mut points: Vec<f64> = view.qpp.atoms.iter().chain(view.m_u.atoms.iter()).map(|a| a.point).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    for u in points {
        if view.boundaries.iter().any(|b| b.image == u) {
            continue;
        }
        let half_qpp = view.qpp.atom_at(u, 0.0).map_or(0.0, |m| 0.5 * m.as_f64());
        let speed = view.m_u.atom_at(u, 0.0).map_or(0.0, |m| m.as_f64());
        let mass = half_qpp - r * q.value(u)? * speed;
        if mass != 0.0 {
            drift = drift.with_atom(u, Mass::Finite(mass))?;
        }
    }
    let boundary_terms = view
        .boundaries
        .iter()
        .filter(|b| b.behavior.kind == BoundaryKind::Reflecting)
        .map(|b| {
            let j = q.jet(b.image)?;
            let coefficient = match b.endpoint {
                Endpoint::Left => 0.5 * j.d_plus,
                Endpoint::Right => -0.5 * j.d_minus,
            };
            Ok(BoundaryTerm {
                endpoint: b.endpoint,
                local_time_coefficient: coefficient,
                sticky_drift: r * b.state * b.behavior.stickiness,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let qv: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(move |u| {
        let d = q.d_plus(u).unwrap_or(f64::NAN);
        d * d
    });
    Ok(DecompositionFields { qv_factor: qv, drift_measure: drift, boundary_terms })
}

/// Largest `|q''_ac|` over samples of the declared zero set of `q'`.
///
/// For a difference of convex functions `q'' 1{q' = 0} = 0` a.e., so this
/// should vanish up to rounding.
pub fn zero_set_second_derivative(view: &NaturalScaleView, samples: usize) -> f64 {
    view.zero_set
        .iter()
        .flat_map(|z| z.sample(samples))
        .map(|u| view.qpp.ac_density(u).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(r: f64) -> DiffusionSpec {
        DiffusionSpec::new(
            "bm",
            StateInterval::real_line(),
            ScaleInput::Scale(Expr::identity()),
            SpeedInput::State(DecomposedMeasure::lebesgue((f64::NEG_INFINITY, f64::INFINITY))),
            0.0,
            r,
            1.0,
        )
        .unwrap()
    }

    fn sticky_reflected(r: f64, rho: f64) -> DiffusionSpec {
        let j = StateInterval::new(1.0, f64::INFINITY, true, false).unwrap();
        let mut m = DecomposedMeasure::lebesgue((1.0, f64::INFINITY));
        if rho > 0.0 {
            m = m.with_atom(1.0, Mass::Finite(rho)).unwrap();
        }
        DiffusionSpec::new("srbm", j, ScaleInput::Scale(Expr::identity()), SpeedInput::State(m), 1.5, r, 1.0).unwrap()
    }

    #[test]
    fn bm_view_is_flat() {
        let v = derive_natural_scale(&bm(0.0)).unwrap();
        assert_eq!(v.phi(0.7), 0.0);
        assert_eq!(v.gamma(-2.0), 0.0);
        assert_eq!(v.boundary(Endpoint::Left).behavior.kind, BoundaryKind::Inaccessible);
        assert_eq!(v.boundary(Endpoint::Right).behavior.kind, BoundaryKind::Inaccessible);
        let f = semimartingale_decomposition_fields(&v).unwrap();
        assert_eq!((f.qv_factor)(3.0), 1.0);
        assert_eq!(f.drift_measure.ac_density(1.0), 0.0);
        assert!(f.boundary_terms.is_empty());
    }

    #[test]
    fn bm_with_rate_has_linear_phi() {
        let v = derive_natural_scale(&bm(0.3)).unwrap();
        assert!((v.phi(2.0) + 0.6).abs() < 1e-15);
    }

    #[test]
    fn sticky_reflected_boundary() {
        let v = derive_natural_scale(&sticky_reflected(0.5, 1.0)).unwrap();
        let b = v.boundary(Endpoint::Left).behavior;
        assert_eq!(b.kind, BoundaryKind::Reflecting);
        assert_eq!(b.stickiness, 1.0);
        let f = semimartingale_decomposition_fields(&v).unwrap();
        assert_eq!(f.boundary_terms.len(), 1);
        // ½ - r·1·ρ = 0 when 2rρ = 1
        assert!(f.boundary_terms[0].net().abs() < 1e-15);
        let f = semimartingale_decomposition_fields(&derive_natural_scale(&sticky_reflected(0.5, 0.9)).unwrap()).unwrap();
        assert!((f.boundary_terms[0].net() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn cube_passes_semimartingale_check() {
        let spec = DiffusionSpec::new(
            "w3",
            StateInterval::real_line(),
            ScaleInput::InverseScale(Expr::power_signed(0.0, 3.0)),
            SpeedInput::Natural(DecomposedMeasure::lebesgue((f64::NEG_INFINITY, f64::INFINITY))),
            1.0,
            0.0,
            1.0,
        )
        .unwrap();
        let v = derive_natural_scale(&spec).unwrap();
        assert!(check_semimartingale_assumption(&v).pass);
        // φ = 1/u away from 0, and the zero set {0} is picked up automatically
        assert!((v.phi(0.5) - 2.0).abs() < 1e-12);
        assert!(v.in_zero_set(0.0));
        assert_eq!(zero_set_second_derivative(&v, 100), 0.0);
    }

    #[test]
    fn square_root_of_bm_is_not_a_semimartingale() {
        // s(x) = sign(x) x^2, so q(u) = sign(u) |u|^{1/2}
        let spec = DiffusionSpec::new(
            "sqrt",
            StateInterval::real_line(),
            ScaleInput::Scale(Expr::power_signed(0.0, 2.0)),
            SpeedInput::Natural(DecomposedMeasure::lebesgue((f64::NEG_INFINITY, f64::INFINITY))),
            1.0,
            0.0,
            1.0,
        )
        .unwrap();
        let v = derive_natural_scale(&spec).unwrap();
        assert!(!check_semimartingale_assumption(&v).pass);
    }

    #[test]
    fn affine_q_passes() {
        let spec = DiffusionSpec::new(
            "aff",
            StateInterval::real_line(),
            ScaleInput::InverseScale(Expr::affine(2.0, 1.0)),
            SpeedInput::Natural(DecomposedMeasure::lebesgue((f64::NEG_INFINITY, f64::INFINITY))),
            0.0,
            0.0,
            1.0,
        )
        .unwrap();
        let v = derive_natural_scale(&spec).unwrap();
        assert!(check_semimartingale_assumption(&v).pass);
    }

    #[test]
    fn absorbing_start_is_rejected() {
        let j = StateInterval::new(0.0, f64::INFINITY, true, false).unwrap();
        let m = DecomposedMeasure::lebesgue((0.0, f64::INFINITY)).with_atom(0.0, Mass::Infinite).unwrap();
        let spec = DiffusionSpec::new("abs", j, ScaleInput::Scale(Expr::identity()), SpeedInput::State(m), 0.0, 0.0, 1.0)
            .unwrap();
        match derive_natural_scale(&spec) {
            Err(Error::Validation { field, msg }) => {
                assert_eq!(field, "x0");
                assert!(msg.contains("starting value absorbing"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn open_accessible_endpoint_is_an_error() {
        let j = StateInterval::new(0.0, f64::INFINITY, false, false).unwrap();
        let m = DecomposedMeasure::lebesgue((0.0, f64::INFINITY));
        let spec = DiffusionSpec::new("open", j, ScaleInput::Scale(Expr::identity()), SpeedInput::State(m), 1.0, 0.0, 1.0)
            .unwrap();
        assert!(matches!(derive_natural_scale(&spec), Err(Error::Boundary { .. })));
    }

    #[test]
    fn declaration_conflict_is_an_error() {
        let spec = sticky_reflected(0.0, 0.0).with_boundary(Endpoint::Left, BoundaryKind::Absorbing);
        assert!(matches!(derive_natural_scale(&spec), Err(Error::Boundary { .. })));
        let ok = sticky_reflected(0.0, 0.0).with_boundary(Endpoint::Left, BoundaryKind::Reflecting);
        assert!(derive_natural_scale(&ok).is_ok());
    }

    #[test]
    fn skew_kink_drift_atom() {
        // q'_+ = 1/(1-κ) above 0 and 1/κ below, r = 0: drift atom ½(2κ-1)/((1-κ)κ)
        let k = 0.75;
        let q = Expr::Piecewise {
            breakpoints: vec![0.0],
            pieces: vec![Expr::affine(1.0 / k, 0.0), Expr::affine(1.0 / (1.0 - k), 0.0)],
        };
        let spec = DiffusionSpec::new(
            "skew",
            StateInterval::real_line(),
            ScaleInput::InverseScale(q),
            SpeedInput::Natural(DecomposedMeasure::lebesgue((f64::NEG_INFINITY, f64::INFINITY))),
            0.0,
            0.0,
            1.0,
        )
        .unwrap();
        let v = derive_natural_scale(&spec).unwrap();
        let f = semimartingale_decomposition_fields(&v).unwrap();
        let expected = 0.5 * (2.0 * k - 1.0) / ((1.0 - k) * k);
        assert_eq!(f.drift_measure.atoms.len(), 1);
        assert!((f.drift_measure.atoms[0].mass.as_f64() - expected).abs() < 1e-12);
    }

    #[test]
    fn ito_consistency_on_polynomial() {
        // q(u) = u^3 + u, r = 0: drift density ½ q'' = 3u
        let q = Expr::Sum { terms: vec![Expr::power_signed(0.0, 3.0), Expr::identity()] };
        let spec = DiffusionSpec::new(
            "poly",
            StateInterval::real_line(),
            ScaleInput::InverseScale(q),
            SpeedInput::Natural(DecomposedMeasure::lebesgue((f64::NEG_INFINITY, f64::INFINITY))),
            0.0,
            0.0,
            1.0,
        )
        .unwrap();
        let v = derive_natural_scale(&spec).unwrap();
        let f = semimartingale_decomposition_fields(&v).unwrap();
        for u in [-1.5, -0.2, 0.4, 2.0] {
            assert!((f.drift_measure.ac_density(u) - 3.0 * u).abs() < 1e-12);
            assert!(((f.qv_factor)(u) - (3.0 * u * u + 1.0).powi(2)).abs() < 1e-9);
        }
    }
}
