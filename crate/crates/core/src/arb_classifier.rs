//! Verdicts for NIP, NSA and NUPBR from the diffusion characteristics.

use serde::{Deserialize, Serialize};

use crate::diffusion_model::{
    check_semimartingale_assumption, derive_natural_scale, BoundaryInfo, BoundaryKind, DiffusionSpec,
    Endpoint, NaturalScaleView, ZeroSetComponent,
};
use crate::error::{Error, Result};
use crate::measure_kit::{
    decide_l2_local, decide_weighted_l2_boundary, IntegrabilityStatus, IntegrabilityVerdict, Mass, ScPart,
};

/// Tri-state verdict of a no-arbitrage notion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    Fails,
    Inconclusive,
}

impl Status {
    /// Conjunction where a failure dominates an inconclusive part.
    pub fn and(self, other: Status) -> Status {
        use Status::*;
        match (self, other) {
            (Fails, _) | (_, Fails) => Fails,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Holds,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Status::Holds => '✓',
            Status::Fails => '✗',
            Status::Inconclusive => '?',
        }
    }
}

/// Outcome of one sub-condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl CheckStatus {
    fn worst(self, other: CheckStatus) -> CheckStatus {
        use CheckStatus::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    fn as_status(self) -> Status {
        match self {
            CheckStatus::Pass => Status::Holds,
            CheckStatus::Fail => Status::Fails,
            CheckStatus::Inconclusive => Status::Inconclusive,
        }
    }

    fn from_integrability(s: IntegrabilityStatus) -> CheckStatus {
        match s {
            IntegrabilityStatus::Finite => CheckStatus::Pass,
            IntegrabilityStatus::Divergent => CheckStatus::Fail,
            IntegrabilityStatus::Inconclusive => CheckStatus::Inconclusive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionId {
    #[serde(rename = "NIP.i.a")]
    NipIa,
    #[serde(rename = "NIP.i.b")]
    NipIb,
    #[serde(rename = "NIP.ii")]
    NipIi,
    #[serde(rename = "NIP.iii")]
    NipIii,
    #[serde(rename = "NSA.iv.loc")]
    NsaIvLoc,
    #[serde(rename = "NSA.iv.refl")]
    NsaIvRefl,
    #[serde(rename = "NUPBR.v")]
    NupbrV,
    #[serde(rename = "RP")]
    Rp,
}

impl ConditionId {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::NipIa => "NIP.i.a",
            ConditionId::NipIb => "NIP.i.b",
            ConditionId::NipIi => "NIP.ii",
            ConditionId::NipIii => "NIP.iii",
            ConditionId::NsaIvLoc => "NSA.iv.loc",
            ConditionId::NsaIvRefl => "NSA.iv.refl",
            ConditionId::NupbrV => "NUPBR.v",
            ConditionId::Rp => "RP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub id: ConditionId,
    pub status: CheckStatus,
    /// Largest discrepancy of the tested identity, when one was tested.
    pub residual: Option<f64>,
    pub note: String,
}

impl ConditionReport {
    fn new(id: ConditionId, status: CheckStatus, residual: Option<f64>, note: impl Into<String>) -> Self {
        let residual = residual.filter(|r| r.is_finite());
        Self { id, status, residual, note: note.into() }
    }

    fn vacuous(id: ConditionId, what: &str) -> Self {
        Self::new(id, CheckStatus::Pass, None, format!("vacuous: {what}"))
    }
}

/// Sampled density of an immediate-profit strategy, `γ` on natural coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprDescription {
    pub formula: String,
    /// `(u, γ(u))` pairs on the core window.
    pub table: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub model_id: String,
    pub r: f64,
    pub nip: Status,
    pub nsa: Status,
    pub nupbr: Status,
    pub rp: Status,
    pub reports: Vec<ConditionReport>,
    pub impr: Option<ImprDescription>,
    pub boundaries: Vec<BoundaryInfo>,
    pub notes: Vec<String>,
}

impl Verdict {
    /// `(nip, nsa, nupbr)`.
    pub fn triple(&self) -> (Status, Status, Status) {
        (self.nip, self.nsa, self.nupbr)
    }

    pub fn report(&self, id: ConditionId) -> Option<&ConditionReport> {
        self.reports.iter().find(|r| r.id == id)
    }

    pub fn symbols(&self) -> String {
        [self.nip, self.nsa, self.nupbr].iter().map(|s| s.symbol()).collect()
    }

    /// Plain-text summary, one condition per line.
    pub fn render(&self) -> String {
        let mut s = format!(
            "model: {}\nr: {}\nNIP {}  NSA {}  NUPBR {}  RP {}\n",
            self.model_id,
            self.r,
            self.nip.symbol(),
            self.nsa.symbol(),
            self.nupbr.symbol(),
            self.rp.symbol()
        );
        for b in &self.boundaries {
            s += &format!("boundary {}: {:?} at {} (natural {})\n", b.endpoint.name(), b.behavior.kind, b.state, b.image);
        }
        for r in &self.reports {
            s += &format!("  {:<12} {:<12} {}\n", r.id.as_str(), format!("{:?}", r.status), r.note);
        }
        if let Some(impr) = &self.impr {
            s += &format!("gamma: {}\n", impr.formula);
        }
        for n in &self.notes {
            s += &format!("note: {n}\n");
        }
        s
    }
}

fn status_of(reports: &[ConditionReport]) -> Status {
    reports.iter().fold(CheckStatus::Pass, |acc, r| acc.worst(r.status)).as_status()
}

fn boundaries_of(view: &NaturalScaleView, kind: BoundaryKind) -> impl Iterator<Item = &BoundaryInfo> {
    view.boundaries.iter().filter(move |b| b.behavior.kind == kind)
}

fn reflecting_target(view: &NaturalScaleView, b: &BoundaryInfo) -> Result<f64> {
    let j = view.q.jet(b.image)?;
    Ok(match b.endpoint {
        Endpoint::Left => 0.5 * j.d_plus,
        Endpoint::Right => -0.5 * j.d_minus,
    })
}

fn check_absorbing(view: &NaturalScaleView) -> ConditionReport {
    let absorbing: Vec<_> = boundaries_of(view, BoundaryKind::Absorbing).collect();
    if absorbing.is_empty() {
        return ConditionReport::vacuous(ConditionId::NipIa, "no absorbing boundary");
    }
    let mut status = CheckStatus::Pass;
    let mut notes = Vec::new();
    for b in absorbing {
        let ok = view.r == 0.0 || b.state == 0.0;
        if !ok {
            status = CheckStatus::Fail;
        }
        notes.push(format!(
            "{} boundary {} absorbing with r = {}: {}",
            b.endpoint.name(),
            b.state,
            view.r,
            if ok { "ok" } else { "needs r = 0 or b = 0" }
        ));
    }
    ConditionReport::new(ConditionId::NipIa, status, None, notes.join("; "))
}

fn check_reflecting(view: &NaturalScaleView) -> ConditionReport {
    let reflecting: Vec<_> = boundaries_of(view, BoundaryKind::Reflecting).collect();
    if reflecting.is_empty() {
        return ConditionReport::vacuous(ConditionId::NipIb, "no reflecting boundary");
    }
    let mut status = CheckStatus::Pass;
    let mut residual: f64 = 0.0;
    let mut notes = Vec::new();
    for b in reflecting {
        let lhs = view.r * b.state * b.behavior.stickiness;
        match reflecting_target(view, b) {
            Ok(rhs) => {
                let ok = rhs.is_finite() && view.tol.approx_eq(lhs, rhs);
                if !ok {
                    status = CheckStatus::Fail;
                }
                residual = residual.max((lhs - rhs).abs());
                notes.push(format!("{}: r·b·mU = {lhs}, one-sided slope term = {rhs}", b.endpoint.name()));
            }
            Err(e) => {
                status = status.worst(CheckStatus::Inconclusive);
                notes.push(format!("{}: {e}", b.endpoint.name()));
            }
        }
    }
    ConditionReport::new(ConditionId::NipIb, status, Some(residual), notes.join("; "))
}

fn interior(view: &NaturalScaleView, u: f64) -> bool {
    u > view.interval.0 && u < view.interval.1
}

fn check_singular(view: &NaturalScaleView) -> ConditionReport {
    let tol = view.tol;
    let r = view.r;
    let mut points: Vec<f64> = view
        .m_u
        .atoms
        .iter()
        .chain(view.qpp.atoms.iter())
        .map(|a| a.point)
        .filter(|&u| interior(view, u))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() <= tol.atom_location);

    let mut status = CheckStatus::Pass;
    let mut residual: f64 = 0.0;
    let mut notes = Vec::new();
    for u in &points {
        let speed = view.m_u.atom_at(*u, tol.atom_location).map_or(0.0, Mass::as_f64);
        let kink = view.qpp.atom_at(*u, tol.atom_location).map_or(0.0, Mass::as_f64);
        let lhs = if r == 0.0 || speed == 0.0 {
            0.0
        } else {
            match view.q.value(*u) {
                Ok(q) => r * q * speed,
                Err(_) => f64::NAN,
            }
        };
        let rhs = 0.5 * kink;
        if !view.tol.approx_eq(lhs, rhs) {
            status = CheckStatus::Fail;
            notes.push(format!("atom at {u}: r·q·mass = {lhs}, ½ jump of q' = {rhs}"));
        }
        residual = residual.max((lhs - rhs).abs());
    }
    if points.is_empty() {
        notes.push("no interior atoms".into());
    } else if status == CheckStatus::Pass {
        notes.push(format!("{} atom(s) matched", points.len()));
    }

    let (sc_status, sc_residual, sc_note) = compare_sc(view);
    status = status.worst(sc_status);
    if let Some(x) = sc_residual {
        residual = residual.max(x);
    }
    if let Some(n) = sc_note {
        notes.push(n);
    }
    ConditionReport::new(ConditionId::NipIi, status, Some(residual), notes.join("; "))
}

type Multiplier<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

/// Compare `r q mU_sc` with `½ q''_sc` through their multipliers on a shared base.
fn compare_sc(view: &NaturalScaleView) -> (CheckStatus, Option<f64>, Option<String>) {
    let speed_sc = view.m_u.sc.as_ref().filter(|_| view.r != 0.0);
    let qpp_sc = view.qpp_sc.as_ref();
    let (base, lhs_mult, rhs_mult): (&ScPart, Multiplier<'_>, Multiplier<'_>) =
        match (speed_sc, qpp_sc) {
            (None, None) => return (CheckStatus::Pass, None, None),
            (Some(m), Some(q)) if m.base_id != q.base_id => {
                return (
                    CheckStatus::Inconclusive,
                    None,
                    Some(format!("singular-continuous parts on different bases `{}` and `{}`", m.base_id, q.base_id)),
                )
            }
            (Some(m), q) => (
                m,
                Box::new(move |u| view.r * view.q.value(u).unwrap_or(f64::NAN) * (m.multiplier)(u)),
                Box::new(move |u| q.map_or(0.0, |q| 0.5 * (q.multiplier)(u))),
            ),
            (None, Some(q)) => (q, Box::new(|_| 0.0), Box::new(move |u| 0.5 * (q.multiplier)(u))),
        };
    let (lo, hi) = base.support;
    let lo = lo.max(view.interval.0);
    let hi = hi.min(view.interval.1);
    let n = view.tol.sc_samples.max(1);
    let h = (hi - lo) / (4 * n) as f64;
    let mut residual: f64 = 0.0;
    let mut status = CheckStatus::Pass;
    for i in 0..n {
        let u = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
        if (base.base_cdf)(u + h) - (base.base_cdf)(u - h) <= 0.0 {
            continue;
        }
        let (a, b) = (lhs_mult(u), rhs_mult(u));
        if !view.tol.approx_eq(a, b) {
            status = CheckStatus::Fail;
        }
        residual = residual.max((a - b).abs());
    }
    (status, Some(residual), Some(format!("singular-continuous parts compared on base `{}`", base.base_id)))
}

fn check_zero_set(view: &NaturalScaleView) -> ConditionReport {
    let sets: Vec<&ZeroSetComponent> =
        view.zero_set.iter().filter(|z| !matches!(z, ZeroSetComponent::Point { .. })).collect();
    if sets.is_empty() {
        return ConditionReport::vacuous(ConditionId::NipIii, "zero set of q' is Lebesgue-null");
    }
    let mut status = CheckStatus::Pass;
    let mut residual: f64 = 0.0;
    let mut worst = None;
    for z in sets {
        for u in z.sample(view.tol.zero_set_samples) {
            let lhs = match view.q.value(u) {
                Ok(q) => view.r * q * view.m_u.ac_density(u),
                Err(_) => f64::NAN,
            };
            let rhs = 0.5 * view.qpp.ac_density(u);
            let diff = (lhs - rhs).abs();
            if !view.tol.approx_eq(lhs, rhs) {
                status = CheckStatus::Fail;
                if worst.is_none_or(|(_, d)| diff > d) {
                    worst = Some((u, diff));
                }
            }
            residual = residual.max(diff);
        }
    }
    let note = match worst {
        Some((u, _)) => format!("r·q·mU_ac differs from ½q''_ac on the zero set, e.g. at {u}"),
        None => "identity holds on the sampled zero set".into(),
    };
    ConditionReport::new(ConditionId::NipIii, status, Some(residual), note)
}

/// NIP conditions (i)-(iii).
pub fn check_nip(view: &NaturalScaleView) -> (Status, Vec<ConditionReport>) {
    let reports = vec![check_absorbing(view), check_reflecting(view), check_singular(view), check_zero_set(view)];
    (status_of(&reports), reports)
}

/// NIP test for `r = 0`: reflecting boundaries have `q'(s(b)) = 0` and `q''` has no singular part.
pub fn check_nip_zero_rate(view: &NaturalScaleView) -> Result<(Status, Vec<ConditionReport>)> {
    if view.r != 0.0 {
        return Err(Error::NonZeroRate(view.r));
    }
    let mut refl_status = CheckStatus::Pass;
    let mut notes = Vec::new();
    let mut residual: f64 = 0.0;
    for b in boundaries_of(view, BoundaryKind::Reflecting) {
        let j = view.q.jet(b.image)?;
        let slope = match b.endpoint {
            Endpoint::Left => j.d_plus,
            Endpoint::Right => j.d_minus,
        };
        if !view.tol.approx_eq(slope, 0.0) {
            refl_status = CheckStatus::Fail;
        }
        residual = residual.max(slope.abs());
        notes.push(format!("{}: q' = {slope}", b.endpoint.name()));
    }
    let refl = if notes.is_empty() {
        ConditionReport::vacuous(ConditionId::NipIb, "no reflecting boundary")
    } else {
        ConditionReport::new(ConditionId::NipIb, refl_status, Some(residual), notes.join("; "))
    };
    let kinks: Vec<f64> = view.qpp.atoms.iter().map(|a| a.point).filter(|&u| interior(view, u)).collect();
    let si = if !kinks.is_empty() {
        ConditionReport::new(ConditionId::NipIi, CheckStatus::Fail, None, format!("q' jumps at {kinks:?}"))
    } else if view.qpp_sc.is_some() {
        ConditionReport::new(ConditionId::NipIi, CheckStatus::Fail, None, "q'' has a singular-continuous part")
    } else {
        ConditionReport::new(ConditionId::NipIi, CheckStatus::Pass, None, "q' is locally absolutely continuous")
    };
    let reports = vec![refl, si];
    Ok((status_of(&reports), reports))
}

/// Half-width of the window around an interior point, kept away from the boundary images.
fn window_around(view: &NaturalScaleView, p: f64) -> (f64, f64) {
    let mut h = 0.25 * view.collar();
    for b in [view.interval.0, view.interval.1] {
        if b.is_finite() {
            h = h.min(0.5 * (p - b).abs());
        }
    }
    (p - h, p + h)
}

fn check_l2_local(view: &NaturalScaleView) -> ConditionReport {
    let phi = |u: f64| view.phi(u);
    let mut windows: Vec<(f64, f64)> =
        view.hints.iter().copied().filter(|&p| interior(view, p)).map(|p| window_around(view, p)).collect();
    let (a, b) = view.core();
    let n = view.tol.generic_windows.max(1);
    windows.extend((0..n).map(|i| {
        let lo = a + (b - a) * i as f64 / n as f64;
        (lo, a + (b - a) * (i + 1) as f64 / n as f64)
    }));
    let mut status = CheckStatus::Pass;
    let mut note = format!("{} windows finite", windows.len());
    for w in windows {
        let hints: Vec<f64> = view.hints.iter().copied().filter(|&h| h >= w.0 && h <= w.1).collect();
        let v = decide_l2_local(&phi, w, &view.phi_behaviors, &hints);
        match v.status {
            IntegrabilityStatus::Finite => {}
            IntegrabilityStatus::Divergent => {
                note = format!("φ is not square integrable on [{}, {}] ({:?})", w.0, w.1, v.method);
                status = CheckStatus::Fail;
                break;
            }
            IntegrabilityStatus::Inconclusive => {
                status = CheckStatus::Inconclusive;
                note = format!("square integrability of φ on [{}, {}] is inconclusive", w.0, w.1);
            }
        }
    }
    ConditionReport::new(ConditionId::NsaIvLoc, status, None, note)
}

fn collar_hints(view: &NaturalScaleView, w: (f64, f64), image: f64) -> Vec<f64> {
    view.hints.iter().copied().filter(|&h| h >= w.0 && h <= w.1).chain([image]).collect()
}

fn describe(v: &IntegrabilityVerdict) -> &'static str {
    match v.status {
        IntegrabilityStatus::Finite => "finite",
        IntegrabilityStatus::Divergent => "divergent",
        IntegrabilityStatus::Inconclusive => "inconclusive",
    }
}

fn check_reflecting_collars(view: &NaturalScaleView) -> ConditionReport {
    let phi = |u: f64| view.phi(u);
    let mut status = CheckStatus::Pass;
    let mut notes = Vec::new();
    for b in boundaries_of(view, BoundaryKind::Reflecting) {
        let w = view.collar_window(b.endpoint);
        let v = decide_l2_local(&phi, w, &view.phi_behaviors, &collar_hints(view, w, b.image));
        status = status.worst(CheckStatus::from_integrability(v.status));
        notes.push(format!("{}: ∫φ² on the collar is {}", b.endpoint.name(), describe(&v)));
    }
    if notes.is_empty() {
        return ConditionReport::vacuous(ConditionId::NsaIvRefl, "no reflecting boundary");
    }
    ConditionReport::new(ConditionId::NsaIvRefl, status, None, notes.join("; "))
}

fn check_absorbing_weighted(view: &NaturalScaleView) -> ConditionReport {
    let phi = |u: f64| view.phi(u);
    let mut status = CheckStatus::Pass;
    let mut notes = Vec::new();
    for b in boundaries_of(view, BoundaryKind::Absorbing) {
        let w = view.collar_window(b.endpoint);
        let v = decide_weighted_l2_boundary(&phi, b.image, w, &view.phi_behaviors, &collar_hints(view, w, b.image));
        status = status.worst(CheckStatus::from_integrability(v.status));
        notes.push(format!("{}: ∫|u - u_b| φ² on the collar is {}", b.endpoint.name(), describe(&v)));
    }
    if notes.is_empty() {
        return ConditionReport::vacuous(ConditionId::NupbrV, "no absorbing boundary");
    }
    ConditionReport::new(ConditionId::NupbrV, status, None, notes.join("; "))
}

/// NSA: NIP together with local square integrability of `φ`.
pub fn check_nsa(view: &NaturalScaleView) -> (Status, Vec<ConditionReport>) {
    let (nip, _) = check_nip(view);
    nsa_given(view, nip)
}

fn nsa_given(view: &NaturalScaleView, nip: Status) -> (Status, Vec<ConditionReport>) {
    let reports = vec![check_l2_local(view), check_reflecting_collars(view)];
    (nip.and(status_of(&reports)), reports)
}

/// NUPBR: NSA together with the weighted integrability of `φ²` at absorbing boundaries.
pub fn check_nupbr(view: &NaturalScaleView) -> (Status, Vec<ConditionReport>) {
    let (nsa, _) = check_nsa(view);
    nupbr_given(view, nsa)
}

fn nupbr_given(view: &NaturalScaleView, nsa: Status) -> (Status, Vec<ConditionReport>) {
    let reports = vec![check_absorbing_weighted(view)];
    (nsa.and(status_of(&reports)), reports)
}

/// Regularity property: the zero set of `q'` is Lebesgue-null.
pub fn check_rp(view: &NaturalScaleView) -> Status {
    check_rp_report(view).status.as_status()
}

fn check_rp_report(view: &NaturalScaleView) -> ConditionReport {
    let measure: f64 = view.zero_set.iter().map(ZeroSetComponent::lebesgue_measure).sum();
    if measure > 0.0 {
        ConditionReport::new(ConditionId::Rp, CheckStatus::Fail, Some(measure), "zero set of q' has positive measure")
    } else {
        ConditionReport::new(ConditionId::Rp, CheckStatus::Pass, Some(0.0), "zero set of q' is Lebesgue-null")
    }
}

fn impr_table(view: &NaturalScaleView) -> ImprDescription {
    let (a, b) = view.core();
    let table = (0..=32)
        .map(|i| {
            let u = a + (b - a) * i as f64 / 32.0;
            [u, view.gamma(u)]
        })
        .filter(|p| p[1].is_finite())
        .collect();
    ImprDescription { formula: "gamma(u) = (q''(u)/2 - r q(u) mU_ac(u)) / q'(u)^2 on {q' != 0}".into(), table }
}

/// Classify a model: derive its natural scale, check the standing assumption and evaluate all notions.
pub fn classify(spec: &DiffusionSpec) -> Result<Verdict> {
    let view = derive_natural_scale(spec)?;
    let sm = check_semimartingale_assumption(&view);
    if !sm.pass {
        return Err(Error::NotSemimartingale(sm.notes.join("; ")));
    }
    Ok(classify_view(&spec.model_id, &view, sm.notes))
}

/// Classification on an already derived view.
pub fn classify_view(model_id: &str, view: &NaturalScaleView, mut notes: Vec<String>) -> Verdict {
    let (mut nip, mut reports) = check_nip(view);
    if view.r == 0.0 {
        if let Ok((fast, _)) = check_nip_zero_rate(view) {
            if fast != nip && fast != Status::Inconclusive && nip != Status::Inconclusive {
                notes.push(format!("zero-rate criterion gives {fast:?}, general criterion {nip:?}"));
                nip = Status::Inconclusive;
            }
        }
    }
    let (nsa, nsa_reports) = nsa_given(view, nip);
    let (nupbr, nupbr_reports) = nupbr_given(view, nsa);
    reports.extend(nsa_reports);
    reports.extend(nupbr_reports);
    let rp_report = check_rp_report(view);
    let rp = rp_report.status.as_status();
    reports.push(rp_report);
    let impr = (nip == Status::Holds).then(|| impr_table(view));
    Verdict {
        model_id: model_id.to_string(),
        r: view.r,
        nip,
        nsa,
        nupbr,
        rp,
        reports,
        impr,
        boundaries: view.boundaries.to_vec(),
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion_model::{ScaleInput, SpeedInput, StateInterval};
    use crate::measure_kit::{DecomposedMeasure, Expr, LocalBehavior, Side};

    fn line() -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn bm(r: f64) -> DiffusionSpec {
        DiffusionSpec::new(
            "bm",
            StateInterval::real_line(),
            ScaleInput::Scale(Expr::identity()),
            SpeedInput::State(DecomposedMeasure::lebesgue(line())),
            0.0,
            r,
            1.0,
        )
        .unwrap()
    }

    fn reflected(r: f64, rho: f64) -> DiffusionSpec {
        let j = StateInterval::new(1.0, f64::INFINITY, true, false).unwrap();
        let mut m = DecomposedMeasure::lebesgue((1.0, f64::INFINITY));
        if rho > 0.0 {
            m = m.with_atom(1.0, Mass::Finite(rho)).unwrap();
        }
        DiffusionSpec::new("srbm", j, ScaleInput::Scale(Expr::identity()), SpeedInput::State(m), 1.5, r, 1.0).unwrap()
    }

    fn cube() -> DiffusionSpec {
        DiffusionSpec::new(
            "w3",
            StateInterval::real_line(),
            ScaleInput::InverseScale(Expr::power_signed(0.0, 3.0)),
            SpeedInput::Natural(DecomposedMeasure::lebesgue(line())),
            1.0,
            0.0,
            1.0,
        )
        .unwrap()
        .with_phi_behaviors(vec![LocalBehavior::new(0.0, Side::Both, -1.0, 1.0)])
    }

    #[test]
    fn tri_state_and() {
        use Status::*;
        assert_eq!(Holds.and(Inconclusive), Inconclusive);
        assert_eq!(Inconclusive.and(Fails), Fails);
        assert_eq!(Holds.and(Holds), Holds);
    }

    #[test]
    fn bm_all_hold() {
        for r in [0.0, 0.05, -1.0] {
            let v = classify(&bm(r)).unwrap();
            assert_eq!(v.triple(), (Status::Holds, Status::Holds, Status::Holds), "r = {r}");
            assert_eq!(v.rp, Status::Holds);
            assert_eq!(v.reports.len(), 8);
        }
    }

    #[test]
    fn sticky_reflected_bm() {
        let v = classify(&reflected(0.5, 1.0)).unwrap();
        assert_eq!(v.symbols(), "✓✓✓");
        let v = classify(&reflected(0.5, 0.9)).unwrap();
        assert_eq!(v.symbols(), "✗✗✗");
        let r = v.report(ConditionId::NipIb).unwrap();
        assert!((r.residual.unwrap() - 0.05).abs() < 1e-12);
        let v = classify(&reflected(0.0, 0.0)).unwrap();
        assert_eq!(v.nip, Status::Fails);
    }

    #[test]
    fn mirrored_sticky_reflection() {
        // Y' = -Y on (-∞, -1] with a sticky point at -1: same condition 2rρ = 1
        let j = StateInterval::new(f64::NEG_INFINITY, -1.0, false, true).unwrap();
        let m = DecomposedMeasure::lebesgue((f64::NEG_INFINITY, -1.0)).with_atom(-1.0, Mass::Finite(1.0)).unwrap();
        let spec = DiffusionSpec::new("m", j, ScaleInput::Scale(Expr::identity()), SpeedInput::State(m), -1.5, 0.5, 1.0)
            .unwrap();
        assert_eq!(classify(&spec).unwrap().symbols(), "✓✓✓");
        let spec = spec.with_rate(0.4);
        assert_eq!(classify(&spec).unwrap().symbols(), "✗✗✗");
    }

    #[test]
    fn cube_nip_only() {
        let spec = cube();
        let v = classify(&spec).unwrap();
        assert_eq!(v.symbols(), "✓✗✗");
        assert_eq!(v.rp, Status::Holds);
        assert!(v.impr.is_some());
        let view = derive_natural_scale(&spec).unwrap();
        assert_eq!(check_nip_zero_rate(&view).unwrap().0, Status::Holds);
    }

    #[test]
    fn zero_rate_requires_zero_rate() {
        let view = derive_natural_scale(&bm(0.1)).unwrap();
        assert!(matches!(check_nip_zero_rate(&view), Err(Error::NonZeroRate(_))));
    }

    #[test]
    fn skew_kink_fails_zero_rate() {
        let q = Expr::Piecewise {
            breakpoints: vec![0.0],
            pieces: vec![Expr::affine(4.0, 0.0), Expr::affine(4.0 / 3.0, 0.0)],
        };
        let spec = DiffusionSpec::new(
            "skew",
            StateInterval::real_line(),
            ScaleInput::InverseScale(q),
            SpeedInput::Natural(DecomposedMeasure::lebesgue(line())),
            0.0,
            0.0,
            1.0,
        )
        .unwrap();
        let view = derive_natural_scale(&spec).unwrap();
        assert_eq!(check_nip_zero_rate(&view).unwrap().0, Status::Fails);
        assert_eq!(check_nip(&view).0, Status::Fails);
    }

    #[test]
    fn flat_interval_fails_rp() {
        // q flat on [0, 1]
        let q = Expr::Piecewise {
            breakpoints: vec![0.0, 1.0],
            pieces: vec![
                Expr::power_signed(0.0, 3.0).plus(Expr::constant(1.0)),
                Expr::constant(1.0),
                Expr::power_signed(1.0, 3.0).plus(Expr::constant(1.0)),
            ],
        };
        let spec = DiffusionSpec::new(
            "flat",
            StateInterval::real_line(),
            ScaleInput::InverseScale(q),
            SpeedInput::Natural(DecomposedMeasure::lebesgue(line())),
            -1.0,
            0.0,
            1.0,
        )
        .unwrap()
        .with_zero_set(vec![ZeroSetComponent::Interval { lo: 0.0, hi: 1.0 }])
        .with_phi_behaviors(vec![
            LocalBehavior::new(0.0, Side::Left, -1.0, 1.0),
            LocalBehavior::new(1.0, Side::Right, -1.0, 1.0),
        ]);
        let view = derive_natural_scale(&spec).unwrap();
        assert_eq!(check_rp(&view), Status::Fails);
        let (nip, reports) = check_nip(&view);
        assert_eq!(nip, Status::Holds, "{reports:?}");
        // q = 1 on the flat, so r q mU_ac = ½ q''_ac = 0 fails once r ≠ 0
        let view = derive_natural_scale(&spec.clone().with_rate(1.0)).unwrap();
        let (nip, reports) = check_nip(&view);
        assert_eq!(nip, Status::Fails);
        assert_eq!(reports[3].residual, Some(1.0));
    }

    #[test]
    fn verdict_serializes_in_order() {
        let v = classify(&bm(0.0)).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let keys = ["\"model_id\"", "\"r\"", "\"nip\"", "\"nsa\"", "\"nupbr\"", "\"rp\"", "\"reports\"", "\"impr\""];
        let pos: Vec<usize> = keys.iter().map(|k| s.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(s.contains("\"NIP.i.a\""));
    }
}
