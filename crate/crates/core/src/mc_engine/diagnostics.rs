//! Martingale diagnostics along chain paths.

use serde::Serialize;

use super::chain::{ChainModel, NodeRule};
use super::sampler::{run, PathEnd, PathVisitor, Step};
use super::stats::{mean_se, MeanSe};
use crate::diffusion_model::NaturalScaleView;
use crate::error::{Error, Result};
use crate::measure_kit::{integrate, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticTarget {
    /// `U - L/2` at a reflecting boundary is a martingale.
    UMinusHalfL,
    /// The discounted price has no drift at sticky or kinked states beyond the continuous part.
    DiscountedPriceDrift,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticResult {
    pub target: DiagnosticTarget,
    pub estimate: MeanSe,
    pub t_stat: f64,
    pub pass: bool,
    /// Nodes the statistic is built from.
    pub nodes: Vec<usize>,
}

/// `|t|` below which a diagnostic passes.
pub const T_LIMIT: f64 = 3.0;

struct HalfLocalTime {
    /// `(node, sign, 1 / (2 cell_mass))` for reflecting nodes.
    boundary: Vec<(usize, f64, f64)>,
}

impl PathVisitor for HalfLocalTime {
    type Acc = Vec<f64>;
    fn empty(&self) -> Vec<f64> {
        Vec::new()
    }
    fn path(&self, steps: &[Step], chain: &ChainModel, _end: PathEnd, acc: &mut Vec<f64>) {
        let mut d = 0.0;
        for s in steps {
            match s.next {
                Some(j) => d += chain.grid[j] - chain.grid[s.node],
                // a reflecting node always moves; count the move of a step cut by the horizon
                None => match chain.rules[s.node] {
                    NodeRule::ReflectUp => d += chain.grid[s.node + 1] - chain.grid[s.node],
                    NodeRule::ReflectDown => d += chain.grid[s.node - 1] - chain.grid[s.node],
                    _ => {}
                },
            }
            if let Some(&(_, sign, w)) = self.boundary.iter().find(|b| b.0 == s.node) {
                d -= sign * w * s.hold;
            }
        }
        acc.push(d);
    }
    fn merge(&self, mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
        a.extend(b);
        a
    }
}

struct DriftResidual {
    /// Sticky or kinked nodes with the continuous drift prediction `∫ G_i dq''_ac - r q_i h_ac`.
    nodes: Vec<(usize, f64)>,
}

impl PathVisitor for DriftResidual {
    type Acc = Vec<f64>;
    fn empty(&self) -> Vec<f64> {
        Vec::new()
    }
    fn path(&self, steps: &[Step], chain: &ChainModel, _end: PathEnd, acc: &mut Vec<f64>) {
        let r = chain.r;
        let mut res = 0.0;
        for s in steps {
            let Some(&(_, predicted)) = self.nodes.iter().find(|n| n.0 == s.node) else { continue };
            let j = match s.next {
                Some(j) => j,
                // redraw-free completion: use the expected neighbor price for a cut step
                None => {
                    let p = chain.up_prob[s.node];
                    let qbar = p * chain.price[s.node + 1] + (1.0 - p) * chain.price[s.node - 1];
                    let now = (-r * s.t).exp();
                    res += (-r * (s.t + s.hold)).exp() * qbar - now * chain.price[s.node] - now * predicted / (1.0 + r * chain.mean_hold[s.node]);
                    continue;
                }
            };
            let now = (-r * s.t).exp();
            res += (-r * (s.t + s.hold)).exp() * chain.price[j]
                - now * chain.price[s.node]
                - now * predicted / (1.0 + r * chain.mean_hold[s.node]);
        }
        acc.push(res);
    }
    fn merge(&self, mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
        a.extend(b);
        a
    }
}

fn finish(target: DiagnosticTarget, samples: &[f64], nodes: Vec<usize>) -> DiagnosticResult {
    let estimate = mean_se(samples);
    let t_stat = estimate.t_stat(0.0);
    DiagnosticResult { target, estimate, t_stat, pass: t_stat.abs() < T_LIMIT, nodes }
}

/// `∫ G_i(u_i, y) q''_ac(y) dy` over the cell of node `i`.
fn green_against_qpp(view: &NaturalScaleView, chain: &ChainModel, i: usize) -> Result<f64> {
    if view.qpp.ac_is_zero() {
        return Ok(0.0);
    }
    let (a, x, b) = (chain.grid[i - 1], chain.grid[i], chain.grid[i + 1]);
    let green = |y: f64| (x.min(y) - a) * (b - x.max(y)) / (b - a);
    let mut breaks: Vec<f64> = view.qpp.ac_breaks().iter().copied().filter(|&y| y > a && y < b).collect();
    breaks.push(x);
    breaks.sort_by(f64::total_cmp);
    match integrate(|y| green(y) * view.qpp.ac_density(y), a, b, &breaks, QuadOptions::new(1e-10, 1e-16)) {
        Ok(r) => Ok(r.value),
        Err(Error::Quadrature { value, .. }) if value.is_finite() => Ok(value),
        Err(e) => Err(e),
    }
}

/// Interior nodes carrying a speed atom or a jump of `q'`.
pub fn singular_nodes(view: &NaturalScaleView, chain: &ChainModel) -> Vec<usize> {
    let tol = 1e-9 * chain.max_spacing();
    (1..chain.len() - 1)
        .filter(|&i| chain.rules[i] == NodeRule::Interior)
        .filter(|&i| {
            let u = chain.grid[i];
            chain.atom_hold[i] > 0.0 || view.qpp.atom_at(u, tol).is_some_and(|m| m.as_f64() != 0.0)
        })
        .collect()
}

pub fn martingale_diagnostic(
    view: &NaturalScaleView,
    chain: &ChainModel,
    target: DiagnosticTarget,
    n_paths: usize,
    seed: u64,
) -> Result<DiagnosticResult> {
    match target {
        DiagnosticTarget::UMinusHalfL => {
            let last = chain.len() - 1;
            let mut boundary = Vec::new();
            for (node, sign) in [(0, 1.0), (last, -1.0)] {
                if matches!(chain.rules[node], NodeRule::ReflectUp | NodeRule::ReflectDown) {
                    boundary.push((node, sign, 0.5 / chain.cell_mass[node]));
                }
            }
            if boundary.is_empty() {
                return Err(Error::Inapplicable("no reflecting boundary".into()));
            }
            let nodes = boundary.iter().map(|b| b.0).collect();
            let (d, _) = run(chain, n_paths, seed, &HalfLocalTime { boundary });
            Ok(finish(target, &d, nodes))
        }
        DiagnosticTarget::DiscountedPriceDrift => {
            let idx = singular_nodes(view, chain);
            if idx.is_empty() {
                return Err(Error::Inapplicable("no sticky or kinked interior state".into()));
            }
            let mut nodes = Vec::with_capacity(idx.len());
            for &i in &idx {
                let h_ac = chain.mean_hold[i] - chain.atom_hold[i];
                let predicted = green_against_qpp(view, chain, i)? - view.r * chain.price[i] * h_ac;
                nodes.push((i, predicted));
            }
            let (d, _) = run(chain, n_paths, seed, &DriftResidual { nodes });
            Ok(finish(target, &d, idx))
        }
    }
}
