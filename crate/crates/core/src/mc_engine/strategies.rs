//! Trading strategies evaluated along chain paths.
//!
//! The traded asset is the discounted price `S_t = e^{-rt} q(U_t)`; gains are
//! the discrete stochastic integral of the position against `S`.

use serde::Serialize;

use super::chain::ChainModel;
use super::sampler::{run, PathEnd, PathVisitor, Step};
use super::stats::{mean_se, wilson};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Hold one unit while the chain sits at a boundary node.
    BoundarySit,
    /// Hold one unit from the first visit to the node nearest `level` onward.
    PostHittingHold { level: f64 },
    /// Position per node.
    Custom { position: Vec<f64> },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::BoundarySit => "boundary_sit".into(),
            Strategy::PostHittingHold { level } => format!("post_hitting_hold({level})"),
            Strategy::Custom { .. } => "custom".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub positive: usize,
    pub positive_fraction: f64,
    /// Wilson 95% interval for `P(payoff > 0)`.
    pub positive_ci: (f64, f64),
    pub min_payoff: f64,
    #[serde(skip)]
    pub payoffs: Vec<f64>,
}

/// Gain of holding one unit over the step.
pub fn step_gain(chain: &ChainModel, s: &Step) -> f64 {
    let r = chain.r;
    let qi = chain.price[s.node];
    let now = (-r * s.t).exp();
    match s.next {
        Some(j) => (-r * (s.t + s.hold)).exp() * chain.price[j] - now * qi,
        None => ((-r * chain.horizon).exp() - now) * qi,
    }
}

struct Payoff<'a> {
    strategy: &'a Strategy,
    level_node: usize,
}

impl PathVisitor for Payoff<'_> {
    type Acc = Vec<f64>;
    fn empty(&self) -> Vec<f64> {
        Vec::new()
    }
    fn path(&self, steps: &[Step], chain: &ChainModel, _end: PathEnd, acc: &mut Vec<f64>) {
        let last = chain.len() - 1;
        let mut armed = false;
        let mut gain = 0.0;
        for s in steps {
            let h = match self.strategy {
                Strategy::BoundarySit => {
                    if s.node == 0 || s.node == last {
                        1.0
                    } else {
                        0.0
                    }
                }
                Strategy::PostHittingHold { .. } => {
                    armed |= s.node == self.level_node;
                    if armed {
                        1.0
                    } else {
                        0.0
                    }
                }
                Strategy::Custom { position } => position.get(s.node).copied().unwrap_or(0.0),
            };
            if h != 0.0 {
                gain += h * step_gain(chain, s);
            }
        }
        acc.push(gain);
    }
    fn merge(&self, mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
        a.extend(b);
        a
    }
}

/// Payoff samples of `strategy` over `n_paths` chain paths.
pub fn run_strategy(chain: &ChainModel, strategy: &Strategy, n_paths: usize, seed: u64) -> StrategyResult {
    let level_node = match strategy {
        Strategy::PostHittingHold { level } => chain.nearest(*level),
        _ => usize::MAX,
    };
    let (payoffs, _) = run(chain, n_paths, seed, &Payoff { strategy, level_node });
    summarize(strategy.clone(), payoffs)
}

pub fn summarize(strategy: Strategy, payoffs: Vec<f64>) -> StrategyResult {
    let m = mean_se(&payoffs);
    let n = payoffs.len();
    // gains within rounding of zero do not count as profit
    let scale = payoffs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let positive = payoffs.iter().filter(|&&x| x > 1e-12 * scale.max(1.0)).count();
    StrategyResult {
        strategy,
        n,
        mean: m.mean,
        se: m.se,
        positive,
        positive_fraction: if n > 0 { positive as f64 / n as f64 } else { f64::NAN },
        positive_ci: wilson(positive, n, 0.95),
        min_payoff: payoffs.iter().copied().fold(f64::INFINITY, f64::min),
        payoffs,
    }
}

/// Largest price move of a single jump; the admissibility slack for payoffs.
pub fn grid_epsilon(chain: &ChainModel) -> f64 {
    chain.price.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

/// Strategy payoffs look like an arbitrage: bounded below by the grid slack and positive with
/// probability bounded away from zero.
pub fn looks_like_arbitrage(res: &StrategyResult, eps: f64) -> bool {
    res.n > 0 && res.min_payoff >= -2.0 * eps && res.positive_ci.0 > 0.0
}
