//! Monte Carlo engine: a grid chain on natural scale, path sampling, local-time
//! and tradeoff estimates, strategy payoffs and martingale diagnostics.

pub mod chain;
pub mod diagnostics;
pub mod estimators;
pub mod sampler;
pub mod stats;
pub mod strategies;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use chain::{build_chain, ChainModel, NodeRule};
pub use diagnostics::{martingale_diagnostic, DiagnosticResult, DiagnosticTarget};
pub use estimators::{estimate_local_time_field, estimate_tradeoff, LocalTimeField, TradeoffEstimate};
pub use sampler::{run, sample_paths, EndCounts, PathEnd, PathSample, PathVisitor, Step};
pub use stats::MeanSe;
pub use strategies::{run_strategy, Strategy, StrategyResult};

use crate::diffusion_model::{derive_natural_scale, BoundaryKind, DiffusionSpec, NaturalScaleView};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub grid: usize,
    pub paths: usize,
    pub levels: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { grid: 512, paths: 10_000, levels: 3, seed: 42 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticEntry {
    pub target: DiagnosticTarget,
    /// `None` when the target does not apply to the model.
    pub result: Option<DiagnosticResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationFlags {
    /// Some default strategy is bounded below by the grid slack and profits with positive probability.
    pub empirical_arbitrage: bool,
    pub k_divergent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub model_id: String,
    pub seed: u64,
    pub grid: usize,
    pub n_paths: usize,
    pub horizon: f64,
    pub discarded_paths: usize,
    pub absorbed_paths: usize,
    /// Terminal natural-scale state.
    pub terminal: MeanSe,
    /// Terminal discounted price `e^{-rT} q(U_T)`.
    pub terminal_price: MeanSe,
    /// Local time at the start node.
    pub start_local_time: MeanSe,
    pub tradeoff: TradeoffEstimate,
    pub strategies: Vec<StrategyResult>,
    pub diagnostics: Vec<DiagnosticEntry>,
    pub flags: SimulationFlags,
}

fn default_strategies(view: &NaturalScaleView) -> Vec<Strategy> {
    let mut out = Vec::new();
    for b in &view.boundaries {
        if matches!(b.behavior.kind, BoundaryKind::Reflecting | BoundaryKind::Absorbing) && b.image.is_finite() {
            out.push(Strategy::PostHittingHold { level: b.image });
        }
    }
    if view.boundaries.iter().any(|b| b.behavior.kind == BoundaryKind::Reflecting) {
        out.push(Strategy::BoundarySit);
    }
    out
}

/// Run the full pipeline for one model.
pub fn simulate(spec: &DiffusionSpec, cfg: &SimulationConfig) -> Result<SimulationReport> {
    if cfg.paths == 0 {
        return Err(Error::Chain("need at least one path".into()));
    }
    if cfg.levels == 0 {
        return Err(Error::Chain("need at least one refinement level".into()));
    }
    let view = derive_natural_scale(spec)?;
    simulate_view(&spec.model_id, &view, spec.horizon, cfg)
}

pub fn simulate_view(model_id: &str, view: &NaturalScaleView, horizon: f64, cfg: &SimulationConfig) -> Result<SimulationReport> {
    let chain = build_chain(view, cfg.grid, horizon)?;
    let (sample, counts) = sample_paths(&chain, cfg.paths, cfg.seed, &[chain.start]);
    let disc = (-view.r * horizon).exp();
    let prices: Vec<f64> = sample
        .terminal
        .iter()
        .map(|&u| disc * chain.price[chain.nearest(u)])
        .collect();
    let start_local_time = estimators::local_time_at(&chain, chain.start, &sample.tracked[0])?;

    let base = (cfg.grid >> (cfg.levels - 1)).max(16);
    let tradeoff = estimate_tradeoff(view, base, cfg.levels, horizon, cfg.paths, cfg.seed)?;

    let eps = strategies::grid_epsilon(&chain);
    let strategies: Vec<StrategyResult> = default_strategies(view)
        .iter()
        .map(|s| run_strategy(&chain, s, cfg.paths, cfg.seed))
        .collect();
    let empirical_arbitrage = strategies.iter().any(|s| strategies::looks_like_arbitrage(s, eps));

    let mut diagnostics = Vec::new();
    for target in [DiagnosticTarget::UMinusHalfL, DiagnosticTarget::DiscountedPriceDrift] {
        let entry = match martingale_diagnostic(view, &chain, target, cfg.paths, cfg.seed) {
            Ok(r) => DiagnosticEntry { target, result: Some(r), note: None },
            Err(Error::Inapplicable(why)) => DiagnosticEntry { target, result: None, note: Some(why) },
            Err(e) => return Err(e),
        };
        diagnostics.push(entry);
    }

    Ok(SimulationReport {
        model_id: model_id.to_string(),
        seed: cfg.seed,
        grid: chain.len() - 1,
        n_paths: cfg.paths,
        horizon,
        discarded_paths: counts.exited,
        absorbed_paths: counts.absorbed,
        terminal: stats::mean_se(&sample.terminal),
        terminal_price: stats::mean_se(&prices),
        start_local_time,
        flags: SimulationFlags { empirical_arbitrage, k_divergent: tradeoff.divergent },
        tradeoff,
        strategies,
        diagnostics,
    })
}

impl SimulationReport {
    /// Plain-text summary.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", self.model_id);
        let _ = writeln!(s, "seed: {}  grid: {}  paths: {}  horizon: {}", self.seed, self.grid, self.n_paths, self.horizon);
        let _ = writeln!(s, "discarded paths: {}  absorbed paths: {}", self.discarded_paths, self.absorbed_paths);
        let _ = writeln!(s, "terminal U: {:.6} ± {:.6}", self.terminal.mean, self.terminal.se);
        let _ = writeln!(s, "terminal discounted price: {:.6} ± {:.6}", self.terminal_price.mean, self.terminal_price.se);
        let _ = writeln!(s, "local time at start: {:.6} ± {:.6}", self.start_local_time.mean, self.start_local_time.se);
        let _ = writeln!(s, "tradeoff K_T:");
        for l in &self.tradeoff.levels {
            let _ = writeln!(s, "  N = {:5}: {:.6e} ± {:.3e}  (discarded {})", l.grid, l.k.mean, l.k.se, l.discarded);
        }
        let ratios: Vec<String> = self.tradeoff.ratios.iter().map(|r| format!("{r:.3}")).collect();
        let _ = writeln!(s, "  ratios: [{}]", ratios.join(", "));
        for st in &self.strategies {
            let _ = writeln!(
                s,
                "strategy {}: mean {:.6} ± {:.6}, P(>0) = {:.4} [{:.4}, {:.4}], min {:.6}",
                st.strategy.label(),
                st.mean,
                st.se,
                st.positive_fraction,
                st.positive_ci.0,
                st.positive_ci.1,
                st.min_payoff
            );
        }
        for d in &self.diagnostics {
            match (&d.result, &d.note) {
                (Some(r), _) => {
                    let _ = writeln!(s, "diagnostic {:?}: t = {:.3} ({})", d.target, r.t_stat, if r.pass { "pass" } else { "fail" });
                }
                (None, note) => {
                    let _ = writeln!(s, "diagnostic {:?}: n/a ({})", d.target, note.as_deref().unwrap_or(""));
                }
            }
        }
        let _ = writeln!(s, "flags: empirical_arbitrage={} k_divergent={}", self.flags.empirical_arbitrage, self.flags.k_divergent);
        s
    }

    /// `grid,k_mean,k_se,discarded,ratio` rows.
    pub fn k_ladder_csv(&self) -> String {
        let mut s = String::from("grid,k_mean,k_se,discarded,ratio\n");
        for (i, l) in self.tradeoff.levels.iter().enumerate() {
            let ratio = if i == 0 { String::new() } else { format!("{}", self.tradeoff.ratios[i - 1]) };
            let _ = writeln!(s, "{},{},{},{},{}", l.grid, l.k.mean, l.k.se, l.discarded, ratio);
        }
        s
    }

    /// Payoff histogram with `bins` equal bins per strategy: `strategy,lo,hi,count` rows.
    pub fn payoff_histogram_csv(&self, bins: usize) -> String {
        let mut s = String::from("strategy,lo,hi,count\n");
        for st in &self.strategies {
            let lo = st.payoffs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = st.payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                continue;
            }
            let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
            let mut counts = vec![0usize; bins];
            for &p in &st.payoffs {
                let k = (((p - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
            for (k, c) in counts.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{}", st.strategy.label(), lo + width * k as f64, lo + width * (k + 1) as f64, c);
            }
        }
        s
    }
}
