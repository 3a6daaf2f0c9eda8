//! Local-time and mean-variance tradeoff estimates.

use serde::Serialize;

use super::chain::{build_chain, ChainModel};
use super::sampler::{run, PathEnd, PathVisitor, Step};
use super::stats::{mean_se, MeanSe};
use crate::diffusion_model::NaturalScaleView;
use crate::error::{Error, Result};

/// `L̂^{u_i}_T = occupation_i / cell_mass_i`, averaged over paths.
#[derive(Debug, Clone, Serialize)]
pub struct LocalTimeField {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub n_paths: usize,
}

/// Average local time per node from summed occupation times.
pub fn estimate_local_time_field(chain: &ChainModel, occupation: &[f64], n_paths: usize) -> Result<LocalTimeField> {
    let mut mean = vec![0.0; chain.len()];
    for (i, &occ) in occupation.iter().enumerate() {
        if occ == 0.0 {
            continue;
        }
        let m = chain.cell_mass[i];
        if !(m > 0.0) {
            return Err(Error::Chain(format!("node {i} has zero speed mass but was visited")));
        }
        mean[i] = occ / m / n_paths as f64;
    }
    Ok(LocalTimeField { grid: chain.grid.clone(), mean, n_paths })
}

/// Per-path local time at one node.
pub fn local_time_at(chain: &ChainModel, node: usize, occupation: &[f64]) -> Result<MeanSe> {
    let m = chain.cell_mass[node];
    if !(m > 0.0) {
        return Err(Error::Chain(format!("node {node} has zero speed mass")));
    }
    let xs: Vec<f64> = occupation.iter().map(|o| o / m).collect();
    Ok(mean_se(&xs))
}

/// Per-path `K̂_T = Σ_i φ(u_i)^2 L̂^{u_i}_T Δu_i`.
pub struct TradeoffVisitor {
    /// `φ(u_i)^2 Δu_i / cell_mass_i`, zero where the cell has no mass.
    pub weight: Vec<f64>,
}

impl TradeoffVisitor {
    pub fn new(chain: &ChainModel, view: &NaturalScaleView) -> Self {
        let weight = (0..chain.len())
            .map(|i| {
                let m = chain.cell_mass[i];
                if m > 0.0 {
                    view.phi(chain.grid[i]).powi(2) * chain.spacing(i) / m
                } else {
                    0.0
                }
            })
            .collect();
        TradeoffVisitor { weight }
    }
}

impl PathVisitor for TradeoffVisitor {
    type Acc = Vec<f64>;
    fn empty(&self) -> Vec<f64> {
        Vec::new()
    }
    fn path(&self, steps: &[Step], chain: &ChainModel, _end: PathEnd, acc: &mut Vec<f64>) {
        acc.push(steps.iter().map(|s| self.weight[s.node] * s.clipped(chain.horizon)).sum());
    }
    fn merge(&self, mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
        a.extend(b);
        a
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TradeoffLevel {
    pub grid: usize,
    pub k: MeanSe,
    pub discarded: usize,
}

/// `K̂_T` on a ladder of grid refinements with common seeds.
#[derive(Debug, Clone, Serialize)]
pub struct TradeoffEstimate {
    pub levels: Vec<TradeoffLevel>,
    /// `K̂` ratios between consecutive levels.
    pub ratios: Vec<f64>,
    pub divergent: bool,
}

/// Ratio at or above which a refinement step counts as growth.
pub const DIVERGENCE_RATIO: f64 = 1.5;

/// Estimate `K̂_T` for grid sizes `base, 2 base, 4 base, ...` (`levels` entries).
pub fn estimate_tradeoff(view: &NaturalScaleView, base: usize, levels: usize, horizon: f64, n_paths: usize, seed: u64) -> Result<TradeoffEstimate> {
    let mut out = Vec::with_capacity(levels);
    for l in 0..levels {
        let n = base << l;
        let chain = build_chain(view, n, horizon)?;
        let visitor = TradeoffVisitor::new(&chain, view);
        let (ks, counts) = run(&chain, n_paths, seed, &visitor);
        out.push(TradeoffLevel { grid: n, k: mean_se(&ks), discarded: counts.exited });
    }
    Ok(tradeoff_from_levels(out))
}

pub fn tradeoff_from_levels(levels: Vec<TradeoffLevel>) -> TradeoffEstimate {
    let ratios: Vec<f64> = levels
        .windows(2)
        .map(|w| if w[0].k.mean > 0.0 { w[1].k.mean / w[0].k.mean } else if w[1].k.mean > 0.0 { f64::INFINITY } else { 1.0 })
        .collect();
    let divergent = ratios.len() >= 2 && ratios[ratios.len() - 2..].iter().all(|&q| q >= DIVERGENCE_RATIO);
    TradeoffEstimate { levels, ratios, divergent }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion_model::derive_natural_scale;
    use crate::mc_engine::sampler::sample_paths;
    use crate::model_catalog::{build_model, Params};

    fn view(name: &str, p: &str) -> NaturalScaleView {
        derive_natural_scale(&build_model(name, &Params::parse(p).unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn bm_tradeoff_is_zero() {
        let est = estimate_tradeoff(&view("brownian_motion", "r=0"), 32, 3, 1.0, 200, 1).unwrap();
        assert!(est.levels.iter().all(|l| l.k.mean == 0.0));
        assert!(!est.divergent);
    }

    #[test]
    fn occupation_identity_is_exact() {
        let v = view("brownian_motion", "");
        let c = build_chain(&v, 64, 1.0).unwrap();
        let (s, counts) = sample_paths(&c, 300, 2, &[]);
        let n = counts.horizon + counts.absorbed;
        let field = estimate_local_time_field(&c, &s.occupation, n).unwrap();
        let f = |u: f64| u.sin() + 2.0;
        let lhs: f64 = (0..c.len()).map(|i| f(c.grid[i]) * s.occupation[i]).sum();
        let rhs: f64 = (0..c.len()).map(|i| f(c.grid[i]) * field.mean[i] * c.cell_mass[i] * n as f64).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        let far = c.len() - 1;
        assert_eq!(field.mean[far], 0.0);
    }

    #[test]
    fn ratio_rule() {
        let lvl = |g, m| TradeoffLevel { grid: g, k: MeanSe { n: 1, mean: m, se: 0.0 }, discarded: 0 };
        assert!(tradeoff_from_levels(vec![lvl(1, 1.0), lvl(2, 2.0), lvl(4, 3.0)]).divergent);
        assert!(!tradeoff_from_levels(vec![lvl(1, 1.0), lvl(2, 2.0), lvl(4, 2.2)]).divergent);
        assert!(!tradeoff_from_levels(vec![lvl(1, 0.0), lvl(2, 0.0), lvl(4, 0.0)]).divergent);
    }
}
