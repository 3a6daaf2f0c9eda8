//! Path sampling for [`ChainModel`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use super::chain::{ChainModel, NodeRule};

const CHUNK: usize = 256;

/// One holding period of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub node: usize,
    /// Time the chain arrived at `node`.
    pub t: f64,
    /// Full sampled holding time; may run past the horizon.
    pub hold: f64,
    /// Node after the jump, `None` if the horizon or absorption came first.
    pub next: Option<usize>,
    /// True when `t + hold` exceeds the horizon.
    pub truncated: bool,
}

impl Step {
    /// Holding time clipped at the horizon.
    pub fn clipped(&self, horizon: f64) -> f64 {
        self.hold.min(horizon - self.t).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEnd {
    Horizon,
    Absorbed,
    /// Left the truncated window; the path is discarded.
    Exited,
}

/// Per-path accumulator. `merge` must be associative for results to be reproducible.
pub trait PathVisitor: Sync {
    type Acc: Send;
    fn empty(&self) -> Self::Acc;
    fn path(&self, steps: &[Step], chain: &ChainModel, end: PathEnd, acc: &mut Self::Acc);
    fn merge(&self, a: Self::Acc, b: Self::Acc) -> Self::Acc;
}

impl<A: PathVisitor, B: PathVisitor> PathVisitor for (A, B) {
    type Acc = (A::Acc, B::Acc);
    fn empty(&self) -> Self::Acc {
        (self.0.empty(), self.1.empty())
    }
    fn path(&self, steps: &[Step], chain: &ChainModel, end: PathEnd, acc: &mut Self::Acc) {
        self.0.path(steps, chain, end, &mut acc.0);
        self.1.path(steps, chain, end, &mut acc.1);
    }
    fn merge(&self, a: Self::Acc, b: Self::Acc) -> Self::Acc {
        (self.0.merge(a.0, b.0), self.1.merge(a.1, b.1))
    }
}

/// Counts of how paths ended.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EndCounts {
    pub horizon: usize,
    pub absorbed: usize,
    pub exited: usize,
}

/// Sample one path into `steps`.
pub fn sample_path(chain: &ChainModel, rng: &mut ChaCha8Rng, steps: &mut Vec<Step>) -> PathEnd {
    steps.clear();
    let horizon = chain.horizon;
    let mut node = chain.start;
    let mut t = 0.0;
    loop {
        match chain.rules[node] {
            NodeRule::Exit => return PathEnd::Exited,
            NodeRule::Absorb => {
                steps.push(Step { node, t, hold: f64::INFINITY, next: None, truncated: true });
                return PathEnd::Absorbed;
            }
            _ => {}
        }
        let e: f64 = rng.sample(Exp1);
        let hold = e * chain.mean_hold[node];
        let u: f64 = rng.gen();
        if t + hold >= horizon {
            steps.push(Step { node, t, hold, next: None, truncated: true });
            return PathEnd::Horizon;
        }
        let next = if u < chain.up_prob[node] { node + 1 } else { node - 1 };
        steps.push(Step { node, t, hold, next: Some(next), truncated: false });
        t += hold;
        node = next;
    }
}

/// Run `n_paths` paths, path `k` on ChaCha8 stream `k` of `seed`.
///
/// Results do not depend on the number of threads.
pub fn run<V: PathVisitor>(chain: &ChainModel, n_paths: usize, seed: u64, visitor: &V) -> (V::Acc, EndCounts) {
    let chunks: Vec<(V::Acc, EndCounts)> = (0..n_paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = visitor.empty();
            let mut counts = EndCounts::default();
            let mut steps = Vec::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                rng.set_stream(k as u64);
                rng.set_word_pos(0);
                let end = sample_path(chain, &mut rng, &mut steps);
                match end {
                    PathEnd::Horizon => counts.horizon += 1,
                    PathEnd::Absorbed => counts.absorbed += 1,
                    PathEnd::Exited => {
                        counts.exited += 1;
                        continue;
                    }
                }
                visitor.path(&steps, chain, end, &mut acc);
            }
            (acc, counts)
        })
        .collect();
    let mut acc = visitor.empty();
    let mut counts = EndCounts::default();
    for (a, c) in chunks {
        acc = visitor.merge(acc, a);
        counts.horizon += c.horizon;
        counts.absorbed += c.absorbed;
        counts.exited += c.exited;
    }
    (acc, counts)
}

/// Terminal states, occupation times and ends of kept paths.
#[derive(Debug, Clone, Default)]
pub struct PathSample {
    /// Terminal natural-scale state of each kept path.
    pub terminal: Vec<f64>,
    /// Number of jumps of each kept path.
    pub jumps: Vec<usize>,
    /// First holding time at the start node of each kept path, clipped at the horizon.
    pub first_exit: Vec<f64>,
    /// Occupation time per node summed over kept paths.
    pub occupation: Vec<f64>,
    /// Per-path occupation time at each node listed in `track`.
    pub tracked: Vec<Vec<f64>>,
    pub ends: Vec<PathEnd>,
}

/// Collects a [`PathSample`]. `track` lists nodes whose per-path occupation is kept.
pub struct Collector {
    pub track: Vec<usize>,
}

impl PathVisitor for Collector {
    type Acc = PathSample;
    fn empty(&self) -> PathSample {
        PathSample { tracked: vec![Vec::new(); self.track.len()], ..Default::default() }
    }
    fn path(&self, steps: &[Step], chain: &ChainModel, end: PathEnd, acc: &mut PathSample) {
        if acc.occupation.is_empty() {
            acc.occupation = vec![0.0; chain.len()];
        }
        let last = steps.last().expect("kept paths have a step");
        acc.terminal.push(chain.grid[last.node]);
        acc.jumps.push(steps.len() - 1);
        acc.first_exit.push(steps[0].clipped(chain.horizon));
        acc.ends.push(end);
        let mut mine = vec![0.0; self.track.len()];
        for s in steps {
            let dt = s.clipped(chain.horizon);
            acc.occupation[s.node] += dt;
            if let Some(j) = self.track.iter().position(|&n| n == s.node) {
                mine[j] += dt;
            }
        }
        for (col, v) in acc.tracked.iter_mut().zip(mine) {
            col.push(v);
        }
    }
    fn merge(&self, mut a: PathSample, b: PathSample) -> PathSample {
        if a.occupation.is_empty() {
            a.occupation = b.occupation;
        } else if !b.occupation.is_empty() {
            for (x, y) in a.occupation.iter_mut().zip(b.occupation) {
                *x += y;
            }
        }
        a.terminal.extend(b.terminal);
        a.jumps.extend(b.jumps);
        a.first_exit.extend(b.first_exit);
        a.ends.extend(b.ends);
        for (x, y) in a.tracked.iter_mut().zip(b.tracked) {
            x.extend(y);
        }
        a
    }
}

pub fn sample_paths(chain: &ChainModel, n_paths: usize, seed: u64, track: &[usize]) -> (PathSample, EndCounts) {
    run(chain, n_paths, seed, &Collector { track: track.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion_model::derive_natural_scale;
    use crate::mc_engine::chain::build_chain;
    use crate::model_catalog::{build_model, Params};

    fn chain(name: &str, p: &str, n: usize) -> ChainModel {
        let v = derive_natural_scale(&build_model(name, &Params::parse(p).unwrap()).unwrap()).unwrap();
        build_chain(&v, n, 1.0).unwrap()
    }

    #[test]
    fn reproducible_and_chunk_independent() {
        let c = chain("brownian_motion", "", 64);
        let (a, _) = sample_paths(&c, 600, 7, &[]);
        let (b, _) = sample_paths(&c, 600, 7, &[]);
        assert_eq!(a.terminal, b.terminal);
        let (short, _) = sample_paths(&c, 300, 7, &[]);
        assert_eq!(&a.terminal[..300], &short.terminal[..]);
        let (other, _) = sample_paths(&c, 600, 8, &[]);
        assert_ne!(a.terminal, other.terminal);
    }

    #[test]
    fn reflected_paths_stay_above_the_boundary() {
        let c = chain("sticky_reflected_bm", "rho=0,r=0,x0=11/10", 64);
        let (s, counts) = sample_paths(&c, 2000, 1, &[]);
        let u0 = c.grid[0];
        assert!(s.terminal.iter().all(|&u| u >= u0));
        assert_eq!(counts.absorbed, 0);
        assert!(s.occupation[0] > 0.0);
    }

    #[test]
    fn occupation_sums_to_horizon() {
        let c = chain("brownian_motion", "", 64);
        let (s, counts) = sample_paths(&c, 500, 3, &[c.start]);
        let total: f64 = s.occupation.iter().sum();
        let kept = counts.horizon + counts.absorbed;
        assert!((total - kept as f64).abs() < 1e-9 * kept as f64);
        assert_eq!(s.tracked[0].len(), kept);
    }

    #[test]
    fn absorbed_paths_stop() {
        let c = chain("gen_squared_bessel", "m0=inf,x0=1/10", 64);
        let (s, counts) = sample_paths(&c, 1000, 5, &[]);
        assert!(counts.absorbed > 0);
        let ends = s.ends.iter().filter(|e| **e == PathEnd::Absorbed).count();
        assert_eq!(ends, counts.absorbed);
    }
}
