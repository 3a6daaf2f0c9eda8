//! Grid Markov chain approximating the diffusion on natural scale.

use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion_model::{BoundaryKind, Endpoint, NaturalScaleView};
use crate::error::{Error, Result};
use crate::measure_kit::{integrate, Mass, QuadOptions};

/// Behavior of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRule {
    Interior,
    ReflectUp,
    ReflectDown,
    Absorb,
    /// Edge of a truncated window; paths reaching it are discarded.
    Exit,
}

/// Continuous-time chain on `u_0 < ... < u_N`.
///
/// From an interior node the chain waits an exponential time with mean
/// `mean_hold[i] = 2 ∫ G_i(u_i, y) mU(dy)` and then moves up with probability
/// `(u_i - u_{i-1}) / (u_{i+1} - u_{i-1})`.
#[derive(Debug, Clone, Serialize)]
pub struct ChainModel {
    pub grid: Vec<f64>,
    pub up_prob: Vec<f64>,
    pub mean_hold: Vec<f64>,
    /// `mU`-mass of the tent around each node (half tent at a reflecting end).
    pub cell_mass: Vec<f64>,
    /// Part of `mean_hold` due to a speed atom sitting at the node.
    pub atom_hold: Vec<f64>,
    pub rules: Vec<NodeRule>,
    /// `q(u_i)`, the undiscounted price at each node.
    pub price: Vec<f64>,
    pub start: usize,
    pub horizon: f64,
    pub r: f64,
}

impl ChainModel {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Half the distance between the neighbors of node `i` (one-sided at the ends).
    pub fn spacing(&self, i: usize) -> f64 {
        let n = self.grid.len();
        let lo = if i == 0 { self.grid[0] } else { self.grid[i - 1] };
        let hi = if i + 1 == n { self.grid[n - 1] } else { self.grid[i + 1] };
        if i == 0 || i + 1 == n {
            hi - lo
        } else {
            0.5 * (hi - lo)
        }
    }

    pub fn max_spacing(&self) -> f64 {
        self.grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the node closest to `u`.
    pub fn nearest(&self, u: f64) -> usize {
        let k = self.grid.partition_point(|&g| g < u);
        if k == 0 {
            0
        } else if k == self.grid.len() {
            k - 1
        } else if (self.grid[k] - u).abs() < (u - self.grid[k - 1]).abs() {
            k
        } else {
            k - 1
        }
    }

    /// Build the chain on an explicit grid; the window ends take the given rules.
    pub fn from_grid(
        view: &NaturalScaleView,
        grid: Vec<f64>,
        ends: [NodeRule; 2],
        start: usize,
        horizon: f64,
    ) -> Result<ChainModel> {
        let n = grid.len();
        if n < 3 || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Chain("grid must hold at least three increasing nodes".into()));
        }
        if start >= n || matches!(if start == 0 { ends[0] } else if start == n - 1 { ends[1] } else { NodeRule::Interior }, NodeRule::Exit) {
            return Err(Error::Chain("window does not contain the starting value".into()));
        }
        let rules: Vec<NodeRule> = (0..n)
            .map(|i| match i {
                0 => ends[0],
                i if i == n - 1 => ends[1],
                _ => NodeRule::Interior,
            })
            .collect();
        let cells: Vec<Cell> = (0..n)
            .into_par_iter()
            .map(|i| node_data(view, &grid, &rules, i))
            .collect::<Result<Vec<_>>>()?;
        let price = grid.iter().map(|&u| view.q.value(u)).collect::<Result<Vec<_>>>()?;
        Ok(ChainModel {
            up_prob: cells.iter().map(|c| c.up).collect(),
            mean_hold: cells.iter().map(|c| c.hold).collect(),
            cell_mass: cells.iter().map(|c| c.mass).collect(),
            atom_hold: cells.iter().map(|c| c.atom_hold).collect(),
            grid,
            rules,
            price,
            start,
            horizon,
            r: view.r,
        })
    }
}

struct Cell {
    up: f64,
    hold: f64,
    mass: f64,
    atom_hold: f64,
}

/// `∫_a^b g dmU` over `[a, b)`, with atoms in `[a, b)`; `g` vanishes at `b` for all callers.
fn against_speed(view: &NaturalScaleView, g: &(dyn Fn(f64) -> f64 + Sync), a: f64, b: f64, mid: f64) -> Result<(f64, f64)> {
    let m = &view.m_u;
    let mut ac = 0.0;
    if !m.ac_is_zero() {
        let mut breaks: Vec<f64> = m.ac_breaks().iter().copied().filter(|&x| x > a && x < b).collect();
        if mid > a && mid < b {
            breaks.push(mid);
        }
        breaks.sort_by(f64::total_cmp);
        let opts = QuadOptions::new(1e-9, 1e-15);
        ac = match integrate(|y| g(y) * m.ac_density(y), a, b, &breaks, opts) {
            Ok(r) => r.value,
            Err(Error::Quadrature { value, .. }) if value.is_finite() => value,
            Err(e) => return Err(e),
        };
    }
    let mut atoms = 0.0;
    for at in m.atoms.iter().filter(|at| at.point >= a && at.point < b) {
        if g(at.point) == 0.0 {
            continue;
        }
        match at.mass {
            Mass::Finite(w) => atoms += w * g(at.point),
            Mass::Infinite => return Err(Error::Chain(format!("infinite speed atom at {} inside a cell", at.point))),
        }
    }
    let sc = m.sc.as_ref().map_or(0.0, |sc| sc.integrate(g, a, b));
    Ok((ac + sc, atoms))
}

fn node_data(view: &NaturalScaleView, grid: &[f64], rules: &[NodeRule], i: usize) -> Result<Cell> {
    let x = grid[i];
    match rules[i] {
        NodeRule::Exit => Ok(Cell { up: 0.5, hold: 0.0, mass: 0.0, atom_hold: 0.0 }),
        NodeRule::Absorb => Ok(Cell { up: 0.5, hold: f64::INFINITY, mass: 0.0, atom_hold: 0.0 }),
        NodeRule::ReflectUp => {
            let b = grid[i + 1];
            let w = b - x;
            let (cont, atoms) = against_speed(view, &|y| b - y, x, b, x)?;
            let hold = 2.0 * (cont + atoms);
            let (cm, cm_atoms) = against_speed(view, &|y| (b - y) / w, x, b, x)?;
            check_hold(hold, i)?;
            Ok(Cell { up: 1.0, hold, mass: cm + cm_atoms, atom_hold: 2.0 * atoms })
        }
        NodeRule::ReflectDown => {
            let a = grid[i - 1];
            let w = x - a;
            // atoms at x belong to this node: integrate over (a, x] by mirroring the half-open rule
            let (cont, _) = against_speed(view, &|y| y - a, a, x, x)?;
            let atom = boundary_atom(view, x)?;
            let hold = 2.0 * (cont + atom * w);
            let (cm, _) = against_speed(view, &|y| (y - a) / w, a, x, x)?;
            check_hold(hold, i)?;
            Ok(Cell { up: 0.0, hold, mass: cm + atom, atom_hold: 2.0 * atom * w })
        }
        NodeRule::Interior => {
            let (a, b) = (grid[i - 1], grid[i + 1]);
            let green = move |y: f64| (x.min(y) - a) * (b - x.max(y)) / (b - a);
            let (cont, atoms) = against_speed(view, &green, a, b, x)?;
            let hold = 2.0 * (cont + atoms);
            let tent = move |y: f64| if y <= x { (y - a) / (x - a) } else { (b - y) / (b - x) };
            let (cm, cm_atoms) = against_speed(view, &tent, a, b, x)?;
            let at_x = view.m_u.atom_at(x, 0.0).map_or(0.0, |m| m.as_f64());
            check_hold(hold, i)?;
            Ok(Cell { up: (x - a) / (b - a), hold, mass: cm + cm_atoms, atom_hold: 2.0 * at_x * green(x) })
        }
    }
}

fn boundary_atom(view: &NaturalScaleView, x: f64) -> Result<f64> {
    match view.m_u.atom_at(x, 0.0) {
        None => Ok(0.0),
        Some(Mass::Finite(w)) => Ok(w),
        Some(Mass::Infinite) => Err(Error::Chain(format!("reflecting node {x} carries an infinite atom"))),
    }
}

fn check_hold(hold: f64, i: usize) -> Result<()> {
    if hold.is_finite() && hold > 0.0 {
        Ok(())
    } else {
        Err(Error::Chain(format!("expected holding time {hold} at node {i}")))
    }
}

/// Largest variance rate `1/mU_ac` sampled on `[lo, hi]`.
fn variance_rate(view: &NaturalScaleView, lo: f64, hi: f64) -> f64 {
    (0..=64)
        .map(|k| {
            let u = lo + (hi - lo) * k as f64 / 64.0;
            1.0 / view.m_u.ac_density(u)
        })
        .filter(|v| !v.is_nan())
        .fold(0.0, f64::max)
}

/// Window end for an inaccessible side: 3.5 standard deviations of `U_T` under the local variance bound.
fn truncation(view: &NaturalScaleView, e: Endpoint, horizon: f64) -> Result<f64> {
    let u0 = view.u0;
    let image = view.boundary(e).image;
    let sign = if e == Endpoint::Left { -1.0 } else { 1.0 };
    let mut width = 3.5 * horizon.sqrt();
    for _ in 0..4 {
        let far = u0 + sign * width;
        let far = if image.is_finite() { if sign < 0.0 { far.max(image) } else { far.min(image) } } else { far };
        let (lo, hi) = if sign < 0.0 { (far, u0) } else { (u0, far) };
        let v = variance_rate(view, lo, hi);
        if !v.is_finite() {
            return Err(Error::Chain("speed density vanishes near the start; cannot size the window".into()));
        }
        width = 3.5 * (horizon * v.max(1e-12)).sqrt();
    }
    let mut edge = u0 + sign * width;
    if image.is_finite() {
        let inner = image + 1e-3 * (u0 - image);
        edge = if sign < 0.0 { edge.max(inner) } else { edge.min(inner) };
    }
    Ok(edge)
}

/// Build a chain with about `n` cells on a piecewise-uniform grid.
///
/// The start, accessible boundaries, speed atoms, kinks and annotated points
/// are grid nodes. Inaccessible sides are truncated at a window wide enough
/// that a path leaves it with probability below about `10^-3`.
pub fn build_chain(view: &NaturalScaleView, n: usize, horizon: f64) -> Result<ChainModel> {
    if n < 16 {
        return Err(Error::Chain(format!("grid size {n} is below 16")));
    }
    let mut ends = [NodeRule::Exit; 2];
    let mut window = [0.0; 2];
    for e in [Endpoint::Left, Endpoint::Right] {
        let b = view.boundary(e);
        let k = e as usize;
        match b.behavior.kind {
            BoundaryKind::Inaccessible => window[k] = truncation(view, e, horizon)?,
            BoundaryKind::Absorbing => {
                window[k] = b.image;
                ends[k] = NodeRule::Absorb;
            }
            BoundaryKind::Reflecting => {
                window[k] = b.image;
                ends[k] = if e == Endpoint::Left { NodeRule::ReflectUp } else { NodeRule::ReflectDown };
            }
        }
    }
    let (lo, hi) = (window[0], window[1]);
    if !(lo <= view.u0 && view.u0 <= hi) || !(lo < hi) {
        return Err(Error::Chain("window does not contain the starting value".into()));
    }
    let mut anchors: Vec<f64> = vec![lo, hi, view.u0];
    anchors.extend(view.hints.iter().copied().filter(|&h| h > lo && h < hi));
    anchors.extend(view.m_u.atoms.iter().map(|a| a.point).filter(|&h| h > lo && h < hi));
    anchors.sort_by(f64::total_cmp);
    let min_gap = 1e-9 * (hi - lo);
    anchors.dedup_by(|a, b| (*a - *b).abs() <= min_gap);
    if anchors.len() > n / 2 {
        return Err(Error::Chain(format!("{} anchor points need a grid finer than {n}", anchors.len())));
    }
    let total = hi - lo;
    let mut grid = vec![anchors[0]];
    for w in anchors.windows(2) {
        let cells = ((n as f64) * (w[1] - w[0]) / total).round().max(1.0) as usize;
        for k in 1..=cells {
            grid.push(if k == cells { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / cells as f64 });
        }
    }
    let start = grid.iter().position(|&g| g == view.u0).unwrap_or_else(|| {
        grid.iter().enumerate().min_by(|a, b| (a.1 - view.u0).abs().total_cmp(&(b.1 - view.u0).abs())).map_or(0, |p| p.0)
    });
    ChainModel::from_grid(view, grid, ends, start, horizon)
}
