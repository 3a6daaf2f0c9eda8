use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances shared by the classifier and the integrability deciders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative tolerance for the algebraic identities of the NIP conditions.
    pub equality_rel: f64,
    /// Absolute floor under which both sides of an identity count as zero.
    pub equality_abs: f64,
    pub quad_rel: f64,
    pub quad_abs: f64,
    /// Relative tolerance of the nested quadrature inside `exp_integral` nodes.
    pub expr_quad_rel: f64,
    /// Sample count per zero-set component for the zero-set identity.
    pub zero_set_samples: usize,
    /// Sample count for comparing singular-continuous multipliers.
    pub sc_samples: usize,
    /// Generic windows used to probe local square integrability.
    pub generic_windows: usize,
    /// Atom locations closer than this are treated as the same point.
    pub atom_location: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            equality_rel: 1e-9,
            equality_abs: 1e-12,
            quad_rel: 1e-8,
            quad_abs: 1e-12,
            expr_quad_rel: 1e-10,
            zero_set_samples: 10_000,
            sc_samples: 512,
            generic_windows: 32,
            atom_location: 1e-12,
        }
    }
}

impl Tolerances {
    /// Apply a `key=value` override as used by the command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let float = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("tolerance `{key}`: `{value}` is not a number")))
        };
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("tolerance `{key}`: `{value}` is not a count")))
        };
        match key {
            "equality_rel" => self.equality_rel = float()?,
            "equality_abs" => self.equality_abs = float()?,
            "quad_rel" => self.quad_rel = float()?,
            "quad_abs" => self.quad_abs = float()?,
            "expr_quad_rel" => self.expr_quad_rel = float()?,
            "zero_set_samples" => self.zero_set_samples = count()?,
            "sc_samples" => self.sc_samples = count()?,
            "generic_windows" => self.generic_windows = count()?,
            "atom_location" => self.atom_location = float()?,
            _ => return Err(Error::Parse(format!("unknown tolerance key `{key}`"))),
        }
        Ok(())
    }

    /// `|lhs - rhs|` within the relative tolerance, with an absolute floor.
    pub fn approx_eq(&self, lhs: f64, rhs: f64) -> bool {
        let scale = lhs.abs().max(rhs.abs());
        let diff = (lhs - rhs).abs();
        diff <= self.equality_rel * scale || diff <= self.equality_abs
    }
}
