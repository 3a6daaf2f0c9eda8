//! Real functions and measures: expressions, monotone inversion,
//! pushforwards, Lebesgue decompositions and integrability deciders.

pub mod expr;
pub mod integrability;
pub mod measure;
pub mod piece;
pub mod quad;

pub use expr::{Expr, Jet};
pub use integrability::{
    decide_integrable, decide_l2_local, decide_weighted_l2_boundary, IntegrabilityStatus,
    IntegrabilityVerdict, LocalBehavior, Method, Side,
};
pub use measure::{second_derivative_decomposition, Atom, DecomposedMeasure, FnHandle, Mass, ScPart};
pub use piece::SmoothPiece1D;
pub use quad::{integrate, QuadOptions, QuadResult};
