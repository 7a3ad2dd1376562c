//! Numerical Calderón projections for first-order elliptic operators on the
//! cylinder `[0, L] × S¹`.
//!
//! Fields are discretized by Fourier modes in θ and Chebyshev collocation in
//! `x`. The invertible double of an operator yields its Calderón projection
//! `C₊`, which the [`analysis`] module checks against projection identities,
//! sectorial projections of the tangential operator, symplectic structure and
//! continuity under parameter changes. [`oracle`] supplies independent
//! mode-by-mode references from the matrix exponential.
//!
//! Every numerical type is generic over the working precision `R: Real`
//! (`f32` or `f64`); the aliases below fix `R`.

pub mod error;
pub mod scalar;
pub mod linalg;
pub mod geometry;
pub mod operator;
pub mod sectorial;
pub mod double;
pub mod pipeline;
pub mod analysis;
pub mod oracle;
pub mod cli;

pub use error::{Error, Result};

pub type Discretization64 = geometry::Discretization<f64>;
pub type Discretization32 = geometry::Discretization<f32>;
pub type Operator64 = operator::Operator<f64>;
pub type Operator32 = operator::Operator<f32>;
pub type AssembledOperator64 = operator::AssembledOperator<f64>;
pub type AssembledOperator32 = operator::AssembledOperator<f32>;
pub type DoubleOperator64 = double::DoubleOperator<f64>;
pub type DoubleOperator32 = double::DoubleOperator<f32>;
pub type CalderonBundle64 = double::CalderonBundle<f64>;
pub type CalderonBundle32 = double::CalderonBundle<f32>;
pub type Pipeline64 = pipeline::Pipeline<f64>;
pub type Pipeline32 = pipeline::Pipeline<f32>;
pub type SectorialContour64 = sectorial::SectorialContour<f64>;
pub type SectorialContour32 = sectorial::SectorialContour<f32>;
