//! Refined instrumental-variable identification of sampled linear systems in
//! DT, CT and adapted DT parametrizations.

pub mod error;
pub mod estimators;
pub mod filtering;
pub mod linalg;
pub mod lti;
pub mod poly;
pub mod sampling;
pub mod simulation;

pub use error::{Error, Result};
pub use lti::{CtModel, Domain, DtModel, NoiseModel, Rational, StateSpace, TransferFunction};
pub use poly::Poly;
pub use sampling::AdaptedDtModel;
