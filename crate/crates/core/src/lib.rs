//! Numerical laboratory for central limit theorems of `m`-dependent arrays
//! under sub-linear expectations.

pub mod blocking;
pub mod conditions;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod functional;
pub mod gnormal;
pub mod laws;
pub mod mdep;
pub mod model;

pub use engine::{Engine, EvalResult, Norming};
pub use error::{Error, Result};
pub use functional::{Functional, Growth};
pub use laws::{AmbiguitySet, DiscreteLaw, Event, MomentSummary};
pub use model::{ModelKind, SequenceModel};
