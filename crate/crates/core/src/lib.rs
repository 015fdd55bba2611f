//! Knowledge-graph completion: graph encoders, triple scorers, training and filtered ranking.

pub mod autodiff;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod run;
pub mod train;

pub use error::{KgcError, Result};
