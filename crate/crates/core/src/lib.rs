pub mod cli;
pub mod error;
pub mod fluctstats;
pub mod groundstate;
pub mod lattice;
pub mod linalg;
pub mod manifold;
pub mod sampler;
pub mod schrodinger;
pub mod stats;

pub use error::{Error, Result};
