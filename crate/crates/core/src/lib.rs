//! Activity-mode decomposition of crowd trajectories.
//!
//! Space, time and speed are modelled by three coupled hierarchical
//! Dirichlet processes and fitted with a Gibbs sampler over restaurant
//! seatings. The fitted posterior drives trajectory classification, anomaly
//! scoring, dataset comparison metrics and simulation guidance.

pub mod analysis;
pub mod codebook;
pub mod crf;
pub mod crfl;
pub mod error;
pub mod fit;
pub mod guidance;
pub mod hyper;
pub mod io;
pub mod metrics;
pub mod posterior;
pub mod slab;
pub mod stats;
pub mod trajectory;
pub mod util;

pub use error::{Error, Result};
