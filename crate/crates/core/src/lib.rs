//! Byzantine-resilient gradient aggregation, attack injection and a
//! synchronous parameter-server SGD simulator.

pub mod aggregation;
pub mod analysis;
pub mod attacks;
pub mod batch;
pub mod error;
pub mod oracle;
pub mod rng;
pub mod training;

pub use aggregation::{AggregationOutput, AggregationRule};
pub use attacks::{AttackKind, AttackSpec, CorruptionMask, Placement};
pub use batch::GradientBatch;
pub use error::{Error, Result};
