//! Biased random derangements as inhomogeneous Markov chains on 0/1 words,
//! the generalized Feller coupling that produces them by conditioning or by
//! erasing adjacent 1s, and exact evaluation of their moment and limit
//! formulas, with enumeration oracles and Monte Carlo diagnostics.

pub mod chains;
pub mod coupling;
pub mod dist;
pub mod error;
pub mod limitchain;
pub mod moments;
pub mod montecarlo;
pub mod numerics;
pub mod oracle;
pub mod params;
pub mod signed_stats;

pub use chains::{ChainKind, ChainWord, CycleType, PreparedChain};
pub use dist::DistTable;
pub use error::{Error, Result};
pub use numerics::AccuracySpec;
pub use params::{PSequence, TailRule, ThetaSequence};

/// Library version, echoed in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
