//! Exact information measures over finite alphabets.
//!
//! Everything here works on explicit probability tables: [`Pmf`],
//! [`ConditionalPmf`] and [`JointPmf`]. Results are in bits.
//!
//! Beyond the textbook measures the crate carries the calculus used to judge
//! a lossy code against a task:
//!
//! - [`query`]: queries as answer tables and the expected divergence between
//!   answers on the data and on a reconstruction;
//! - [`sufficiency_gap`] / [`superfluousness_gap`]: `I(X;Q|Z)` and `I(X;Z|Q)`;
//! - [`bounds`]: the decomposition of the expected complexity into mutual
//!   information plus a marginal KL term, and the multiview query equality;
//! - [`battery`]: a seeded randomized check of all of the above.

pub mod battery;
pub mod bounds;
pub mod dist;
pub mod error;
pub mod measures;
pub mod query;

pub use bounds::{complexity_bound_check, multiview_query_check, ComplexityBound, MultiviewInfo};
pub use dist::{ConditionalPmf, JointPmf, Pmf, MASS_TOLERANCE};
pub use error::{InfoError, Result};
pub use measures::{
    conditional_mutual_information, entropy, kl_divergence, mutual_information,
    sufficiency_gap, superfluousness_gap, superfluousness_identity_residual, total_variation,
};
pub use query::{abstraction_goodness, weighted_goodness, Divergence, QuerySpec};
