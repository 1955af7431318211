//! Tree and classic dyadic models of the turbulent energy cascade.
//!
//! The tree model evolves intensities `X_j` on a complete `N`-ary tree,
//!
//! ```text
//! dX_j/dt = −ν 2^{γ|j|} X_j + 2^{α|j|} X_parent² − Σ_{k child of j} 2^{α(|j|+1)} X_j X_k
//! ```
//!
//! with the root's parent replaced by the forcing `f`. The classic model is the
//! special case of one child per node. See [`dynamics`] for integration and energy
//! diagnostics, [`lift`] for the classic-to-tree map, [`stationary`] for stationary
//! solutions and [`selfsimilar`] for solutions of the form `a_j / (t − t0)`.

pub mod dynamics;
pub mod error;
pub mod lift;
pub mod params;
pub mod selfsimilar;
mod shooting;
pub mod state;
pub mod stationary;
pub mod sum;
pub mod tree;

pub use error::{Error, Result};
pub use params::{pow2, BranchingMode, ModelParams};
pub use state::{ClassicState, TreeState};
pub use tree::{node_count, parent, NodeId, TreeShape};
