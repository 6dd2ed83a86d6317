//! IR drop workbench for small power-delivery networks.
//!
//! The crate covers the whole desk-scale pipeline: synthetic layout
//! generation, a ground-truth conductance solver for dynamic IR drop,
//! construction of the directed PDN graph, a reverse-mode tensor engine,
//! the dual-branch GNN-CNN predictor, training, and the metric suite.

// negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN
// where `x <= 0.0` would quietly accept it
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod io;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod numfmt;
pub mod oracle;
pub mod pdngraph;
pub mod solver;
pub mod train;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
