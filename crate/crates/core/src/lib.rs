//! Outage labeling by frequency simulation, UFLS estimators (a model tree
//! with logistic splits, and a Tobit model) and their MILP encodings.

// `!(a > b)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod island;
pub mod linear;
pub mod milp;
pub mod model_io;
pub mod par;
pub mod pipeline;
pub mod scenario;
pub mod sfr;
pub mod tobit;
pub mod tree;
