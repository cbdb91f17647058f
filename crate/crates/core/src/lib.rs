// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod heat_kernels;
pub mod rng;
pub mod lcp;
pub mod local_times;
pub mod potentials;
pub mod quadrature;
pub mod samplers;
pub mod stats;
pub mod reflected_spde;
pub mod harness;
