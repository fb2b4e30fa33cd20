//! Evolving interpretable synaptic plasticity rules with Cartesian genetic
//! programming.
//!
//! A rule is a kernel `f(w, x, y)` over the local weight, presynaptic and
//! postsynaptic activity. Rules are trained online on the linear neuron
//! `y = w · x` and scored by how well the weight vector tracks the first
//! principal component of Gaussian inputs.

pub mod analysis;
pub mod cgp;
pub mod error;
pub mod evolve;
pub mod fitness;
pub mod plasticity;
pub mod seed;
pub mod tasks;

pub use error::{Error, Result};
