//! Probabilistic dating of ice cores from a seasonal proxy series.
//!
//! The latent time at each sampled depth is a monotone Markov chain over a
//! lattice of `n_s` states per year. Inference is exact over the discrete
//! states (sparse forward-backward) and by maximum likelihood or mean-field
//! variational inference over the model parameters.

pub mod cli;
pub mod config;
pub mod cts;
pub mod error;
pub mod hier;
pub mod hmm;
pub mod inference;
pub mod io;
pub mod math;
pub mod pipeline;
pub mod series;
pub mod simulate;

pub use error::{Error, Result};
pub use series::DepthSeries;
