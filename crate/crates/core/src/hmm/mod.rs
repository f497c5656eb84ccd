//! Discrete-state HMM machinery for monotone depth-to-time chains.

pub mod chronology;
pub mod emission;
pub mod engine;
pub mod space;
pub mod stats;
pub mod transition;

pub use chronology::{layer_boundaries, Chronology, LayerBoundary, LayerReport, TimeSummary};
pub use emission::{emission_logdensity, EmissionMatrix, EmissionRow, ObservationParams};
pub use engine::{forward_backward, forward_loglik, ForwardPass, LogWindow, Posterior};
pub use space::StateSpace;
pub use transition::{Bidiagonal, StayProbabilities, Transitions};
