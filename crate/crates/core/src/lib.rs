//! Event-driven two-stage non-intrusive load monitoring (NILM).
//!
//! This crate disaggregates a single aggregate household power stream into
//! per-appliance state trajectories. The pipeline is event-driven throughout:
//!
//! 1. [`events`] segments the stream into steady periods and transient
//!    periods, emitting one event (start, spike, end) per transition.
//! 2. [`signatures`] turns each event into a transient-signature record: DTS
//!    (spike minus previous steady mean) and DSP (steady-mean change across
//!    the transient), plus steady-state power (SSP) per steady period.
//! 3. [`clustering`] finds each appliance's state count and state levels from
//!    steady-segment means with a power-dependent-bandwidth mean shift.
//! 4. [`training`] fits a sparse per-appliance hidden Markov model: Gaussian
//!    SSP emissions per state, Gaussian DTS/DSP signatures per observed
//!    transition edge, and row-stochastic edge probabilities.
//! 5. [`inference`] runs the two-stage disaggregator over a household of
//!    appliance models: stage 1 ranks direction-matching transition
//!    candidates by transient-signature log-likelihood, stage 2 confirms the
//!    tentative joint state against the aggregate steady level within a
//!    confidence bound, walking down the ranking until a candidate passes.
//! 6. [`edgecloud`] splits the pipeline across a TCP boundary: an edge agent
//!    runs detection and extraction and streams compact signature messages;
//!    a cloud service holds the models and answers with assignments.
//!
//! [`synth`] generates archetype-based appliance traces for testing and
//! benchmarking, and [`metrics`] scores disaggregation output.

pub mod clustering;
pub mod edgecloud;
mod error;
pub mod events;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod signatures;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
