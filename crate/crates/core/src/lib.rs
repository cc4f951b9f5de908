//! Cross-cultural driving-behavior transfer.
//!
//! Imitation of highway driving is split into a transferable driving
//! archetype (per-axis successor-feature networks) and a compact culture
//! vector. An archetype trained in one culture is recalibrated to another by
//! re-estimating only the culture vector from a small local sample.

pub mod dlirl;
pub mod featurize;
pub mod metrics;
pub mod rollout;
pub mod synth;
pub mod trajectory;
