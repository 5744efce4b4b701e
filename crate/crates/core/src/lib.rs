//! Core library for pediatric obesity-risk prediction: FHIR ingest, feature
//! vocabulary, CDC growth references, time-binned sequencing, the recurrent
//! risk model, training/evaluation, and a synthetic cohort generator.

pub mod eval;
pub mod fhir;
pub mod growth;
pub mod model;
pub mod record;
pub mod registry;
pub mod predict;
pub mod sequence;
pub mod synth;
