//! Document triage: enhancement, text detection, recognition hooks and
//! zero-shot classification, with a CLI, an HTTP service and dataset
//! evaluation on top of `textriage-core`.

pub mod annotations;
pub mod backends;
pub mod config;
pub mod eval;
pub mod io;
pub mod live;
pub mod pipeline;
pub mod service;
pub mod sidecar;
pub mod synth;
