//! Measurement data model, KPIs, trace synthesis, multi-connectivity
//! policies and their trace-driven replay.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod kpi;
pub mod policy;
pub mod probe;
pub mod replay;
pub mod synth;
pub mod trace;
