//! Trajectory similarity search over cellular location records.
//!
//! Records are cleaned ([`ingest`]), matched onto a road network
//! ([`mapmatch`]) as a ranked set of candidate routes, and compared with
//! time-aligned overlap similarity ([`simsearch`]). [`simulate`] builds
//! synthetic benchmark worlds with ground truth.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod roadnet;
pub mod ingest;
pub mod mapmatch;
pub mod simsearch;
pub mod simulate;
pub mod pipeline;
