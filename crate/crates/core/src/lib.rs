//! Two-lane obstacle scenario: IDM/MOBIL traffic coupled with a broadcast
//! radio and epidemic warning dissemination.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dissemination;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod output;
pub mod presets;
pub mod radio;
pub mod sweep;
pub mod traffic;
