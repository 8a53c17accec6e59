//! Pose-to-verdict engine for foil fencing.
//!
//! The pipeline runs per fencer: pose tracks are filtered and smoothed
//! ([`tracker`]), converted to kinematic descriptors ([`features`]), classified
//! by a compact transformer encoder ([`mdt`]) and decoded into timed actions
//! ([`windowing`]). The two fencers' timelines are then aligned and judged by
//! the right-of-way engine ([`referee`]).

pub mod annotations;
pub mod calib;
pub mod config;
pub mod error;
pub mod experiment;
pub mod features;
pub mod mdt;
pub mod pose;
pub mod referee;
pub mod synth;
pub mod timeline;
pub mod tracker;
pub mod types;
pub mod windowing;

pub use error::{Error, Result};
