//! Building-plan driven robot localization.
//!
//! The pipeline parses an architectural plan into prior wall and room layers,
//! globally localizes the robot with a room-aware particle filter over plane
//! observations, then tracks and refines the trajectory in a three-layer
//! situational graph. A deterministic simulator and benchmark harness drive
//! the whole chain end to end.

pub mod bench;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod mcl;
pub mod obslog;
pub mod plan;
pub mod registry;
pub mod rng;
pub mod sgraph;
pub mod sim;

pub use error::{Error, Result};
