//! Online tracking-by-detection for image-space (2D) and world-space (3D)
//! boxes.
//!
//! A [`tracker::Tracker`] consumes one frame of detections at a time, runs a
//! constant-velocity Kalman prediction for every live track, associates
//! detections in three gated stages and emits the associated tracks. The
//! [`evaluation`] module scores tracker output with CLEAR-MOT and
//! [`simulation`] generates synthetic sequences to drive both.

pub mod assignment;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod simulation;
pub mod tracker;

pub use error::{Error, Result};
pub use model::{
    normalize_heading, BoundingBox, Box2D, Box3D, Camera, ClassConfig, ClassTable, Detection, Embedding,
    Mode, ObjectClass,
};
pub use config::ConfigFile;
pub use tracker::{FrameResult, Tracker, TrackerConfig};
