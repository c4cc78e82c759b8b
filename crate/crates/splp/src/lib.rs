//! Solver library for the subset partition and labeling problem: jointly
//! select, label and partition part-detection candidates into per-person
//! poses by minimizing a binary linear program with lazy constraint
//! separation.
//!
//! The crate covers the full pipeline around the solver: pairwise
//! probability models (geometric features, histogram posteriors, logistic
//! regression), a seeded synthetic detector stand-in, pose-estimation
//! metrics (PCK/PCKh, AUC, PCP, mAP, AOP) and JSON fixtures tying the
//! stages together.

pub mod baseline;
pub mod constraints;
pub mod detections;
pub mod error;
pub mod io;
pub mod lp;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod pairwise;
pub mod par;
pub mod skeleton;
pub mod training;
pub mod solver;

pub use error::{Error, Result};
