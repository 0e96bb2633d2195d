//! Deterministic synthesis of procedural multiple-choice questions about how
//! objects move in 3D over time, from per-video 4D scene annotations.
//!
//! The pipeline runs bottom-up: [`geometry`] and [`viewpoint`] resolve
//! observer frames, [`attributes`] turns a scene into per-timestamp series,
//! [`answers`] classifies and segments those series into answer sequences,
//! and [`qa`] assembles complete items. [`synth`] generates scenes with
//! analytically known answers and [`eval`] scores model predictions.

pub mod answers;
pub mod attributes;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod lifting;
pub mod qa;
pub mod sampling;
pub mod scene;
pub mod synth;
pub mod templates;
pub mod viewpoint;
