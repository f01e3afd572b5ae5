//! Lane-change prediction tooling for highD-format highway recordings.
//!
//! The crate covers the full offline loop:
//!
//! * [`recording`] loads highD CSV files and maps kinematics into a
//!   target-centric, driving-aligned frame.
//! * [`scene`] detects lane changes, assigns the eight surrounding-vehicle
//!   slots and builds [`scene::SceneSnapshot`] samples; [`sampling`] draws
//!   stratified, seed-deterministic datasets from them.
//! * [`cot`] attaches rule-based reasoning annotations (notable features and
//!   a potential behavior).
//! * [`codec`] renders snapshots into chat prompts and Llama-2 training text,
//!   and parses model output back into a [`codec::PredictionRecord`].
//! * [`predict`] runs a deterministic rule-based baseline or a remote
//!   chat-completions model.
//! * [`eval`] computes intention precision/recall/F1, trajectory RMSE, CoT
//!   scores and failed-case counts, and renders reports.
//! * [`safety`] generates the synthetic safety-critical scenario grids.

pub mod archive;
pub mod codec;
pub mod cot;
pub mod error;
pub mod eval;
pub mod predict;
pub mod recording;
pub mod safety;
pub mod sampling;
pub mod scene;
pub mod synthetic;

pub use error::{Error, Result};
