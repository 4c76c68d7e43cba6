//! Action recognition from pose tracks in infrared video.
//!
//! The pipeline ingests per-frame pose tracks and motion magnitudes,
//! identifies the key actor in each sequence by motion, encodes poses in a
//! scale-invariant polar form, filters bad pose estimates with an
//! autoencoder, selects representative key-poses by deep embedded
//! clustering, assembles the key-pose crops into a bordered grid image, and
//! classifies the grids. A deterministic synthetic scene generator provides
//! end-to-end verification data.

pub mod classifier;
pub mod dec_cluster;
pub mod grid_builder;
pub mod motion_actor;
pub mod neural_core;
pub mod pipeline;
pub mod pose_data;
pub mod pose_encoding;
pub mod pose_filter;
pub mod synth_gen;
