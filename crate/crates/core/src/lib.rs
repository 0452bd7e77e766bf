//! Joint optimization of RF beacon placement and neural signal-strength
//! localization.
//!
//! The library simulates received-signal-strength measurements in a 2D floor
//! plan (path loss, wall attenuation, same-channel interference, sensor noise
//! and saturation), trains an inference network on those measurements, and
//! relaxes the discrete beacon placement/channel assignment into a
//! temperature-annealed softmax so that placement and inference can be
//! optimized together by plain SGD on a from-scratch reverse-mode tape.
//!
//! Modules follow the pipeline: [`geometry`] (maps), [`propagation`]
//! (measurement model), [`tape`]/[`tensor`] (autodiff), [`allocation`]
//! (relaxed and hard placements, schedules), [`inference`] (the network),
//! [`trainer`] (the joint loop), [`baselines`] (kNN and handcrafted
//! placements), [`evaluation`] (metrics and heatmaps).

pub mod allocation;
pub mod baselines;
pub mod checkpoint;
pub mod evaluation;
pub mod geometry;
pub mod inference;
pub mod propagation;
pub mod seeding;
pub mod selfcheck;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use geometry::{EnvironmentMap, Point, Segment};
pub use tensor::Tensor;
