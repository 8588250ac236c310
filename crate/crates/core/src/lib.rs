//! Core algorithms for multichannel-audio active speaker detection and
//! localization.
//!
//! The crate is `no_std` (with `alloc`) and holds every pure computation of
//! the toolkit: array geometry and scene synthesis, spatial feature
//! extraction (GCC-PHAT, SALSA-Lite, log-mel stacks), supervision fusion, the
//! CRNN student network with its masked loss and reverse-mode gradients, and
//! the detection/localization metrics. File formats, configuration and the
//! command line live in the `asdl` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod fft;
pub mod geometry;
pub mod model;
pub mod rng;
pub mod sim;
pub mod supervision;
pub mod synthetic;

pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureTensor, NormStats, StftConfig};
pub use geometry::{ArrayGeometry, CameraModel};
pub use model::{CrnnConfig, CrnnParams, Prediction, Variant};
pub use sim::{MultichannelClip, SceneSpec};
pub use supervision::{LabelTrack, SupervisionConfig, TrainingTarget, VaTrack};
