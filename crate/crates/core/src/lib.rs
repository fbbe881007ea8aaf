//! Passive Wi-Fi micro-Doppler activity recognition.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`sim`] synthesizes reference/surveillance channel pairs for a person
//!    performing one of six activities.
//! 2. [`caf`] computes the batched cross ambiguity function and stacks Doppler
//!    slices into a time-Doppler spectrogram.
//! 3. [`align`] detects the motion, crops it and resamples it to a fixed
//!    51 × 50 signature in `[0, 1]`.
//! 4. [`pca`] reduces the 2550-dimensional signatures.
//! 5. [`sparse`] classifies by sparse representation, with [`svm`] as a
//!    linear baseline.
//!
//! [`experiment`] ties the stages together and [`io`] holds the file formats.

pub mod align;
pub mod caf;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod io;
pub mod label;
pub mod pca;
pub mod report;
pub mod sim;
pub mod sparse;
pub mod svm;

pub use align::{AlignConfig, AlignedSignature, DetectionBounds, WeightVector};
pub use caf::{CafConfig, CafSurface, DelaySelector, DopplerSpectrogram};
pub use dataset::{LabeledSample, Partition, SignatureDataset};
pub use error::{Error, Result};
pub use experiment::ExperimentConfig;
pub use label::{Channel, MotionClass};
pub use pca::PcaModel;
pub use report::ClassificationReport;
pub use sim::{ChannelPair, IqWaveform, MotionProfile, SceneConfig};
pub use sparse::{Dictionary, SparseCode};
pub use svm::{SvmModel, SvmParams};
