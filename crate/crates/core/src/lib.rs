//! Search-based selection of high-order metamorphic relations for neural
//! classifiers.
//!
//! A high-order metamorphic relation (HMR) is a chain of elementary image
//! transformations applied as one. This crate evolves small sets of such
//! chains against a dense classifier, scoring each set on neuron coverage,
//! activation-path similarity and kill ratio, and rejecting sets whose
//! Monte-Carlo dropout certainty profile falls below a validity bound built
//! from sound and noise data.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! reporting live in the companion `hmrsel` crate.

#![no_std]
#![warn(rust_2018_idioms, unused_qualifications)]
// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod search;
pub mod stats;
pub mod synth;
pub mod transforms;
pub mod uncertainty;

pub use error::{Error, Result};
pub use image::{ImageTensor, LabeledDataset};
pub use metrics::{CoverageConfig, CoverageCriterion, ObjectiveVector};
pub use model::{ActivationTrace, MlpModel};
pub use search::{Individual, SearchConfig};
pub use transforms::{BoundsTable, HmrChain, TransformKind, TransformSpec};
pub use uncertainty::{CertaintyProfile, ThresholdGrid, ValidityBound};
