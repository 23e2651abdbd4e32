//! Bifurcation identification on synthetic Circle-of-Willis phantoms.
//!
//! The crate covers the whole experiment chain:
//!
//! - [`phantom`]: labeled vascular trees with anatomical variability, rasterized into volumes.
//! - [`vesselgraph`]: segmentation, thinning, centerline graphs and bifurcation collection.
//! - [`geomfeat`]: the 61-slot geometric descriptor of a bifurcation.
//! - [`dimred`]: PCA, LDA and Isomap.
//! - [`classify`]: DT, RF, NB, QDA, SVM and MLP classifiers over the 14 classes.
//! - [`cae`]: a 3D convolutional autoencoder whose encoder turns patches into features.
//! - [`eval`]: balancing, stratified cross-validation, metrics and reports.
//! - [`experiment`]: configuration and stage orchestration used by the CLI.

pub mod cae;
pub mod classify;
pub mod dimred;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geomfeat;
pub mod label;
pub mod linalg;
pub mod phantom;
pub mod rng;
pub mod vesselgraph;
pub mod volume;

pub use error::{Error, ErrorCategory, Result};
pub use label::ClassLabel;
