//! Stance classification of short social-media posts from three feature
//! modalities: TF-IDF text vectors, per-user label history, and random-walk
//! embeddings of the user reply network.
//!
//! The crate is organised as a pipeline:
//!
//! * [`ingest`] parses line-delimited tweet records into a [`Dataset`];
//!   [`synth`] generates controllable synthetic datasets.
//! * [`graph`] builds the undirected user reply graph and applies degree
//!   filtering.
//! * [`embed`] learns node embeddings (DeepWalk, Walklets) and a label
//!   propagation community baseline.
//! * [`features`] produces the text / history / embedding blocks.
//! * [`model`] is an L2-regularised logistic regression.
//! * [`eval`] holds temporal splitting, AUC/accuracy, the feature ablation,
//!   sliding-window AUC and the PCA/KDE exports.
//! * [`pipeline`] wires everything together from a [`PipelineConfig`].

pub mod embed;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod synth;
mod util;

pub use error::{Error, Result};
pub use ingest::{Dataset, RawLabel, StanceLabel, TweetRecord};
pub use pipeline::PipelineConfig;
