//! Record fusion: pick the true value of every attribute of every entity from
//! conflicting duplicate records, using a stagewise-trained softmax classifier
//! over attribute-, record- and dataset-level cell features.

pub mod augment;
pub mod candidates;
pub mod constraints;
pub mod dataset;
pub mod embeddings;
pub mod eval;
pub mod error;
pub mod features;
pub mod inference;
pub mod io;
pub mod learner;

pub use candidates::{build_candidate_sets, weak_labels, CandidateSet, Candidates};
pub use dataset::{Assignment, FusionDataset, GroundTruth};
pub use error::{FusionError, Result};
pub use features::{FeatureConfig, FeatureModel};
pub use learner::{FusionModel, TrainConfig};
