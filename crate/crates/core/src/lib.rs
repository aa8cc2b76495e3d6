//! Error-slice discovery for text classifiers.
//!
//! The pipeline takes an evaluation set with per-example loss and
//! embeddings, keeps the high-loss tail ([`slicing`]), groups it with
//! k-means++ ([`clustering`]), summarizes every group as an explanation
//! message ([`explanation`]) and names it with a completion model
//! ([`labeling`]). [`stability`] measures how much those summaries move when
//! a few input points change.

pub mod analytics;
pub mod clustering;
pub mod explanation;
pub mod io;
pub mod labeling;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod slicing;
pub mod stability;
pub mod store;

pub use clustering::{cluster_slice, default_k, subcluster, ClusteringError, KMeansConfig};
pub use explanation::{build_explanation_tuple, dmax, pair_distance, ExplanationError};
pub use io::{load_dataset, write_dataset, IngestError};
pub use labeling::{label_all, label_cluster, ClusterLabel, LabelingClient, PromptSpec, StubClient};
pub use model::{
    message_vector, validate_dataset, Clustering, Dataset, ErrorType, EvalSlice, ExplanationMessage,
    ExplanationTuple, KMeansFit, Provenance, Record, SizeMode, Violation,
};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineOutput};
pub use slicing::{partition_error_types, slice_by_quantile, SlicingError};
pub use store::{RunArtifact, RunStore, StoreError};
