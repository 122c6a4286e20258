//! Interpretable, per-community moderation classifiers and the criteria
//! score matrix built from them.
//!
//! The toolkit trains one partition-trained classifier (PAT) per community
//! from historical moderation decisions, scores short lexical spans with
//! calibrated probabilities, harvests an n-gram vocabulary of candidate
//! criteria, and assembles a terms-by-communities score matrix that can be
//! clustered, audited, and compared across communities.
//!
//! The pipeline, end to end:
//!
//! 1. [`corpus`] — ingest labelled comments, build balanced per-community
//!    train/test datasets (or generate synthetic planted-keyword corpora).
//! 2. [`partition`] — the random bipartite split used during training.
//! 3. [`pat`] — train the dual-pass shared-encoder classifier and a
//!    full-text baseline; manage checkpoints.
//! 4. [`scoring`] — calibrated span scores plus the bipartite and window
//!    whole-text inference modes.
//! 5. [`vocab`] — harvest high-scoring spans and select the shared n-gram
//!    vocabulary.
//! 6. [`matrix`] — score every term with every community model into the
//!    criteria matrix; persist, query, and rank divergent terms.
//! 7. [`analysis`] — correlation clustering with silhouette, cluster
//!    summaries, keyword and probe audits, tolerance profiles.
//! 8. [`eval`] — the F1/AUC evaluation harness over per-community test
//!    sets, with pluggable judgment providers including a chat-completion
//!    client that scores by answer-token probability.

pub mod analysis;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod hashing;
pub mod matrix;
pub mod partition;
pub mod pat;
pub mod scoring;
pub mod vocab;

pub use corpus::{CommentRecord, CommunityDataset, Label};
pub use matrix::CriteriaMatrix;
pub use pat::{PatModel, TrainConfig};
pub use scoring::SpanScore;
pub use vocab::TermVocabulary;
