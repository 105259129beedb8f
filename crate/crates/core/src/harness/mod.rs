//! Synthetic InfoNCE training harness: a boundary-mixing dataset, the
//! percentile selection of difficult pairs, the five loss variants and a
//! linear-encoder training loop.

pub mod dataset;
pub mod experiment;
pub mod loss;
pub mod selection;
pub mod train;

pub use dataset::{augment, make_dataset, SyntheticDataset};
pub use experiment::Experiment;
pub use loss::{batch_loss, batch_loss_grad, pair_loss, LossParams, LossVariant};
pub use selection::{cosine_similarity_matrix, different_class_ratio, select_pairs, SelectionMatrix};
pub use train::{embed, train, EpochMetrics, EvalSets, TrainConfig, TrainOutcome};
