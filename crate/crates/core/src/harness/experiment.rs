use super::dataset::{make_dataset, SyntheticDataset};
use super::loss::LossVariant;
use super::train::{train, EvalSets, TrainConfig, TrainOutcome};
use crate::error::Result;

/// Seed offsets for the clean evaluation sets, so they never share a stream
/// with the training set of any nearby seed.
const PROBE_SET_OFFSET: u64 = 10_000;
const TEST_SET_OFFSET: u64 = 20_000;

/// Dataset shape for one synthetic training run. Evaluation sets are clean
/// (no mixing), drawn around the same class means.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub classes: usize,
    pub per_class: usize,
    pub dims: usize,
    pub separation: f64,
    pub mix_ratio: f64,
    pub eval_per_class: usize,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            classes: 4,
            per_class: 100,
            dims: 8,
            separation: 2.5,
            mix_ratio: 0.2,
            eval_per_class: 100,
        }
    }
}

impl Experiment {
    pub fn dataset(&self, seed: u64) -> Result<SyntheticDataset> {
        make_dataset(
            self.classes,
            self.per_class,
            self.dims,
            self.separation,
            self.mix_ratio,
            seed,
        )
    }

    pub fn eval_sets(&self, seed: u64) -> Result<EvalSets> {
        let clean = |offset: u64| {
            make_dataset(
                self.classes,
                self.eval_per_class,
                self.dims,
                self.separation,
                0.0,
                seed.wrapping_add(offset),
            )
        };
        Ok(EvalSets {
            probe: clean(PROBE_SET_OFFSET)?,
            test: clean(TEST_SET_OFFSET)?,
        })
    }

    /// Train on the seed's dataset; the config's own seed drives the
    /// encoder initialization and batching.
    pub fn run(&self, seed: u64, config: &TrainConfig, variant: LossVariant) -> Result<TrainOutcome> {
        let config = TrainConfig { seed, ..config.clone() };
        train(&self.dataset(seed)?, &config, variant, Some(&self.eval_sets(seed)?))
    }
}
