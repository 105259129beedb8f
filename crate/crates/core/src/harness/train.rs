use ndarray::{Array2, Axis};

use super::dataset::{augment_with, SyntheticDataset};
use super::loss::{batch_loss_grad, LossParams, LossVariant};
use super::selection::{
    cosine_similarity_matrix, different_class_ratio, normalize_rows, select_pairs, SelectionMatrix,
};
use crate::error::{Error, Result};
use crate::probe::{fit_linear_probe, DEFAULT_RIDGE};
use crate::rng::SeededRng;

/// Consecutive rising steps treated as divergence.
const DIVERGENCE_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Points per batch; each contributes two views.
    pub batch_size: usize,
    pub tau: f64,
    pub sigma: f64,
    pub rho: f64,
    pub pos_high: f64,
    pub pos_low: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Embedding width `m`; the input width comes from the dataset.
    pub embed_dims: usize,
    pub jitter: f64,
}

/// Tuned for the default `Experiment` (four classes in eight dimensions) on
/// seeds disjoint from the acceptance seeds. `embed_dims` below the input
/// width makes the encoder choose a subspace.
impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            tau: 0.5,
            sigma: 0.4,
            rho: 0.5,
            pos_high: 0.5,
            pos_low: 1.0,
            epochs: 60,
            learning_rate: 0.5,
            seed: 0,
            embed_dims: 4,
            jitter: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn loss_params(&self) -> LossParams {
        LossParams {
            tau: self.tau,
            sigma: self.sigma,
            rho: self.rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_params().validate()?;
        if !(0.0 <= self.pos_high && self.pos_high < self.pos_low && self.pos_low <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "0 <= pos_high < pos_low <= 1 violated (pos_high = {}, pos_low = {})",
                self.pos_high, self.pos_low
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidParams(format!(
                "batch_size >= 2 violated (batch_size = {})",
                self.batch_size
            )));
        }
        if self.embed_dims == 0 {
            return Err(Error::InvalidParams("embed_dims >= 1 violated".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "learning_rate > 0 violated (learning_rate = {})",
                self.learning_rate
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "jitter >= 0 violated (jitter = {})",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// Clean labelled sets for per-epoch linear probing: fit on `probe`,
/// score on `test`.
#[derive(Debug, Clone)]
pub struct EvalSets {
    pub probe: SyntheticDataset,
    pub test: SyntheticDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub probe_accuracy: Option<f64>,
    /// Mean over the epoch's batches with a non-empty selection; 0 if every
    /// selection was empty.
    pub diff_class_ratio: f64,
    pub selection_empty: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// `m × d` linear map.
    pub weights: Array2<f64>,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.metrics.last().and_then(|m| m.probe_accuracy)
    }
}

/// `N(0, 1/d)` entries.
pub fn init_weights(embed_dims: usize, input_dims: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeededRng::derived(seed, 0);
    let scale = 1.0 / (input_dims as f64).sqrt();
    Array2::from_shape_simple_fn((embed_dims, input_dims), || scale * rng.normal())
}

/// Row-normalized embeddings `z = Wx / ‖Wx‖`.
pub fn embed(weights: &Array2<f64>, points: &Array2<f64>) -> Result<Array2<f64>> {
    normalize_rows(&points.dot(&weights.t()))
}

#[derive(Debug, Clone)]
pub struct BatchStep {
    pub loss: f64,
    pub grad: Array2<f64>,
    pub selection: SelectionMatrix,
}

/// Loss and `dL/dW` for one batch of views (rows `2k`, `2k+1` paired).
/// The selection is computed from the pre-normalization features and held
/// fixed in the gradient.
pub fn batch_step(
    weights: &Array2<f64>,
    views: &Array2<f64>,
    config: &TrainConfig,
    variant: LossVariant,
) -> Result<BatchStep> {
    let h = views.dot(&weights.t());
    let selection = select_pairs(&cosine_similarity_matrix(&h)?, config.pos_high, config.pos_low)?;
    let (loss, grad) = batch_step_with(weights, views, &selection.p, config, variant)?;
    Ok(BatchStep { loss, grad, selection })
}

/// As [`batch_step`] with a given selection matrix.
pub fn batch_step_with(
    weights: &Array2<f64>,
    views: &Array2<f64>,
    p: &Array2<f64>,
    config: &TrainConfig,
    variant: LossVariant,
) -> Result<(f64, Array2<f64>)> {
    let h = views.dot(&weights.t());
    let z = normalize_rows(&h)?;
    let s = z.dot(&z.t());
    let (loss, ds) = batch_loss_grad(&s, p, variant, &config.loss_params())?;
    let dz = (&ds + &ds.t()).dot(&z);
    // Through z = h/‖h‖: dh = (I − z zᵀ) dz / ‖h‖.
    let mut dh = dz;
    for ((mut g, zi), hi) in dh.rows_mut().into_iter().zip(z.rows()).zip(h.rows()) {
        let norm = hi.dot(&hi).sqrt();
        let along = g.dot(&zi);
        g.scaled_add(-along, &zi);
        g /= norm;
    }
    Ok((loss, dh.t().dot(views)))
}

fn probe_accuracy(weights: &Array2<f64>, eval: &EvalSets) -> Result<f64> {
    let with_bias = |z: Array2<f64>| {
        let ones = Array2::ones((z.nrows(), 1));
        ndarray::concatenate(Axis(1), &[z.view(), ones.view()]).expect("matching row counts")
    };
    let fit_x = with_bias(embed(weights, &eval.probe.points)?);
    let probe = fit_linear_probe(&fit_x, &eval.probe.labels, eval.probe.classes, DEFAULT_RIDGE)?;
    let test_x = with_bias(embed(weights, &eval.test.points)?);
    let predicted = probe.predict(&test_x);
    let hits = predicted.iter().zip(&eval.test.labels).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / eval.test.len() as f64)
}

/// SGD on the chosen variant. Each epoch shuffles the points, drops the
/// incomplete tail batch, and draws two jittered views per point.
pub fn train(
    dataset: &SyntheticDataset,
    config: &TrainConfig,
    variant: LossVariant,
    eval: Option<&EvalSets>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.len() < config.batch_size {
        return Err(Error::InvalidParams(format!(
            "batch_size <= dataset size violated ({} > {})",
            config.batch_size,
            dataset.len()
        )));
    }
    let d = dataset.dims();
    let mut weights = init_weights(config.embed_dims, d, config.seed);
    let mut rng = SeededRng::derived(config.seed, 1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    let mut previous = f64::INFINITY;
    let mut rising = 0usize;
    let n = config.batch_size;

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut ratio_sum = 0.0;
        let mut ratio_batches = 0usize;
        let batches = dataset.len() / n;
        for batch in order.chunks_exact(n) {
            let mut views = Array2::zeros((2 * n, d));
            let mut labels = Vec::with_capacity(2 * n);
            for (k, &i) in batch.iter().enumerate() {
                let (a, b) = augment_with(dataset.points.row(i), config.jitter, &mut rng)?;
                views.row_mut(2 * k).assign(&a);
                views.row_mut(2 * k + 1).assign(&b);
                labels.extend([dataset.labels[i]; 2]);
            }
            let out = batch_step(&weights, &views, config, variant)?;
            step += 1;
            if !out.loss.is_finite() {
                return Err(Error::Diverged { step, loss: out.loss });
            }
            rising = if out.loss > previous { rising + 1 } else { 0 };
            if rising >= DIVERGENCE_WINDOW {
                return Err(Error::Diverged { step, loss: out.loss });
            }
            previous = out.loss;
            weights.scaled_add(-config.learning_rate, &out.grad);

            loss_sum += out.loss;
            let (ratio, empty) = different_class_ratio(&out.selection, &labels);
            if !empty {
                ratio_sum += ratio;
                ratio_batches += 1;
            }
        }
        let probe_accuracy = eval.map(|e| probe_accuracy(&weights, e)).transpose()?;
        metrics.push(EpochMetrics {
            epoch,
            loss: loss_sum / batches as f64,
            probe_accuracy,
            diff_class_ratio: if ratio_batches > 0 {
                ratio_sum / ratio_batches as f64
            } else {
                0.0
            },
            selection_empty: ratio_batches == 0,
        });
    }
    Ok(TrainOutcome { weights, metrics })
}
