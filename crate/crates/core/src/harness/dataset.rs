use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Range of the own-point weight in a boundary mixture.
pub const MIX_WEIGHT: (f64, f64) = (0.4, 0.6);

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    /// One point per row, class-major.
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
    pub difficult_mask: Vec<bool>,
    pub mix_ratio: f64,
    pub classes: usize,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.points.ncols()
    }
}

/// Gaussian clusters with unit noise around `separation · e_c`. In each
/// class `round(mix_ratio · per_class)` points are replaced by
/// `λ x + (1-λ) x'` with `x'` drawn from another class and
/// `λ ~ U[0.4, 0.6]`; they keep their own label and are flagged difficult.
pub fn make_dataset(
    classes: usize,
    per_class: usize,
    d: usize,
    separation: f64,
    mix_ratio: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    if classes < 2 {
        return Err(Error::InvalidParams("classes >= 2 violated".into()));
    }
    if d < classes {
        return Err(Error::InvalidParams(format!(
            "dims >= classes violated (dims = {d}, classes = {classes}): class means sit on coordinate axes"
        )));
    }
    if !(0.0..1.0).contains(&mix_ratio) {
        return Err(Error::InvalidParams(format!(
            "0 <= mix_ratio < 1 violated (mix_ratio = {mix_ratio})"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let total = classes * per_class;
    let mut base = Array2::from_shape_simple_fn((total, d), || rng.normal());
    let labels: Vec<usize> = (0..total).map(|i| i / per_class).collect();
    for (i, &c) in labels.iter().enumerate() {
        base[[i, c]] += separation;
    }

    let mut points = base.clone();
    let mut difficult_mask = vec![false; total];
    let mixed = (mix_ratio * per_class as f64).round() as usize;
    for c in 0..classes {
        for local in rng.sample_indices(per_class, mixed) {
            let i = c * per_class + local;
            let other = (c + 1 + rng.below(classes - 1)) % classes;
            let j = other * per_class + rng.below(per_class);
            let lambda = rng.uniform_range(MIX_WEIGHT.0, MIX_WEIGHT.1);
            let row = &base.row(i) * lambda + &base.row(j) * (1.0 - lambda);
            points.row_mut(i).assign(&row);
            difficult_mask[i] = true;
        }
    }
    Ok(SyntheticDataset {
        points,
        labels,
        difficult_mask,
        mix_ratio,
        classes,
    })
}

/// Two independent Gaussian-jitter views of `point`.
pub fn augment(point: ArrayView1<f64>, jitter: f64, seed: u64) -> Result<(Array1<f64>, Array1<f64>)> {
    let mut rng = SeededRng::new(seed);
    augment_with(point, jitter, &mut rng)
}

pub(crate) fn augment_with(
    point: ArrayView1<f64>,
    jitter: f64,
    rng: &mut SeededRng,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if !(jitter >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "jitter >= 0 violated (jitter = {jitter})"
        )));
    }
    let a = point.mapv(|x| x + jitter * rng.normal());
    let b = point.mapv(|x| x + jitter * rng.normal());
    Ok((a, b))
}
