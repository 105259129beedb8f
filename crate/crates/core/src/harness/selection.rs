use ndarray::Array2;

use crate::error::{Error, Result};

/// Row-normalized Gram matrix.
pub fn cosine_similarity_matrix(embeddings: &Array2<f64>) -> Result<Array2<f64>> {
    let z = normalize_rows(embeddings)?;
    Ok(z.dot(&z.t()))
}

pub(crate) fn normalize_rows(embeddings: &Array2<f64>) -> Result<Array2<f64>> {
    let mut z = embeddings.clone();
    for (i, mut row) in z.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Degenerate(format!("row {i} has zero norm")));
        }
        row /= norm;
    }
    Ok(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMatrix {
    /// `p_ij ∈ {0, 1}`, zero diagonal.
    pub p: Array2<f64>,
    pub sim_pos_high: f64,
    pub sim_pos_low: f64,
    pub pos_high: f64,
    pub pos_low: f64,
}

impl SelectionMatrix {
    pub fn selected_count(&self) -> usize {
        self.p.iter().filter(|&&x| x > 0.0).count()
    }
}

fn check_fractions(pos_high: f64, pos_low: f64) -> Result<()> {
    if !(0.0 <= pos_high && pos_high <= pos_low && pos_low <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "0 <= pos_high <= pos_low <= 1 violated (pos_high = {pos_high}, pos_low = {pos_low})"
        )));
    }
    Ok(())
}

/// Thresholds `(Sim_posHigh, Sim_posLow)`: with the values sorted
/// descending, the element at `floor(pos · (count - 1))`.
pub fn percentile_thresholds(values: &[f64], pos_high: f64, pos_low: f64) -> Result<(f64, f64)> {
    check_fractions(pos_high, pos_low)?;
    if values.is_empty() {
        return Err(Error::Degenerate("no similarities to threshold".into()));
    }
    let mut sorted = values.to_vec();
    // Stable sort: ties keep their input order.
    sorted.sort_by(|a, b| b.total_cmp(a));
    let last = (sorted.len() - 1) as f64;
    let at = |pos: f64| sorted[(pos * last).floor() as usize];
    Ok((at(pos_high), at(pos_low)))
}

/// `p_ij = 1` iff `Sim_posLow ≤ s_ij < Sim_posHigh`, over the off-diagonal
/// entries taken in row-major order.
pub fn select_pairs(s: &Array2<f64>, pos_high: f64, pos_low: f64) -> Result<SelectionMatrix> {
    let n = s.nrows();
    let off: Vec<f64> = s.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, &v)| v).collect();
    let (hi, lo) = percentile_thresholds(&off, pos_high, pos_low)?;
    let p = Array2::from_shape_fn((n, n), |(i, j)| {
        let v = s[[i, j]];
        if i != j && lo <= v && v < hi {
            1.0
        } else {
            0.0
        }
    });
    Ok(SelectionMatrix {
        p,
        sim_pos_high: hi,
        sim_pos_low: lo,
        pos_high,
        pos_low,
    })
}

/// Fraction of selected pairs whose labels differ, and whether the
/// selection was empty (ratio 0 by convention).
pub fn different_class_ratio(selection: &SelectionMatrix, labels: &[usize]) -> (f64, bool) {
    let mut selected = 0usize;
    let mut differ = 0usize;
    for ((i, j), &p) in selection.p.indexed_iter() {
        if p > 0.0 {
            selected += 1;
            if labels[i] != labels[j] {
                differ += 1;
            }
        }
    }
    if selected == 0 {
        (0.0, true)
    } else {
        (differ as f64 / selected as f64, false)
    }
}
