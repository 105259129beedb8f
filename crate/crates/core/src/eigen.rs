//! Dense symmetric eigensolver: Householder reduction to tridiagonal form
//! followed by the implicit-shift QL iteration (the EISPACK `tred2`/`tql2`
//! pair). Storage is column-major so the inner loops run over contiguous
//! memory.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Inputs whose largest `|a_ij - a_ji|` exceeds this are rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

const MAX_SWEEPS_PER_VALUE: usize = 60;

pub fn max_asymmetry(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

pub fn check_symmetric(a: &Array2<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOLERANCE || asym.is_nan() {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
            tolerance: SYMMETRY_TOLERANCE,
        });
    }
    Ok(())
}

/// All eigenvalues, sorted descending.
pub fn eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    let mut work = Tridiagonal::reduce(a, false);
    work.ql(false)?;
    let mut values = work.d;
    values.reverse();
    Ok(values)
}

/// Eigenvalues sorted descending with the matching unit eigenvectors as the
/// columns of the returned matrix.
pub fn eigh(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    check_symmetric(a)?;
    let n = a.nrows();
    let mut work = Tridiagonal::reduce(a, true);
    work.ql(true)?;
    let mut values = work.d.clone();
    values.reverse();
    let vectors = Array2::from_shape_fn((n, n), |(row, col)| work.v[(n - 1 - col) * n + row]);
    Ok((values, vectors))
}

struct Tridiagonal {
    n: usize,
    d: Vec<f64>,
    e: Vec<f64>,
    /// Column-major `n x n`: entry `(row, col)` lives at `col * n + row`.
    v: Vec<f64>,
}

impl Tridiagonal {
    fn reduce(a: &Array2<f64>, accumulate: bool) -> Self {
        let n = a.nrows();
        // Symmetrize defensively; the input passed the tolerance check.
        let mut v = vec![0.0; n * n];
        for col in 0..n {
            for row in 0..n {
                v[col * n + row] = 0.5 * (a[[row, col]] + a[[col, row]]);
            }
        }
        let mut t = Self {
            n,
            d: vec![0.0; n],
            e: vec![0.0; n],
            v,
        };
        if n > 0 {
            t.tred2(accumulate);
        }
        t
    }

    fn tred2(&mut self, accumulate: bool) {
        let n = self.n;
        let Self { d, e, v, .. } = self;
        let at = |row: usize, col: usize| col * n + row;

        for j in 0..n {
            d[j] = v[at(n - 1, j)];
        }

        for i in (1..n).rev() {
            let mut scale = 0.0;
            let mut h = 0.0;
            for dk in d.iter().take(i) {
                scale += dk.abs();
            }
            if scale == 0.0 {
                e[i] = d[i - 1];
                for j in 0..i {
                    d[j] = v[at(i - 1, j)];
                    v[at(i, j)] = 0.0;
                    v[at(j, i)] = 0.0;
                }
            } else {
                for dk in d.iter_mut().take(i) {
                    *dk /= scale;
                    h += *dk * *dk;
                }
                let mut f = d[i - 1];
                let mut g = h.sqrt();
                if f > 0.0 {
                    g = -g;
                }
                e[i] = scale * g;
                h -= f * g;
                d[i - 1] = f - g;
                for ej in e.iter_mut().take(i) {
                    *ej = 0.0;
                }

                for j in 0..i {
                    f = d[j];
                    v[at(j, i)] = f;
                    g = e[j] + v[at(j, j)] * f;
                    for k in (j + 1)..i {
                        let vkj = v[at(k, j)];
                        g += vkj * d[k];
                        e[k] += vkj * f;
                    }
                    e[j] = g;
                }
                f = 0.0;
                for j in 0..i {
                    e[j] /= h;
                    f += e[j] * d[j];
                }
                let hh = f / (h + h);
                for j in 0..i {
                    e[j] -= hh * d[j];
                }
                for j in 0..i {
                    f = d[j];
                    g = e[j];
                    for k in j..i {
                        v[at(k, j)] -= f * e[k] + g * d[k];
                    }
                    d[j] = v[at(i - 1, j)];
                    v[at(i, j)] = 0.0;
                }
            }
            d[i] = h;
        }

        if !accumulate {
            // The reduced diagonal sits on the diagonal of the work matrix.
            for j in 0..n {
                d[j] = v[at(j, j)];
            }
            e[0] = 0.0;
            return;
        }

        for i in 0..(n - 1) {
            v[at(n - 1, i)] = v[at(i, i)];
            v[at(i, i)] = 1.0;
            let h = d[i + 1];
            if h != 0.0 {
                for k in 0..=i {
                    d[k] = v[at(k, i + 1)] / h;
                }
                for j in 0..=i {
                    let mut g = 0.0;
                    for k in 0..=i {
                        g += v[at(k, i + 1)] * v[at(k, j)];
                    }
                    for k in 0..=i {
                        v[at(k, j)] -= g * d[k];
                    }
                }
            }
            for k in 0..=i {
                v[at(k, i + 1)] = 0.0;
            }
        }
        for j in 0..n {
            d[j] = v[at(n - 1, j)];
            v[at(n - 1, j)] = 0.0;
        }
        v[at(n - 1, n - 1)] = 1.0;
        e[0] = 0.0;
    }

    /// Implicit QL on the tridiagonal `(d, e)`; leaves `d` ascending.
    fn ql(&mut self, accumulate: bool) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Ok(());
        }
        let Self { d, e, v, .. } = self;

        for i in 1..n {
            e[i - 1] = e[i];
        }
        e[n - 1] = 0.0;

        let mut f = 0.0;
        let mut tst1 = 0.0_f64;
        let eps = f64::EPSILON;
        for l in 0..n {
            tst1 = tst1.max(d[l].abs() + e[l].abs());
            let mut m = l;
            while m < n - 1 && e[m].abs() > eps * tst1 {
                m += 1;
            }

            if m > l {
                let mut sweeps = 0;
                loop {
                    sweeps += 1;
                    if sweeps > MAX_SWEEPS_PER_VALUE {
                        return Err(Error::NoConvergence(sweeps));
                    }
                    let mut g = d[l];
                    let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                    let mut r = p.hypot(1.0);
                    if p < 0.0 {
                        r = -r;
                    }
                    d[l] = e[l] / (p + r);
                    d[l + 1] = e[l] * (p + r);
                    let dl1 = d[l + 1];
                    let mut h = g - d[l];
                    for di in d.iter_mut().skip(l + 2) {
                        *di -= h;
                    }
                    f += h;

                    p = d[m];
                    let mut c = 1.0;
                    let mut c2 = c;
                    let mut c3 = c;
                    let el1 = e[l + 1];
                    let mut s = 0.0;
                    let mut s2 = 0.0;
                    for i in (l..m).rev() {
                        c3 = c2;
                        c2 = c;
                        s2 = s;
                        g = c * e[i];
                        h = c * p;
                        r = p.hypot(e[i]);
                        e[i + 1] = s * r;
                        s = e[i] / r;
                        c = p / r;
                        p = c * d[i] - s * g;
                        d[i + 1] = h + s * (c * g + s * d[i]);

                        if accumulate {
                            let (left, right) = v.split_at_mut((i + 1) * n);
                            let col_i = &mut left[i * n..];
                            let col_i1 = &mut right[..n];
                            for (vi, vi1) in col_i.iter_mut().zip(col_i1.iter_mut()) {
                                let hk = *vi1;
                                *vi1 = s * *vi + c * hk;
                                *vi = c * *vi - s * hk;
                            }
                        }
                    }
                    p = -s * s2 * c3 * el1 * e[l] / dl1;
                    e[l] = s * p;
                    d[l] = c * p;

                    if e[l].abs() <= eps * tst1 {
                        break;
                    }
                }
            }
            d[l] += f;
            e[l] = 0.0;
        }

        // Selection sort, ascending, carrying eigenvector columns along.
        for i in 0..(n - 1) {
            let mut k = i;
            let mut p = d[i];
            for (j, &dj) in d.iter().enumerate().skip(i + 1) {
                if dj < p {
                    k = j;
                    p = dj;
                }
            }
            if k != i {
                d[k] = d[i];
                d[i] = p;
                if accumulate {
                    for row in 0..n {
                        v.swap(i * n + row, k * n + row);
                    }
                }
            }
        }
        Ok(())
    }
}
