//! Principal component analysis of flattened images via thin SVD.

use nalgebra::{DMatrix, RealField};

use crate::scalar::Scalar;
use crate::segnet::{Result, SegNetError};

/// Mean plus the top-`k` principal axes (rows, orthonormal).
#[derive(Debug, Clone, PartialEq)]
pub struct Pca<T> {
    pub mean: Vec<T>,
    pub axes: Vec<Vec<T>>,
    /// Singular values of the centered data for the kept axes, descending.
    pub singular_values: Vec<T>,
}

/// Fits `k` components to `rows` (each a flattened image of equal length).
/// `k` may not exceed the number of rows.
pub fn pca_fit<T: Scalar + RealField>(rows: &[&[T]], k: usize) -> Result<Pca<T>> {
    let n = rows.len();
    if n == 0 {
        return Err(SegNetError::Empty("pca training set"));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) || p == 0 {
        return Err(SegNetError::Config("pca rows must share a positive length".into()));
    }
    let available = n.min(p);
    if k == 0 || k > n || k > available {
        return Err(SegNetError::TooManyComponents { k, available: available.min(n) });
    }
    let inv = T::one() / T::from_usize(n).unwrap();
    let mut mean = vec![T::zero(); p];
    for r in rows {
        for (m, &x) in mean.iter_mut().zip(r.iter()) {
            *m += x * inv;
        }
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j] - mean[j]);
    let svd = x.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let axes = order[..k]
        .iter()
        .map(|&i| vt.row(i).iter().copied().collect())
        .collect();
    let singular_values = order[..k].iter().map(|&i| svd.singular_values[i]).collect();
    Ok(Pca {
        mean,
        axes,
        singular_values,
    })
}

impl<T: Scalar> Pca<T> {
    pub fn k(&self) -> usize {
        self.axes.len()
    }

    /// Coordinates of `x` along the principal axes.
    pub fn project(&self, x: &[T]) -> Vec<T> {
        self.axes
            .iter()
            .map(|a| {
                a.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(&w, (&v, &m))| w * (v - m))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct_from(&self, coords: &[T]) -> Vec<T> {
        let mut out = self.mean.clone();
        for (a, &c) in self.axes.iter().zip(coords) {
            for (o, &w) in out.iter_mut().zip(a) {
                *o += c * w;
            }
        }
        out
    }

    /// `mean + projection of (x - mean)` onto the kept axes.
    pub fn roundtrip(&self, x: &[T]) -> Vec<T> {
        self.reconstruct_from(&self.project(x))
    }

    /// Mean per-element squared reconstruction error over `rows`.
    pub fn reconstruction_mse(&self, rows: &[&[T]]) -> T {
        let mut sum = T::zero();
        let mut count = 0usize;
        for r in rows {
            let rec = self.roundtrip(r);
            sum += rec.iter().zip(r.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
            count += r.len();
        }
        sum / T::from_usize(count.max(1)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_plane_is_reconstructed() {
        let a = [1.0, 2.0, 0.0, -1.0];
        let b = [0.0, 1.0, 1.0, 3.0];
        let data: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let (s, t) = (i as f64 * 0.3 - 1.0, ((i * 7) % 5) as f64);
                (0..4).map(|j| 0.5 + s * a[j] + t * b[j]).collect()
            })
            .collect();
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let pca = pca_fit(&rows, 2).unwrap();
        assert!(pca.reconstruction_mse(&rows) < 1e-20);
    }

    #[test]
    fn rejects_too_many_components() {
        let data = [vec![1.0f64, 2.0, 3.0], vec![0.0, 1.0, 5.0]];
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        assert!(matches!(pca_fit(&rows, 3), Err(SegNetError::TooManyComponents { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let data = [vec![1.0f32, 0.0], vec![-1.0, 0.0], vec![0.0, 0.5]];
        let rows: Vec<&[f32]> = data.iter().map(Vec::as_slice).collect();
        let pca = pca_fit(&rows, 1).unwrap();
        let norm: f32 = pca.axes[0].iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-5);
    }
}
