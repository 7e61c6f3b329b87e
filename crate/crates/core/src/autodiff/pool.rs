//! Max pooling that remembers where each maximum came from, and the matching
//! sparse unpooling.

use crate::autodiff::tensor::{numel, Tensor};
use crate::autodiff::{AutodiffError, Result};
use crate::scalar::Scalar;

/// Argmax positions of a pooling pass.
///
/// `argmax` has one entry per pooled output element (same layout as the
/// output) holding the absolute position along the pooled axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub argmax: Vec<usize>,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub axis: usize,
    pub window: usize,
}

/// Output of [`maxpool_with_indices`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecord<T> {
    pub output: Tensor<T>,
    pub indices: PoolIndices,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolGeometry {
    pub outer: usize,
    pub len: usize,
    pub inner: usize,
    pub out_len: usize,
}

impl PoolGeometry {
    fn new(shape: &[usize], axis: usize, window: usize) -> Self {
        Self {
            outer: shape[..axis].iter().product(),
            len: shape[axis],
            inner: shape[axis + 1..].iter().product(),
            out_len: shape[axis].div_ceil(window),
        }
    }

    pub fn of(idx: &PoolIndices) -> Self {
        Self::new(&idx.input_shape, idx.axis, idx.window)
    }
}

impl PoolIndices {
    /// Index set with every argmax moved to the first slot of its window,
    /// i.e. the positional information removed.
    pub fn ablated(&self) -> Self {
        let geo = PoolGeometry::of(self);
        let mut argmax = self.argmax.clone();
        for o in 0..geo.outer {
            for p in 0..geo.out_len {
                for i in 0..geo.inner {
                    argmax[(o * geo.out_len + p) * geo.inner + i] = p * self.window;
                }
            }
        }
        Self { argmax, ..self.clone() }
    }

    /// Length of the pooled axis before pooling.
    pub fn input_len(&self) -> usize {
        self.input_shape[self.axis]
    }
}

pub(crate) fn pool_forward<T: Scalar>(
    data: &[T],
    shape: &[usize],
    window: usize,
    axis: usize,
) -> Result<(Vec<T>, PoolIndices)> {
    if window == 0 {
        return Err(AutodiffError::InvalidWindow(window));
    }
    if axis >= shape.len() {
        return Err(AutodiffError::OutOfRange { op: "maxpool", index: axis, bound: shape.len() });
    }
    let geo = PoolGeometry::new(shape, axis, window);
    let mut output_shape = shape.to_vec();
    output_shape[axis] = geo.out_len;
    let mut out = Vec::with_capacity(numel(&output_shape));
    let mut argmax = Vec::with_capacity(out.capacity());
    for o in 0..geo.outer {
        for p in 0..geo.out_len {
            for i in 0..geo.inner {
                // Positions past the end act as -inf padding and never win.
                let start = p * window;
                let mut best = data[(o * geo.len + start) * geo.inner + i];
                let mut best_at = start;
                for pos in start + 1..((p + 1) * window).min(geo.len) {
                    let v = data[(o * geo.len + pos) * geo.inner + i];
                    if v > best {
                        best = v;
                        best_at = pos;
                    }
                }
                out.push(best);
                argmax.push(best_at);
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            argmax,
            input_shape: shape.to_vec(),
            output_shape,
            axis,
            window,
        },
    ))
}

pub(crate) fn unpool_values<T: Scalar>(
    pooled: &[T],
    idx: &PoolIndices,
    target_len: usize,
) -> Result<(Vec<T>, Vec<usize>)> {
    if let Some(&bad) = idx.argmax.iter().find(|&&a| a >= target_len) {
        return Err(AutodiffError::OutOfRange { op: "unpool", index: bad, bound: target_len });
    }
    let geo = PoolGeometry::of(idx);
    let mut shape = idx.input_shape.clone();
    shape[idx.axis] = target_len;
    let mut out = vec![T::zero(); numel(&shape)];
    for o in 0..geo.outer {
        for p in 0..geo.out_len {
            for i in 0..geo.inner {
                let src = (o * geo.out_len + p) * geo.inner + i;
                out[(o * target_len + idx.argmax[src]) * geo.inner + i] = pooled[src];
            }
        }
    }
    Ok((out, shape))
}

/// Non-overlapping max pooling of `x` along `axis` with the given window.
///
/// A trailing partial window is padded with `-inf`. Ties go to the lowest
/// position.
pub fn maxpool_with_indices<T: Scalar>(x: &Tensor<T>, window: usize, axis: usize) -> Result<PoolRecord<T>> {
    let (out, indices) = pool_forward(x.data(), x.shape(), window, axis)?;
    Ok(PoolRecord {
        output: Tensor::new(indices.output_shape.clone(), out)?,
        indices,
    })
}

/// Places each pooled value at its recorded argmax; every other entry is zero.
pub fn unpool<T: Scalar>(record: &PoolRecord<T>, target_len: usize) -> Result<Tensor<T>> {
    let (out, shape) = unpool_values(record.output.data(), &record.indices, target_len)?;
    Tensor::new(shape, out)
}

/// Reads `x` at the recorded argmax positions.
pub fn gather<T: Scalar>(x: &Tensor<T>, indices: &PoolIndices) -> Vec<T> {
    let geo = PoolGeometry::of(indices);
    let mut out = Vec::with_capacity(indices.argmax.len());
    for o in 0..geo.outer {
        for p in 0..geo.out_len {
            for i in 0..geo.inner {
                let a = indices.argmax[(o * geo.out_len + p) * geo.inner + i];
                out.push(x.data()[(o * geo.len + a) * geo.inner + i]);
            }
        }
    }
    out
}
