use std::sync::Arc;

use crate::error::{arg_err, shape_err, Result};

/// Dense row-major f32 tensor with shared, immutable storage.
///
/// Cloning is O(1) (the buffer is reference-counted); every operation that
/// changes values allocates a fresh buffer. Axis lengths are always >= 1, so
/// `numel` is >= 1 and a scalar is represented as shape `[1]`.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 8 {
            write!(f, " {:?}", &self.data[..])?;
        }
        Ok(())
    }
}

/// Row-major strides for a shape: last axis is contiguous.
pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return shape_err("tensor shape must have at least one axis");
    }
    let mut n: usize = 1;
    for (i, &ax) in shape.iter().enumerate() {
        if ax == 0 {
            return shape_err(format!("axis {i} of shape {shape:?} has length 0"));
        }
        n = n.checked_mul(ax).ok_or_else(|| {
            crate::error::Error::Shape(format!("shape {shape:?} overflows usize"))
        })?;
    }
    Ok(n)
}

impl Tensor {
    /// Builds a tensor from a shape and a row-major buffer of matching length.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return shape_err(format!(
                "shape {shape:?} implies {n} elements but buffer has {}",
                data.len()
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::new(data),
        })
    }

    /// All-zeros tensor. Panics only on zero/overflowing shapes (programmer error).
    pub fn zeros(shape: &[usize]) -> Tensor {
        let n = check_shape(shape).expect("valid shape");
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; n]),
        }
    }

    /// Tensor filled with a constant.
    pub fn full(shape: &[usize], value: f32) -> Tensor {
        let n = check_shape(shape).expect("valid shape");
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; n]),
        }
    }

    /// All-ones tensor.
    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(value: f32) -> Tensor {
        Tensor {
            shape: vec![1],
            data: Arc::new(vec![value]),
        }
    }

    /// Builds a tensor by evaluating `f` at each row-major flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f32) -> Tensor {
        let n = check_shape(shape).expect("valid shape");
        let data: Vec<f32> = (0..n).map(f).collect();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(data),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Row-major view of the underlying buffer.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Element at a multi-index (for tests and small-scale inspection).
    pub fn at(&self, index: &[usize]) -> f32 {
        assert_eq!(index.len(), self.rank(), "index rank mismatch");
        let strides = strides_of(&self.shape);
        let mut off = 0usize;
        for (i, (&ix, &ax)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < ax, "index {ix} out of range for axis {i} (len {ax})");
            off += ix * strides[i];
        }
        self.data[off]
    }

    /// True when shapes match and every element is bit-identical
    /// (distinguishes -0.0 from 0.0; NaN compares equal to itself).
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data, new shape with equal element count. Shares the buffer.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n = check_shape(shape)?;
        if n != self.numel() {
            return shape_err(format!(
                "cannot reshape {:?} ({} elements) to {shape:?} ({n} elements)",
                self.shape,
                self.numel()
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    /// Reorders axes: output axis `j` is input axis `order[j]`. Materializes
    /// a new buffer in the output's row-major order.
    pub fn permute(&self, order: &[usize]) -> Result<Tensor> {
        let k = self.rank();
        if order.len() != k {
            return arg_err(format!(
                "permutation {order:?} has wrong length for rank {k}"
            ));
        }
        let mut seen = vec![false; k];
        for &a in order {
            if a >= k || seen[a] {
                return arg_err(format!("{order:?} is not a permutation of 0..{k}"));
            }
            seen[a] = true;
        }
        let out_shape: Vec<usize> = order.iter().map(|&a| self.shape[a]).collect();
        let in_strides = strides_of(&self.shape);
        // Stride in the input for a unit step along each output axis.
        let step: Vec<usize> = order.iter().map(|&a| in_strides[a]).collect();
        let n = self.numel();
        let mut out = vec![0f32; n];
        let inner_len = out_shape[k - 1];
        let inner_step = step[k - 1];
        let mut idx = vec![0usize; k];
        let mut base = 0usize; // input offset for the current outer index
        let mut o = 0usize;
        while o < n {
            let mut src = base;
            for slot in &mut out[o..o + inner_len] {
                *slot = self.data[src];
                src += inner_step;
            }
            o += inner_len;
            // Increment the outer multi-index (all axes but the last).
            for ax in (0..k - 1).rev() {
                idx[ax] += 1;
                base += step[ax];
                if idx[ax] < out_shape[ax] {
                    break;
                }
                base -= idx[ax] * step[ax];
                idx[ax] = 0;
            }
        }
        Ok(Tensor {
            shape: out_shape,
            data: Arc::new(out),
        })
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    /// Elementwise difference; shapes must match exactly.
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product; shapes must match exactly.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    /// Multiplies every element by a scalar.
    pub fn scale(&self, s: f32) -> Tensor {
        self.map(|v| v * s)
    }

    /// Applies `f` to every element.
    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Tensor {
        let data: Vec<f32> = self.data.iter().map(|&v| f(v)).collect();
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(data),
        }
    }

    fn zip_with(&self, other: &Tensor, op: &str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return shape_err(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            ));
        }
        let data: Vec<f32> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data: Arc::new(data),
        })
    }

    /// Sum of all elements, accumulated in f64.
    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// Contiguous sub-range `start..start+len` along one axis.
    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return arg_err(format!("axis {axis} out of range for rank {}", self.rank()));
        }
        if len == 0 || start + len > self.shape[axis] {
            return arg_err(format!(
                "slice {start}..{} out of range for axis {axis} (len {})",
                start + len,
                self.shape[axis]
            ));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * len * inner);
        let src_block = self.shape[axis] * inner;
        for o in 0..outer {
            let base = o * src_block + start * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Ok(Tensor {
            shape,
            data: Arc::new(out),
        })
    }

    /// Concatenates tensors along one axis; all other axes must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = match parts.first() {
            Some(t) => t,
            None => return arg_err("concat of zero tensors"),
        };
        let k = first.rank();
        if axis >= k {
            return arg_err(format!("axis {axis} out of range for rank {k}"));
        }
        let mut axis_total = 0usize;
        for (i, t) in parts.iter().enumerate() {
            if t.rank() != k {
                return shape_err(format!("concat: tensor {i} has rank {} != {k}", t.rank()));
            }
            for ax in 0..k {
                if ax != axis && t.shape[ax] != first.shape[ax] {
                    return shape_err(format!(
                        "concat: tensor {i} shape {:?} mismatches {:?} on axis {ax}",
                        t.shape, first.shape
                    ));
                }
            }
            axis_total += t.shape[axis];
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut out_shape = first.shape.clone();
        out_shape[axis] = axis_total;
        let mut out = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for t in parts {
                let block = t.shape[axis] * inner;
                let base = o * block;
                out.extend_from_slice(&t.data[base..base + block]);
            }
        }
        Ok(Tensor {
            shape: out_shape,
            data: Arc::new(out),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_mismatched_buffer() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[2, 0], vec![]).is_err());
        assert!(Tensor::new(&[], vec![]).is_err());
    }

    #[test]
    fn reshape_relabels_without_copying() {
        let t = Tensor::new(&[2, 3], (0..6).map(|i| i as f32).collect()).unwrap();
        let r = t.reshape(&[3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        assert!(Arc::ptr_eq(&t.data, &r.data));
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn permute_reorders_axes() {
        // (2,3) transpose.
        let t = Tensor::new(&[2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let p = t.permute(&[1, 0]).unwrap();
        assert_eq!(p.shape(), &[3, 2]);
        assert_eq!(p.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        // Identity permutation preserves order bitwise.
        let id = t.permute(&[0, 1]).unwrap();
        assert!(id.bitwise_eq(&t));
        assert!(t.permute(&[0, 0]).is_err());
        assert!(t.permute(&[0]).is_err());
    }

    #[test]
    fn permute_rank4_matches_manual_index() {
        let t = Tensor::from_fn(&[2, 3, 4, 5], |i| i as f32);
        let p = t.permute(&[0, 2, 1, 3]).unwrap();
        assert_eq!(p.shape(), &[2, 4, 3, 5]);
        for n in 0..2 {
            for a in 0..4 {
                for b in 0..3 {
                    for c in 0..5 {
                        assert_eq!(p.at(&[n, a, b, c]), t.at(&[n, b, a, c]));
                    }
                }
            }
        }
    }

    #[test]
    fn permute_round_trip_is_bitwise_identity() {
        let t = Tensor::from_fn(&[2, 5, 3, 7], |i| (i as f32).sin());
        let fwd = t.permute(&[0, 2, 1, 3]).unwrap();
        let back = fwd.permute(&[0, 2, 1, 3]).unwrap();
        assert!(back.bitwise_eq(&t));
    }

    #[test]
    fn elementwise_ops() {
        let a = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[2, 2], vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[11.0, 22.0, 33.0, 44.0]);
        assert_eq!(a.hadamard(&b).unwrap().data(), &[10.0, 40.0, 90.0, 160.0]);
        assert_eq!(b.sub(&a).unwrap().data(), &[9.0, 18.0, 27.0, 36.0]);
        assert_eq!(a.scale(2.0).data(), &[2.0, 4.0, 6.0, 8.0]);
        let c = Tensor::zeros(&[4]);
        assert!(a.add(&c).is_err());
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let t = Tensor::from_fn(&[2, 5, 3], |i| i as f32);
        let head = t.slice_axis(1, 0, 2).unwrap();
        let tail = t.slice_axis(1, 2, 3).unwrap();
        assert_eq!(head.shape(), &[2, 2, 3]);
        assert_eq!(tail.shape(), &[2, 3, 3]);
        let joined = Tensor::concat(&[head, tail], 1).unwrap();
        assert!(joined.bitwise_eq(&t));
        assert!(t.slice_axis(1, 4, 2).is_err());
        assert!(t.slice_axis(3, 0, 1).is_err());
    }

    #[test]
    fn bitwise_eq_distinguishes_signed_zero() {
        let a = Tensor::new(&[1], vec![0.0]).unwrap();
        let b = Tensor::new(&[1], vec![-0.0]).unwrap();
        assert!(!a.bitwise_eq(&b));
        assert!(a.bitwise_eq(&a.clone()));
    }

    #[test]
    fn sum_f64_accumulates_in_double() {
        // 1e8 + many tiny values loses mass in f32 accumulation but not f64.
        let mut data = vec![1e-3f32; 4097];
        data[0] = 1e8;
        let t = Tensor::new(&[4097], data).unwrap();
        let s = t.sum_f64();
        assert!((s - (1e8 + 4096.0 * 1e-3)).abs() < 1e-2, "s={s}");
    }
}
