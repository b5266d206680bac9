//! Sub-pixel rearrangement: trades channel depth for spatial resolution.

use crate::error::{arg_err, shape_err, Result};
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

/// Rearranges `(N, C·r², H, W)` to `(N, C, H·r, W·r)`:
/// `out[n, c, h·r + a, w·r + b] = in[n, c·r² + a·r + b, h, w]`.
///
/// A pure permutation of elements — no arithmetic, so the map is exactly
/// invertible and the backward rule is the inverse rearrangement.
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    if r == 0 {
        return arg_err("pixel_shuffle factor must be >= 1");
    }
    if input.rank() != 4 {
        return shape_err(format!(
            "pixel_shuffle input must be rank 4, got {:?}",
            input.shape()
        ));
    }
    let (n, c_in, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let r2 = r * r;
    if c_in % r2 != 0 {
        return shape_err(format!(
            "pixel_shuffle: channels {c_in} not divisible by r^2 = {r2}"
        ));
    }
    let c = c_in / r2;
    let x = input.data();
    let mut out = vec![0f32; n * c_in * h * w];
    let (oh, ow) = (h * r, w * r);
    for ni in 0..n {
        for ci in 0..c_in {
            let (co, a, b) = (ci / r2, (ci % r2) / r, ci % r);
            let src_base = (ni * c_in + ci) * h * w;
            let dst_chan = (ni * c + co) * oh * ow;
            for hi in 0..h {
                let dst_row = dst_chan + (hi * r + a) * ow + b;
                let src_row = src_base + hi * w;
                for wi in 0..w {
                    out[dst_row + wi * r] = x[src_row + wi];
                }
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

/// Inverse of [`pixel_shuffle`]: `(N, C, H·r, W·r)` back to `(N, C·r², H, W)`.
pub fn pixel_unshuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    if r == 0 {
        return arg_err("pixel_unshuffle factor must be >= 1");
    }
    if input.rank() != 4 {
        return shape_err(format!(
            "pixel_unshuffle input must be rank 4, got {:?}",
            input.shape()
        ));
    }
    let (n, c, oh, ow) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    if oh % r != 0 || ow % r != 0 {
        return shape_err(format!(
            "pixel_unshuffle: extent ({oh}, {ow}) not divisible by r = {r}"
        ));
    }
    let (h, w) = (oh / r, ow / r);
    let r2 = r * r;
    let x = input.data();
    let mut out = vec![0f32; n * c * r2 * h * w];
    for ni in 0..n {
        for ci in 0..c * r2 {
            let (co, a, b) = (ci / r2, (ci % r2) / r, ci % r);
            let dst_base = (ni * c * r2 + ci) * h * w;
            let src_chan = (ni * c + co) * oh * ow;
            for hi in 0..h {
                let src_row = src_chan + (hi * r + a) * ow + b;
                let dst_row = dst_base + hi * w;
                for wi in 0..w {
                    out[dst_row + wi] = x[src_row + wi * r];
                }
            }
        }
    }
    Tensor::new(&[n, c * r2, h, w], out)
}

impl GradTape {
    /// Records a pixel shuffle; the gradient is the inverse rearrangement.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = pixel_shuffle(self.value(x), r)?;
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g: &Tensor| {
                vec![pixel_unshuffle(g, r).expect("unshuffle grad")]
            })),
        ))
    }
}
