//! 2-D convolution (cross-correlation) with stride, zero padding, dilation,
//! and channel groups, plus its backward rules.
//!
//! Shapes: input `(N, Cin, H, W)`, weight `(Cout, Cin/groups, Kh, Kw)`,
//! bias `(Cout)`, output `(N, Cout, H', W')` with
//! `H' = (H + 2·pad − dilation·(K−1) − 1) / stride + 1` (floor), likewise W'.
//!
//! Every output element is accumulated in f64 in a fixed loop order
//! (channel-major, then kernel row, then kernel column), and parallel work is
//! split only across independent output regions, so results are bitwise
//! reproducible regardless of thread count.

use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::parallel::ensure_thread_pool;
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

/// Geometry of a convolution: stride, symmetric zero padding, and dilation
/// are (row, column) pairs; `groups` splits channels into independent blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub dilation: (usize, usize),
    pub groups: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            stride: (1, 1),
            padding: (0, 0),
            dilation: (1, 1),
            groups: 1,
        }
    }
}

impl Conv2dSpec {
    /// 1×1 convolution geometry (stride 1, no padding).
    pub fn pointwise() -> Self {
        Conv2dSpec::default()
    }

    /// Extent-preserving geometry for an odd kernel: padding = dilation·(K−1)/2.
    pub fn same(kernel: (usize, usize), dilation: (usize, usize), groups: usize) -> Self {
        Conv2dSpec {
            stride: (1, 1),
            padding: (
                dilation.0 * (kernel.0 - 1) / 2,
                dilation.1 * (kernel.1 - 1) / 2,
            ),
            dilation,
            groups,
        }
    }

    fn check(&self) -> Result<()> {
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return shape_err(format!("stride {:?} must be >= 1", self.stride));
        }
        if self.dilation.0 == 0 || self.dilation.1 == 0 {
            return shape_err(format!("dilation {:?} must be >= 1", self.dilation));
        }
        if self.groups == 0 {
            return shape_err("groups must be >= 1");
        }
        Ok(())
    }

    /// Output (H', W') for an input plane and kernel, or an error when the
    /// padded extent cannot fit a single kernel placement.
    pub fn out_extent(&self, hw: (usize, usize), kernel: (usize, usize)) -> Result<(usize, usize)> {
        self.check()?;
        let ext = |x: usize, k: usize, s: usize, p: usize, d: usize| -> Result<usize> {
            let span = d * (k - 1) + 1;
            let padded = x + 2 * p;
            if padded < span {
                return shape_err(format!(
                    "kernel span {span} (k={k}, dilation={d}) exceeds padded extent {padded}"
                ));
            }
            Ok((padded - span) / s + 1)
        };
        Ok((
            ext(
                hw.0,
                kernel.0,
                self.stride.0,
                self.padding.0,
                self.dilation.0,
            )?,
            ext(
                hw.1,
                kernel.1,
                self.stride.1,
                self.padding.1,
                self.dilation.1,
            )?,
        ))
    }
}

struct ConvDims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    cin_g: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    cout_g: usize,
}

fn validate(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: Conv2dSpec,
) -> Result<ConvDims> {
    spec.check()?;
    if input.rank() != 4 {
        return shape_err(format!(
            "conv2d input must be rank 4, got {:?}",
            input.shape()
        ));
    }
    if weight.rank() != 4 {
        return shape_err(format!(
            "conv2d weight must be rank 4, got {:?}",
            weight.shape()
        ));
    }
    let (n, cin, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (cout, cin_g, kh, kw) = (
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    );
    if cin % spec.groups != 0 || cout % spec.groups != 0 {
        return shape_err(format!(
            "groups {} must divide both in channels {cin} and out channels {cout}",
            spec.groups
        ));
    }
    if cin_g != cin / spec.groups {
        return shape_err(format!(
            "weight {:?} expects {} in channels per group, input has {}",
            weight.shape(),
            cin_g,
            cin / spec.groups
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return shape_err(format!(
                "bias shape {:?} must be [{cout}] to match out channels",
                b.shape()
            ));
        }
    }
    let (oh, ow) = spec.out_extent((h, w), (kh, kw))?;
    Ok(ConvDims {
        n,
        cin,
        h,
        w,
        cout,
        cin_g,
        kh,
        kw,
        oh,
        ow,
        cout_g: cout / spec.groups,
    })
}

/// Forward convolution.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: Conv2dSpec,
) -> Result<Tensor> {
    ensure_thread_pool();
    let d = validate(input, weight, bias, spec)?;
    let x = input.data();
    let wt = weight.data();
    let hw = d.h * d.w;
    let ohw = d.oh * d.ow;
    let ktaps = d.kh * d.kw;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let (dh, dw) = spec.dilation;

    let pointwise = d.kh == 1
        && d.kw == 1
        && spec.stride == (1, 1)
        && spec.padding == (0, 0)
        && spec.dilation == (1, 1)
        && spec.groups == 1;

    let mut out = vec![0f32; d.n * d.cout * ohw];
    // One output plane (fixed sample, fixed out channel) per work item.
    out.par_chunks_mut(ohw)
        .enumerate()
        .for_each(|(plane, slot)| {
            let ni = plane / d.cout;
            let oc = plane % d.cout;
            let b = bias.map(|b| b.data()[oc] as f64).unwrap_or(0.0);
            if pointwise {
                // Rank-1 updates over the spatial plane, accumulated in f64.
                let mut acc = vec![0f64; hw];
                let xn = &x[ni * d.cin * hw..(ni + 1) * d.cin * hw];
                for ic in 0..d.cin {
                    let wv = wt[oc * d.cin + ic] as f64;
                    let row = &xn[ic * hw..(ic + 1) * hw];
                    for (a, &xv) in acc.iter_mut().zip(row) {
                        *a += wv * xv as f64;
                    }
                }
                for (s, a) in slot.iter_mut().zip(&acc) {
                    *s = (a + b) as f32;
                }
            } else {
                let g = oc / d.cout_g;
                let ic0 = g * d.cin_g;
                for ohi in 0..d.oh {
                    for owi in 0..d.ow {
                        let mut acc = 0f64;
                        for icr in 0..d.cin_g {
                            let xbase = ni * d.cin * hw + (ic0 + icr) * hw;
                            let wbase = (oc * d.cin_g + icr) * ktaps;
                            for khi in 0..d.kh {
                                let ihp = ohi * sh + khi * dh;
                                if ihp < ph || ihp - ph >= d.h {
                                    continue;
                                }
                                let ih = ihp - ph;
                                for kwi in 0..d.kw {
                                    let iwp = owi * sw + kwi * dw;
                                    if iwp < pw || iwp - pw >= d.w {
                                        continue;
                                    }
                                    let iw = iwp - pw;
                                    acc += x[xbase + ih * d.w + iw] as f64
                                        * wt[wbase + khi * d.kw + kwi] as f64;
                                }
                            }
                        }
                        slot[ohi * d.ow + owi] = (acc + b) as f32;
                    }
                }
            }
        });
    Tensor::new(&[d.n, d.cout, d.oh, d.ow], out)
}

/// Gradient of the loss w.r.t. the convolution input, given the gradient
/// w.r.t. its output. `input_shape` is the original `(N, Cin, H, W)`.
pub fn conv2d_grad_input(
    grad_out: &Tensor,
    weight: &Tensor,
    input_shape: &[usize],
    spec: Conv2dSpec,
) -> Result<Tensor> {
    ensure_thread_pool();
    let probe = Tensor::zeros(input_shape);
    let d = validate(&probe, weight, None, spec)?;
    if grad_out.shape() != [d.n, d.cout, d.oh, d.ow] {
        return shape_err(format!(
            "grad_out shape {:?} does not match expected {:?}",
            grad_out.shape(),
            [d.n, d.cout, d.oh, d.ow]
        ));
    }
    let go = grad_out.data();
    let wt = weight.data();
    let hw = d.h * d.w;
    let ohw = d.oh * d.ow;
    let ktaps = d.kh * d.kw;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let (dh, dw) = spec.dilation;

    let mut dx = vec![0f32; d.n * d.cin * hw];
    // Each sample's input gradient is independent; scatter in f64 per sample.
    dx.par_chunks_mut(d.cin * hw)
        .enumerate()
        .for_each(|(ni, slot)| {
            let mut acc = vec![0f64; d.cin * hw];
            for oc in 0..d.cout {
                let g = oc / d.cout_g;
                let ic0 = g * d.cin_g;
                let gbase = (ni * d.cout + oc) * ohw;
                for ohi in 0..d.oh {
                    for owi in 0..d.ow {
                        let gv = go[gbase + ohi * d.ow + owi] as f64;
                        for icr in 0..d.cin_g {
                            let abase = (ic0 + icr) * hw;
                            let wbase = (oc * d.cin_g + icr) * ktaps;
                            for khi in 0..d.kh {
                                let ihp = ohi * sh + khi * dh;
                                if ihp < ph || ihp - ph >= d.h {
                                    continue;
                                }
                                let ih = ihp - ph;
                                for kwi in 0..d.kw {
                                    let iwp = owi * sw + kwi * dw;
                                    if iwp < pw || iwp - pw >= d.w {
                                        continue;
                                    }
                                    let iw = iwp - pw;
                                    acc[abase + ih * d.w + iw] +=
                                        gv * wt[wbase + khi * d.kw + kwi] as f64;
                                }
                            }
                        }
                    }
                }
            }
            for (s, a) in slot.iter_mut().zip(&acc) {
                *s = *a as f32;
            }
        });
    Tensor::new(input_shape, dx)
}

/// Gradient of the loss w.r.t. the convolution weight.
pub fn conv2d_grad_weight(
    grad_out: &Tensor,
    input: &Tensor,
    weight_shape: &[usize],
    spec: Conv2dSpec,
) -> Result<Tensor> {
    ensure_thread_pool();
    let probe = Tensor::zeros(weight_shape);
    let d = validate(input, &probe, None, spec)?;
    if grad_out.shape() != [d.n, d.cout, d.oh, d.ow] {
        return shape_err(format!(
            "grad_out shape {:?} does not match expected {:?}",
            grad_out.shape(),
            [d.n, d.cout, d.oh, d.ow]
        ));
    }
    let go = grad_out.data();
    let x = input.data();
    let hw = d.h * d.w;
    let ohw = d.oh * d.ow;
    let ktaps = d.kh * d.kw;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let (dh, dw) = spec.dilation;

    let mut dwt = vec![0f32; d.cout * d.cin_g * ktaps];
    // All taps of one out channel per work item.
    dwt.par_chunks_mut(d.cin_g * ktaps)
        .enumerate()
        .for_each(|(oc, slot)| {
            let g = oc / d.cout_g;
            let ic0 = g * d.cin_g;
            for icr in 0..d.cin_g {
                for khi in 0..d.kh {
                    for kwi in 0..d.kw {
                        let mut acc = 0f64;
                        for ni in 0..d.n {
                            let gbase = (ni * d.cout + oc) * ohw;
                            let xbase = ni * d.cin * hw + (ic0 + icr) * hw;
                            for ohi in 0..d.oh {
                                let ihp = ohi * sh + khi * dh;
                                if ihp < ph || ihp - ph >= d.h {
                                    continue;
                                }
                                let ih = ihp - ph;
                                for owi in 0..d.ow {
                                    let iwp = owi * sw + kwi * dw;
                                    if iwp < pw || iwp - pw >= d.w {
                                        continue;
                                    }
                                    let iw = iwp - pw;
                                    acc += go[gbase + ohi * d.ow + owi] as f64
                                        * x[xbase + ih * d.w + iw] as f64;
                                }
                            }
                        }
                        slot[icr * ktaps + khi * d.kw + kwi] = acc as f32;
                    }
                }
            }
        });
    Tensor::new(weight_shape, dwt)
}

/// Gradient of the loss w.r.t. the bias: grad_out summed over all but the
/// channel axis.
pub fn conv2d_grad_bias(grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.rank() != 4 {
        return shape_err(format!(
            "grad_out must be rank 4, got {:?}",
            grad_out.shape()
        ));
    }
    let (n, c, oh, ow) = (
        grad_out.shape()[0],
        grad_out.shape()[1],
        grad_out.shape()[2],
        grad_out.shape()[3],
    );
    let go = grad_out.data();
    let ohw = oh * ow;
    let mut db = vec![0f32; c];
    for (oc, slot) in db.iter_mut().enumerate() {
        let mut acc = 0f64;
        for ni in 0..n {
            let base = (ni * c + oc) * ohw;
            for v in &go[base..base + ohw] {
                acc += *v as f64;
            }
        }
        *slot = acc as f32;
    }
    Tensor::new(&[c], db)
}

impl GradTape {
    /// Records a convolution; gradients flow to input, weight, and bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        let xv = self.value(x).clone();
        let wv = self.value(w).clone();
        let bv = b.map(|b| self.value(b).clone());
        let out = conv2d(&xv, &wv, bv.as_ref(), spec)?;
        let mut parents = vec![x, w];
        if let Some(b) = b {
            parents.push(b);
        }
        let has_bias = b.is_some();
        let x_shape = xv.shape().to_vec();
        let w_shape = wv.shape().to_vec();
        Ok(self.push(
            out,
            parents,
            Some(Box::new(move |g: &Tensor| {
                let mut grads = vec![
                    conv2d_grad_input(g, &wv, &x_shape, spec).expect("conv grad input"),
                    conv2d_grad_weight(g, &xv, &w_shape, spec).expect("conv grad weight"),
                ];
                if has_bias {
                    grads.push(conv2d_grad_bias(g).expect("conv grad bias"));
                }
                grads
            })),
        ))
    }
}
