//! Channel layer normalization for feature maps.

use std::sync::Arc;

use crate::error::{shape_err, Result};
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Normalizes each spatial position of `(N, C, H, W)` across its C channel
/// values to zero mean and unit variance (biased variance, denominator C),
/// then applies a per-channel affine map:
/// `y = gamma ⊙ (x − mean)/sqrt(var + 1e-6) + beta`.
///
/// Statistics are computed and applied in f64 and rounded once to f32.
pub fn layer_norm(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let (out, _, _) = layer_norm_with_stats(input, gamma, beta)?;
    Ok(out)
}

/// Forward pass that also returns per-position mean and 1/sqrt(var + eps)
/// (each of length N·H·W) for reuse in the backward rule.
fn layer_norm_with_stats(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    if input.rank() != 4 {
        return shape_err(format!(
            "layer_norm input must be rank 4, got {:?}",
            input.shape()
        ));
    }
    let (n, c, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    if gamma.shape() != [c] || beta.shape() != [c] {
        return shape_err(format!(
            "layer_norm affine shapes {:?}/{:?} must be [{c}]",
            gamma.shape(),
            beta.shape()
        ));
    }
    let x = input.data();
    let hw = h * w;
    let positions = n * hw;
    let mut mean = vec![0f64; positions];
    let mut inv_std = vec![0f64; positions];
    let mut out = vec![0f32; x.len()];
    for ni in 0..n {
        for p in 0..hw {
            let pos = ni * hw + p;
            let base = ni * c * hw + p;
            let mut s = 0f64;
            let mut s2 = 0f64;
            for ci in 0..c {
                let v = x[base + ci * hw] as f64;
                s += v;
                s2 += v * v;
            }
            let m = s / c as f64;
            let var = (s2 / c as f64 - m * m).max(0.0);
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            mean[pos] = m;
            inv_std[pos] = is;
            for ci in 0..c {
                let v = x[base + ci * hw] as f64;
                let xhat = (v - m) * is;
                out[base + ci * hw] =
                    (gamma.data()[ci] as f64 * xhat + beta.data()[ci] as f64) as f32;
            }
        }
    }
    Ok((Tensor::new(input.shape(), out)?, mean, inv_std))
}

/// Backward rule. With `xhat = (x − mean)·inv_std` and `a = g ⊙ gamma`
/// (per position over channels):
/// `dx = inv_std · (a − mean_c(a) − xhat · mean_c(a ⊙ xhat))`,
/// `dgamma_c = Σ g·xhat`, `dbeta_c = Σ g`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward(
    grad: &Tensor,
    input: &Tensor,
    gamma: &Tensor,
    mean: &[f64],
    inv_std: &[f64],
) -> (Tensor, Tensor, Tensor) {
    let (n, c, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let hw = h * w;
    let x = input.data();
    let g = grad.data();
    let mut dx = vec![0f32; x.len()];
    let mut dgamma = vec![0f64; c];
    let mut dbeta = vec![0f64; c];
    for ni in 0..n {
        for p in 0..hw {
            let pos = ni * hw + p;
            let base = ni * c * hw + p;
            let (m, is) = (mean[pos], inv_std[pos]);
            let mut sum_a = 0f64;
            let mut sum_ax = 0f64;
            for ci in 0..c {
                let off = base + ci * hw;
                let xhat = (x[off] as f64 - m) * is;
                let gi = g[off] as f64;
                let a = gi * gamma.data()[ci] as f64;
                sum_a += a;
                sum_ax += a * xhat;
                dgamma[ci] += gi * xhat;
                dbeta[ci] += gi;
            }
            let mean_a = sum_a / c as f64;
            let mean_ax = sum_ax / c as f64;
            for ci in 0..c {
                let off = base + ci * hw;
                let xhat = (x[off] as f64 - m) * is;
                let a = g[off] as f64 * gamma.data()[ci] as f64;
                dx[off] = (is * (a - mean_a - xhat * mean_ax)) as f32;
            }
        }
    }
    (
        Tensor::new(input.shape(), dx).unwrap(),
        Tensor::new(&[c], dgamma.iter().map(|&v| v as f32).collect()).unwrap(),
        Tensor::new(&[c], dbeta.iter().map(|&v| v as f32).collect()).unwrap(),
    )
}

impl GradTape {
    /// Records a channel layer norm; gradients flow to input, gamma, beta.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x).clone();
        let gv = self.value(gamma).clone();
        let bv = self.value(beta).clone();
        let (out, mean, inv_std) = layer_norm_with_stats(&xv, &gv, &bv)?;
        let mean = Arc::new(mean);
        let inv_std = Arc::new(inv_std);
        Ok(self.push(
            out,
            vec![x, gamma, beta],
            Some(Box::new(move |g: &Tensor| {
                let (dx, dgamma, dbeta) = layer_norm_backward(g, &xv, &gv, &mean, &inv_std);
                vec![dx, dgamma, dbeta]
            })),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{fd_vs_analytic, seeded_tensor};

    #[test]
    fn normalizes_channel_vector() {
        // Channels [1, 3] at a single position: mean 2, biased var 1.
        let x = Tensor::new(&[1, 2, 1, 1], vec![1.0, 3.0]).unwrap();
        let y = layer_norm(&x, &Tensor::ones(&[2]), &Tensor::zeros(&[2])).unwrap();
        let scale = 1.0 / (1.0f64 + LAYER_NORM_EPS).sqrt();
        assert!((y.data()[0] as f64 + scale).abs() < 1e-7);
        assert!((y.data()[1] as f64 - scale).abs() < 1e-7);
    }

    #[test]
    fn output_stats_are_zero_mean_unit_var() {
        let x = seeded_tensor(&[2, 16, 3, 3], 41)
            .scale(3.0)
            .map(|v| v + 0.7);
        let y = layer_norm(&x, &Tensor::ones(&[16]), &Tensor::zeros(&[16])).unwrap();
        let (c, hw) = (16, 9);
        for ni in 0..2 {
            for p in 0..hw {
                let mut s = 0f64;
                let mut s2 = 0f64;
                for ci in 0..c {
                    let v = y.data()[ni * c * hw + ci * hw + p] as f64;
                    s += v;
                    s2 += v * v;
                }
                let m = s / c as f64;
                let var = s2 / c as f64 - m * m;
                assert!(m.abs() < 1e-6, "mean {m}");
                assert!((var - 1.0).abs() < 1e-4, "var {var}");
            }
        }
    }

    #[test]
    fn affine_is_applied_per_channel() {
        let x = Tensor::new(&[1, 2, 1, 1], vec![1.0, 3.0]).unwrap();
        let gamma = Tensor::new(&[2], vec![2.0, 0.5]).unwrap();
        let beta = Tensor::new(&[2], vec![10.0, -10.0]).unwrap();
        let y = layer_norm(&x, &gamma, &beta).unwrap();
        let scale = 1.0 / (1.0f64 + LAYER_NORM_EPS).sqrt();
        assert!((y.data()[0] as f64 - (10.0 - 2.0 * scale)).abs() < 1e-6);
        assert!((y.data()[1] as f64 - (-10.0 + 0.5 * scale)).abs() < 1e-6);
    }

    #[test]
    fn constant_channels_stay_finite() {
        // Zero variance: eps keeps the result finite (xhat = 0 → y = beta).
        let x = Tensor::full(&[1, 4, 2, 2], 5.0);
        let beta = Tensor::new(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = layer_norm(&x, &Tensor::ones(&[4]), &beta).unwrap();
        assert!(y.all_finite());
        for ci in 0..4 {
            for p in 0..4 {
                assert_eq!(y.data()[ci * 4 + p], beta.data()[ci]);
            }
        }
    }

    #[test]
    fn rejects_mismatched_affine() {
        let x = Tensor::zeros(&[1, 4, 2, 2]);
        assert!(layer_norm(&x, &Tensor::ones(&[3]), &Tensor::zeros(&[4])).is_err());
        assert!(layer_norm(&x, &Tensor::ones(&[4]), &Tensor::zeros(&[5])).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = seeded_tensor(&[2, 6, 3, 3], 43);
        let gamma = seeded_tensor(&[6], 44).map(|v| v + 1.5); // keep away from 0
        let beta = seeded_tensor(&[6], 45);
        let worst = fd_vs_analytic(
            |tape, inputs| tape.layer_norm(inputs[0], inputs[1], inputs[2]).unwrap(),
            &[x, gamma, beta],
            16,
        );
        assert!(worst < 1e-3, "worst rel err {worst}");
    }
}
