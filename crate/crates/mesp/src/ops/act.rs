//! GELU activation (tanh approximation).

use crate::error::Result;
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_CUBIC: f64 = 0.044715;

/// `gelu(x) = 0.5·x·(1 + tanh(sqrt(2/π)·(x + 0.044715·x³)))`, evaluated in
/// f64 per element and rounded once to f32.
pub fn gelu(input: &Tensor) -> Tensor {
    input.map(|v| {
        let x = v as f64;
        let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
        (0.5 * x * (1.0 + u.tanh())) as f32
    })
}

/// Elementwise derivative: with `u = sqrt(2/π)·(x + 0.044715·x³)` and
/// `t = tanh(u)`, `gelu'(x) = 0.5·(1 + t) + 0.5·x·(1 − t²)·u'`.
pub fn gelu_derivative(input: &Tensor) -> Tensor {
    input.map(|v| {
        let x = v as f64;
        let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
        let t = u.tanh();
        let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
        (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du) as f32
    })
}

impl GradTape {
    /// Records a GELU; the gradient is `g ⊙ gelu'(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x).clone();
        let out = gelu(&xv);
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g: &Tensor| {
                vec![g.hadamard(&gelu_derivative(&xv)).expect("gelu grad")]
            })),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{fd_vs_analytic, seeded_tensor};

    // Reference values computed independently from the tanh-form definition.
    #[test]
    fn known_values() {
        let x = Tensor::new(&[5], vec![0.0, 1.0, -1.0, 0.5, 10.0]).unwrap();
        let y = gelu(&x);
        let expect = [0.0, 0.841192, -0.158808, 0.345714, 10.0];
        for (got, want) in y.data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-6, "got {got}, want {want}");
        }
        // Far negative saturates to 0.
        assert_eq!(gelu(&Tensor::scalar(-10.0)).data()[0], 0.0);
    }

    #[test]
    fn is_monotone_on_sampled_grid_above_minus_half() {
        // GELU is monotone on x >= 0 and dips slightly below on negatives;
        // check shape properties rather than monotonicity everywhere.
        let y0 = gelu(&Tensor::scalar(0.0)).data()[0];
        assert_eq!(y0, 0.0);
        for i in 0..100 {
            let x = i as f32 * 0.1;
            let lo = gelu(&Tensor::scalar(x)).data()[0];
            let hi = gelu(&Tensor::scalar(x + 0.1)).data()[0];
            assert!(hi >= lo);
        }
    }

    #[test]
    fn derivative_matches_finite_differences_pointwise() {
        for i in -20..=20 {
            let x = i as f64 * 0.25;
            let eps = 1e-5;
            let f = |x: f64| {
                let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            };
            let fd = (f(x + eps) - f(x - eps)) / (2.0 * eps);
            let an = gelu_derivative(&Tensor::scalar(x as f32)).data()[0] as f64;
            assert!((fd - an).abs() < 1e-5, "x={x}: fd {fd} vs {an}");
        }
    }

    #[test]
    fn tape_gradient_matches_finite_differences() {
        let x = seeded_tensor(&[3, 4, 2, 2], 51).scale(2.0);
        let worst = fd_vs_analytic(|tape, inputs| tape.gelu(inputs[0]).unwrap(), &[x], 24);
        assert!(worst < 1e-3, "worst rel err {worst}");
    }
}
