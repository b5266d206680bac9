//! Shared helpers for numeric tests: seeded random tensors and a
//! finite-difference check for backward rules.

use crate::rng::Rng;
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

/// Deterministic tensor with entries uniform in [-1, 1).
pub(crate) fn seeded_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    Tensor::from_fn(shape, |_| rng.next_f32() * 2.0 - 1.0)
}

/// Compares analytic gradients against central finite differences with a
/// base step of 1e-3 (scaled up for coordinates larger than 1).
pub(crate) fn fd_vs_analytic(
    build: impl Fn(&mut GradTape, &[Var]) -> Var,
    inputs: &[Tensor],
    k_per_input: usize,
) -> f64 {
    fd_vs_analytic_eps(build, inputs, k_per_input, 1e-3)
}

/// Compares analytic gradients against central finite differences.
///
/// `build` records the operation under test on a fresh tape, mapping leaf
/// variables (one per entry of `inputs`, in order) to the operation's output.
/// The output is reduced with a fixed random projection so no gradient
/// direction cancels structurally, and the projected loss is read out in f64
/// to keep FD noise below the tolerance. Returns the worst relative error
/// over `k_per_input` randomly sampled coordinates of every input.
///
/// `eps_base` is the FD step for coordinates of magnitude <= 1. Operations
/// that are linear in every argument (convolution, rearrangements) have zero
/// truncation error, so a larger step there just drowns out f32 rounding
/// noise in the readout.
pub(crate) fn fd_vs_analytic_eps(
    build: impl Fn(&mut GradTape, &[Var]) -> Var,
    inputs: &[Tensor],
    k_per_input: usize,
    eps_base: f32,
) -> f64 {
    // Probe the output shape, then fix a projection tensor.
    let out_shape = {
        let mut tape = GradTape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).shape().to_vec()
    };
    let proj = seeded_tensor(&out_shape, 0x5EED_0001);

    let eval_f64 = |tensors: &[Tensor]| -> f64 {
        let mut tape = GradTape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out)
            .data()
            .iter()
            .zip(proj.data())
            .map(|(&y, &r)| y as f64 * r as f64)
            .sum()
    };

    // Analytic gradients of the projected loss.
    let mut tape = GradTape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let proj_var = tape.constant(proj.clone());
    let weighted = tape.hadamard(out, proj_var).unwrap();
    let loss = tape.sum(weighted).unwrap();
    let grads = tape.backward(loss).unwrap();

    let mut rng = Rng::new(0x00FD_5EED);
    let mut worst = 0f64;
    for (i, base) in inputs.iter().enumerate() {
        let analytic = grads.get(&tape, vars[i]).unwrap();
        let n = base.numel();
        let k = k_per_input.min(n);
        for _ in 0..k {
            let j = rng.next_below(n as u64) as usize;
            let xj = base.data()[j];
            let eps = eps_base.max(eps_base * xj.abs());
            let mut plus = base.data().to_vec();
            plus[j] = xj + eps;
            let mut minus = base.data().to_vec();
            minus[j] = xj - eps;
            let achieved = (plus[j] - minus[j]) as f64;
            let mut at_plus = inputs.to_vec();
            at_plus[i] = Tensor::new(base.shape(), plus).unwrap();
            let mut at_minus = inputs.to_vec();
            at_minus[i] = Tensor::new(base.shape(), minus).unwrap();
            let fd = (eval_f64(&at_plus) - eval_f64(&at_minus)) / achieved;
            let an = analytic.data()[j] as f64;
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    worst
}
