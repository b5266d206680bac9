//! End-to-end finite-difference verification of the analytic gradients.
//!
//! Builds a full training loss on a small model, computes gradients by the
//! reverse pass, then re-derives a sample of coordinates by central
//! differences on the (f64) loss readout and compares.

use crate::error::{arg_err, Result};
use crate::model::{bind_params, forward, forward_inference, ModelConfig, ParamStore};
use crate::rng::Rng;
use crate::tape::GradTape;
use crate::tensor::Tensor;
use crate::train::l1l2_loss_value;

/// Finite-difference step (scaled up for coordinates with |θ| > 1).
pub const FD_EPSILON: f64 = 1e-3;
/// A coordinate passes when |fd − analytic| <= max(RTOL·max(|fd|, |an|), ATOL).
pub const FD_RTOL: f64 = 1e-3;
/// Absolute floor of the comparison: the noise floor of the estimator
/// itself. Activations are stored in f32, so each probe's loss carries
/// round-off of a few 1e-7, and dividing by 2ε = 2e-3 turns that into
/// ~1e-4 of irreducible jitter on the central difference — independent of
/// gradient correctness. Real gradient defects (wrong sign, missing term,
/// bad indexing) show up at the scale of the gradients themselves, orders
/// of magnitude above this floor.
pub const FD_ATOL: f64 = 2.5e-4;
/// Each central difference is averaged over this many zero-centered base
/// dithers of ~3e-3·ε (hundreds of ulps: enough to re-roll the deterministic
/// f32 rounding pattern downstream, far too small to move the gradient).
/// The mean cancels the round-off jitter by ~√count while the stencil
/// half-width stays exactly ε.
const DITHER_COUNT: i64 = 9;
/// Deeper average used to re-judge coordinates that miss at the baseline
/// dither count.
const DITHER_COUNT_ESCALATED: i64 = 63;
/// At most this many failing coordinates are kept verbatim in the report.
const MAX_REPORTED_FAILURES: usize = 16;

/// Outcome of a finite-difference sweep.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates within tolerance.
    pub passed: usize,
    /// Largest relative disagreement seen (denominator floored at 1e-2).
    pub worst_rel: f64,
    /// Human-readable descriptions of the first few failures.
    pub failures: Vec<String>,
}

impl GradCheckReport {
    /// Fraction of checked coordinates that passed.
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            return 0.0;
        }
        self.passed as f64 / self.checked as f64
    }

    /// One-line `key=value` summary.
    pub fn summary(&self) -> String {
        format!(
            "checked={} passed={} pass_fraction={:.4} worst_rel={:.3e}",
            self.checked,
            self.passed,
            self.pass_fraction(),
            self.worst_rel
        )
    }
}

/// Checks every parameter tensor of a freshly initialized model against
/// central differences of the combined L1+L2 training loss, sampling
/// `samples_per_param` coordinates per tensor (capped at the tensor size).
///
/// Fully deterministic in (`cfg`, `seed`, `samples_per_param`).
pub fn gradcheck_model(
    cfg: &ModelConfig,
    seed: u64,
    samples_per_param: usize,
) -> Result<GradCheckReport> {
    if samples_per_param == 0 {
        return arg_err("samples_per_param must be >= 1");
    }
    cfg.validate()?;
    let mut store = ParamStore::init(cfg, seed)?;

    // One fixed (input, target) pair. The target is offset past the initial
    // prediction range so every residual stays strictly one-signed: the
    // absolute-error term is then probed where it is differentiable, and the
    // ±ε stencil cannot straddle its kink (which would corrupt the central
    // difference, not the analytic gradient). Its constant-slope contribution
    // still flows through the check.
    let mut data_rng = Rng::new(seed ^ 0x6E57_DA7A);
    let shape = [1, cfg.in_time, cfg.in_channels, cfg.height, cfg.width];
    let x = Tensor::from_fn(&shape, |_| data_rng.next_f32());
    let pred0 = forward_inference(&store, cfg, &x)?;
    let offset = 0.05 + pred0.data().iter().fold(0f32, |m, v| m.max(v.abs()));
    let target = Tensor::from_fn(&shape, |_| offset + data_rng.next_f32());

    // Analytic gradients from one reverse pass.
    let mut tape = GradTape::new();
    let bound = bind_params(&mut tape, &store);
    let x_var = tape.constant(x.clone());
    let target_var = tape.constant(target.clone());
    let pred = forward(&mut tape, x_var, &bound, cfg)?;
    let loss = tape.l1l2_loss(pred, target_var)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = bound
        .ordered()
        .iter()
        .map(|&v| grads.get(&tape, v))
        .collect::<Result<Vec<_>>>()?;

    // Finite differences on a deterministic sample of coordinates.
    let mut coord_rng = Rng::new(seed ^ 0x0FD5_EED0);
    let names: Vec<String> = store.entries().iter().map(|e| e.name.clone()).collect();
    let mut report = GradCheckReport {
        checked: 0,
        passed: 0,
        worst_rel: 0.0,
        failures: Vec::new(),
    };
    for (ti, name) in names.iter().enumerate() {
        let base = store.get(name)?.clone();
        let n = base.numel();
        let k = samples_per_param.min(n);
        // Sample k distinct coordinates (n is small relative to draws only
        // for biases; redraw on collision, bounded by k <= n).
        let mut coords: Vec<usize> = Vec::with_capacity(k);
        while coords.len() < k {
            let idx = coord_rng.next_below(n as u64) as usize;
            if !coords.contains(&idx) {
                coords.push(idx);
            }
        }
        for idx in coords {
            let theta = base.data()[idx] as f64;
            let eps = FD_EPSILON * theta.abs().max(1.0);

            let mut probe = |v: f32| -> Result<f64> {
                let mut data = base.data().to_vec();
                data[idx] = v;
                store.set(name, Tensor::new(base.shape(), data)?)?;
                let pred = forward_inference(&store, cfg, &x)?;
                l1l2_loss_value(&pred, &target)
            };
            let mut estimate = |count: i64| -> Result<f64> {
                let dither = eps * 3e-3;
                let mut fd = 0f64;
                for m in -(count / 2)..=count / 2 {
                    let shift = m as f64 * dither;
                    let plus = (theta + eps + shift) as f32;
                    let minus = (theta - eps + shift) as f32;
                    let achieved = plus as f64 - minus as f64;
                    fd += (probe(plus)? - probe(minus)?) / achieved / count as f64;
                }
                Ok(fd)
            };
            let an = analytic[ti].data()[idx] as f64;
            let tol = |fd: f64| (FD_RTOL * fd.abs().max(an.abs())).max(FD_ATOL);
            let mut fd = estimate(DITHER_COUNT)?;
            if (fd - an).abs() > tol(fd) {
                // Near-miss coordinates get a deeper average before being
                // judged: the residual jitter shrinks with more dithers,
                // a genuinely wrong gradient does not.
                fd = estimate(DITHER_COUNT_ESCALATED)?;
            }
            store.set(name, base.clone())?;

            let diff = (fd - an).abs();
            let rel = diff / fd.abs().max(an.abs()).max(FD_ATOL / FD_RTOL);
            report.checked += 1;
            report.worst_rel = report.worst_rel.max(rel);
            if diff <= tol(fd) {
                report.passed += 1;
            } else if report.failures.len() < MAX_REPORTED_FAILURES {
                report.failures.push(format!(
                    "{name}[{idx}]: fd={fd:.6e} analytic={an:.6e} |diff|={diff:.3e}"
                ));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_model_gradients_match_finite_differences() {
        let cfg = ModelConfig::toy();
        let report = gradcheck_model(&cfg, 7, 2).unwrap();
        let expected: usize = ParamStore::init(&cfg, 7)
            .unwrap()
            .entries()
            .iter()
            .map(|e| e.value.numel().min(2))
            .sum();
        assert_eq!(report.checked, expected);
        assert!(
            report.pass_fraction() >= 0.99,
            "pass fraction {:.4}; failures:\n{}",
            report.pass_fraction(),
            report.failures.join("\n")
        );
        let summary = report.summary();
        assert!(summary.contains("checked=") && summary.contains("worst_rel="));
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = ModelConfig::toy();
        let a = gradcheck_model(&cfg, 3, 1).unwrap();
        let b = gradcheck_model(&cfg, 3, 1).unwrap();
        assert_eq!(a.checked, b.checked);
        assert_eq!(a.passed, b.passed);
        assert_eq!(a.worst_rel, b.worst_rel);
    }

    #[test]
    fn rejects_zero_samples() {
        assert!(gradcheck_model(&ModelConfig::toy(), 0, 0).is_err());
    }

    /// Slow sweep kept out of the default run: verifies the pass rule holds
    /// with margin across seeds and denser sampling.
    #[test]
    #[ignore]
    fn seed_sweep_has_headroom() {
        let cfg = ModelConfig::toy();
        for seed in [0, 1, 2, 7, 42, 1234] {
            let report = gradcheck_model(&cfg, seed, 4).unwrap();
            assert!(
                report.pass_fraction() >= 0.99,
                "seed {seed}: {}\n{}",
                report.summary(),
                report.failures.join("\n")
            );
        }
    }
}
