//! Prediction quality metrics: pixel errors, structural similarity, and
//! threshold-based skill scores.
//!
//! Error metrics are reported in two conventions side by side:
//! * per-pixel mean (`mse`, `mae`) — comparable across image sizes;
//! * per-frame sum averaged over frames (`mse_frame_sum`, `mae_frame_sum`) —
//!   the convention common in video-prediction literature.
//!
//! All accumulation runs in f64; results are f64.

use std::fmt::Write as _;

use crate::data::denormalize;
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

/// Physical-value thresholds at which skill scores are evaluated.
pub const SKILL_THRESHOLDS: [f32; 3] = [5.0, 20.0, 40.0];

/// Gaussian window extent used by [`ssim`] (per axis, cropped on small
/// images).
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the SSIM Gaussian window, in pixels.
pub const SSIM_SIGMA: f64 = 1.5;

/// Squared/absolute error in both reporting conventions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    /// Mean squared error per element.
    pub mse: f64,
    /// Mean absolute error per element.
    pub mae: f64,
    /// Squared error summed within each frame, averaged over frames.
    pub mse_frame_sum: f64,
    /// Absolute error summed within each frame, averaged over frames.
    pub mae_frame_sum: f64,
}

/// Computes [`ErrorMetrics`] between two same-shape tensors of rank >= 3.
/// The trailing three axes (C, H, W) form a frame; all leading axes
/// enumerate frames.
pub fn error_metrics(pred: &Tensor, target: &Tensor) -> Result<ErrorMetrics> {
    if pred.shape() != target.shape() {
        return shape_err(format!(
            "prediction {:?} and target {:?} must have identical shapes",
            pred.shape(),
            target.shape()
        ));
    }
    if pred.rank() < 3 {
        return shape_err(format!(
            "error metrics need rank >= 3 (…, C, H, W), got {:?}",
            pred.shape()
        ));
    }
    let per_frame: usize = pred.shape()[pred.rank() - 3..].iter().product();
    let n = pred.numel();
    let (mut se, mut ae) = (0f64, 0f64);
    for (p, t) in pred.data().iter().zip(target.data()) {
        let d = *p as f64 - *t as f64;
        se += d * d;
        ae += d.abs();
    }
    let (mse, mae) = (se / n as f64, ae / n as f64);
    Ok(ErrorMetrics {
        mse,
        mae,
        mse_frame_sum: mse * per_frame as f64,
        mae_frame_sum: mae * per_frame as f64,
    })
}

/// Crops the window extent for a plane axis of length `n`: full size when it
/// fits, otherwise the largest odd extent that does (keeps the window
/// centered).
fn crop_window(n: usize) -> usize {
    if n >= SSIM_WINDOW {
        SSIM_WINDOW
    } else if n % 2 == 1 {
        n
    } else {
        n - 1
    }
}

/// Normalized 1D Gaussian window of the given extent.
fn gaussian_window(len: usize) -> Vec<f64> {
    let mid = (len - 1) as f64 / 2.0;
    let mut w: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - mid;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Structural similarity over one (H, W) plane pair, Gaussian-weighted
/// windows evaluated at every fully-interior position.
fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize, c1: f64, c2: f64) -> f64 {
    let (kh, kw) = (crop_window(h), crop_window(w));
    let (wy, wx) = (gaussian_window(kh), gaussian_window(kw));
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut total = 0f64;
    for oy in 0..oh {
        for ox in 0..ow {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0f64, 0f64, 0f64, 0f64, 0f64);
            for (iy, &gy) in wy.iter().enumerate() {
                let row = (oy + iy) * w + ox;
                for (ix, &gx) in wx.iter().enumerate() {
                    let g = gy * gx;
                    let (x, y) = (a[row + ix] as f64, b[row + ix] as f64);
                    sx += g * x;
                    sy += g * y;
                    sxx += g * x * x;
                    syy += g * y * y;
                    sxy += g * x * y;
                }
            }
            let (mx, my) = (sx, sy);
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    total / (oh * ow) as f64
}

/// Mean structural similarity between two same-shape tensors of rank >= 2.
/// The last two axes are the image plane; every leading index (channel,
/// frame, sample) contributes one plane score, and the result is their mean.
///
/// Windows are 11×11 Gaussian (σ = 1.5), cropped to the largest centered odd
/// extent on planes smaller than the window. Stabilizers are
/// C1 = (0.01·range)², C2 = (0.03·range)².
pub fn ssim(pred: &Tensor, target: &Tensor, data_range: f64) -> Result<f64> {
    if pred.shape() != target.shape() {
        return shape_err(format!(
            "prediction {:?} and target {:?} must have identical shapes",
            pred.shape(),
            target.shape()
        ));
    }
    if pred.rank() < 2 {
        return shape_err(format!(
            "ssim needs rank >= 2 (…, H, W), got {:?}",
            pred.shape()
        ));
    }
    if !(data_range.is_finite() && data_range > 0.0) {
        return arg_err(format!(
            "data_range must be positive and finite, got {data_range}"
        ));
    }
    let (h, w) = (pred.shape()[pred.rank() - 2], pred.shape()[pred.rank() - 1]);
    let planes = pred.numel() / (h * w);
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let mut total = 0f64;
    for p in 0..planes {
        let lo = p * h * w;
        total += ssim_plane(
            &pred.data()[lo..lo + h * w],
            &target.data()[lo..lo + h * w],
            h,
            w,
            c1,
            c2,
        );
    }
    Ok(total / planes as f64)
}

/// Element counts of a binary contingency table at some threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.true_pos += other.true_pos;
        self.true_neg += other.true_neg;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
    }
}

/// Counts the contingency table between prediction and target, where an
/// element is "positive" when its value is >= `threshold`. Values are
/// compared as given — callers working in physical units must map to them
/// first.
pub fn confusion_at_threshold(
    pred: &Tensor,
    target: &Tensor,
    threshold: f32,
) -> Result<ConfusionCounts> {
    if pred.shape() != target.shape() {
        return shape_err(format!(
            "prediction {:?} and target {:?} must have identical shapes",
            pred.shape(),
            target.shape()
        ));
    }
    let mut c = ConfusionCounts::default();
    for (p, t) in pred.data().iter().zip(target.data()) {
        match (*p >= threshold, *t >= threshold) {
            (true, true) => c.true_pos += 1,
            (false, false) => c.true_neg += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Skill scores derived from a contingency table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkillScores {
    /// Heidke skill score: chance-corrected accuracy in [-1, 1].
    pub hss: f64,
    /// Critical success index: hits / (hits + misses + false alarms), in [0, 1].
    pub csi: f64,
    /// True when a score's denominator was zero and it was reported as 0.
    pub degenerate: bool,
}

/// Computes HSS and CSI from counts. A zero denominator (e.g. no positives
/// anywhere for CSI, or a single-class table for HSS) yields 0 for that
/// score and sets `degenerate`.
pub fn skill_scores(c: ConfusionCounts) -> SkillScores {
    let (tp, tn, fp, fn_) = (
        c.true_pos as f64,
        c.true_neg as f64,
        c.false_pos as f64,
        c.false_neg as f64,
    );
    let hss_den = (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn);
    let csi_den = tp + fn_ + fp;
    let mut degenerate = false;
    let hss = if hss_den > 0.0 {
        2.0 * (tp * tn - fn_ * fp) / hss_den
    } else {
        degenerate = true;
        0.0
    };
    let csi = if csi_den > 0.0 {
        tp / csi_den
    } else {
        degenerate = true;
        0.0
    };
    SkillScores {
        hss,
        csi,
        degenerate,
    }
}

/// Skill at one threshold: scores averaged over samples, counts summed.
#[derive(Clone, Debug)]
pub struct ThresholdSkill {
    pub threshold: f32,
    /// Mean per-sample Heidke skill score.
    pub hss: f64,
    /// Mean per-sample critical success index.
    pub csi: f64,
    /// Samples whose table made at least one score degenerate.
    pub degenerate_samples: usize,
    /// Contingency counts summed over all samples.
    pub counts: ConfusionCounts,
}

/// Aggregate quality report over a set of (prediction, target) samples.
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub samples: usize,
    /// Mean over samples of per-pixel MSE on normalized values.
    pub mse: f64,
    pub mae: f64,
    pub mse_frame_sum: f64,
    pub mae_frame_sum: f64,
    /// Mean over samples of mean structural similarity (range 1.0).
    pub ssim: f64,
    /// One entry per value in [`SKILL_THRESHOLDS`].
    pub thresholds: Vec<ThresholdSkill>,
}

impl MetricReport {
    /// Mean of the per-threshold HSS values (each already a per-sample mean).
    pub fn hss_avg(&self) -> f64 {
        self.thresholds.iter().map(|t| t.hss).sum::<f64>() / self.thresholds.len() as f64
    }

    /// Mean of the per-threshold CSI values.
    pub fn csi_avg(&self) -> f64 {
        self.thresholds.iter().map(|t| t.csi).sum::<f64>() / self.thresholds.len() as f64
    }
}

/// Scores a prediction set. Each sample is a same-shape pair of rank >= 3
/// tensors holding normalized [0, 1] values; `lo`/`hi` give the physical
/// range used to denormalize before thresholding at [`SKILL_THRESHOLDS`].
///
/// Every metric is computed per sample and averaged; confusion counts are
/// additionally summed across samples for reference.
pub fn evaluate(preds: &[Tensor], targets: &[Tensor], lo: f32, hi: f32) -> Result<MetricReport> {
    if preds.is_empty() || preds.len() != targets.len() {
        return arg_err(format!(
            "need equally many predictions and targets, at least one pair (got {} and {})",
            preds.len(),
            targets.len()
        ));
    }
    let n = preds.len() as f64;
    let (mut mse, mut mae, mut mse_fs, mut mae_fs, mut ssim_sum) = (0f64, 0f64, 0f64, 0f64, 0f64);
    let mut skills: Vec<ThresholdSkill> = SKILL_THRESHOLDS
        .iter()
        .map(|&threshold| ThresholdSkill {
            threshold,
            hss: 0.0,
            csi: 0.0,
            degenerate_samples: 0,
            counts: ConfusionCounts::default(),
        })
        .collect();
    for (i, (p, t)) in preds.iter().zip(targets).enumerate() {
        if !p.all_finite() {
            return arg_err(format!("prediction {i} contains non-finite values"));
        }
        let e = error_metrics(p, t)?;
        mse += e.mse / n;
        mae += e.mae / n;
        mse_fs += e.mse_frame_sum / n;
        mae_fs += e.mae_frame_sum / n;
        ssim_sum += ssim(p, t, 1.0)? / n;
        let (dp, dt) = (denormalize(p, lo, hi)?, denormalize(t, lo, hi)?);
        for skill in &mut skills {
            let counts = confusion_at_threshold(&dp, &dt, skill.threshold)?;
            let s = skill_scores(counts);
            skill.hss += s.hss / n;
            skill.csi += s.csi / n;
            skill.degenerate_samples += s.degenerate as usize;
            skill.counts.merge(&counts);
        }
    }
    Ok(MetricReport {
        samples: preds.len(),
        mse,
        mae,
        mse_frame_sum: mse_fs,
        mae_frame_sum: mae_fs,
        ssim: ssim_sum,
        thresholds: skills,
    })
}

impl MetricReport {
    /// Renders the report as `key=value` lines with `#` comment headers.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# prediction quality over {} samples", self.samples);
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "# errors on normalized [0, 1] values, both conventions");
        let _ = writeln!(s, "mse_pixel_mean={:.9}", self.mse);
        let _ = writeln!(s, "mse_frame_sum={:.6}", self.mse_frame_sum);
        let _ = writeln!(s, "mae_pixel_mean={:.9}", self.mae);
        let _ = writeln!(s, "mae_frame_sum={:.6}", self.mae_frame_sum);
        let _ = writeln!(s, "ssim={:.9}", self.ssim);
        let _ = writeln!(
            s,
            "# skill scores: averaged per sample first, then across thresholds"
        );
        let _ = writeln!(s, "hss_avg={:.9}", self.hss_avg());
        let _ = writeln!(s, "csi_avg={:.9}", self.csi_avg());
        for t in &self.thresholds {
            let _ = writeln!(
                s,
                "# skill at physical threshold {}: scores averaged per sample, counts summed",
                t.threshold
            );
            let _ = writeln!(s, "hss_t{}={:.9}", t.threshold, t.hss);
            let _ = writeln!(s, "csi_t{}={:.9}", t.threshold, t.csi);
            let _ = writeln!(s, "degenerate_t{}={}", t.threshold, t.degenerate_samples);
            let _ = writeln!(s, "tp_t{}={}", t.threshold, t.counts.true_pos);
            let _ = writeln!(s, "tn_t{}={}", t.threshold, t.counts.true_neg);
            let _ = writeln!(s, "fp_t{}={}", t.threshold, t.counts.false_pos);
            let _ = writeln!(s, "fn_t{}={}", t.threshold, t.counts.false_neg);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::test_util::seeded_tensor;

    #[test]
    fn error_metrics_constant_offset_oracle() {
        // Every element differs by exactly 0.5 over (2, 1, 2, 2):
        // per-pixel mse 0.25, mae 0.5; frame sums ×4 elements per frame.
        let pred = Tensor::full(&[2, 1, 2, 2], 0.75);
        let target = Tensor::full(&[2, 1, 2, 2], 0.25);
        let e = error_metrics(&pred, &target).unwrap();
        assert_eq!(e.mse, 0.25);
        assert_eq!(e.mae, 0.5);
        assert_eq!(e.mse_frame_sum, 1.0);
        assert_eq!(e.mae_frame_sum, 2.0);
    }

    #[test]
    fn error_metrics_mixed_values() {
        let pred = Tensor::new(&[1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let target = Tensor::new(&[1, 1, 1, 4], vec![1.0, 0.0, 6.0, 4.0]).unwrap();
        let e = error_metrics(&pred, &target).unwrap();
        assert_eq!(e.mse, (4.0 + 9.0) / 4.0);
        assert_eq!(e.mae, (2.0 + 3.0) / 4.0);
        assert!(error_metrics(&pred, &Tensor::full(&[4], 0.0)).is_err());
        assert!(error_metrics(&Tensor::full(&[4], 0.0), &Tensor::full(&[4], 0.0)).is_err());
    }

    #[test]
    fn mae_bounded_by_rms_error() {
        // Cauchy–Schwarz: mean |d| <= sqrt(mean d²), for any error field.
        let mut rng = Rng::new(99);
        for trial in 0..50 {
            let pred = Tensor::from_fn(&[2, 1, 5, 5], |_| rng.next_f32() * 4.0 - 2.0);
            let target = Tensor::from_fn(&[2, 1, 5, 5], |_| rng.next_f32() * 4.0 - 2.0);
            let e = error_metrics(&pred, &target).unwrap();
            assert!(
                e.mae <= e.mse.sqrt() + 1e-12,
                "trial {trial}: {} > sqrt({})",
                e.mae,
                e.mse
            );
        }
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let x = seeded_tensor(&[2, 1, 16, 16], 31).map(|v| (v + 1.0) / 2.0);
        let s = ssim(&x, &x, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "ssim(x, x) = {s}");
        // Small plane (window cropped) still exactly one.
        let y = seeded_tensor(&[1, 1, 4, 5], 32);
        assert!((ssim(&y, &y, 2.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_planes_match_closed_form() {
        // For constant planes a and b every window sees mean a/b and zero
        // variance, so SSIM = (2ab + C1) / (a² + b² + C1) exactly.
        let (a, b) = (0.3f64, 0.7f64);
        let c1 = 0.01f64.powi(2);
        let expected = (2.0 * a * b + c1) / (a * a + b * b + c1);
        let pa = Tensor::full(&[1, 1, 20, 20], a as f32);
        let pb = Tensor::full(&[1, 1, 20, 20], b as f32);
        let s = ssim(&pa, &pb, 1.0).unwrap();
        // f32 storage of 0.3/0.7 costs a few ulps, nothing more.
        assert!((s - expected).abs() < 1e-6, "{s} vs {expected}");
    }

    /// Independent per-plane reference: builds the unnormalized window and
    /// divides at the end, iterating window-major instead of output-major.
    fn ssim_naive(a: &[f32], b: &[f32], h: usize, w: usize, range: f64) -> f64 {
        let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
        let crop = |n: usize| if n >= 11 { 11 } else { n - (n + 1) % 2 };
        let (kh, kw) = (crop(h), crop(w));
        let gauss: Vec<Vec<f64>> = (0..kh)
            .map(|i| {
                (0..kw)
                    .map(|j| {
                        let dy = i as f64 - (kh as f64 - 1.0) / 2.0;
                        let dx = j as f64 - (kw as f64 - 1.0) / 2.0;
                        (-(dy * dy) / (2.0 * 1.5 * 1.5)).exp()
                            * (-(dx * dx) / (2.0 * 1.5 * 1.5)).exp()
                    })
                    .collect()
            })
            .collect();
        let norm: f64 = gauss.iter().flatten().sum();
        let mut scores = Vec::new();
        for oy in 0..h - kh + 1 {
            for ox in 0..w - kw + 1 {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, grow) in gauss.iter().enumerate() {
                    for (j, g0) in grow.iter().enumerate() {
                        let g = g0 / norm;
                        let x = a[(oy + i) * w + ox + j] as f64;
                        let y = b[(oy + i) * w + ox + j] as f64;
                        sx += g * x;
                        sy += g * y;
                        sxx += g * x * x;
                        syy += g * y * y;
                        sxy += g * x * y;
                    }
                }
                scores.push(
                    ((2.0 * sx * sy + c1) * (2.0 * (sxy - sx * sy) + c2))
                        / ((sx * sx + sy * sy + c1) * ((sxx - sx * sx) + (syy - sy * sy) + c2)),
                );
            }
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }

    #[test]
    fn ssim_matches_independent_reference() {
        let mut rng = Rng::new(5150);
        for &(h, w) in &[(16usize, 16usize), (7, 5), (12, 30)] {
            let a = Tensor::from_fn(&[1, 1, h, w], |_| rng.next_f32());
            let b = Tensor::from_fn(&[1, 1, h, w], |_| rng.next_f32());
            let got = ssim(&a, &b, 1.0).unwrap();
            let want = ssim_naive(a.data(), b.data(), h, w, 1.0);
            assert!((got - want).abs() < 1e-12, "({h},{w}): {got} vs {want}");
        }
    }

    #[test]
    fn ssim_degrades_with_noise() {
        let mut rng = Rng::new(808);
        let clean = Tensor::from_fn(&[1, 1, 24, 24], |i| {
            let (y, x) = (i / 24, i % 24);
            (0.2 * (y as f32) + 0.1 * (x as f32)).sin() * 0.4 + 0.5
        });
        let light = clean.map(|v| v + 0.02 * rng.next_normal());
        let heavy = clean.map(|v| v + 0.3 * rng.next_normal());
        let s_light = ssim(&clean, &light, 1.0).unwrap();
        let s_heavy = ssim(&clean, &heavy, 1.0).unwrap();
        assert!(s_light > s_heavy, "{s_light} <= {s_heavy}");
        assert!(s_light > 0.9 && s_heavy < 0.8);
        assert!(ssim(&clean, &light, 0.0).is_err());
        assert!(ssim(&clean, &Tensor::full(&[5, 5], 0.0), 1.0).is_err());
    }

    #[test]
    fn confusion_counts_threshold_is_inclusive() {
        let pred = Tensor::new(&[4], vec![0.0, 6.0, 25.0, 10.0]).unwrap();
        let target = Tensor::new(&[4], vec![0.0, 5.0, 19.0, 45.0]).unwrap();
        // At 5 the boundary value 5 counts as positive.
        let c5 = confusion_at_threshold(&pred, &target, 5.0).unwrap();
        assert_eq!(
            c5,
            ConfusionCounts {
                true_pos: 3,
                true_neg: 1,
                false_pos: 0,
                false_neg: 0
            }
        );
        let c20 = confusion_at_threshold(&pred, &target, 20.0).unwrap();
        assert_eq!(
            c20,
            ConfusionCounts {
                true_pos: 0,
                true_neg: 2,
                false_pos: 1,
                false_neg: 1
            }
        );
        assert_eq!(c5.total(), 4);
    }

    #[test]
    fn skill_scores_exact_small_table() {
        // tp=3, tn=5, fp=1, fn=1:
        //   HSS = 2(3·5 − 1·1) / ((3+1)(1+5) + (3+1)(1+5)) = 28/48
        //   CSI = 3 / (3+1+1) = 3/5
        let s = skill_scores(ConfusionCounts {
            true_pos: 3,
            true_neg: 5,
            false_pos: 1,
            false_neg: 1,
        });
        assert_eq!(s.hss, 28.0 / 48.0);
        assert_eq!(s.csi, 3.0 / 5.0);
        assert!(!s.degenerate);
    }

    #[test]
    fn skill_scores_degenerate_tables() {
        // Empty table: both denominators zero.
        let s = skill_scores(ConfusionCounts::default());
        assert_eq!((s.hss, s.csi), (0.0, 0.0));
        assert!(s.degenerate);
        // All true positives: CSI is perfect, HSS has no negatives to judge.
        let s = skill_scores(ConfusionCounts {
            true_pos: 4,
            ..Default::default()
        });
        assert_eq!(s.csi, 1.0);
        assert_eq!(s.hss, 0.0);
        assert!(s.degenerate);
        // All true negatives: CSI undefined, HSS undefined.
        let s = skill_scores(ConfusionCounts {
            true_neg: 9,
            ..Default::default()
        });
        assert!(s.degenerate);
        // Perfect mixed table: both scores 1.
        let s = skill_scores(ConfusionCounts {
            true_pos: 6,
            true_neg: 4,
            ..Default::default()
        });
        assert_eq!(s.hss, 1.0);
        assert_eq!(s.csi, 1.0);
        assert!(!s.degenerate);
    }

    #[test]
    fn evaluate_perfect_prediction() {
        let mut rng = Rng::new(17);
        let targets: Vec<Tensor> = (0..2)
            .map(|_| Tensor::from_fn(&[3, 1, 16, 16], |_| rng.next_f32()))
            .collect();
        let report = evaluate(&targets, &targets, 0.0, 255.0).unwrap();
        assert_eq!(report.samples, 2);
        assert_eq!(report.mse, 0.0);
        assert_eq!(report.mae, 0.0);
        assert!((report.ssim - 1.0).abs() < 1e-12);
        assert_eq!(report.thresholds.len(), SKILL_THRESHOLDS.len());
        for t in &report.thresholds {
            // Uniform [0,1) denormalized to [0,255) straddles every
            // threshold, so a perfect prediction scores 1 on both.
            assert!((t.hss - 1.0).abs() < 1e-12, "hss at {}", t.threshold);
            assert!((t.csi - 1.0).abs() < 1e-12);
            assert_eq!(t.degenerate_samples, 0);
            assert_eq!(t.counts.false_pos + t.counts.false_neg, 0);
            assert_eq!(t.counts.total(), 2 * 3 * 16 * 16);
        }
    }

    #[test]
    fn evaluate_rejects_bad_inputs() {
        let x = Tensor::full(&[2, 1, 4, 4], 0.5);
        let one = std::slice::from_ref(&x);
        assert!(evaluate(&[], &[], 0.0, 1.0).is_err());
        assert!(evaluate(one, &[x.clone(), x.clone()], 0.0, 1.0).is_err());
        assert!(evaluate(&[x.map(|_| f32::NAN)], one, 0.0, 1.0).is_err());
        assert!(evaluate(one, one, 1.0, 0.0).is_err());
    }

    #[test]
    fn report_renders_as_key_value_lines() {
        let mut rng = Rng::new(23);
        let preds: Vec<Tensor> = (0..2)
            .map(|_| Tensor::from_fn(&[2, 1, 12, 12], |_| rng.next_f32()))
            .collect();
        let targets: Vec<Tensor> = (0..2)
            .map(|_| Tensor::from_fn(&[2, 1, 12, 12], |_| rng.next_f32()))
            .collect();
        let report = evaluate(&preds, &targets, 0.0, 255.0).unwrap();
        let text = report.render();
        for key in [
            "samples=2",
            "mse_pixel_mean=",
            "mse_frame_sum=",
            "mae_pixel_mean=",
            "mae_frame_sum=",
            "ssim=",
            "hss_avg=",
            "csi_avg=",
            "hss_t5=",
            "csi_t20=",
            "tp_t40=",
            "degenerate_t5=",
        ] {
            assert!(text.contains(key), "missing {key} in:\n{text}");
        }
        for line in text.lines() {
            assert!(
                line.starts_with('#') || line.contains('='),
                "unparseable line: {line}"
            );
        }
    }

    #[test]
    fn error_metrics_are_symmetric() {
        let a = seeded_tensor(&[2, 1, 6, 6], 41);
        let b = seeded_tensor(&[2, 1, 6, 6], 43);
        let ab = error_metrics(&a, &b).unwrap();
        let ba = error_metrics(&b, &a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn evaluate_is_batch_permutation_invariant() {
        let mut rng = Rng::new(77);
        let preds: Vec<Tensor> = (0..4)
            .map(|_| Tensor::from_fn(&[2, 1, 12, 12], |_| rng.next_f32()))
            .collect();
        let targets: Vec<Tensor> = (0..4)
            .map(|_| Tensor::from_fn(&[2, 1, 12, 12], |_| rng.next_f32()))
            .collect();
        let fwd = evaluate(&preds, &targets, 0.0, 255.0).unwrap();
        let perm = [2usize, 0, 3, 1];
        let preds_p: Vec<Tensor> = perm.iter().map(|&i| preds[i].clone()).collect();
        let targets_p: Vec<Tensor> = perm.iter().map(|&i| targets[i].clone()).collect();
        let rev = evaluate(&preds_p, &targets_p, 0.0, 255.0).unwrap();
        // Means are order-independent up to f64 summation order.
        assert!((fwd.mse - rev.mse).abs() < 1e-12);
        assert!((fwd.mae - rev.mae).abs() < 1e-12);
        assert!((fwd.ssim - rev.ssim).abs() < 1e-12);
        for (a, b) in fwd.thresholds.iter().zip(&rev.thresholds) {
            assert!((a.hss - b.hss).abs() < 1e-12);
            assert!((a.csi - b.csi).abs() < 1e-12);
            assert_eq!(a.counts, b.counts);
        }
    }

    #[test]
    fn ssim_is_one_under_shared_constant_shift() {
        let x = seeded_tensor(&[1, 1, 16, 16], 61).map(|v| (v + 1.0) / 2.0);
        let shifted = x.map(|v| v + 0.125);
        let s = ssim(&shifted, &shifted, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn skill_scores_match_pixelwise_recount() {
        // Brute-force oracle: reclassify every pixel independently and
        // recompute both scores from first principles.
        let mut rng = Rng::new(314);
        for trial in 0..10 {
            let pred = Tensor::from_fn(&[16, 16], |_| rng.next_f32() * 60.0);
            let target = Tensor::from_fn(&[16, 16], |_| rng.next_f32() * 60.0);
            let threshold = [5.0f32, 20.0, 40.0][trial % 3];
            let counts = confusion_at_threshold(&pred, &target, threshold).unwrap();
            let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
            for i in 0..256 {
                let p = pred.data()[i] >= threshold;
                let t = target.data()[i] >= threshold;
                match (p, t) {
                    (true, true) => tp += 1,
                    (false, false) => tn += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                }
            }
            assert_eq!(
                counts,
                ConfusionCounts {
                    true_pos: tp,
                    true_neg: tn,
                    false_pos: fp,
                    false_neg: fn_
                }
            );
            let s = skill_scores(counts);
            let expect_hss = 2.0 * (tp as f64 * tn as f64 - fn_ as f64 * fp as f64)
                / ((tp + fn_) as f64 * (fn_ + tn) as f64 + (tp + fp) as f64 * (fp + tn) as f64);
            assert!((s.hss - expect_hss).abs() < 1e-15);
            assert!((s.csi - tp as f64 / (tp + fn_ + fp) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_average_is_mean_of_single_thresholds() {
        let mut rng = Rng::new(2718);
        let preds: Vec<Tensor> = (0..3)
            .map(|_| Tensor::from_fn(&[2, 1, 10, 10], |_| rng.next_f32()))
            .collect();
        let targets: Vec<Tensor> = (0..3)
            .map(|_| Tensor::from_fn(&[2, 1, 10, 10], |_| rng.next_f32()))
            .collect();
        let r = evaluate(&preds, &targets, 0.0, 255.0).unwrap();
        let mean_hss = r.thresholds.iter().map(|t| t.hss).sum::<f64>() / 3.0;
        let mean_csi = r.thresholds.iter().map(|t| t.csi).sum::<f64>() / 3.0;
        assert_eq!(r.hss_avg(), mean_hss);
        assert_eq!(r.csi_avg(), mean_csi);
    }
}
