//! Analytic cost accounting: parameter and FLOP counts derived from the
//! configuration alone (nothing is instantiated).

use crate::model::config::ModelConfig;
use crate::model::params::param_specs;

/// Reference totals for the three standard configurations, used by the
/// `count` subcommand and tests for informational comparison.
pub const REFERENCE_PARAMS_MOVINGMNIST: u64 = 48_700_000;
pub const REFERENCE_FLOPS_MOVINGMNIST: u64 = 16_610_000_000;
pub const REFERENCE_PARAMS_TAXIBJ: u64 = 1_990_000;
pub const REFERENCE_FLOPS_TAXIBJ: u64 = 280_000_000;
pub const REFERENCE_PARAMS_RADAR_ECHO: u64 = 770_000;
pub const REFERENCE_FLOPS_RADAR_ECHO: u64 = 1_740_000_000;

/// Total scalar parameters implied by the configuration.
pub fn count_params(cfg: &ModelConfig) -> u64 {
    param_specs(cfg).iter().map(|s| s.numel() as u64).sum()
}

/// FLOPs of one forward pass on a single sample (batch 1, all `in_time`
/// frames), counting each convolution multiply–accumulate as 2 FLOPs.
/// Normalization, activation, bias, and residual costs are excluded; the
/// convolutions dominate asymptotically.
pub fn count_flops(cfg: &ModelConfig) -> u64 {
    let c = cfg.in_channels as u64;
    let t = cfg.in_time as u64;
    let (hh, ww) = (cfg.height as u64, cfg.width as u64);
    let hid = cfg.embed_hid as u64;
    let d = cfg.embed_dim as u64;
    let (kd, ks, kt) = (
        cfg.dw_kernel as u64,
        cfg.std_kernel as u64,
        cfg.time_kernel as u64,
    );
    let p = cfg.patch_size as u64;
    let (h, w) = (hh / p, ww / p);
    let hw = h * w;
    let td = t * d;
    let ff_hidden = cfg.ff_expansion as u64 * td;

    // conv MACs = out_channels · out_positions · (in_channels_per_group · K²)
    let mut macs: u64 = 0;

    // Embedding, per frame: 7×7 stride-2 to (H/2, W/2), then 3×3 convs at (h, w).
    let (h2, w2) = (hh / 2, ww / 2);
    macs +=
        t * (hid * h2 * w2 * (c * kd * kd) + hid * hw * (hid * ks * ks) + d * hw * (hid * ks * ks));

    // Per stage: spatial gate (per frame), temporal gate (on the (T, h·w)
    // plane), feed-forward (fused T·D channels).
    let sa = t * (3 * d * hw * d + d * hw * (kd * kd));
    let sta = 3 * d * (t * hw) * d + cfg.dilations.len() as u64 * d * (t * hw) * (kt * kt);
    let ff = ff_hidden * hw * td + td * hw * ff_hidden;
    macs += cfg.n_block as u64 * (sa + sta + ff);

    // Decoding, per frame: two 3×3 convs at (h, w), pixel shuffle (free),
    // final 3×3 conv at full (H, W).
    macs += t
        * (hid * hw * (d * ks * ks)
            + (c * p * p) * hw * (hid * ks * ks)
            + c * hh * ww * (c * ks * ks));

    2 * macs
}
