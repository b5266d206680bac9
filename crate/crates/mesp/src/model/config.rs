use crate::error::{arg_err, Result};

/// Architecture hyperparameters for the predictor.
///
/// The network maps `(B, in_time, in_channels, height, width)` to an output
/// of the same shape: frames are embedded to a `(embed_dim, height/patch,
/// width/patch)` grid, refined by `n_block` × [spatial gate → temporal gate →
/// feed-forward] stages, and decoded back to full resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Channels per frame (1 for grayscale video, 2 for flow fields, ...).
    pub in_channels: usize,
    /// Frames consumed — and produced — per forward pass.
    pub in_time: usize,
    pub height: usize,
    pub width: usize,
    /// Number of [spatial → temporal → feed-forward] stages.
    pub n_block: usize,
    /// Spatial downsampling factor of the embedding (2 or 4).
    pub patch_size: usize,
    /// Hidden width inside the embedding / decoding convolutions.
    pub embed_hid: usize,
    /// Channel width of the embedded representation.
    pub embed_dim: usize,
    /// Time-axis dilations of the chained depthwise convolutions in the
    /// temporal gate; one 3×3 layer per entry.
    pub dilations: Vec<usize>,
    /// Feed-forward hidden width multiplier (hidden = expansion·T·D).
    pub ff_expansion: usize,
    /// Kernel size of the embedding's first conv and the spatial gate's
    /// depthwise conv.
    pub dw_kernel: usize,
    /// Kernel size of the remaining embedding / decoding convolutions.
    pub std_kernel: usize,
    /// Kernel size of the temporal gate's depthwise convolutions.
    pub time_kernel: usize,
}

impl ModelConfig {
    /// 64×64 single-channel video, 10 frames in / 10 out.
    pub fn movingmnist() -> ModelConfig {
        ModelConfig {
            in_channels: 1,
            in_time: 10,
            height: 64,
            width: 64,
            n_block: 8,
            patch_size: 2,
            embed_hid: 64,
            embed_dim: 128,
            dilations: vec![1, 2, 4],
            ..ModelConfig::base()
        }
    }

    /// 32×32 two-channel traffic flow, 4 frames in / 4 out.
    pub fn taxibj() -> ModelConfig {
        ModelConfig {
            in_channels: 2,
            in_time: 4,
            height: 32,
            width: 32,
            n_block: 4,
            patch_size: 4,
            embed_hid: 32,
            embed_dim: 64,
            dilations: vec![1, 2],
            ..ModelConfig::base()
        }
    }

    /// 100×100 single-channel radar reflectivity, 5 frames in.
    pub fn radar_echo() -> ModelConfig {
        ModelConfig {
            in_channels: 1,
            in_time: 5,
            height: 100,
            width: 100,
            n_block: 4,
            patch_size: 4,
            embed_hid: 128,
            embed_dim: 128,
            dilations: vec![1, 2],
            ..ModelConfig::base()
        }
    }

    /// Small configuration for fast tests and gradient checking:
    /// 16×16 single channel, 4 frames, one block, 16-dim embedding.
    pub fn toy() -> ModelConfig {
        ModelConfig {
            in_channels: 1,
            in_time: 4,
            height: 16,
            width: 16,
            n_block: 1,
            patch_size: 2,
            embed_hid: 16,
            embed_dim: 16,
            dilations: vec![1, 2],
            ..ModelConfig::base()
        }
    }

    fn base() -> ModelConfig {
        ModelConfig {
            in_channels: 1,
            in_time: 1,
            height: 2,
            width: 2,
            n_block: 1,
            patch_size: 2,
            embed_hid: 1,
            embed_dim: 1,
            dilations: vec![1],
            ff_expansion: 2,
            dw_kernel: 7,
            std_kernel: 3,
            time_kernel: 3,
        }
    }

    /// Grid extent after embedding: (height/patch, width/patch).
    pub fn embedded_extent(&self) -> (usize, usize) {
        (self.height / self.patch_size, self.width / self.patch_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.in_time == 0 {
            return arg_err("in_channels and in_time must be >= 1");
        }
        if self.n_block == 0 {
            return arg_err("n_block must be >= 1");
        }
        if self.patch_size != 2 && self.patch_size != 4 {
            return arg_err(format!(
                "patch_size must be 2 or 4, got {}",
                self.patch_size
            ));
        }
        if self.height == 0 || self.width == 0 {
            return arg_err("height and width must be >= 1");
        }
        if !self.height.is_multiple_of(self.patch_size)
            || !self.width.is_multiple_of(self.patch_size)
        {
            return arg_err(format!(
                "height {} and width {} must be divisible by patch_size {}",
                self.height, self.width, self.patch_size
            ));
        }
        if self.embed_hid == 0 || self.embed_dim == 0 {
            return arg_err("embed_hid and embed_dim must be >= 1");
        }
        if self.dilations.is_empty() {
            return arg_err("dilations must have at least one entry");
        }
        if self.dilations[0] != 1 {
            return arg_err(format!(
                "first dilation must be 1, got {}",
                self.dilations[0]
            ));
        }
        if self.dilations.windows(2).any(|w| w[1] <= w[0]) {
            return arg_err(format!(
                "dilations {:?} must be strictly increasing",
                self.dilations
            ));
        }
        if self.ff_expansion == 0 {
            return arg_err("ff_expansion must be >= 1");
        }
        for (name, k) in [
            ("dw_kernel", self.dw_kernel),
            ("std_kernel", self.std_kernel),
            ("time_kernel", self.time_kernel),
        ] {
            if k == 0 || k % 2 == 0 {
                return arg_err(format!("{name} must be odd and >= 1, got {k}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for cfg in [
            ModelConfig::movingmnist(),
            ModelConfig::taxibj(),
            ModelConfig::radar_echo(),
            ModelConfig::toy(),
        ] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn embedded_extent_divides() {
        assert_eq!(ModelConfig::movingmnist().embedded_extent(), (32, 32));
        assert_eq!(ModelConfig::taxibj().embedded_extent(), (8, 8));
        assert_eq!(ModelConfig::radar_echo().embedded_extent(), (25, 25));
        assert_eq!(ModelConfig::toy().embedded_extent(), (8, 8));
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let ok = ModelConfig::toy();

        let mut c = ok.clone();
        c.patch_size = 3;
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.height = 15; // not divisible by patch 2
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.dilations = vec![2, 4]; // must start at 1
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.dilations = vec![1, 2, 2]; // strictly increasing
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.dw_kernel = 6; // even kernels cannot preserve extents symmetrically
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.n_block = 0;
        assert!(c.validate().is_err());
    }
}
