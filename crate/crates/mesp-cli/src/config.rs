//! Run configuration: documented defaults, overlaid by a preset or config
//! file of `key = value` lines, overlaid by command-line flags.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use mesp::model::ModelConfig;
use mesp::train::TrainConfig;

/// Built-in configurations, shipped as config-file text.
pub const PRESETS: [(&str, &str); 4] = [
    ("movingmnist", include_str!("../presets/movingmnist.cfg")),
    ("taxibj", include_str!("../presets/taxibj.cfg")),
    ("radarecho", include_str!("../presets/radarecho.cfg")),
    ("toy", include_str!("../presets/toy.cfg")),
];

/// Everything a run needs: architecture, optimizer, data generation knobs,
/// and paths.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    /// Frames to predict (inference horizon; autoregressive when larger
    /// than the model's frame count). Defaults to the model's frame count.
    pub t_out: Option<usize>,
    /// Synthetic sequences to generate.
    pub gen_sequences: usize,
    /// Frames per generated sequence.
    pub gen_frames: usize,
    /// Sprites per generated sequence.
    pub gen_sprites: usize,
    /// Window step when slicing sequences into samples.
    pub window_stride: usize,
    /// Fraction of windows that go to the train split.
    pub split_ratio: f64,
    /// Dataset directory; defaults to `<out>/dataset` when unset.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Checkpoint path; defaults to `<out>/params.ckpt` when unset.
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::toy(),
            train: TrainConfig::default(),
            seed: 0,
            t_out: None,
            gen_sequences: 64,
            gen_frames: 20,
            gen_sprites: 2,
            window_stride: 1,
            split_ratio: 0.7,
            data_dir: None,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
        }
    }
}

impl RunConfig {
    /// The inference horizon, defaulted to the model's frame count.
    pub fn t_out(&self) -> usize {
        self.t_out.unwrap_or(self.model.in_time)
    }

    /// The dataset directory, defaulted under the output directory.
    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("dataset"))
    }

    /// The checkpoint path, defaulted under the output directory.
    pub fn checkpoint(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("params.ckpt"))
    }

    /// Training configuration with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Returns the named preset's configuration.
    pub fn preset(name: &str) -> Result<RunConfig> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                anyhow!(
                    "unknown preset {name:?} (available: {})",
                    PRESETS.map(|(n, _)| n).join(", ")
                )
            })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)
            .with_context(|| format!("preset {name}"))?;
        Ok(cfg)
    }

    /// Overlays `key = value` lines onto this configuration. Lines may be
    /// blank or `#` comments; lists use `(a,b,c)`. Unknown keys are
    /// rejected by name.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {raw:?}", ln + 1))?;
            self.apply_key(key.trim(), value.trim())
                .with_context(|| format!("line {}", ln + 1))?;
        }
        Ok(())
    }

    fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn int(key: &str, value: &str) -> Result<usize> {
            value
                .parse()
                .map_err(|_| anyhow!("{key}: expected an integer, got {value:?}"))
        }
        fn float(key: &str, value: &str) -> Result<f64> {
            value
                .parse()
                .map_err(|_| anyhow!("{key}: expected a number, got {value:?}"))
        }
        match key {
            "in_channels" => self.model.in_channels = int(key, value)?,
            "in_time" => self.model.in_time = int(key, value)?,
            "height" => self.model.height = int(key, value)?,
            "width" => self.model.width = int(key, value)?,
            "n_block" => self.model.n_block = int(key, value)?,
            "patch_size" => self.model.patch_size = int(key, value)?,
            "embed_hid" => self.model.embed_hid = int(key, value)?,
            "embed_dim" => self.model.embed_dim = int(key, value)?,
            "dilations" => self.model.dilations = parse_list(key, value)?,
            "ff_expansion" => self.model.ff_expansion = int(key, value)?,
            "dw_kernel" => self.model.dw_kernel = int(key, value)?,
            "std_kernel" => self.model.std_kernel = int(key, value)?,
            "time_kernel" => self.model.time_kernel = int(key, value)?,
            "batch_size" => self.train.batch_size = int(key, value)?,
            "learning_rate" => self.train.learning_rate = float(key, value)? as f32,
            "epochs" => self.train.epochs = int(key, value)?,
            "weight_decay" => self.train.weight_decay = float(key, value)? as f32,
            "beta1" => self.train.beta1 = float(key, value)? as f32,
            "beta2" => self.train.beta2 = float(key, value)? as f32,
            "adam_eps" => self.train.eps = float(key, value)? as f32,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| anyhow!("seed: expected an integer, got {value:?}"))?
            }
            "t_out" => self.t_out = Some(int(key, value)?),
            "gen_sequences" => self.gen_sequences = int(key, value)?,
            "gen_frames" => self.gen_frames = int(key, value)?,
            "gen_sprites" => self.gen_sprites = int(key, value)?,
            "window_stride" => self.window_stride = int(key, value)?,
            "split_ratio" => self.split_ratio = float(key, value)?,
            "data" => self.data_dir = Some(PathBuf::from(value)),
            "out" => self.out_dir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            _ => bail!("unknown configuration key {key:?}"),
        }
        Ok(())
    }

    /// Validates the merged configuration.
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| anyhow!("{e}"))?;
        self.train.validate().map_err(|e| anyhow!("{e}"))?;
        if self.t_out() == 0 {
            bail!("t_out must be >= 1");
        }
        if self.window_stride == 0 {
            bail!("window_stride must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.split_ratio) {
            bail!("split_ratio must be in [0, 1], got {}", self.split_ratio);
        }
        Ok(())
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let inner = value
        .strip_prefix('(')
        .and_then(|v| v.strip_suffix(')'))
        .ok_or_else(|| anyhow!("{key}: expected a list like (1,2,4), got {value:?}"))?;
    inner
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| anyhow!("{key}: bad list entry {:?} in {value:?}", p.trim()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (name, _) in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn preset_rows_match_builtin_configs() {
        assert_eq!(
            RunConfig::preset("movingmnist").unwrap().model,
            ModelConfig::movingmnist()
        );
        assert_eq!(
            RunConfig::preset("taxibj").unwrap().model,
            ModelConfig::taxibj()
        );
        assert_eq!(
            RunConfig::preset("radarecho").unwrap().model,
            ModelConfig::radar_echo()
        );
        assert_eq!(RunConfig::preset("toy").unwrap().model, ModelConfig::toy());
        assert_eq!(RunConfig::preset("radarecho").unwrap().t_out(), 10);
        let mm = RunConfig::preset("movingmnist").unwrap();
        assert_eq!(mm.train.batch_size, 16);
        assert!((mm.train.learning_rate - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn unknown_and_malformed_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("nonsense = 4\n").unwrap_err();
        assert!(format!("{err:#}").contains("nonsense"));
        assert!(cfg.apply_text("in_time\n").is_err());
        assert!(cfg.apply_text("in_time = x\n").is_err());
        assert!(cfg.apply_text("dilations = 1,2\n").is_err());
        assert!(cfg.apply_text("dilations = (1,b)\n").is_err());
    }

    #[test]
    fn text_overlays_and_comments() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\nheight = 32\nwidth=32\n  seed = 9\nout = results\n")
            .unwrap();
        assert_eq!(cfg.model.height, 32);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.out_dir, PathBuf::from("results"));
        assert_eq!(cfg.data_dir(), PathBuf::from("results/dataset"));
        assert_eq!(cfg.checkpoint(), PathBuf::from("results/params.ckpt"));
        cfg.apply_text("checkpoint = elsewhere.ckpt\n").unwrap();
        assert_eq!(cfg.checkpoint(), PathBuf::from("elsewhere.ckpt"));
    }
}
