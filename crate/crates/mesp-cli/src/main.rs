//! `mesp` — train, run, and inspect the spatiotemporal predictor.

mod config;

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use mesp::data::{
    gen_moving_sprites, load_dataset_split, save_dataset_dir, sliding_window, split_train_test,
    DatasetMeta,
};
use mesp::gradcheck::gradcheck_model;
use mesp::metrics::evaluate;
use mesp::model::{count_flops, count_params, param_specs, ModelConfig, ParamStore};
use mesp::tensor::Tensor;
use mesp::train::{predict_autoregressive, train, LossRecord};

#[derive(Parser)]
#[command(
    name = "mesp",
    version,
    about = "Desk-scale spatiotemporal sequence predictor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines (see presets for examples).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: movingmnist | taxibj | radarecho | toy.
    #[arg(long)]
    preset: Option<String>,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory (overrides the config).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bouncing-sprites dataset.
    GenData(Common),
    /// Train on a dataset directory and write a checkpoint plus loss curve.
    Train(Common),
    /// Predict future frames for the test split and write them out.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Frames to predict (autoregressive when beyond the model's frame
        /// count; overrides the config).
        #[arg(long)]
        t_out: Option<usize>,
    },
    /// Score test-split predictions and write a metrics report.
    Eval(Common),
    /// Print parameter and FLOP counts for a configuration.
    Count(Common),
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Use the small built-in configuration regardless of --config.
        #[arg(long)]
        toy: bool,
        /// Coordinates to sample per parameter tensor.
        #[arg(long, default_value_t = 2)]
        samples: usize,
    },
}

impl Common {
    /// defaults < preset/config file < flags.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(name), _) => RunConfig::preset(name)?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let mut cfg = RunConfig::default();
                cfg.apply_text(&text)
                    .with_context(|| format!("config {}", path.display()))?;
                cfg
            }
            (None, None) => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(data) = &self.data {
            cfg.data_dir = Some(data.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() {
    mesp::parallel::ensure_thread_pool();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(common) => common.resolve().and_then(cmd_gen_data),
        Command::Train(common) => common.resolve().and_then(cmd_train),
        Command::Predict { common, t_out } => common.resolve().and_then(|mut cfg| {
            if let Some(t) = t_out {
                cfg.t_out = Some(*t);
            }
            cmd_predict(cfg)
        }),
        Command::Eval(common) => common.resolve().and_then(cmd_eval),
        Command::Count(common) => common.resolve().and_then(cmd_count),
        Command::Gradcheck {
            common,
            toy,
            samples,
        } => common.resolve().and_then(|mut cfg| {
            if *toy {
                cfg.model = ModelConfig::toy();
            }
            cmd_gradcheck(cfg, *samples)
        }),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Generates sprite sequences, windows them, splits, and writes the dataset
/// directory. Sprites are binary, so windows are already normalized; the
/// manifest maps them onto the 0–255 image range.
fn cmd_gen_data(cfg: RunConfig) -> Result<()> {
    let t_in = cfg.model.in_time;
    let t_out = cfg.t_out();
    let sequences = gen_moving_sprites(
        cfg.gen_sequences,
        cfg.gen_frames,
        cfg.model.height,
        cfg.model.width,
        cfg.gen_sprites,
        cfg.seed,
    )?;
    let mut rows = Vec::new();
    for seq in &sequences {
        rows.extend(sliding_window(seq, t_in, t_out, cfg.window_stride)?);
    }
    let (train_rows, test_rows) = split_train_test(rows, cfg.split_ratio, cfg.seed ^ 0x5B17_CA57)?;
    let meta = DatasetMeta {
        t_in,
        t_out,
        lo: 0.0,
        hi: 255.0,
    };
    let dir = cfg.data_dir();
    save_dataset_dir(&dir, &train_rows, &test_rows, &meta)?;
    println!(
        "wrote {} train and {} test windows ({}+{} frames each) to {}",
        train_rows.len(),
        test_rows.len(),
        t_in,
        t_out,
        dir.display()
    );
    Ok(())
}

/// Loads the train split, trains, and writes checkpoint + loss curve.
fn cmd_train(cfg: RunConfig) -> Result<()> {
    let (mut rows, meta) = load_split(&cfg, "train")?;
    check_dataset_matches_model(&meta, &rows, &cfg.model)?;
    let t = cfg.model.in_time;
    if meta.t_out > t {
        // The model emits exactly `t` frames per pass; longer stored
        // horizons are for autoregressive evaluation. Train on the first
        // `t` target frames.
        for (_, target) in &mut rows {
            *target = target.slice_axis(0, 0, t)?;
        }
        println!(
            "targets truncated to {t} frames for training (dataset stores {})",
            meta.t_out
        );
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut csv = String::from("epoch,step,loss\n");
    let on_step = |r: &LossRecord| {
        println!("epoch={} step={} loss={:.6}", r.epoch, r.step, r.loss);
    };
    let (store, records) = train(&cfg.model, &rows, &cfg.train_config(), on_step)?;
    for r in &records {
        csv.push_str(&format!("{},{},{}\n", r.epoch, r.step, r.loss));
    }
    std::fs::write(cfg.out_dir.join("loss.csv"), csv)?;
    store.save_checkpoint(cfg.checkpoint())?;
    let first = records.first().map(|r| r.loss).unwrap_or(f64::NAN);
    let last = records.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "trained on {} windows for {} epoch(s): loss {first:.6} -> {last:.6}",
        rows.len(),
        cfg.train.epochs
    );
    println!("checkpoint: {}", cfg.checkpoint().display());
    Ok(())
}

/// Predicts `t_out` frames for every test window and writes them as one
/// rank-5 tensor.
fn cmd_predict(cfg: RunConfig) -> Result<()> {
    let (rows, meta) = load_split(&cfg, "test")?;
    check_dataset_matches_model(&meta, &rows, &cfg.model)?;
    let store = load_checkpoint_for(&cfg)?;
    let t_out = cfg.t_out();
    let (preds, passes) = predict_rows(&store, &cfg.model, &rows, t_out)?;
    println!("passes={passes}");
    std::fs::create_dir_all(&cfg.out_dir)?;
    let stacked = stack_samples(&preds)?;
    mesp::io::save_tensor(cfg.out_dir.join("pred.mesp"), &stacked)?;
    println!(
        "wrote {} predictions of {t_out} frame(s) to {}",
        preds.len(),
        cfg.out_dir.join("pred.mesp").display()
    );
    Ok(())
}

/// Rolls out predictions for the test split, scores them, and writes
/// report.txt plus the absolute-error tensor.
fn cmd_eval(cfg: RunConfig) -> Result<()> {
    let (rows, meta) = load_split(&cfg, "test")?;
    check_dataset_matches_model(&meta, &rows, &cfg.model)?;
    let store = load_checkpoint_for(&cfg)?;
    let (preds, passes) = predict_rows(&store, &cfg.model, &rows, meta.t_out)?;
    println!("passes={passes}");
    let targets: Vec<Tensor> = rows.iter().map(|(_, y)| y.clone()).collect();
    let report = evaluate(&preds, &targets, meta.lo, meta.hi)?;
    let abs_err: Vec<Tensor> = preds
        .iter()
        .zip(&targets)
        .map(|(p, t)| p.sub(t).map(|r| r.map(f32::abs)))
        .collect::<mesp::Result<_>>()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    mesp::io::save_tensor(
        cfg.out_dir.join("abs_error.mesp"),
        &stack_samples(&abs_err)?,
    )?;
    let text = report.render();
    std::fs::write(cfg.out_dir.join("report.txt"), &text)?;
    print!("{text}");
    println!("report: {}", cfg.out_dir.join("report.txt").display());
    Ok(())
}

/// Prints exact parameter and FLOP counts for the configuration.
fn cmd_count(cfg: RunConfig) -> Result<()> {
    cfg.model.validate()?;
    let params = count_params(&cfg.model);
    let flops = count_flops(&cfg.model);
    println!("params={params}");
    println!("flops={flops}");
    println!(
        "# one forward pass of one {}-frame {}x{} sequence",
        cfg.model.in_time, cfg.model.height, cfg.model.width
    );
    Ok(())
}

/// Runs the finite-difference sweep; exits nonzero below 99% agreement.
fn cmd_gradcheck(cfg: RunConfig, samples: usize) -> Result<()> {
    let report = gradcheck_model(&cfg.model, cfg.seed, samples)?;
    println!("{}", report.summary());
    for f in &report.failures {
        println!("fail: {f}");
    }
    if report.pass_fraction() < 0.99 {
        bail!(
            "gradient check failed: {}/{} coordinates within tolerance",
            report.passed,
            report.checked
        );
    }
    Ok(())
}

fn load_split(cfg: &RunConfig, split: &str) -> Result<(Vec<(Tensor, Tensor)>, DatasetMeta)> {
    let dir = cfg.data_dir();
    load_dataset_split(&dir, split)
        .with_context(|| format!("loading {split} split from {}", dir.display()))
}

fn check_dataset_matches_model(
    meta: &DatasetMeta,
    rows: &[(Tensor, Tensor)],
    model: &ModelConfig,
) -> Result<()> {
    if meta.t_in != model.in_time {
        bail!(
            "dataset has {} input frames but the model consumes {} (in_time)",
            meta.t_in,
            model.in_time
        );
    }
    if meta.t_out < model.in_time {
        bail!(
            "dataset stores {} target frames; training needs at least in_time = {}",
            meta.t_out,
            model.in_time
        );
    }
    if let Some((x, _)) = rows.first() {
        let want = [meta.t_in, model.in_channels, model.height, model.width];
        if x.shape() != want {
            bail!(
                "dataset windows are {:?} but the model expects {:?} (channels/height/width)",
                x.shape(),
                want
            );
        }
    }
    Ok(())
}

fn load_checkpoint_for(cfg: &RunConfig) -> Result<ParamStore> {
    let path = cfg.checkpoint();
    let store = ParamStore::load_checkpoint(&path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    store
        .matches_specs(&param_specs(&cfg.model))
        .map_err(|e| anyhow!("checkpoint {} does not fit the model: {e}", path.display()))?;
    Ok(store)
}

/// Predicts every row's continuation; returns per-sample predictions and
/// the (shared) number of forward passes.
fn predict_rows(
    store: &ParamStore,
    model: &ModelConfig,
    rows: &[(Tensor, Tensor)],
    t_out: usize,
) -> Result<(Vec<Tensor>, usize)> {
    if rows.is_empty() {
        bail!("the test split is empty; regenerate the dataset with a lower split_ratio");
    }
    let mut preds = Vec::with_capacity(rows.len());
    let mut passes = 0;
    for (x, _) in rows {
        let mut shape = vec![1];
        shape.extend_from_slice(x.shape());
        let rollout = predict_autoregressive(store, model, &x.reshape(&shape)?, t_out)?;
        passes = rollout.passes;
        preds.push(rollout.frames.reshape(&rollout.frames.shape()[1..])?);
    }
    Ok((preds, passes))
}

/// Stacks per-sample `(T, C, H, W)` tensors into `(N, T, C, H, W)`.
fn stack_samples(samples: &[Tensor]) -> Result<Tensor> {
    let mut stacked = Vec::with_capacity(samples.len());
    for s in samples {
        let mut shape = vec![1];
        shape.extend_from_slice(s.shape());
        stacked.push(s.reshape(&shape)?);
    }
    Ok(Tensor::concat(&stacked, 0)?)
}
