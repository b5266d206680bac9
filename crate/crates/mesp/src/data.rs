//! Synthetic data, windowing, normalization, and dataset files.
//!
//! A dataset directory holds one tensor container per split plus a sidecar
//! manifest:
//!
//! ```text
//! train.mesp   (N, t_in + t_out, C, H, W)
//! test.mesp    (N, t_in + t_out, C, H, W)
//! meta.txt     t_in=, t_out=, lo=, hi= lines
//! ```
//!
//! `lo`/`hi` record the physical value range the stored [0, 1] data was
//! normalized from, so evaluation can map predictions back to physical units.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{arg_err, format_err, shape_err, Result};
use crate::io;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Sprites are fixed 8×8 binary blobs.
pub const SPRITE_SIZE: usize = 8;
/// Cells per sprite blob (~40% fill of the 8×8 box).
const SPRITE_CELLS: usize = 26;
/// Sprites move 1 or 2 pixels per frame along each axis.
const MAX_SPEED: i64 = 2;

/// Minimum grid extent: leaves a sprite room to bounce without the
/// reflection ever overshooting the opposite wall.
pub const MIN_GRID: usize = SPRITE_SIZE + 2 * MAX_SPEED as usize;

fn random_blob(rng: &mut Rng) -> [[bool; SPRITE_SIZE]; SPRITE_SIZE] {
    let mut cells = [[false; SPRITE_SIZE]; SPRITE_SIZE];
    let mut members: Vec<(usize, usize)> = Vec::with_capacity(SPRITE_CELLS);
    // 2×2 core in the middle, grown by random accretion: connected by
    // construction.
    for (r, c) in [(3, 3), (3, 4), (4, 3), (4, 4)] {
        cells[r][c] = true;
        members.push((r, c));
    }
    let mut attempts = 0;
    while members.len() < SPRITE_CELLS && attempts < 1000 {
        attempts += 1;
        let &(r, c) = &members[rng.next_below(members.len() as u64) as usize];
        let (dr, dc) = [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)][rng.next_below(4) as usize];
        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
        if (0..SPRITE_SIZE as i64).contains(&nr) && (0..SPRITE_SIZE as i64).contains(&nc) {
            let (nr, nc) = (nr as usize, nc as usize);
            if !cells[nr][nc] {
                cells[nr][nc] = true;
                members.push((nr, nc));
            }
        }
    }
    cells
}

/// Reflects a coordinate into [0, max], flipping the velocity on each bounce.
fn reflect(pos: &mut i64, vel: &mut i64, max: i64) {
    loop {
        if *pos < 0 {
            *pos = -*pos;
            *vel = -*vel;
        } else if *pos > max {
            *pos = 2 * max - *pos;
            *vel = -*vel;
        } else {
            break;
        }
    }
}

/// Generates sequences of bouncing binary sprites.
///
/// Each sequence is `(frames, 1, h, w)` with values in {0, 1}: `n_sprites`
/// randomly grown 8×8 blobs move with constant integer velocity (1 or 2
/// pixels per frame per axis, random sign) and reflect off the walls.
/// Overlapping sprites merge by maximum. Fully determined by `seed`.
pub fn gen_moving_sprites(
    n_sequences: usize,
    frames: usize,
    h: usize,
    w: usize,
    n_sprites: usize,
    seed: u64,
) -> Result<Vec<Tensor>> {
    if n_sequences == 0 || frames == 0 || n_sprites == 0 {
        return arg_err("n_sequences, frames, and n_sprites must be >= 1");
    }
    if h < MIN_GRID || w < MIN_GRID {
        return arg_err(format!(
            "grid {h}×{w} too small: an {SPRITE_SIZE}×{SPRITE_SIZE} sprite moving up to \
             {MAX_SPEED} px/frame needs at least {MIN_GRID}×{MIN_GRID}"
        ));
    }
    let mut rng = Rng::new(seed);
    let (max_r, max_c) = ((h - SPRITE_SIZE) as i64, (w - SPRITE_SIZE) as i64);
    let mut sequences = Vec::with_capacity(n_sequences);
    for _ in 0..n_sequences {
        struct Sprite {
            blob: [[bool; SPRITE_SIZE]; SPRITE_SIZE],
            pos: (i64, i64),
            vel: (i64, i64),
        }
        let mut sprites = Vec::with_capacity(n_sprites);
        for _ in 0..n_sprites {
            let blob = random_blob(&mut rng);
            let pos = (
                rng.next_below(max_r as u64 + 1) as i64,
                rng.next_below(max_c as u64 + 1) as i64,
            );
            let mut vel = (0i64, 0i64);
            for v in [&mut vel.0, &mut vel.1] {
                let mag = 1 + rng.next_below(MAX_SPEED as u64) as i64;
                *v = if rng.next_below(2) == 0 { mag } else { -mag };
            }
            sprites.push(Sprite { blob, pos, vel });
        }
        let mut data = vec![0f32; frames * h * w];
        for f in 0..frames {
            let frame = &mut data[f * h * w..(f + 1) * h * w];
            for s in &mut sprites {
                for (r, row) in s.blob.iter().enumerate() {
                    for (c, &set) in row.iter().enumerate() {
                        if set {
                            let (pr, pc) = (s.pos.0 as usize + r, s.pos.1 as usize + c);
                            frame[pr * w + pc] = 1.0;
                        }
                    }
                }
                s.pos.0 += s.vel.0;
                s.pos.1 += s.vel.1;
                reflect(&mut s.pos.0, &mut s.vel.0, max_r);
                reflect(&mut s.pos.1, &mut s.vel.1, max_c);
            }
        }
        sequences.push(Tensor::new(&[frames, 1, h, w], data)?);
    }
    Ok(sequences)
}

/// Cuts a `(L, C, H, W)` sequence into overlapping (input, target) windows:
/// window k starts at frame k·stride and yields frames `[0, t_in)` as input
/// and `[t_in, t_in + t_out)` as target. Produces
/// `(L − t_in − t_out)/stride + 1` windows.
pub fn sliding_window(
    seq: &Tensor,
    t_in: usize,
    t_out: usize,
    stride: usize,
) -> Result<Vec<(Tensor, Tensor)>> {
    if seq.rank() != 4 {
        return shape_err(format!(
            "sequence must be rank 4 (L, C, H, W), got {:?}",
            seq.shape()
        ));
    }
    if t_in == 0 || t_out == 0 {
        return arg_err("t_in and t_out must be >= 1");
    }
    if stride == 0 {
        return arg_err("stride must be >= 1");
    }
    let l = seq.shape()[0];
    let window = t_in + t_out;
    if window > l {
        return arg_err(format!(
            "window t_in + t_out = {window} exceeds sequence length {l}"
        ));
    }
    let count = (l - window) / stride + 1;
    let mut rows = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * stride;
        rows.push((
            seq.slice_axis(0, start, t_in)?,
            seq.slice_axis(0, start + t_in, t_out)?,
        ));
    }
    Ok(rows)
}

/// Affine map of `[lo, hi]` onto `[0, 1]`.
pub fn normalize(x: &Tensor, lo: f32, hi: f32) -> Result<Tensor> {
    check_range(lo, hi)?;
    let span = hi - lo;
    Ok(x.map(|v| (v - lo) / span))
}

/// Inverse of [`normalize`]: maps `[0, 1]` back onto `[lo, hi]`.
pub fn denormalize(x: &Tensor, lo: f32, hi: f32) -> Result<Tensor> {
    check_range(lo, hi)?;
    let span = hi - lo;
    Ok(x.map(|v| v * span + lo))
}

fn check_range(lo: f32, hi: f32) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return arg_err(format!("invalid value range [{lo}, {hi}]"));
    }
    Ok(())
}

/// Splits items into train/test by a seeded shuffle; the train split gets
/// `floor(len · ratio)` items.
pub fn split_train_test<T>(items: Vec<T>, ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return arg_err(format!("split ratio must be in [0, 1], got {ratio}"));
    }
    // Nudge before flooring: decimal ratios like 0.7 sit just below their
    // nominal value in binary, so 2700 · 0.7 lands at 1889.999… and must
    // still floor to 1890.
    let n_train = ((items.len() as f64 * ratio + 1e-9).floor() as usize).min(items.len());
    let mut order: Vec<usize> = (0..items.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(slots.len() - n_train);
    for (k, &i) in order.iter().enumerate() {
        let item = slots[i].take().expect("each index visited once");
        if k < n_train {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok((train, test))
}

/// Sidecar manifest of a dataset directory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetMeta {
    pub t_in: usize,
    pub t_out: usize,
    /// Physical value mapped to 0.0.
    pub lo: f32,
    /// Physical value mapped to 1.0.
    pub hi: f32,
}

impl DatasetMeta {
    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "t_in={}", self.t_in);
        let _ = writeln!(s, "t_out={}", self.t_out);
        let _ = writeln!(s, "lo={}", self.lo);
        let _ = writeln!(s, "hi={}", self.hi);
        s
    }

    fn parse(text: &str) -> Result<DatasetMeta> {
        let (mut t_in, mut t_out, mut lo, mut hi) = (None, None, None, None);
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                crate::error::Error::Format(format!("meta line {}: expected key=value", ln + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let dup = |k: &str| crate::error::Error::Format(format!("meta: duplicate key {k}"));
            match key {
                "t_in" => {
                    let v = value.parse().map_err(|_| bad_meta(ln, "t_in", value))?;
                    if t_in.replace(v).is_some() {
                        return Err(dup("t_in"));
                    }
                }
                "t_out" => {
                    let v = value.parse().map_err(|_| bad_meta(ln, "t_out", value))?;
                    if t_out.replace(v).is_some() {
                        return Err(dup("t_out"));
                    }
                }
                "lo" => {
                    let v = value.parse().map_err(|_| bad_meta(ln, "lo", value))?;
                    if lo.replace(v).is_some() {
                        return Err(dup("lo"));
                    }
                }
                "hi" => {
                    let v = value.parse().map_err(|_| bad_meta(ln, "hi", value))?;
                    if hi.replace(v).is_some() {
                        return Err(dup("hi"));
                    }
                }
                _ => return format_err(format!("meta: unknown key {key:?}")),
            }
        }
        let meta = DatasetMeta {
            t_in: t_in.ok_or_else(|| missing_meta("t_in"))?,
            t_out: t_out.ok_or_else(|| missing_meta("t_out"))?,
            lo: lo.ok_or_else(|| missing_meta("lo"))?,
            hi: hi.ok_or_else(|| missing_meta("hi"))?,
        };
        if meta.t_in == 0 || meta.t_out == 0 {
            return format_err("meta: t_in and t_out must be >= 1");
        }
        check_range(meta.lo, meta.hi)?;
        Ok(meta)
    }
}

fn bad_meta(ln: usize, key: &str, value: &str) -> crate::error::Error {
    crate::error::Error::Format(format!("meta line {}: bad {key} value {value:?}", ln + 1))
}

fn missing_meta(key: &str) -> crate::error::Error {
    crate::error::Error::Format(format!("meta: missing key {key}"))
}

/// A batch of (input, target) pairs: input `(B, t_in, C, H, W)`, target
/// `(B, t_out, C, H, W)`, normalized values.
pub struct SampleBatch {
    pub input: Tensor,
    pub target: Tensor,
}

impl SampleBatch {
    /// Validates rank, cross-shape consistency, and that values are finite
    /// and normalized to [0, 1].
    pub fn new(input: Tensor, target: Tensor) -> Result<SampleBatch> {
        if input.rank() != 5 || target.rank() != 5 {
            return shape_err(format!(
                "batch tensors must be rank 5, got {:?} and {:?}",
                input.shape(),
                target.shape()
            ));
        }
        for ax in [0usize, 2, 3, 4] {
            if input.shape()[ax] != target.shape()[ax] {
                return shape_err(format!(
                    "input {:?} and target {:?} disagree on axis {ax}",
                    input.shape(),
                    target.shape()
                ));
            }
        }
        for (name, t) in [("input", &input), ("target", &target)] {
            if !t
                .data()
                .iter()
                .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
            {
                return arg_err(format!("{name} values must be finite and in [0, 1]"));
            }
        }
        Ok(SampleBatch { input, target })
    }

    pub fn len(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false // axis lengths are always >= 1
    }

    /// Splits into per-sample (input, target) rows of shape (t, C, H, W).
    pub fn rows(&self) -> Result<Vec<(Tensor, Tensor)>> {
        let b = self.len();
        let mut rows = Vec::with_capacity(b);
        for i in 0..b {
            let x = self.input.slice_axis(0, i, 1)?;
            let y = self.target.slice_axis(0, i, 1)?;
            rows.push((x.reshape(&x.shape()[1..])?, y.reshape(&y.shape()[1..])?));
        }
        Ok(rows)
    }
}

fn stack_windows(rows: &[(Tensor, Tensor)], meta: &DatasetMeta) -> Result<Tensor> {
    if rows.is_empty() {
        return arg_err("dataset split must contain at least one window");
    }
    let mut stacked = Vec::with_capacity(rows.len());
    for (i, (x, y)) in rows.iter().enumerate() {
        if x.rank() != 4 || y.rank() != 4 {
            return shape_err(format!("window {i}: rows must be rank 4"));
        }
        if x.shape()[0] != meta.t_in || y.shape()[0] != meta.t_out {
            return shape_err(format!(
                "window {i}: frame counts ({}, {}) do not match meta ({}, {})",
                x.shape()[0],
                y.shape()[0],
                meta.t_in,
                meta.t_out
            ));
        }
        if x.shape()[1..] != y.shape()[1..] {
            return shape_err(format!("window {i}: input/target plane shapes differ"));
        }
        let joined = Tensor::concat(&[x.clone(), y.clone()], 0)?;
        let mut shape = vec![1];
        shape.extend_from_slice(joined.shape());
        stacked.push(joined.reshape(&shape)?);
    }
    Tensor::concat(&stacked, 0)
}

/// Writes `train.mesp`, `test.mesp`, and `meta.txt` into `dir` (created if
/// missing). Window rows are `(t_in, C, H, W)` / `(t_out, C, H, W)` pairs.
pub fn save_dataset_dir(
    dir: impl AsRef<Path>,
    train_rows: &[(Tensor, Tensor)],
    test_rows: &[(Tensor, Tensor)],
    meta: &DatasetMeta,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    io::save_tensor(dir.join("train.mesp"), &stack_windows(train_rows, meta)?)?;
    io::save_tensor(dir.join("test.mesp"), &stack_windows(test_rows, meta)?)?;
    std::fs::write(dir.join("meta.txt"), meta.render())?;
    Ok(())
}

/// Reads one split (`"train"` or `"test"`) back as window rows plus the
/// manifest. Inverse of [`save_dataset_dir`], bit-exactly.
pub fn load_dataset_split(
    dir: impl AsRef<Path>,
    split: &str,
) -> Result<(Vec<(Tensor, Tensor)>, DatasetMeta)> {
    let dir = dir.as_ref();
    if split != "train" && split != "test" {
        return arg_err(format!("unknown split {split:?} (expected train or test)"));
    }
    let meta = DatasetMeta::parse(&std::fs::read_to_string(dir.join("meta.txt"))?)?;
    let stacked = io::load_tensor(dir.join(format!("{split}.mesp")))?;
    if stacked.rank() != 5 {
        return format_err(format!(
            "{split}.mesp: expected rank 5 (N, T, C, H, W), got {:?}",
            stacked.shape()
        ));
    }
    let t_total = meta.t_in + meta.t_out;
    if stacked.shape()[1] != t_total {
        return format_err(format!(
            "{split}.mesp: time axis {} does not match meta t_in + t_out = {t_total}",
            stacked.shape()[1]
        ));
    }
    let n = stacked.shape()[0];
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let sample = stacked.slice_axis(0, i, 1)?;
        let sample = sample.reshape(&sample.shape()[1..])?;
        rows.push((
            sample.slice_axis(0, 0, meta.t_in)?,
            sample.slice_axis(0, meta.t_in, meta.t_out)?,
        ));
    }
    Ok((rows, meta))
}
