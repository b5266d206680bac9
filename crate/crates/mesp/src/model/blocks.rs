//! The network's forward pass, built op by op on a gradient tape.
//!
//! Data flow for input `(B, T, C, H, W)`:
//!
//! ```text
//! reshape (B·T, C, H, W)
//! embed:  conv 7×7 s2 → GELU → conv 3×3 s(p/2) → GELU → conv 3×3   → (B·T, D, h, w)
//! repeat n_block times:
//!   spatial gate   on (B·T, D, h, w)
//!   temporal gate  on (B, D, T, h·w)   [reshape + permute around it]
//!   feed-forward   on (B, T·D, h, w)   [reshape around it]
//! decode: conv 3×3 → GELU → conv 3×3 → pixel shuffle ×p → conv 3×3 → (B·T, C, H, W)
//! reshape (B, T, C, H, W)
//! ```
//!
//! Both gates share one shape: `out = PW(PW(LN(x)) ⊙ DW(GELU(PW(LN(x))))) ⊕ x`
//! — a pointwise gating branch times a depthwise value branch, projected and
//! added back. The spatial gate's depthwise conv is a large single kernel
//! over (h, w); the temporal gate's is a chain of 3×3 kernels over (T, h·w)
//! whose time-axis dilation grows per layer.

use std::collections::HashMap;

use crate::error::{shape_err, state_err, Result};
use crate::model::config::ModelConfig;
use crate::model::params::ParamStore;
use crate::ops::Conv2dSpec;
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

/// Tape variables for every parameter, in store order.
pub struct BoundParams {
    names: Vec<String>,
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        match self.index.get(name) {
            Some(&i) => Ok(self.vars[i]),
            None => state_err(format!("unbound parameter {name:?}")),
        }
    }

    /// Variables in the same order as the store's entries.
    pub fn ordered(&self) -> &[Var] {
        &self.vars
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Registers every parameter of `store` as a leaf on `tape`.
pub fn bind_params(tape: &mut GradTape, store: &ParamStore) -> BoundParams {
    let mut names = Vec::with_capacity(store.len());
    let mut vars = Vec::with_capacity(store.len());
    let mut index = HashMap::with_capacity(store.len());
    for e in store.entries() {
        index.insert(e.name.clone(), vars.len());
        names.push(e.name.clone());
        vars.push(tape.leaf(e.value.clone()));
    }
    BoundParams { names, vars, index }
}

fn conv_by_name(
    tape: &mut GradTape,
    x: Var,
    p: &BoundParams,
    name: &str,
    spec: Conv2dSpec,
) -> Result<Var> {
    let w = p.var(&format!("{name}.weight"))?;
    let b = p.var(&format!("{name}.bias"))?;
    tape.conv2d(x, w, Some(b), spec)
}

/// Frames to embedded grid: `(B·T, C, H, W)` → `(B·T, D, H/p, W/p)`.
pub fn patch_embed(tape: &mut GradTape, x: Var, p: &BoundParams, cfg: &ModelConfig) -> Result<Var> {
    let kd = cfg.dw_kernel;
    let ks = cfg.std_kernel;
    let y = conv_by_name(
        tape,
        x,
        p,
        "embed.conv1",
        Conv2dSpec {
            stride: (2, 2),
            padding: ((kd - 1) / 2, (kd - 1) / 2),
            ..Default::default()
        },
    )?;
    let y = tape.gelu(y)?;
    let s2 = cfg.patch_size / 2;
    let y = conv_by_name(
        tape,
        y,
        p,
        "embed.conv2",
        Conv2dSpec {
            stride: (s2, s2),
            padding: ((ks - 1) / 2, (ks - 1) / 2),
            ..Default::default()
        },
    )?;
    let y = tape.gelu(y)?;
    conv_by_name(
        tape,
        y,
        p,
        "embed.conv3",
        Conv2dSpec::same((ks, ks), (1, 1), 1),
    )
}

/// Embedded grid back to frames: `(B·T, D, h, w)` → `(B·T, C, H, W)`.
pub fn patch_back(tape: &mut GradTape, x: Var, p: &BoundParams, cfg: &ModelConfig) -> Result<Var> {
    let ks = cfg.std_kernel;
    let same = Conv2dSpec::same((ks, ks), (1, 1), 1);
    let y = conv_by_name(tape, x, p, "back.conv1", same)?;
    let y = tape.gelu(y)?;
    let y = conv_by_name(tape, y, p, "back.conv2", same)?;
    let y = tape.pixel_shuffle(y, cfg.patch_size)?;
    conv_by_name(tape, y, p, "back.conv3", same)
}

/// Spatial gate on `(B·T, D, h, w)`; extent-preserving, residual.
pub fn sa_block(
    tape: &mut GradTape,
    x: Var,
    p: &BoundParams,
    cfg: &ModelConfig,
    block: usize,
) -> Result<Var> {
    let d = cfg.embed_dim;
    let b = format!("blocks.{block}.sa");
    let gamma = p.var(&format!("{b}.norm.gamma"))?;
    let beta = p.var(&format!("{b}.norm.beta"))?;
    let ln = tape.layer_norm(x, gamma, beta)?;
    let gate = conv_by_name(
        tape,
        ln,
        p,
        &format!("{b}.pw_gate"),
        Conv2dSpec::pointwise(),
    )?;
    let value = conv_by_name(
        tape,
        ln,
        p,
        &format!("{b}.pw_value"),
        Conv2dSpec::pointwise(),
    )?;
    let value = tape.gelu(value)?;
    let kd = cfg.dw_kernel;
    let value = conv_by_name(
        tape,
        value,
        p,
        &format!("{b}.dw_value"),
        Conv2dSpec::same((kd, kd), (1, 1), d),
    )?;
    let gated = tape.hadamard(gate, value)?;
    let out = conv_by_name(
        tape,
        gated,
        p,
        &format!("{b}.pw_out"),
        Conv2dSpec::pointwise(),
    )?;
    tape.add(out, x)
}

/// The temporal gate's chained depthwise convolutions on `(B, D, T, h·w)`:
/// one 3×3 layer per configured dilation, dilated on the time axis only,
/// extent-preserving. Exposed separately so its receptive field and
/// channel isolation can be probed directly.
pub fn dwd_chain(
    tape: &mut GradTape,
    x: Var,
    p: &BoundParams,
    cfg: &ModelConfig,
    block: usize,
) -> Result<Var> {
    let d = cfg.embed_dim;
    let kt = cfg.time_kernel;
    let mut y = x;
    for (j, &dil) in cfg.dilations.iter().enumerate() {
        y = conv_by_name(
            tape,
            y,
            p,
            &format!("blocks.{block}.sta.dwd.{j}"),
            Conv2dSpec::same((kt, kt), (dil, 1), d),
        )?;
    }
    Ok(y)
}

/// Temporal gate: moves `(B·T, D, h, w)` to the `(B, D, T, h·w)` layout,
/// applies the gate there, and restores the original layout. Residual.
pub fn sta_block(
    tape: &mut GradTape,
    x: Var,
    p: &BoundParams,
    cfg: &ModelConfig,
    block: usize,
    batch: usize,
) -> Result<Var> {
    let t = cfg.in_time;
    let d = cfg.embed_dim;
    let (h, w) = {
        let shape = tape.value(x).shape();
        if shape.len() != 4 || shape[0] != batch * t || shape[1] != d {
            return shape_err(format!(
                "temporal gate expects ({} · {t}, {d}, h, w), got {shape:?}",
                batch
            ));
        }
        (shape[2], shape[3])
    };
    // (B·T, D, h, w) → (B, T, D, h·w) → (B, D, T, h·w)
    let st = tape.reshape(x, &[batch, t, d, h * w])?;
    let st = tape.permute(st, &[0, 2, 1, 3])?;

    let b = format!("blocks.{block}.sta");
    let gamma = p.var(&format!("{b}.norm.gamma"))?;
    let beta = p.var(&format!("{b}.norm.beta"))?;
    let ln = tape.layer_norm(st, gamma, beta)?;
    let gate = conv_by_name(
        tape,
        ln,
        p,
        &format!("{b}.pw_gate"),
        Conv2dSpec::pointwise(),
    )?;
    let value = conv_by_name(
        tape,
        ln,
        p,
        &format!("{b}.pw_value"),
        Conv2dSpec::pointwise(),
    )?;
    let value = tape.gelu(value)?;
    let value = dwd_chain(tape, value, p, cfg, block)?;
    let gated = tape.hadamard(gate, value)?;
    let out = conv_by_name(
        tape,
        gated,
        p,
        &format!("{b}.pw_out"),
        Conv2dSpec::pointwise(),
    )?;
    let out = tape.add(out, st)?;

    // (B, D, T, h·w) → (B, T, D, h·w) → (B·T, D, h, w)
    let back = tape.permute(out, &[0, 2, 1, 3])?;
    tape.reshape(back, &[batch * t, d, h, w])
}

/// Feed-forward on the fused `(B, T·D, h, w)` layout: pointwise expansion by
/// `ff_expansion`, GELU, pointwise contraction. Residual.
pub fn feed_forward(
    tape: &mut GradTape,
    x: Var,
    p: &BoundParams,
    cfg: &ModelConfig,
    block: usize,
    batch: usize,
) -> Result<Var> {
    let t = cfg.in_time;
    let d = cfg.embed_dim;
    let (h, w) = {
        let shape = tape.value(x).shape();
        (shape[2], shape[3])
    };
    // (B·T, D, h, w) and (B, T·D, h, w) are the same buffer row-major.
    let fused = tape.reshape(x, &[batch, t * d, h, w])?;
    let b = format!("blocks.{block}.ff");
    let y = conv_by_name(tape, fused, p, &format!("{b}.pw1"), Conv2dSpec::pointwise())?;
    let y = tape.gelu(y)?;
    let y = conv_by_name(tape, y, p, &format!("{b}.pw2"), Conv2dSpec::pointwise())?;
    let y = tape.add(y, fused)?;
    tape.reshape(y, &[batch * t, d, h, w])
}

/// Full forward pass: `(B, T, C, H, W)` → `(B, T, C, H, W)`.
pub fn forward(tape: &mut GradTape, x: Var, p: &BoundParams, cfg: &ModelConfig) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 5 {
        return shape_err(format!("forward expects rank-5 input, got {shape:?}"));
    }
    let (batch, t, c, hh, ww) = (shape[0], shape[1], shape[2], shape[3], shape[4]);
    if t != cfg.in_time || c != cfg.in_channels || hh != cfg.height || ww != cfg.width {
        return shape_err(format!(
            "input {shape:?} does not match configured (_, {}, {}, {}, {})",
            cfg.in_time, cfg.in_channels, cfg.height, cfg.width
        ));
    }
    let frames = tape.reshape(x, &[batch * t, c, hh, ww])?;
    let mut y = patch_embed(tape, frames, p, cfg)?;
    for i in 0..cfg.n_block {
        y = sa_block(tape, y, p, cfg, i)?;
        y = sta_block(tape, y, p, cfg, i, batch)?;
        y = feed_forward(tape, y, p, cfg, i, batch)?;
    }
    let decoded = patch_back(tape, y, p, cfg)?;
    tape.reshape(decoded, &[batch, t, c, hh, ww])
}

/// Convenience inference entry point: runs the forward pass on a throwaway
/// tape and returns the output tensor.
pub fn forward_inference(store: &ParamStore, cfg: &ModelConfig, x: &Tensor) -> Result<Tensor> {
    let mut tape = GradTape::new();
    let bound = bind_params(&mut tape, store);
    let xv = tape.constant(x.clone());
    let out = forward(&mut tape, xv, &bound, cfg)?;
    Ok(tape.value(out).clone())
}
