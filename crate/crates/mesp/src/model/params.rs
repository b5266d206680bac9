//! Parameter store: named tensors, seeded initialization, and checkpointing.
//!
//! Checkpoint layout (little-endian, no padding):
//!
//! ```text
//! count   u32                       number of parameters
//! entry   count × {
//!   name_len u32
//!   name     name_len bytes (UTF-8)
//!   tensor   one tensor container (see crate::io)
//! }
//! ```
//!
//! Entries appear in the store's canonical order. Save → load restores every
//! value bit-exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{format_err, shape_err, state_err, Result};
use crate::io;
use crate::model::config::ModelConfig;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// How a parameter tensor is filled at initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Truncated normal (±2σ) with σ = sqrt(2 / fan_in); used for conv weights.
    TruncNormal { fan_in: usize },
    /// Zeros; used for biases and norm offsets.
    Zeros,
    /// Ones; used for norm scales.
    Ones,
}

/// Name, shape, and init rule of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    fn conv(
        name: impl Into<String>,
        out_c: usize,
        in_c_per_group: usize,
        kh: usize,
        kw: usize,
    ) -> [ParamSpec; 2] {
        let name = name.into();
        [
            ParamSpec {
                name: format!("{name}.weight"),
                shape: vec![out_c, in_c_per_group, kh, kw],
                init: Init::TruncNormal {
                    fan_in: in_c_per_group * kh * kw,
                },
            },
            ParamSpec {
                name: format!("{name}.bias"),
                shape: vec![out_c],
                init: Init::Zeros,
            },
        ]
    }

    fn norm(name: impl Into<String>, c: usize) -> [ParamSpec; 2] {
        let name = name.into();
        [
            ParamSpec {
                name: format!("{name}.gamma"),
                shape: vec![c],
                init: Init::Ones,
            },
            ParamSpec {
                name: format!("{name}.beta"),
                shape: vec![c],
                init: Init::Zeros,
            },
        ]
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Canonical parameter list for a configuration, in initialization order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let c = cfg.in_channels;
    let t = cfg.in_time;
    let hid = cfg.embed_hid;
    let d = cfg.embed_dim;
    let kd = cfg.dw_kernel;
    let ks = cfg.std_kernel;
    let kt = cfg.time_kernel;
    let p2 = cfg.patch_size * cfg.patch_size;
    let td = t * d;
    let ff_hidden = cfg.ff_expansion * td;

    let mut specs = Vec::new();
    specs.extend(ParamSpec::conv("embed.conv1", hid, c, kd, kd));
    specs.extend(ParamSpec::conv("embed.conv2", hid, hid, ks, ks));
    specs.extend(ParamSpec::conv("embed.conv3", d, hid, ks, ks));
    for i in 0..cfg.n_block {
        let b = format!("blocks.{i}");
        specs.extend(ParamSpec::norm(format!("{b}.sa.norm"), d));
        specs.extend(ParamSpec::conv(format!("{b}.sa.pw_gate"), d, d, 1, 1));
        specs.extend(ParamSpec::conv(format!("{b}.sa.pw_value"), d, d, 1, 1));
        specs.extend(ParamSpec::conv(format!("{b}.sa.dw_value"), d, 1, kd, kd));
        specs.extend(ParamSpec::conv(format!("{b}.sa.pw_out"), d, d, 1, 1));
        specs.extend(ParamSpec::norm(format!("{b}.sta.norm"), d));
        specs.extend(ParamSpec::conv(format!("{b}.sta.pw_gate"), d, d, 1, 1));
        specs.extend(ParamSpec::conv(format!("{b}.sta.pw_value"), d, d, 1, 1));
        for (j, _) in cfg.dilations.iter().enumerate() {
            specs.extend(ParamSpec::conv(format!("{b}.sta.dwd.{j}"), d, 1, kt, kt));
        }
        specs.extend(ParamSpec::conv(format!("{b}.sta.pw_out"), d, d, 1, 1));
        specs.extend(ParamSpec::conv(format!("{b}.ff.pw1"), ff_hidden, td, 1, 1));
        specs.extend(ParamSpec::conv(format!("{b}.ff.pw2"), td, ff_hidden, 1, 1));
    }
    specs.extend(ParamSpec::conv("back.conv1", hid, d, ks, ks));
    specs.extend(ParamSpec::conv("back.conv2", c * p2, hid, ks, ks));
    specs.extend(ParamSpec::conv("back.conv3", c, c, ks, ks));
    specs
}

/// One named parameter with its optimizer moment buffers.
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// First-moment accumulator (owned by the optimizer).
    pub(crate) m: Tensor,
    /// Second-moment accumulator (owned by the optimizer).
    pub(crate) v: Tensor,
}

/// Ordered collection of the model's parameters.
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl std::fmt::Debug for ParamStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ParamStore({} tensors, {} scalars)",
            self.entries.len(),
            self.num_scalars()
        )
    }
}

impl ParamStore {
    fn from_entries(entries: Vec<ParamEntry>) -> Result<ParamStore> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.name.clone(), i).is_some() {
                return state_err(format!("duplicate parameter name {:?}", e.name));
            }
        }
        Ok(ParamStore { entries, index })
    }

    /// Initializes all parameters for `cfg` from a seed. The same seed always
    /// produces bit-identical values.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let entries = param_specs(cfg)
            .into_iter()
            .map(|spec| {
                let value = match spec.init {
                    Init::TruncNormal { fan_in } => {
                        let sigma = (2.0 / fan_in as f32).sqrt();
                        Tensor::from_fn(&spec.shape, |_| rng.next_trunc_normal(sigma))
                    }
                    Init::Zeros => Tensor::zeros(&spec.shape),
                    Init::Ones => Tensor::ones(&spec.shape),
                };
                ParamEntry {
                    name: spec.name,
                    m: Tensor::zeros(&spec.shape),
                    v: Tensor::zeros(&spec.shape),
                    value,
                }
            })
            .collect();
        ParamStore::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> u64 {
        self.entries.iter().map(|e| e.value.numel() as u64).sum()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        match self.index.get(name) {
            Some(&i) => Ok(&self.entries[i].value),
            None => state_err(format!("unknown parameter {name:?}")),
        }
    }

    /// Replaces a parameter value; the shape must match.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let &i = self.index.get(name).ok_or_else(|| {
            crate::error::Error::InvalidState(format!("unknown parameter {name:?}"))
        })?;
        if value.shape() != self.entries[i].value.shape() {
            return shape_err(format!(
                "parameter {name:?} has shape {:?}, got {:?}",
                self.entries[i].value.shape(),
                value.shape()
            ));
        }
        self.entries[i].value = value;
        Ok(())
    }

    /// Verifies that names and shapes match a spec list exactly (same order).
    pub fn matches_specs(&self, specs: &[ParamSpec]) -> Result<()> {
        if specs.len() != self.entries.len() {
            return state_err(format!(
                "parameter count mismatch: store has {}, model expects {}",
                self.entries.len(),
                specs.len()
            ));
        }
        for (e, s) in self.entries.iter().zip(specs) {
            if e.name != s.name {
                return state_err(format!(
                    "parameter name mismatch: store has {:?}, model expects {:?}",
                    e.name, s.name
                ));
            }
            if e.value.shape() != &s.shape[..] {
                return shape_err(format!(
                    "parameter {:?} has shape {:?}, model expects {:?}",
                    e.name,
                    e.value.shape(),
                    s.shape
                ));
            }
        }
        Ok(())
    }

    /// Writes all parameter values (not optimizer moments) to a file.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            let name = e.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&io::tensor_to_bytes(&e.value))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a checkpoint; optimizer moments start at zero.
    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore> {
        let mut r = BufReader::new(File::open(path)?);
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)
            .map_err(|e| crate::error::Error::Format(format!("count: truncated ({e})")))?;
        let count = u32::from_le_bytes(b4) as usize;
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            r.read_exact(&mut b4).map_err(|e| {
                crate::error::Error::Format(format!("name_len[{i}]: truncated ({e})"))
            })?;
            let name_len = u32::from_le_bytes(b4) as usize;
            if name_len > 4096 {
                return format_err(format!("name_len[{i}]: {name_len} unreasonably large"));
            }
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)
                .map_err(|e| crate::error::Error::Format(format!("name[{i}]: truncated ({e})")))?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| crate::error::Error::Format(format!("name[{i}]: invalid UTF-8")))?;
            let value = io::read_tensor(&mut r)?;
            entries.push(ParamEntry {
                name,
                m: Tensor::zeros(value.shape()),
                v: Tensor::zeros(value.shape()),
                value,
            });
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return format_err(format!("checkpoint: {} trailing bytes", rest.len()));
        }
        ParamStore::from_entries(entries)
    }
}
