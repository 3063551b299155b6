//! Portable checkpoint files.
//!
//! A checkpoint is a UTF-8 header followed by raw tensor payloads:
//!
//! ```text
//! LRFNET-CHECKPOINT 1
//! variant = B
//! ...                         network, training and progress keys
//! tensors = 108
//! tensor param.head.weight 64 3 3 3 0 6912
//! ...                         name, n c h w, byte offset, byte length
//! end
//! <payload: little-endian f32 tensors in header order>
//! ```
//!
//! Offsets are relative to the first payload byte. Floats in the header use
//! the shortest representation that parses back to the same bits, so
//! save → load → save is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{Model, NetworkConfig};
use crate::train::{AdamState, Progress, TrainConfig, Trainer};
use crate::{Error, Result, Shape, Tensor};

pub const MAGIC: &str = "LRFNET-CHECKPOINT";
pub const VERSION: u32 = 1;

/// Serializable state of the augmentation RNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub progress: Progress,
    pub rng: RngState,
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Checkpoint {
            network: *t.model().config(),
            train: *t.config(),
            progress: t.progress(),
            rng: RngState::capture(t.aug_rng()),
            model: t.model().clone(),
            adam: t.adam().clone(),
        }
    }

    /// A checkpoint at step zero.
    pub fn from_model(model: Model<f32>, train: TrainConfig) -> Result<Self> {
        Ok(Checkpoint::from_trainer(&Trainer::new(model, train)?))
    }

    pub fn into_trainer(self) -> Result<Trainer> {
        Trainer::from_parts(self.model, self.adam, self.train, self.progress, self.rng.restore())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = &self.network;
        let t = &self.train;
        let mut h = String::new();
        let _ = writeln!(h, "{MAGIC} {VERSION}");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(h, "{k} = {v}");
        };
        kv("variant", n.variant.to_string());
        kv("blocks", n.num_blocks.to_string());
        kv("channels", n.channels.to_string());
        kv("kernel", n.kernel_size.to_string());
        kv("scheme", n.scheme.to_string());
        kv("dilation", n.dilation.to_string());
        kv("seed", t.seed.to_string());
        kv("initial_lr", format!("{:?}", t.initial_lr));
        kv("halving_period", t.halving_period.to_string());
        kv("total_epochs", t.total_epochs.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("loss", t.loss.to_string());
        kv("augment", t.augment.to_string());
        kv("epoch", self.progress.epoch.to_string());
        kv("batch_in_epoch", self.progress.batch_in_epoch.to_string());
        kv("step", self.progress.step.to_string());
        kv("adam_t", self.adam.t.to_string());
        kv("adam_beta1", format!("{:?}", self.adam.beta1));
        kv("adam_beta2", format!("{:?}", self.adam.beta2));
        kv("adam_eps", format!("{:?}", self.adam.eps));
        kv("rng_seed", self.rng.seed.iter().map(|b| format!("{b:02x}")).collect());
        kv("rng_stream", self.rng.stream.to_string());
        kv("rng_word_pos", self.rng.word_pos.to_string());

        let names = self.model.tensor_names();
        let mut entries: Vec<(String, &Tensor<f32>)> = Vec::new();
        for (name, tensor) in names.iter().zip(self.model.tensors()) {
            entries.push((format!("param.{name}"), tensor));
        }
        for (name, tensor) in names.iter().zip(&self.adam.m) {
            entries.push((format!("adam.m.{name}"), tensor));
        }
        for (name, tensor) in names.iter().zip(&self.adam.v) {
            entries.push((format!("adam.v.{name}"), tensor));
        }
        let _ = writeln!(h, "tensors = {}", entries.len());
        let mut offset = 0usize;
        for (name, tensor) in &entries {
            let s = tensor.shape();
            let bytes = 4 * tensor.len();
            let _ = writeln!(h, "tensor {name} {} {} {} {} {offset} {bytes}", s.n, s.c, s.h, s.w);
            offset += bytes;
        }
        h.push_str("end\n");

        let mut out = h.into_bytes();
        out.reserve(offset);
        for (_, tensor) in &entries {
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt_err = |m: String| Error::Format(m);
        let end = find_header_end(bytes).ok_or_else(|| fmt_err("missing header terminator".into()))?;
        let header = std::str::from_utf8(&bytes[..end]).map_err(|_| fmt_err("header is not UTF-8".into()))?;
        let payload = &bytes[end..];
        let mut lines = header.lines();
        let first = lines.next().unwrap_or("");
        match first.split_once(' ') {
            Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
            Some((MAGIC, v)) => return Err(fmt_err(format!("unsupported checkpoint version {v}"))),
            _ => return Err(fmt_err("not an lrfnet checkpoint".into())),
        }

        let mut keys = BTreeMap::new();
        let mut tensors: Vec<(String, Shape, usize, usize)> = Vec::new();
        for line in lines {
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("tensor ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 7 {
                    return Err(fmt_err(format!("bad tensor line {line:?}")));
                }
                let num = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| fmt_err(format!("bad number in {line:?}")))
                };
                let shape = Shape::new(num(f[1])?, num(f[2])?, num(f[3])?, num(f[4])?);
                tensors.push((f[0].to_string(), shape, num(f[5])?, num(f[6])?));
            } else if let Some((k, v)) = line.split_once('=') {
                keys.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                return Err(fmt_err(format!("unexpected header line {line:?}")));
            }
        }

        let get = |k: &str| keys.get(k).ok_or_else(|| fmt_err(format!("missing key {k}")));
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Format(format!("bad value for {k}: {v:?}")))
        }

        let net_text: String = ["variant", "blocks", "channels", "kernel", "scheme", "dilation"]
            .iter()
            .map(|k| Ok(format!("{k} = {}\n", get(k)?)))
            .collect::<Result<_>>()?;
        let network = crate::config::ModelFile::parse(&net_text)?.network;

        let train = TrainConfig {
            initial_lr: parse("initial_lr", get("initial_lr")?)?,
            halving_period: parse("halving_period", get("halving_period")?)?,
            total_epochs: parse("total_epochs", get("total_epochs")?)?,
            batch_size: parse("batch_size", get("batch_size")?)?,
            seed: parse("seed", get("seed")?)?,
            loss: get("loss")?.parse()?,
            augment: parse("augment", get("augment")?)?,
        };
        let progress = Progress {
            epoch: parse("epoch", get("epoch")?)?,
            batch_in_epoch: parse("batch_in_epoch", get("batch_in_epoch")?)?,
            step: parse("step", get("step")?)?,
        };
        let seed_hex = get("rng_seed")?;
        if seed_hex.len() != 64 {
            return Err(fmt_err("rng_seed must be 64 hex digits".into()));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16)
                .map_err(|_| fmt_err("rng_seed is not hex".into()))?;
        }
        let rng = RngState {
            seed,
            stream: parse("rng_stream", get("rng_stream")?)?,
            word_pos: parse("rng_word_pos", get("rng_word_pos")?)?,
        };

        let declared: usize = parse("tensors", get("tensors")?)?;
        if declared != tensors.len() {
            return Err(fmt_err(format!(
                "header declares {declared} tensors, lists {}",
                tensors.len()
            )));
        }
        let mut by_name = BTreeMap::new();
        for (name, shape, offset, len) in tensors {
            if len != 4 * shape.len() || offset + len > payload.len() {
                return Err(fmt_err(format!("tensor {name} payload out of range")));
            }
            let data = payload[offset..offset + len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            by_name.insert(name, Tensor::from_vec(shape, data)?);
        }
        let names = Model::<f32>::zeros(&network)?.tensor_names();
        let mut take = |prefix: &str| -> Result<Vec<(String, Tensor<f32>)>> {
            names
                .iter()
                .map(|n| {
                    let key = format!("{prefix}{n}");
                    by_name
                        .remove(&key)
                        .map(|t| (n.clone(), t))
                        .ok_or_else(|| Error::Format(format!("missing tensor {key}")))
                })
                .collect()
        };
        let model = Model::from_named_tensors(&network, take("param.")?)?;
        let m: Vec<Tensor<f32>> = take("adam.m.")?.into_iter().map(|(_, t)| t).collect();
        let v: Vec<Tensor<f32>> = take("adam.v.")?.into_iter().map(|(_, t)| t).collect();
        if let Some(extra) = by_name.keys().next() {
            return Err(fmt_err(format!("unexpected tensor {extra}")));
        }
        let adam = AdamState {
            beta1: parse("adam_beta1", get("adam_beta1")?)?,
            beta2: parse("adam_beta2", get("adam_beta2")?)?,
            eps: parse("adam_eps", get("adam_eps")?)?,
            t: parse("adam_t", get("adam_t")?)?,
            m,
            v,
        };
        Ok(Checkpoint {
            network,
            train,
            progress,
            rng,
            model,
            adam,
        })
    }

    /// Writes atomically (temporary file, then rename), so an interrupted
    /// save never clobbers the previous checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    const TERM: &[u8] = b"\nend\n";
    bytes
        .windows(TERM.len())
        .position(|w| w == TERM)
        .map(|p| p + TERM.len())
}
