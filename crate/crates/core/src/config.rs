//! Flat `key = value` network config files.
//!
//! Recognised keys: `variant`, `blocks`, `channels`, `kernel`, `scheme`,
//! `dilation`, `seed`. Blank lines and `#` comments are ignored; omitted keys
//! take the variant's defaults. Unknown or repeated keys are errors.
//!
//! ```text
//! # LRFNet-A with the 1-4-8 schedule
//! variant = A
//! kernel = 3
//! dilation = 1-4-8
//! seed = 42
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::arch::{NetworkConfig, Variant};
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 0;

const KEYS: [&str; 7] = ["variant", "blocks", "channels", "kernel", "scheme", "dilation", "seed"];

/// Parsed config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelFile {
    pub network: NetworkConfig,
    pub seed: u64,
}

impl Default for ModelFile {
    fn default() -> Self {
        ModelFile {
            network: NetworkConfig::default(),
            seed: DEFAULT_SEED,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {v:?} as a number")))
}

/// Reads key/value pairs, rejecting unknown and duplicate keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(format!("line {}: expected key = value", lineno + 1)));
        };
        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::config(format!("line {}: unknown key {k:?}", lineno + 1)));
        }
        if pairs.insert(k.clone(), v).is_some() {
            return Err(Error::config(format!("line {}: duplicate key {k:?}", lineno + 1)));
        }
    }
    Ok(pairs)
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let variant: Variant = match pairs.get("variant") {
            Some(v) => v.parse()?,
            None => Variant::B,
        };
        let mut network = NetworkConfig::new(variant);
        for (k, v) in &pairs {
            match k.as_str() {
                "blocks" => network.num_blocks = parse_num(k, v)?,
                "channels" => network.channels = parse_num(k, v)?,
                "kernel" => network.kernel_size = parse_num(k, v)?,
                "scheme" => network.scheme = v.parse()?,
                "dilation" => network.dilation = v.parse()?,
                _ => {}
            }
        }
        network.validate()?;
        let seed = match pairs.get("seed") {
            Some(v) => parse_num("seed", v)?,
            None => DEFAULT_SEED,
        };
        Ok(ModelFile { network, seed })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key, defaults included, in a stable order.
    pub fn to_text(&self) -> String {
        let n = &self.network;
        let mut s = String::new();
        let _ = writeln!(s, "variant = {}", n.variant);
        let _ = writeln!(s, "blocks = {}", n.num_blocks);
        let _ = writeln!(s, "channels = {}", n.channels);
        let _ = writeln!(s, "kernel = {}", n.kernel_size);
        let _ = writeln!(s, "scheme = {}", n.scheme);
        let _ = writeln!(s, "dilation = {}", n.dilation);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}
