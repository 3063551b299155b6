//! LRFNet configurations, model construction and architecture arithmetic.
//!
//! Every variant shares the same skeleton: a 3×3 head convolution (RGB to
//! `channels`) followed by ReLU, `num_blocks` residual blocks with identity
//! skips, a 3×3 tail convolution back to RGB with no activation, and a global
//! skip adding the (bicubic upscaled) input image to the tail output.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::conv::{self, ConvParams, ConvSpec};
use crate::{Error, Real, Result, Tensor};

/// Network family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Baseline: square k×k block convolutions.
    B,
    /// 1-D kernels: 1×k then k×1 in every block.
    S,
    /// Atrous: square kernels dilated per block group.
    A,
    /// 1-D kernels with dilation.
    SA,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::B, Variant::S, Variant::A, Variant::SA];

    pub fn is_one_dimensional(self) -> bool {
        matches!(self, Variant::S | Variant::SA)
    }

    pub fn is_dilated(self) -> bool {
        matches!(self, Variant::A | Variant::SA)
    }
}

/// Arrangement of convolutions and ReLU inside a residual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResBlockScheme {
    /// conv → ReLU → conv, plus skip.
    A,
    /// ReLU → conv → conv, plus skip.
    B,
    /// ReLU → (1×k ‖ k×1) summed, plus skip.
    C,
    /// (1×k ‖ k×1) summed → ReLU, plus skip.
    D,
}

impl ResBlockScheme {
    pub const ALL: [ResBlockScheme; 4] = [
        ResBlockScheme::A,
        ResBlockScheme::B,
        ResBlockScheme::C,
        ResBlockScheme::D,
    ];

    pub fn is_parallel(self) -> bool {
        matches!(self, ResBlockScheme::C | ResBlockScheme::D)
    }
}

/// Assignment of dilation rates to consecutive groups of residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DilationScheme {
    Uniform,
    S12,
    S123,
    S135,
    S148,
}

impl DilationScheme {
    pub const ALL: [DilationScheme; 5] = [
        DilationScheme::Uniform,
        DilationScheme::S12,
        DilationScheme::S123,
        DilationScheme::S135,
        DilationScheme::S148,
    ];

    pub fn rates(self) -> &'static [usize] {
        match self {
            DilationScheme::Uniform => &[1],
            DilationScheme::S12 => &[1, 2],
            DilationScheme::S123 => &[1, 2, 3],
            DilationScheme::S135 => &[1, 3, 5],
            DilationScheme::S148 => &[1, 4, 8],
        }
    }

    /// Rate of block `block` (0-based) out of `num_blocks`. Blocks are split
    /// into equal consecutive groups, one per rate; with 12 blocks that is
    /// 6+6 for two rates and 4+4+4 for three.
    pub fn rate_for_block(self, block: usize, num_blocks: usize) -> usize {
        let rates = self.rates();
        rates[block * rates.len() / num_blocks.max(1)]
    }
}

/// Declarative description of one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub num_blocks: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub scheme: ResBlockScheme,
    pub dilation: DilationScheme,
}

pub const IMAGE_CHANNELS: usize = 3;
pub const HEAD_TAIL_KERNEL: usize = 3;

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::new(Variant::B)
    }
}

impl NetworkConfig {
    /// Defaults for `variant`: 12 blocks, 64 channels, k = 3, scheme A, and
    /// dilation 1-4-8 for SA or uniform otherwise.
    pub fn new(variant: Variant) -> Self {
        NetworkConfig {
            variant,
            num_blocks: 12,
            channels: 64,
            kernel_size: 3,
            scheme: ResBlockScheme::A,
            dilation: if variant == Variant::SA {
                DilationScheme::S148
            } else {
                DilationScheme::Uniform
            },
        }
    }

    pub fn with_kernel(mut self, k: usize) -> Self {
        self.kernel_size = k;
        self
    }

    pub fn with_scheme(mut self, scheme: ResBlockScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_dilation(mut self, dilation: DilationScheme) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_size(mut self, num_blocks: usize, channels: usize) -> Self {
        self.num_blocks = num_blocks;
        self.channels = channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 {
            return Err(Error::config("at least one residual block is required"));
        }
        if self.channels == 0 {
            return Err(Error::config("channel width must be >= 1"));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "block kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.scheme.is_parallel() && !self.variant.is_one_dimensional() {
            return Err(Error::config(format!(
                "residual block scheme {:?} needs 1-D kernels (variant S or SA), got {}",
                self.scheme, self.variant
            )));
        }
        match self.variant {
            Variant::B | Variant::S if self.dilation != DilationScheme::Uniform => Err(Error::config(format!(
                "variant {} is undilated; dilation scheme {} needs variant A or SA",
                self.variant, self.dilation
            ))),
            Variant::SA if self.dilation != DilationScheme::S148 => Err(Error::config(format!(
                "variant SA uses the 1-4-8 dilation scheme, got {}",
                self.dilation
            ))),
            _ => Ok(()),
        }
    }

    /// Number of convolution layers along the main path.
    pub fn depth(&self) -> usize {
        2 * self.num_blocks + 2
    }

    pub fn block_dilation(&self, block: usize) -> usize {
        if self.variant.is_dilated() {
            self.dilation.rate_for_block(block, self.num_blocks)
        } else {
            1
        }
    }

    pub fn head_spec(&self) -> ConvSpec {
        ConvSpec {
            in_channels: IMAGE_CHANNELS,
            out_channels: self.channels,
            kernel_h: HEAD_TAIL_KERNEL,
            kernel_w: HEAD_TAIL_KERNEL,
            dilation: 1,
        }
    }

    pub fn tail_spec(&self) -> ConvSpec {
        ConvSpec {
            in_channels: self.channels,
            out_channels: IMAGE_CHANNELS,
            kernel_h: HEAD_TAIL_KERNEL,
            kernel_w: HEAD_TAIL_KERNEL,
            dilation: 1,
        }
    }

    /// The two convolutions of block `block`. For 1-D variants the first is
    /// 1×k (horizontal) and the second k×1 (vertical).
    pub fn block_specs(&self, block: usize) -> [ConvSpec; 2] {
        let (c, k, d) = (self.channels, self.kernel_size, self.block_dilation(block));
        let make = |kh, kw| ConvSpec {
            in_channels: c,
            out_channels: c,
            kernel_h: kh,
            kernel_w: kw,
            dilation: d,
        };
        if self.variant.is_one_dimensional() {
            [make(1, k), make(k, 1)]
        } else {
            [make(k, k), make(k, k)]
        }
    }

    /// Every convolution in parameter order: head, block convs, tail.
    pub fn layer_specs(&self) -> Vec<ConvSpec> {
        let mut specs = Vec::with_capacity(self.depth());
        specs.push(self.head_spec());
        for b in 0..self.num_blocks {
            specs.extend(self.block_specs(b));
        }
        specs.push(self.tail_spec());
        specs
    }

    pub fn layer_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.depth());
        names.push("head".to_string());
        for b in 0..self.num_blocks {
            names.push(format!("block{b:02}.conv0"));
            names.push(format!("block{b:02}.conv1"));
        }
        names.push("tail".to_string());
        names
    }
}

/// Exact trainable-parameter count, without building the model.
pub fn count_parameters(config: &NetworkConfig) -> Result<usize> {
    config.validate()?;
    let (c, k, img) = (config.channels, config.kernel_size, IMAGE_CHANNELS);
    let hk = HEAD_TAIL_KERNEL * HEAD_TAIL_KERNEL;
    let taps = if config.variant.is_one_dimensional() { k } else { k * k };
    let head = hk * img * c + c;
    let tail = hk * c * img + img;
    let block = 2 * (taps * c * c + c);
    Ok(head + config.num_blocks * block + tail)
}

/// Receptive field (rows, cols) of a plain stack of convolutions.
pub fn chain_receptive_field(specs: &[ConvSpec]) -> (usize, usize) {
    specs.iter().fold((1, 1), |(h, w), s| {
        let (eh, ew) = s.extent();
        (h + eh - 1, w + ew - 1)
    })
}

/// Theoretical receptive field (rows, cols) of the whole network.
///
/// Sequential layers add `dilation * (extent - 1)` per axis; the parallel
/// branches of schemes C and D contribute the larger of the two branches.
pub fn receptive_field(config: &NetworkConfig) -> Result<(usize, usize)> {
    config.validate()?;
    let grow = |s: &ConvSpec| {
        let (eh, ew) = s.extent();
        (eh - 1, ew - 1)
    };
    let (hh, hw) = grow(&config.head_spec());
    let (th, tw) = grow(&config.tail_spec());
    let (mut rh, mut rw) = (1 + hh + th, 1 + hw + tw);
    for b in 0..config.num_blocks {
        let [first, second] = config.block_specs(b);
        let (ah, aw) = grow(&first);
        let (bh, bw) = grow(&second);
        if config.scheme.is_parallel() {
            rh += ah.max(bh);
            rw += aw.max(bw);
        } else {
            rh += ah + bh;
            rw += aw + bw;
        }
    }
    Ok((rh, rw))
}

/// One row of the architecture ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub variant: Variant,
    pub kernel_size: usize,
    pub scheme: ResBlockScheme,
    pub dilation: DilationScheme,
    pub params: usize,
    pub rf_h: usize,
    pub rf_w: usize,
    pub depth: usize,
}

impl Summary {
    /// Parameters rounded down to thousands, as printed in parameter tables.
    pub fn params_thousands(&self) -> usize {
        self.params / 1000
    }

    pub const CSV_HEADER: &'static str = "variant,kernel,scheme,dilation,params,params_k,rf_h,rf_w,depth";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.variant,
            self.kernel_size,
            self.scheme,
            self.dilation,
            self.params,
            self.params_thousands(),
            self.rf_h,
            self.rf_w,
            self.depth
        )
    }
}

pub fn summarize(config: &NetworkConfig) -> Result<Summary> {
    let params = count_parameters(config)?;
    let (rf_h, rf_w) = receptive_field(config)?;
    Ok(Summary {
        variant: config.variant,
        kernel_size: config.kernel_size,
        scheme: config.scheme,
        dilation: config.dilation,
        params,
        rf_h,
        rf_w,
        depth: config.depth(),
    })
}

/// Renders rows as an aligned text table.
pub fn format_table(rows: &[Summary]) -> String {
    let mut out = format!(
        "{:<8}{:>7}{:>8}{:>10}{:>12}{:>10}{:>7}{:>7}{:>7}\n",
        "variant", "kernel", "scheme", "dilation", "params", "params_k", "rf_h", "rf_w", "depth"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<8}{:>7}{:>8}{:>10}{:>12}{:>10}{:>7}{:>7}{:>7}\n",
            r.variant.to_string(),
            r.kernel_size,
            r.scheme.to_string(),
            r.dilation.to_string(),
            r.params,
            format!("{}k", r.params_thousands()),
            r.rf_h,
            r.rf_w,
            r.depth
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub name: String,
    pub spec: ConvSpec,
    pub params: ConvParams<T>,
}

/// Instantiated network: a flat list of convolution layers whose wiring is
/// implied by the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: NetworkConfig,
    layers: Vec<ConvLayer<T>>,
}

/// Builds a model with He-normal weights and zero biases drawn from `seed`.
pub fn build_model<T: Real>(config: &NetworkConfig, seed: u64) -> Result<Model<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Model::from_fn(config, |spec| ConvParams::kaiming(spec, &mut rng))
}

impl<T: Real> Model<T> {
    /// All weights and biases zero. The network is then the identity map.
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        Model::from_fn(config, ConvParams::zeros)
    }

    fn from_fn(config: &NetworkConfig, mut init: impl FnMut(&ConvSpec) -> ConvParams<T>) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_names()
            .into_iter()
            .zip(config.layer_specs())
            .map(|(name, spec)| {
                spec.validate()?;
                Ok(ConvLayer {
                    name,
                    params: init(&spec),
                    spec,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Model {
            config: *config,
            layers,
        })
    }

    /// Reassembles a model from named tensors in [`Model::named_tensors`] order.
    pub fn from_named_tensors(config: &NetworkConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut model = Model::zeros(config)?;
        let expected = model.tensor_names();
        if tensors.len() != expected.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, t), (want, slot)) in tensors.into_iter().zip(expected.iter().zip(model.tensors_mut())) {
            if &name != want || t.shape() != slot.shape() {
                return Err(Error::Format(format!(
                    "parameter {name} {} does not match {want} {}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(model)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.param_count()).sum()
    }

    pub fn tensor_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(|l| [format!("{}.weight", l.name), format!("{}.bias", l.name)])
            .collect()
    }

    /// Parameter tensors in a fixed order: weight then bias of every layer.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.params.weight, &l.params.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.params.weight, &mut l.params.bias])
            .collect()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.tensor_names().into_iter().zip(self.tensors()).collect()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    name: l.name.clone(),
                    spec: l.spec,
                    params: ConvParams {
                        weight: l.params.weight.cast(),
                        bias: l.params.bias.cast(),
                    },
                })
                .collect(),
        }
    }

    /// Runs the network over any [`Graph`] implementation.
    pub fn forward_graph<G: Graph<T>>(&self, g: &mut G, x: &G::Node) -> Result<G::Node> {
        let channels = g.channels(x);
        if channels != IMAGE_CHANNELS {
            return Err(Error::config(format!(
                "network input must have {IMAGE_CHANNELS} channels, got {channels}"
            )));
        }
        let head = g.conv(x, 0, &self.layers[0])?;
        let mut h = g.relu(&head)?;
        drop(head);
        for b in 0..self.config.num_blocks {
            let first = &self.layers[1 + 2 * b];
            let second = &self.layers[2 + 2 * b];
            let body = match self.config.scheme {
                ResBlockScheme::A => {
                    let t = g.conv(&h, 1 + 2 * b, first)?;
                    let t = g.relu(&t)?;
                    g.conv(&t, 2 + 2 * b, second)?
                }
                ResBlockScheme::B => {
                    let t = g.relu(&h)?;
                    let t = g.conv(&t, 1 + 2 * b, first)?;
                    g.conv(&t, 2 + 2 * b, second)?
                }
                ResBlockScheme::C => {
                    let r = g.relu(&h)?;
                    let u = g.conv(&r, 1 + 2 * b, first)?;
                    let v = g.conv(&r, 2 + 2 * b, second)?;
                    g.add(&u, &v)?
                }
                ResBlockScheme::D => {
                    let u = g.conv(&h, 1 + 2 * b, first)?;
                    let v = g.conv(&h, 2 + 2 * b, second)?;
                    let s = g.add(&u, &v)?;
                    g.relu(&s)?
                }
            };
            h = g.add(&body, &h)?;
        }
        let last = self.layers.len() - 1;
        let out = g.conv(&h, last, &self.layers[last])?;
        g.add(&out, x)
    }

    /// Inference without recording a tape.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_graph(&mut Eager, x)
    }
}

impl<T: Real> Model<T> {
    /// Registers every parameter as a gradient-requiring leaf on `tape`.
    pub fn register(&self, tape: &mut Tape<T>) -> ParamVars {
        ParamVars(
            self.layers
                .iter()
                .map(|l| {
                    (
                        tape.leaf(l.params.weight.clone(), true),
                        tape.leaf(l.params.bias.clone(), true),
                    )
                })
                .collect(),
        )
    }

    /// Forward pass recorded on `tape`; returns the output and parameter handles.
    pub fn forward_taped(&self, tape: &mut Tape<T>, x: Var) -> Result<(Var, ParamVars)> {
        let vars = self.register(tape);
        let mut g = TapeGraph { tape, vars: &vars };
        let out = self.forward_graph(&mut g, &x)?;
        Ok((out, vars))
    }
}

/// Tape handles for (weight, bias) of every layer, in layer order.
#[derive(Debug, Clone)]
pub struct ParamVars(pub Vec<(Var, Var)>);

impl ParamVars {
    /// Handles in [`Model::tensors`] order.
    pub fn flat(&self) -> Vec<Var> {
        self.0.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// The op set a network forward pass needs.
pub trait Graph<T: Real> {
    type Node;

    fn channels(&self, x: &Self::Node) -> usize;
    fn conv(&mut self, x: &Self::Node, layer: usize, conv: &ConvLayer<T>) -> Result<Self::Node>;
    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn relu(&mut self, x: &Self::Node) -> Result<Self::Node>;
}

/// Evaluates ops immediately and keeps nothing.
pub struct Eager;

impl<T: Real> Graph<T> for Eager {
    type Node = Tensor<T>;

    fn channels(&self, x: &Tensor<T>) -> usize {
        x.shape().c
    }

    fn conv(&mut self, x: &Tensor<T>, _layer: usize, conv: &ConvLayer<T>) -> Result<Tensor<T>> {
        let y = conv::forward(x, &conv.params, &conv.spec)?;
        y.check_finite(&conv.name)?;
        Ok(y)
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let y = a.add(b)?;
        y.check_finite("add")?;
        Ok(y)
    }

    fn relu(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.relu())
    }
}

/// Records ops on a tape, using pre-registered parameter leaves.
pub struct TapeGraph<'a, T> {
    pub tape: &'a mut Tape<T>,
    pub vars: &'a ParamVars,
}

impl<T: Real> Graph<T> for TapeGraph<'_, T> {
    type Node = Var;

    fn channels(&self, x: &Var) -> usize {
        self.tape.value(*x).shape().c
    }

    fn conv(&mut self, x: &Var, layer: usize, conv: &ConvLayer<T>) -> Result<Var> {
        let (w, b) = self.vars.0[layer];
        self.tape.conv2d(*x, w, b, &conv.spec)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.add(*a, *b)
    }

    fn relu(&mut self, x: &Var) -> Result<Var> {
        self.tape.relu(*x)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::B => "B",
            Variant::S => "S",
            Variant::A => "A",
            Variant::SA => "SA",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "B" | "BASELINE" => Ok(Variant::B),
            "S" => Ok(Variant::S),
            "A" => Ok(Variant::A),
            "SA" => Ok(Variant::SA),
            other => Err(Error::config(format!(
                "unknown variant {other:?} (expected B, S, A or SA)"
            ))),
        }
    }
}

impl fmt::Display for ResBlockScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ResBlockScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ResBlockScheme::A),
            "B" => Ok(ResBlockScheme::B),
            "C" => Ok(ResBlockScheme::C),
            "D" => Ok(ResBlockScheme::D),
            other => Err(Error::config(format!("unknown block scheme {other:?} (expected A-D)"))),
        }
    }
}

impl fmt::Display for DilationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DilationScheme::Uniform => "1",
            DilationScheme::S12 => "1-2",
            DilationScheme::S123 => "1-2-3",
            DilationScheme::S135 => "1-3-5",
            DilationScheme::S148 => "1-4-8",
        })
    }
}

impl FromStr for DilationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "uniform" | "uniform1" | "none" => Ok(DilationScheme::Uniform),
            "1-2" | "s12" => Ok(DilationScheme::S12),
            "1-2-3" | "s123" => Ok(DilationScheme::S123),
            "1-3-5" | "s135" => Ok(DilationScheme::S135),
            "1-4-8" | "s148" => Ok(DilationScheme::S148),
            other => Err(Error::config(format!(
                "unknown dilation scheme {other:?} (expected 1, 1-2, 1-2-3, 1-3-5 or 1-4-8)"
            ))),
        }
    }
}
