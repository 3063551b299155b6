use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use lrfnet::arch::{
    build_model, format_table, summarize as summarize_config, DilationScheme, Model, NetworkConfig, ResBlockScheme,
    Summary, Variant,
};
use lrfnet::checkpoint::Checkpoint;
use lrfnet::config::ModelFile;
use lrfnet::data::{self, list_images, load_dataset, synthetic, ImageRGB, TrainingSet};
use lrfnet::metrics::{self, ColourSpace, EvalReport, Protocol};
use lrfnet::selftest::{self, SelfTestOptions};
use lrfnet::train::{metrics_rows, EpochSummary, LossKind, TrainCallback, TrainConfig, Trainer, METRICS_HEADER};

pub const CHECKPOINT_FILE: &str = "checkpoint.lrf";
pub const METRICS_FILE: &str = "metrics.csv";

fn print_config(pairs: &[(&str, String)]) {
    for (k, v) in pairs {
        println!("# {k}: {v}");
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_else(|| "none".into())
}

fn path_opt(v: &Option<PathBuf>) -> String {
    v.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "none".into())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn network_pairs(n: &NetworkConfig) -> Vec<(&'static str, String)> {
    vec![
        ("variant", n.variant.to_string()),
        ("blocks", n.num_blocks.to_string()),
        ("channels", n.channels.to_string()),
        ("kernel", n.kernel_size.to_string()),
        ("scheme", n.scheme.to_string()),
        ("dilation", n.dilation.to_string()),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Kernels,
    Dilations,
    Variants,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Kaiming,
    Zero,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("what").required(true).args(["config", "sweep"])))]
pub struct SummarizeArgs {
    /// Network config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep over kernel sizes, dilation schemes or all variants.
    #[arg(long, value_enum)]
    sweep: Option<Sweep>,
    /// Variants for the kernel sweep.
    #[arg(long, value_delimiter = ',', default_value = "B,S")]
    variant: Vec<Variant>,
    /// Kernel size for the dilation and variant sweeps.
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

pub fn sweep_configs(sweep: Sweep, variants: &[Variant], kernel: usize) -> Vec<NetworkConfig> {
    match sweep {
        Sweep::Kernels => variants
            .iter()
            .flat_map(|&v| {
                selftest::KERNELS
                    .iter()
                    .map(move |&k| NetworkConfig::new(v).with_kernel(k))
            })
            .collect(),
        Sweep::Dilations => DilationScheme::ALL
            .iter()
            .map(|&d| NetworkConfig::new(Variant::A).with_kernel(kernel).with_dilation(d))
            .collect(),
        Sweep::Variants => {
            let mut out = vec![NetworkConfig::new(Variant::B).with_kernel(kernel)];
            for s in ResBlockScheme::ALL {
                out.push(NetworkConfig::new(Variant::S).with_kernel(kernel).with_scheme(s));
            }
            out.push(
                NetworkConfig::new(Variant::A)
                    .with_kernel(kernel)
                    .with_dilation(DilationScheme::S148),
            );
            out.push(NetworkConfig::new(Variant::SA).with_kernel(kernel));
            out
        }
    }
}

pub fn summarize(a: SummarizeArgs) -> Result<bool> {
    let configs = match (&a.config, a.sweep) {
        (Some(path), _) => {
            let file = ModelFile::load(path)?;
            let mut pairs = vec![("config", path.display().to_string())];
            pairs.extend(network_pairs(&file.network));
            pairs.push(("seed", file.seed.to_string()));
            pairs.push(("format", format!("{:?}", a.format).to_lowercase()));
            print_config(&pairs);
            vec![file.network]
        }
        (None, Some(sweep)) => {
            print_config(&[
                ("sweep", format!("{sweep:?}").to_lowercase()),
                ("variant", join(&a.variant)),
                ("kernel", a.kernel.to_string()),
                ("format", format!("{:?}", a.format).to_lowercase()),
            ]);
            sweep_configs(sweep, &a.variant, a.kernel)
        }
        (None, None) => bail!("one of --config or --sweep is required"),
    };
    let rows = configs
        .iter()
        .map(summarize_config)
        .collect::<lrfnet::Result<Vec<Summary>>>()?;
    match a.format {
        Format::Text => print!("{}", format_table(&rows)),
        Format::Csv => {
            println!("{}", Summary::CSV_HEADER);
            for r in &rows {
                println!("{}", r.csv_row());
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["data", "synthetic"])))]
pub struct TrainArgs {
    /// Network config file (default: the baseline network).
    #[arg(long, conflicts_with = "resume")]
    config: Option<PathBuf>,
    /// HR training images: a directory of PNGs or a manifest file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Train on N generated images instead of --data.
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
    /// Side length of generated images.
    #[arg(long, default_value_t = 128)]
    synthetic_size: usize,
    /// Total epochs of the run (a resumed run continues up to this count).
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 16, conflicts_with = "resume")]
    batch: usize,
    /// Seed for initialisation, batch order and augmentation (default: the
    /// config file's seed, else 0).
    #[arg(long, conflicts_with = "resume")]
    seed: Option<u64>,
    /// Output directory for the checkpoint and metrics log.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4, conflicts_with = "resume")]
    lr: f32,
    /// Epochs between learning-rate halvings.
    #[arg(long, default_value_t = 50, conflicts_with = "resume")]
    halving: usize,
    #[arg(long, default_value = "l1", conflicts_with = "resume")]
    loss: LossKind,
    #[arg(long, value_delimiter = ',', default_value = "4,8")]
    scales: Vec<usize>,
    #[arg(long, default_value_t = data::PATCH_SIZE)]
    patch: usize,
    #[arg(long, value_enum, default_value_t = Init::Kaiming, conflicts_with = "resume")]
    init: Init,
    /// Validation images; mean Y-PSNR at the first scale is logged per epoch.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, conflicts_with = "resume")]
    no_augment: bool,
}

struct EpochLogger {
    out: PathBuf,
    total: usize,
    val: Option<(Vec<(String, ImageRGB)>, usize)>,
}

impl EpochLogger {
    fn append(&self, rows: &[String]) -> std::io::Result<()> {
        let mut f = OpenOptions::new()
            .append(true)
            .create(true)
            .open(self.out.join(METRICS_FILE))?;
        for r in rows {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

impl TrainCallback for EpochLogger {
    fn on_epoch_end(&mut self, summary: &EpochSummary, trainer: &Trainer) -> lrfnet::Result<Option<f64>> {
        let val = match &self.val {
            Some((set, scale)) => Some(
                metrics::evaluate(Some(trainer.model()), set, *scale, Protocol::benchmark(*scale))?
                    .report
                    .mean_psnr,
            ),
            None => None,
        };
        Checkpoint::from_trainer(trainer).save(&self.out.join(CHECKPOINT_FILE))?;
        self.append(&metrics_rows(summary, val))
            .map_err(|source| lrfnet::Error::Io {
                path: self.out.join(METRICS_FILE),
                source,
            })?;
        let losses = summary
            .loss_by_scale
            .iter()
            .map(|(s, l)| format!("x{s} {l:.6}"))
            .collect::<Vec<_>>()
            .join(", ");
        let shown = val.map(|v| format!(", val {v:.3} dB")).unwrap_or_default();
        println!(
            "epoch {}/{} step {} lr {:e}: loss {losses}{shown}",
            summary.epoch + 1,
            self.total,
            summary.step,
            summary.lr
        );
        Ok(val)
    }
}

pub fn train(a: TrainArgs) -> Result<bool> {
    let (mut trainer, init_label) = match &a.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            (ckpt.into_trainer()?, format!("resume {}", path.display()))
        }
        None => {
            let file = match &a.config {
                Some(p) => ModelFile::load(p)?,
                None => ModelFile::default(),
            };
            let seed = a.seed.unwrap_or(file.seed);
            let model = match a.init {
                Init::Kaiming => build_model::<f32>(&file.network, seed)?,
                Init::Zero => Model::zeros(&file.network)?,
            };
            let cfg = TrainConfig {
                initial_lr: a.lr,
                halving_period: a.halving,
                total_epochs: a.epochs,
                batch_size: a.batch,
                seed,
                loss: a.loss,
                augment: !a.no_augment,
            };
            (Trainer::new(model, cfg)?, format!("{:?}", a.init).to_lowercase())
        }
    };
    trainer.set_total_epochs(a.epochs);
    let cfg = *trainer.config();
    let progress = trainer.progress();

    let mut pairs = vec![("config", path_opt(&a.config))];
    pairs.extend(network_pairs(trainer.model().config()));
    pairs.extend([
        ("data", path_opt(&a.data)),
        ("synthetic", opt(&a.synthetic)),
        ("synthetic_size", a.synthetic_size.to_string()),
        ("epochs", cfg.total_epochs.to_string()),
        ("batch", cfg.batch_size.to_string()),
        ("seed", cfg.seed.to_string()),
        ("lr", format!("{:e}", cfg.initial_lr)),
        ("halving", cfg.halving_period.to_string()),
        ("loss", cfg.loss.to_string()),
        ("augment", cfg.augment.to_string()),
        ("scales", join(&a.scales)),
        ("patch", a.patch.to_string()),
        ("init", init_label),
        ("val", path_opt(&a.val)),
        ("out", a.out.display().to_string()),
        ("start_epoch", progress.epoch.to_string()),
        ("start_step", progress.step.to_string()),
    ]);
    print_config(&pairs);

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let ckpt_path = a.out.join(CHECKPOINT_FILE);
    Checkpoint::from_trainer(&trainer).save(&ckpt_path)?;
    if trainer.is_finished() {
        println!("checkpoint: {}", ckpt_path.display());
        return Ok(true);
    }

    let images: Vec<ImageRGB> = match (&a.data, a.synthetic) {
        (Some(dir), _) => load_dataset(dir)?.into_iter().map(|(_, img)| img).collect(),
        (None, Some(n)) => synthetic::dataset(n, a.synthetic_size, a.synthetic_size, cfg.seed),
        (None, None) => bail!("one of --data or --synthetic is required"),
    };
    let set = TrainingSet::from_images(&images, &a.scales, a.patch)?;
    println!("training set: {} images, {} patches", images.len(), set.len());

    let metrics_path = a.out.join(METRICS_FILE);
    if a.resume.is_none() || !metrics_path.exists() {
        fs::write(&metrics_path, format!("{METRICS_HEADER}\n"))
            .with_context(|| format!("writing {}", metrics_path.display()))?;
    }
    let val = match &a.val {
        Some(p) => Some((load_dataset(p)?, a.scales[0])),
        None => None,
    };
    let mut logger = EpochLogger {
        out: a.out.clone(),
        total: cfg.total_epochs,
        val,
    };
    trainer.run(&set, &mut logger)?;
    println!("checkpoint: {}", ckpt_path.display());
    Ok(true)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained checkpoint; without one, plain bicubic upscaling is scored.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// HR test images: a directory of PNGs or a manifest file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 4)]
    scale: usize,
    #[arg(long, default_value = "y")]
    protocol: ColourSpace,
    /// Border pixels removed before scoring (default: the scale).
    #[arg(long)]
    shave: Option<usize>,
    /// Write each super-resolved output here as PNG.
    #[arg(long)]
    save_dir: Option<PathBuf>,
    /// Also write the CSV report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn load_model(path: &Option<PathBuf>) -> Result<Option<Model<f32>>> {
    Ok(match path {
        Some(p) => Some(
            Checkpoint::load(p)
                .with_context(|| format!("loading {}", p.display()))?
                .model,
        ),
        None => None,
    })
}

pub fn eval(a: EvalArgs) -> Result<bool> {
    let protocol = Protocol {
        colour_space: a.protocol,
        shave: a.shave.unwrap_or(a.scale),
    };
    print_config(&[
        ("checkpoint", path_opt(&a.checkpoint)),
        ("data", a.data.display().to_string()),
        ("scale", a.scale.to_string()),
        ("protocol", protocol.colour_space.to_string()),
        ("shave", protocol.shave.to_string()),
        ("save_dir", path_opt(&a.save_dir)),
        ("out", path_opt(&a.out)),
        ("format", format!("{:?}", a.format).to_lowercase()),
    ]);
    let model = load_model(&a.checkpoint)?;
    let dataset = load_dataset(&a.data)?;
    let evaluation = metrics::evaluate(model.as_ref(), &dataset, a.scale, protocol)?;
    if let Some(dir) = &a.save_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, img) in &evaluation.outputs {
            img.save_png(&dir.join(format!("{name}.png")))?;
        }
    }
    let report: &EvalReport = &evaluation.report;
    if let Some(path) = &a.out {
        fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    match a.format {
        Format::Csv => print!("{}", report.to_csv()),
        Format::Text => print!("{}", report.to_table()),
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(true)
}

#[derive(Debug, Args)]
pub struct SrArgs {
    /// Trained checkpoint; without one, the output is the bicubic upscale.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Low-resolution input PNG.
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 4)]
    scale: usize,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

pub fn sr(a: SrArgs) -> Result<bool> {
    print_config(&[
        ("checkpoint", path_opt(&a.checkpoint)),
        ("image", a.image.display().to_string()),
        ("scale", a.scale.to_string()),
        ("out", a.out.display().to_string()),
    ]);
    let model = load_model(&a.checkpoint)?;
    let lr = ImageRGB::load(&a.image)?;
    let input = data::upscale_input(&lr, a.scale)?;
    let out = metrics::super_resolve(model.as_ref(), &input)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    out.save_png(&a.out)?;
    println!(
        "{}x{} -> {}x{}: {}",
        lr.width(),
        lr.height(),
        out.width(),
        out.height(),
        a.out.display()
    );
    Ok(true)
}

#[derive(Debug, Args)]
pub struct MakeLrArgs {
    /// Directory of HR PNG images (searched recursively).
    #[arg(long)]
    hr_dir: PathBuf,
    #[arg(long)]
    scale: usize,
    /// Receives `lr/`, `input/` and `hr/` trees mirroring the HR layout.
    #[arg(long)]
    out_dir: PathBuf,
}

fn save_under(root: &Path, sub: &str, rel: &Path, img: &ImageRGB) -> Result<()> {
    let path = root.join(sub).join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    img.save_png(&path)?;
    Ok(())
}

pub fn make_lr(a: MakeLrArgs) -> Result<bool> {
    print_config(&[
        ("hr_dir", a.hr_dir.display().to_string()),
        ("scale", a.scale.to_string()),
        ("out_dir", a.out_dir.display().to_string()),
    ]);
    if !a.hr_dir.is_dir() {
        bail!("{} is not a directory", a.hr_dir.display());
    }
    let paths = list_images(&a.hr_dir)?;
    if paths.is_empty() {
        bail!("no PNG images under {}", a.hr_dir.display());
    }
    for path in &paths {
        let rel = path.strip_prefix(&a.hr_dir).unwrap_or(path);
        let pair = data::make_lr_pair(&ImageRGB::load(path)?, a.scale)?;
        save_under(&a.out_dir, "lr", rel, &pair.lr)?;
        save_under(&a.out_dir, "input", rel, &pair.input)?;
        save_under(&a.out_dir, "hr", rel, &pair.target)?;
        println!(
            "{}: {}x{} -> {}x{}",
            rel.display(),
            pair.target.width(),
            pair.target.height(),
            pair.lr.width(),
            pair.lr.height()
        );
    }
    println!("{} images written", paths.len());
    Ok(true)
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Perturbs the fast convolution so the failure path can be tested.
    #[arg(long, hide = true)]
    corrupt_conv: bool,
}

pub fn selftest(a: SelftestArgs) -> Result<bool> {
    print_config(&[
        ("corrupt_conv", a.corrupt_conv.to_string()),
        ("exec", format!("{:?}", lrfnet::Exec::default()).to_lowercase()),
    ]);
    let report = selftest::run(SelfTestOptions {
        corrupt_conv: a.corrupt_conv,
    });
    println!("{report}");
    Ok(report.passed())
}
