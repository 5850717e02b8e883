//! The `meter` command line.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::augment::{self, DepthSample, DepthUnit};
use crate::error::{Error, Result};
use crate::io::{self, Colormap, Dataset, DepthEncoding, KvReport, Scene, SynthOptions};
use crate::metrics::{self, ConstantDepth, DepthPredictor, EvalCrop, GroundTruthOracle};
use crate::model::{Activation, DepthMap, InputSize, MeterModel, ModelConfig, Variant};
use crate::profile;
use crate::selfcheck::{self, Fault, SelfCheckOptions};
use crate::tensor::{resize_bilinear, Tensor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "meter", version, about = "Lightweight monocular depth estimation toolkit")]
pub struct Cli {
    /// Seed for weight init, synthetic data and augmentation.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads for the kernels; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count parameters and MACs per layer.
    Profile(ProfileArgs),
    /// Predict depth for one image.
    Infer(InferArgs),
    /// Score a predictor on a dataset manifest.
    Eval(EvalArgs),
    /// Time single-image inference.
    Bench(BenchArgs),
    /// Run the built-in kernel, loss and size checks.
    Selfcheck(SelfcheckArgs),
    /// Write a seeded random-weight archive.
    Init(InitArgs),
    /// Write a procedural rgb/depth dataset.
    Synth(SynthArgs),
    /// Write an rgb/depth pair before and after augmentation.
    AugmentPreview(AugmentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    S,
    Xs,
    Xxs,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::S => Variant::S,
            VariantArg::Xs => Variant::XS,
            VariantArg::Xxs => Variant::XXS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Silu,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::ReLU,
            ActivationArg::Silu => Activation::SiLU,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Png16Mm,
    RawF32M,
}

impl From<EncodingArg> for DepthEncoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Png16Mm => DepthEncoding::Png16Mm,
            EncodingArg::RawF32M => DepthEncoding::RawF32M,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Default,
    Shifting,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "s")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "relu")]
    pub activation: ActivationArg,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "256x192")]
    pub input_size: String,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Colormapped depth image (PNG).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "plasma-reversed")]
    pub colormap: String,
    /// Raw little-endian f32 depth map.
    #[arg(long)]
    pub raw_out: Option<PathBuf>,
    /// Expected variant; loading fails if the archive holds another.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Network input extent; defaults to 256x192, or 636x192 with --outdoor.
    #[arg(long)]
    pub input_size: Option<String>,
    /// Outdoor depth range (up to 80 m) instead of indoor (up to 10 m).
    #[arg(long)]
    pub outdoor: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, conflicts_with_all = ["constant_depth", "oracle"])]
    pub weights: Option<PathBuf>,
    /// Predict this depth in meters everywhere.
    #[arg(long)]
    pub constant_depth: Option<f32>,
    /// Predict the ground truth itself.
    #[arg(long, hide = true)]
    pub oracle: bool,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Normalized evaluation rectangle `top,bottom,left,right`.
    #[arg(long)]
    pub crop: Option<String>,
    #[arg(long)]
    pub input_size: Option<String>,
    /// Write the full report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "256x192")]
    pub input_size: String,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Random instances per kernel and loss check.
    #[arg(long, default_value_t = 10)]
    pub instances: usize,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, short, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value = "256x192")]
    pub size: String,
    #[arg(long, value_enum, default_value = "png16-mm")]
    pub encoding: EncodingArg,
    /// Use a single plane at this depth for every sample.
    #[arg(long)]
    pub plane_depth: Option<f32>,
    #[arg(long)]
    pub outdoor: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Depth file; `.png` is read as 16-bit millimeters, anything else as raw f32.
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "shifting")]
    pub policy: PolicyArg,
    #[arg(long)]
    pub outdoor: bool,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    // The global pool can only be built once per process; later calls keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::EmptyDataset(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn write_out(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    write!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn size_arg(s: &str) -> Result<InputSize> {
    s.parse()
}

fn config(args: &ModelArgs, size: InputSize) -> Result<ModelConfig> {
    let c = ModelConfig::preset(args.variant.into()).with_activation(args.activation.into()).with_input_size(size);
    c.validate()?;
    Ok(c)
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Profile(a) => cmd_profile(a, out),
        Command::Infer(a) => cmd_infer(a, cli.verbose, out, err),
        Command::Eval(a) => cmd_eval(a, cli.verbose, out, err),
        Command::Bench(a) => cmd_bench(a, cli.seed, out, err),
        Command::Selfcheck(a) => cmd_selfcheck(a, cli.seed, out),
        Command::Init(a) => cmd_init(a, cli.seed, out),
        Command::Synth(a) => cmd_synth(a, cli.seed, out),
        Command::AugmentPreview(a) => cmd_augment(a, cli.seed, out),
    }
}

fn cmd_profile(a: &ProfileArgs, out: &mut dyn Write) -> Result<i32> {
    let size = size_arg(&a.input_size)?;
    let model = MeterModel::zeroed(config(&a.model, size)?)?;
    let report = profile::count_macs(&model, size)?;
    write_out(out, report.to_kv())?;
    if let Some(p) = &a.json {
        write_file(p, &report.to_json())?;
    }
    Ok(EXIT_OK)
}

fn cmd_bench(a: &BenchArgs, seed: u64, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let size = size_arg(&a.input_size)?;
    if a.iters == 0 {
        return Err(Error::Config("--iters must be at least 1".into()));
    }
    let model = MeterModel::build(config(&a.model, size)?, seed)?;
    let latency = profile::bench_latency(&model, size, a.iters, a.warmup)?;
    let report = profile::count_params(&model).with_latency(latency);
    let mut kv = report.to_kv();
    kv.push("input_size", size);
    kv.push("threads", rayon::current_num_threads());
    write_out(out, kv)?;
    if latency.std_ms > 0.2 * latency.mean_ms {
        let _ =
            writeln!(err, "warning: latency spread is {:.0}% of the mean", 100.0 * latency.std_ms / latency.mean_ms);
    }
    if let Some(p) = &a.json {
        write_file(p, &report.to_json())?;
    }
    Ok(EXIT_OK)
}

fn cmd_selfcheck(a: &SelfcheckArgs, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let fault = a.inject_fault.as_deref().map(str::parse::<Fault>).transpose()?;
    let results = selfcheck::run(&SelfCheckOptions { seed, instances: a.instances, fault });
    write_out(out, selfcheck::summary(&results))?;
    Ok(if selfcheck::all_passed(&results) { EXIT_OK } else { EXIT_RUNTIME })
}

fn cmd_init(a: &InitArgs, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let model = MeterModel::build(config(&a.model, InputSize::INDOOR)?, seed)?;
    io::save_weights(&model, &a.out)?;
    let mut kv = KvReport::new();
    kv.push("variant", model.variant())
        .push("activation", model.config().activation)
        .push("params_total", model.param_count())
        .push("seed", seed)
        .push("weights", a.out.display());
    write_out(out, kv)?;
    Ok(EXIT_OK)
}

/// Model config matching an archive header.
fn archive_config(path: &Path, expected: Option<Variant>, outdoor: bool) -> Result<ModelConfig> {
    let header = io::read_header(path)?;
    let variant = expected.unwrap_or(header.variant);
    let base = if outdoor { ModelConfig::outdoor(variant) } else { ModelConfig::preset(variant) };
    Ok(base.with_activation(header.activation))
}

fn cmd_infer(a: &InferArgs, verbose: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cmap: Colormap = a.colormap.parse()?;
    let mut cfg = archive_config(&a.weights, a.variant.map(Variant::from), a.outdoor)?;
    if let Some(s) = &a.input_size {
        cfg = cfg.with_input_size(size_arg(s)?);
    }
    cfg.validate()?;
    let model = io::load_weights(&a.weights, &cfg)?;
    let rgb = io::read_rgb(&a.image)?;
    let size = cfg.input_size;
    let rs = rgb.shape();
    if verbose {
        let _ = writeln!(err, "input {}x{} resized to {size}", rs.width, rs.height);
    }
    let rgb = if (rs.width, rs.height) == (size.width, size.height) {
        rgb
    } else {
        resize_bilinear(&rgb, size.height, size.width)
    };
    let depth = model.forward(&rgb)?;
    let (lo, hi) = cfg.depth_range;
    io::render::write_png(&io::render_depth(&depth, lo, hi, cmap)?, &a.out)?;
    if let Some(p) = &a.raw_out {
        io::dataset::write_raw_depth(p, &depth.values)?;
    }
    let (min, max) = depth.values.min_max().unwrap_or((f32::NAN, f32::NAN));
    let s = depth.values.shape();
    let mut kv = KvReport::new();
    kv.push("variant", model.variant())
        .push("output_size", format!("{}x{}", s.width, s.height))
        .push("depth_min_m", format!("{min:.6}"))
        .push("depth_max_m", format!("{max:.6}"))
        .push("depth_mean_m", format!("{:.6}", depth.values.mean()))
        .push("image_out", a.out.display());
    if let Some(p) = &a.raw_out {
        kv.push("raw_out", p.display());
    }
    write_out(out, kv)?;
    Ok(EXIT_OK)
}

fn cmd_eval(a: &EvalArgs, verbose: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let crop = a.crop.as_deref().map(str::parse::<EvalCrop>).transpose()?;
    let manifest = io::DatasetManifest::load(&a.dataset)?;
    let outdoor = manifest.unit == DepthUnit::OutdoorDm;
    let mut size = a.input_size.as_deref().map(size_arg).transpose()?;
    let (predictor, label): (Box<dyn DepthPredictor>, String) = match (&a.weights, a.constant_depth, a.oracle) {
        (Some(w), _, _) => {
            let mut cfg = archive_config(w, None, outdoor)?;
            let lo = cfg.depth_range.0;
            cfg = cfg.with_depth_range(lo, manifest.max_depth_m);
            let s = *size.get_or_insert(cfg.input_size);
            cfg = cfg.with_input_size(s);
            cfg.validate()?;
            let model = io::load_weights(w, &cfg)?;
            let label = format!("meter-{}", model.variant());
            (Box::new(model), label)
        }
        (None, Some(d), false) => {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("--constant-depth {d} must be positive")));
            }
            (Box::new(ConstantDepth(d)), format!("constant-{d}"))
        }
        (None, None, true) => (Box::new(GroundTruthOracle), "ground-truth".into()),
        _ => return Err(Error::Config("give exactly one of --weights, --constant-depth".into())),
    };
    let dataset = Dataset::open(&a.dataset, size)?;
    let report = metrics::evaluate_dataset(predictor.as_ref(), &dataset, crop)?;
    let mut kv = KvReport::new();
    kv.push("predictor", &label)
        .push("dataset", a.dataset.display())
        .push("images_evaluated", report.images_evaluated)
        .push("images_skipped", report.failures.len())
        .push("pixels_evaluated", report.pixels_evaluated)
        .push("rmse_m", format!("{:.6}", report.rmse_m))
        .push("rel", format!("{:.6}", report.rel))
        .push("delta1", format!("{:.6}", report.delta1));
    if let Some(c) = report.crop {
        kv.push("crop", format!("{},{},{},{}", c.top, c.bottom, c.left, c.right));
    }
    for f in &report.failures {
        let _ = writeln!(err, "warning: skipped sample {} ({}): {}", f.index, f.label, f.reason);
    }
    if verbose {
        for (i, m) in report.per_image.iter().enumerate() {
            kv.push(
                format!("image.{i}"),
                format!("rmse_m={:.6} rel={:.6} delta1={:.6} pixels={}", m.rmse_m, m.rel, m.delta1, m.pixels),
            );
        }
    }
    write_out(out, kv)?;
    if let Some(p) = &a.report {
        write_file(p, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    Ok(EXIT_OK)
}

fn cmd_synth(a: &SynthArgs, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let size = size_arg(&a.size)?;
    if a.n == 0 {
        return Err(Error::Config("-n must be at least 1".into()));
    }
    let (unit, max_depth) = if a.outdoor { (DepthUnit::OutdoorDm, 80.0) } else { (DepthUnit::IndoorCm, 10.0) };
    let opts = SynthOptions {
        width: size.width,
        height: size.height,
        encoding: a.encoding.into(),
        unit,
        max_depth_m: max_depth,
        scene: a.plane_depth.map(|depth| Scene::Plane { depth }),
        eval_crop: None,
    };
    let m = io::generate_synthetic_dataset_with(a.n, seed, &a.out, &opts)?;
    let mut kv = KvReport::new();
    kv.push("samples", m.entries.len())
        .push("manifest", a.out.join("manifest.json").display())
        .push("size", size)
        .push("seed", seed);
    write_out(out, kv)?;
    Ok(EXIT_OK)
}

fn depth_png(depth: &Tensor, max: f32) -> Result<image::RgbImage> {
    let mask = depth.data().iter().map(|&v| v > 0.0).collect();
    let map = DepthMap { values: depth.clone(), valid_mask: Some(mask) };
    io::render_depth(&map, 0.0, max, Colormap::PlasmaReversed)
}

fn cmd_augment(a: &AugmentArgs, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let encoding = match a.depth.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => DepthEncoding::Png16Mm,
        _ => DepthEncoding::RawF32M,
    };
    let (unit, max_depth) = if a.outdoor { (DepthUnit::OutdoorDm, 80.0) } else { (DepthUnit::IndoorCm, 10.0) };
    let rgb = io::read_rgb(&a.image)?;
    let depth = io::read_depth(&a.depth, encoding)?;
    let (rs, ds) = (rgb.shape(), depth.shape());
    if (rs.height, rs.width) != (ds.height, ds.width) {
        return Err(Error::Validation(format!(
            "rgb {}x{} and depth {}x{} must share a resolution",
            rs.width, rs.height, ds.width, ds.height
        )));
    }
    let sample = DepthSample::new(rgb, depth, unit, max_depth)?;
    let (after, log) = match a.policy {
        PolicyArg::Default => augment::default_policy(&sample, seed)?,
        PolicyArg::Shifting => augment::shifting_policy(&sample, seed)?,
    };
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let d = &a.out_dir;
    io::write_rgb_png(d.join("before_rgb.png"), &sample.rgb)?;
    io::write_rgb_png(d.join("after_rgb.png"), &after.rgb)?;
    io::render::write_png(&depth_png(&sample.depth, max_depth)?, d.join("before_depth.png"))?;
    io::render::write_png(&depth_png(&after.depth, max_depth)?, d.join("after_depth.png"))?;
    let mut kv = KvReport::new();
    kv.push("seed", seed)
        .push("vflip", log.vflip)
        .push("mirror", log.mirror)
        .push(
            "crop",
            log.crop.map_or("none".into(), |c| {
                format!("top={} left={} height={} width={}", c.top, c.left, c.height, c.width)
            }),
        )
        .push("channel_perm", log.channel_perm.map_or("none".into(), |p| format!("{},{},{}", p[0], p[1], p[2])))
        .push(
            "c_shift",
            log.c_shift.map_or("none".into(), |c| {
                format!("beta={} gamma={} eta={},{},{}", c.beta, c.gamma, c.eta[0], c.eta[1], c.eta[2])
            }),
        )
        .push("d_shift_m", log.d_shift.map_or("none".into(), |s| s.to_string()))
        .push("out_dir", d.display());
    write_out(out, kv)?;
    Ok(EXIT_OK)
}
