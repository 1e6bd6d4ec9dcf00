//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and turns the outcome into an exit code.
//!
//! Settings resolve in three layers: the `--preset`, then the `--config`
//! file, then individual flags. Every command writes the resolved settings
//! to `config.toml` in its output directory; that file can be passed back
//! with `--config` to repeat a run.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{self, detection_statistic, list_images};
use crate::fingerprint::{self, FingerprintModel, TrainingConfig};
use crate::image::GrayImage;
use crate::jpeg_sim::{self, CompressionClassRegistry};
use crate::localization::{
    self, colormap, ComprintProvider, FingerprintProvider, HighpassProvider, LocalizationConfig,
};
use crate::synth;

pub const EXIT_OK: i32 = 0;
/// Bad arguments, unreadable or malformed inputs, bad config.
pub const EXIT_INPUT: i32 = 2;
/// A pipeline stage failed on valid input.
pub const EXIT_PIPELINE: i32 = 3;

/// Side length training images are resized to.
pub const TRAINING_SIDE: usize = 200;

#[derive(Debug, Parser)]
#[command(name = "comprint", version, about = "Compression-fingerprint forgery localization")]
pub struct Cli {
    /// Progress messages on stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain the extractor as a compression-noise denoiser
    Pretrain(PretrainArgs),
    /// Siamese training of a pretrained extractor
    Train(TrainArgs),
    /// Fingerprint, heatmap and detection score for one image
    Analyze(AnalyzeArgs),
    /// Max-F1 and AUC over a directory of forged images and masks
    Evaluate(EvaluateArgs),
    /// Generate a synthetic splice dataset
    MakeFixtures(FixtureArgs),
    /// List the quantization tables of a JPEG file
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-size network and schedule, 128-pixel windows
    #[default]
    Full,
    /// Small network and schedule, 32-pixel windows
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Trained extractor; takes the next --model
    Comprint,
    /// Third-order horizontal high-pass residual
    Highpass,
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    /// Starting point for all settings
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// TOML training settings layered over the preset
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    /// Patches (pretrain) or pairs (train) per batch
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Compression classes, comma separated (QF30,QF90,...)
    #[arg(long, value_delimiter = ',')]
    pub registry: Option<Vec<String>>,
    /// Extra quantization tables referenced by --registry
    #[arg(long)]
    pub table_file: Option<PathBuf>,
    /// ADAM learning rate
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Directory of training images (PNG or JPEG)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model written by `pretrain`
    #[arg(long)]
    pub pretrained: PathBuf,
    /// Directory of training images
    #[arg(long)]
    pub corpus: PathBuf,
    /// Held-out images; default is the last fifth of the corpus
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct ProviderFlags {
    /// Fingerprint source, repeatable; several are fused. Default: one
    /// comprint provider per --model
    #[arg(long = "provider", value_enum)]
    pub providers: Vec<ProviderKind>,
    /// Model file for each comprint provider, in order
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LocalizationFlags {
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// TOML localization settings layered over the preset
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Co-occurrence window side
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Principal components kept before EM
    #[arg(long)]
    pub pca_dims: Option<usize>,
    /// Covariance ridge as a fraction of the mean feature variance
    #[arg(long)]
    pub regularization: Option<f64>,
    /// Extra randomly initialised EM runs
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Seed for the EM restarts
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// PNG or JPEG image
    #[arg(long)]
    pub image: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub providers: ProviderFlags,
    #[command(flatten)]
    pub localization: LocalizationFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of forged images
    #[arg(long)]
    pub fake: PathBuf,
    /// Directory of masks (`<stem>_mask.png` or `<stem>.png`); default --fake
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Directory of pristine images, enables the AUC
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; default is the number of logical CPUs
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub providers: ProviderFlags,
    #[command(flatten)]
    pub localization: LocalizationFlags,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Output directory; gets fake/, masks/ and real/
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Image side, a multiple of 8
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compression classes to splice between
    #[arg(long, value_delimiter = ',', default_values_t = ["QF30".to_string(), "QF90".to_string()])]
    pub classes: Vec<String>,
    /// Extra quantization tables referenced by --classes
    #[arg(long)]
    pub table_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// JPEG file
    pub path: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_PIPELINE
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pretrain(a) => cmd_pretrain(a, cli.verbose),
        Command::Train(a) => cmd_train(a, cli.verbose),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::MakeFixtures(a) => cmd_make_fixtures(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Layers the TOML `text` over `base`. A file written by a previous run
/// (with a `[run]` table) contributes only its `section` table.
pub fn layer_config<T: Serialize + DeserializeOwned>(base: &T, text: &str, section: &str) -> Result<T> {
    let mut over: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if over.contains_key("run") || over.contains_key(section) {
        over = match over.remove(section) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::Config(format!("`{section}` is not a table"))),
            None => toml::Table::new(),
        };
    }
    let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    merge_tables(&mut table, over);
    table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

fn read_config<T: Serialize + DeserializeOwned>(base: T, path: Option<&Path>, section: &str) -> Result<T> {
    let Some(path) = path else { return Ok(base) };
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
    layer_config(&base, &text, section).map_err(|e| e.at_path(path))
}

/// Preset, then config file, then flags. The schedule flags address the
/// Siamese schedule when `siamese`, else the pretraining one.
pub fn resolve_training(flags: &TrainingFlags, siamese: bool) -> Result<TrainingConfig> {
    let preset = match flags.preset {
        Preset::Full => TrainingConfig::full(),
        Preset::Desk => TrainingConfig::desk(),
    };
    let mut c = read_config(preset, flags.config.as_deref(), "training")?;
    if let Some(s) = flags.seed {
        c.seed = s;
    }
    let (epochs, batches, batch_size) = if siamese {
        (&mut c.epochs, &mut c.batches_per_epoch, &mut c.pairs_per_batch)
    } else {
        let p = &mut c.pretrain;
        (&mut p.epochs, &mut p.batches_per_epoch, &mut p.patches_per_batch)
    };
    for (slot, flag) in [(epochs, flags.epochs), (batches, flags.batches_per_epoch), (batch_size, flags.batch_size)] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if let Some(r) = &flags.registry {
        c.registry = r.clone();
    }
    if let Some(t) = &flags.table_file {
        c.table_file = Some(t.clone());
    }
    if let Some(lr) = flags.lr {
        c.adam.lr = lr;
    }
    c.validate()?;
    Ok(c)
}

/// Preset, then config file, then flags.
pub fn resolve_localization(flags: &LocalizationFlags) -> Result<LocalizationConfig> {
    let preset = match flags.preset {
        Preset::Full => LocalizationConfig::default(),
        Preset::Desk => LocalizationConfig::desk(),
    };
    let mut c = read_config(preset, flags.config.as_deref(), "localization")?;
    if let Some(v) = flags.window {
        c.features.window = v;
    }
    if let Some(v) = flags.stride {
        c.features.stride = v;
    }
    if let Some(v) = flags.pca_dims {
        c.em.pca_dims = v;
    }
    if let Some(v) = flags.regularization {
        c.em.regularization = v;
    }
    if let Some(v) = flags.restarts {
        c.em.restarts = v;
    }
    if let Some(v) = flags.seed {
        c.em.seed = v;
    }
    c.validate()?;
    Ok(c)
}

/// What a run was given and what settings it used; written as
/// `config.toml` next to the outputs.
#[derive(Debug, Serialize)]
pub struct RunConfig<'a> {
    pub run: RunInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<&'a TrainingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub localization: Option<&'a LocalizationConfig>,
}

#[derive(Debug, Serialize)]
pub struct RunInfo {
    pub command: String,
    pub version: String,
    pub paths: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub providers: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub settings: BTreeMap<String, String>,
}

impl RunInfo {
    fn new(command: &str) -> Self {
        RunInfo {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            paths: BTreeMap::new(),
            providers: Vec::new(),
            settings: BTreeMap::new(),
        }
    }

    fn path(mut self, key: &str, p: &Path) -> Self {
        self.paths.insert(key.into(), p.display().to_string());
        self
    }
}

fn write_run_config(out: &Path, config: &RunConfig) -> Result<()> {
    let text = toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&out.join("config.toml"), text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::from(e).at_path(path))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::invalid("directory not found").at_path(dir))
    }
}

/// Every image of `dir`, resized to the training side.
pub fn load_corpus(dir: &Path) -> Result<Vec<GrayImage>> {
    require_dir(dir)?;
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(Error::invalid("no PNG or JPEG images").at_path(dir));
    }
    paths.iter().map(|p| GrayImage::load_training(p, TRAINING_SIDE)).collect()
}

/// `epoch,batch,loss` rows.
pub fn loss_csv(batch_loss: &[f64], batches_per_epoch: usize) -> String {
    let mut s = String::from("epoch,batch,loss\n");
    for (i, l) in batch_loss.iter().enumerate() {
        writeln!(s, "{},{},{l}", i / batches_per_epoch, i % batches_per_epoch).unwrap();
    }
    s
}

fn cmd_pretrain(a: &PretrainArgs, verbose: bool) -> Result<()> {
    let mut config = resolve_training(&a.training, false)?;
    if let Some(d) = a.depth {
        config.architecture.depth = d;
    }
    if let Some(c) = a.channels {
        config.architecture.channels = c;
    }
    config.validate()?;
    let registry = config.resolve_registry()?;
    let images = load_corpus(&a.corpus)?;
    create_dir(&a.out)?;
    let (model, report) = fingerprint::pretrain_denoiser_with(&images, &registry, &config, |e| {
        if verbose {
            eprintln!("pretrain epoch {} loss {:.4e}", e.epoch, e.mean_loss);
        }
    })?;
    let model_path = a.out.join("model.cprt");
    model.save(&model_path)?;
    write_file(
        &a.out.join("loss.csv"),
        loss_csv(&report.batch_loss, config.pretrain.batches_per_epoch).as_bytes(),
    )?;
    let run = RunInfo::new("pretrain").path("corpus", &a.corpus).path("out", &a.out);
    write_run_config(&a.out, &RunConfig { run, training: Some(&config), localization: None })?;
    println!(
        "pretrained on {} images, final epoch loss {:.4e}; wrote {}",
        images.len(),
        report.epoch_loss.last().copied().unwrap_or(f64::NAN),
        model_path.display()
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs, verbose: bool) -> Result<()> {
    let pretrained = FingerprintModel::load(&a.pretrained)?;
    let mut config = resolve_training(&a.training, true)?;
    config.architecture = pretrained.architecture();
    let registry = config.resolve_registry()?;
    let mut images = load_corpus(&a.corpus)?;
    let validation = match &a.validation {
        Some(dir) => load_corpus(dir)?,
        None => {
            if images.len() < 2 {
                return Err(Error::invalid("need two corpus images or --validation").at_path(&a.corpus));
            }
            let held = images.len().div_ceil(5);
            images.split_off(images.len() - held)
        }
    };
    create_dir(&a.out)?;
    let (model, report) =
        fingerprint::train_siamese_with(&pretrained, &images, &validation, &registry, &config, |e| {
            if verbose {
                eprintln!(
                    "siamese epoch {} loss {:.4} separation {:.4}",
                    e.epoch,
                    e.mean_loss,
                    e.separation.unwrap_or(f64::NAN)
                );
            }
        })?;
    let model_path = a.out.join("model.cprt");
    model.save(&model_path)?;
    write_file(
        &a.out.join("loss.csv"),
        loss_csv(&report.batch_loss, config.batches_per_epoch).as_bytes(),
    )?;
    let mut epochs = String::from("epoch,mean_loss,separation\n");
    for (i, l) in report.epoch_loss.iter().enumerate() {
        let sep = report.separation_trace.get(i).copied().unwrap_or(f64::NAN);
        writeln!(epochs, "{i},{l},{sep}").unwrap();
    }
    write_file(&a.out.join("epochs.csv"), epochs.as_bytes())?;
    let mut run = RunInfo::new("train")
        .path("pretrained", &a.pretrained)
        .path("corpus", &a.corpus)
        .path("out", &a.out);
    if let Some(v) = &a.validation {
        run = run.path("validation", v);
    }
    run.settings.insert("training_images".into(), images.len().to_string());
    run.settings.insert("validation_images".into(), validation.len().to_string());
    write_run_config(&a.out, &RunConfig { run, training: Some(&config), localization: None })?;
    match &report.validation {
        Some(v) => println!(
            "validation separation {:.4} (Mann-Whitney p {:.3e}); wrote {}",
            v.separation,
            v.mann_whitney_p,
            model_path.display()
        ),
        None => println!("wrote {}", model_path.display()),
    }
    Ok(())
}

/// Models and providers named by the flags, in flag order.
pub struct ProviderSet {
    models: Vec<FingerprintModel>,
    kinds: Vec<ProviderKind>,
}

impl ProviderSet {
    pub fn load(flags: &ProviderFlags) -> Result<Self> {
        let kinds = if flags.providers.is_empty() {
            vec![ProviderKind::Comprint; flags.models.len()]
        } else {
            flags.providers.clone()
        };
        if kinds.is_empty() {
            return Err(Error::invalid("give at least one --model or --provider"));
        }
        let wanted = kinds.iter().filter(|&&k| k == ProviderKind::Comprint).count();
        if wanted != flags.models.len() {
            return Err(Error::invalid(format!(
                "{wanted} comprint provider(s) but {} --model file(s)",
                flags.models.len()
            )));
        }
        let models = flags.models.iter().map(FingerprintModel::load).collect::<Result<_>>()?;
        Ok(ProviderSet { models, kinds })
    }

    pub fn providers(&self) -> Vec<Box<dyn FingerprintProvider + '_>> {
        let mut models = self.models.iter();
        self.kinds
            .iter()
            .map(|k| -> Box<dyn FingerprintProvider + '_> {
                match k {
                    ProviderKind::Comprint => Box::new(ComprintProvider {
                        model: models.next().expect("one model per comprint provider"),
                    }),
                    ProviderKind::Highpass => Box::new(HighpassProvider),
                }
            })
            .collect()
    }

    fn record(&self, run: &mut RunInfo, flags: &ProviderFlags) {
        run.providers = self.kinds.iter().map(|k| format!("{k:?}").to_lowercase()).collect();
        for (i, m) in flags.models.iter().enumerate() {
            run.paths.insert(format!("model{i}"), m.display().to_string());
        }
    }
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let config = resolve_localization(&a.localization)?;
    let set = ProviderSet::load(&a.providers)?;
    let img = GrayImage::load(&a.image)?;
    let boxed = set.providers();
    let providers: Vec<&dyn FingerprintProvider> = boxed.iter().map(|b| b.as_ref()).collect();
    let loc = localization::localize(&img, &providers, &config)?;
    create_dir(&a.out)?;
    for (i, (name, fp)) in loc.fingerprints.iter().enumerate() {
        fp.write_pfm(a.out.join(format!("fingerprint{i}_{name}.pfm")))?;
    }
    let heat = loc.heatmap.field();
    heat.write_pfm(a.out.join("heatmap.pfm"))?;
    colormap::save_rgb(&colormap::colorize(heat, 0.0, 1.0), a.out.join("heatmap.png"))?;
    colormap::save_rgb(&colormap::overlay(&img, heat, 0.0, 1.0, 0.5)?, a.out.join("overlay.png"))?;
    let score = detection_statistic(heat.samples())?;
    let summary = format!(
        "image = {:?}\nscore = {score}\nprovenance = [{}]\n",
        a.image.display().to_string(),
        loc.heatmap
            .provenance()
            .iter()
            .map(|p| format!("{p:?}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    write_file(&a.out.join("summary.toml"), summary.as_bytes())?;
    let mut run = RunInfo::new("analyze").path("image", &a.image).path("out", &a.out);
    set.record(&mut run, &a.providers);
    write_run_config(&a.out, &RunConfig { run, training: None, localization: Some(&config) })?;
    println!("detection score {score:.6} ({})", loc.heatmap.provenance().join(" + "));
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let config = resolve_localization(&a.localization)?;
    let set = ProviderSet::load(&a.providers)?;
    require_dir(&a.fake)?;
    let masks = a.masks.clone().unwrap_or_else(|| a.fake.clone());
    if let Some(r) = &a.real {
        require_dir(r)?;
    }
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let boxed = set.providers();
    let providers: Vec<&dyn FingerprintProvider> = boxed.iter().map(|b| b.as_ref()).collect();
    let report = evaluation::evaluate_dataset(&a.fake, &masks, a.real.as_deref(), &providers, &config, workers)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("report.txt"), report.to_text().as_bytes())?;
    let mut run = RunInfo::new("evaluate")
        .path("fake", &a.fake)
        .path("masks", &masks)
        .path("out", &a.out);
    if let Some(r) = &a.real {
        run = run.path("real", r);
    }
    set.record(&mut run, &a.providers);
    write_run_config(&a.out, &RunConfig { run, training: None, localization: Some(&config) })?;
    print!("{}", report.to_table());
    Ok(())
}

fn registry_for(labels: &[String], table_file: Option<&Path>) -> Result<CompressionClassRegistry> {
    let extra = table_file.map(CompressionClassRegistry::with_photoshop_file).transpose()?;
    CompressionClassRegistry::from_labels(labels, extra.as_ref())
}

fn cmd_make_fixtures(a: &FixtureArgs) -> Result<()> {
    let registry = registry_for(&a.classes, a.table_file.as_deref())?;
    let fixtures = synth::fixture_set(a.count, a.size, &registry, a.seed)?;
    let (fake, masks, real) = (a.out.join("fake"), a.out.join("masks"), a.out.join("real"));
    for d in [&fake, &masks, &real] {
        create_dir(d)?;
    }
    let mut index = String::from("name\thost\tregion\tx\ty\twidth\theight\n");
    for (i, f) in fixtures.iter().enumerate() {
        let name = format!("fixture_{i:03}");
        f.spliced.save_png(fake.join(format!("{name}.png")))?;
        f.mask.map(|v| v * 255.0).save_png(masks.join(format!("{name}_mask.png")))?;
        f.pristine.save_png(real.join(format!("{name}.png")))?;
        let r = f.region;
        writeln!(
            index,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}",
            f.host_class, f.region_class, r.x, r.y, r.width, r.height
        )
        .unwrap();
    }
    write_file(&a.out.join("fixtures.tsv"), index.as_bytes())?;
    let mut run = RunInfo::new("make-fixtures").path("out", &a.out);
    run.settings.insert("count".into(), a.count.to_string());
    run.settings.insert("size".into(), a.size.to_string());
    run.settings.insert("seed".into(), a.seed.to_string());
    run.settings.insert("classes".into(), a.classes.join(","));
    write_run_config(&a.out, &RunConfig { run, training: None, localization: None })?;
    println!("wrote {} fixtures to {}", fixtures.len(), a.out.display());
    Ok(())
}

/// Listing of every table in `bytes` with its nearest standard quality.
pub fn inspect_report(bytes: &[u8]) -> Result<String> {
    let tables = jpeg_sim::parse_dqt_detailed(bytes)?;
    let mut s = String::new();
    for t in &tables {
        let (qf, dist) = jpeg_sim::nearest_standard_qf(&t.table);
        writeln!(
            s,
            "table {} ({}-bit): nearest QF {qf}, L1 distance {dist}",
            t.slot, t.precision_bits
        )
        .unwrap();
        for row in t.table.values().chunks(8) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:>4}")).collect();
            writeln!(s, "{}", line.join("")).unwrap();
        }
    }
    if tables.is_empty() {
        s.push_str("no quantization tables\n");
    }
    Ok(s)
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let bytes = fs::read(&a.path).map_err(|e| Error::from(e).at_path(&a.path))?;
    let report = inspect_report(&bytes).map_err(|e| e.at_path(&a.path))?;
    print!("{report}");
    Ok(())
}
