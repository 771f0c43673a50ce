use std::path::{Path, PathBuf};

use conngan::connmat::{load_dataset, save_dataset, ClassLabel, LabeledDataset, MANIFEST_FILE};
use conngan::distdist::{similarity_report, SimilarityReport};
use conngan::gan::{sample_checkpoint, train, CLASSIFIER_FILE, CRITIC_FILE, GENERATOR_FILE};
use conngan::gnneval::{cross_validate, Augmenter, CvReport, Method, Mode};
use conngan::graphmetrics::metrics_csv;
use conngan::synthcorpus::generate_corpus;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{streams, ExperimentConfig};
use crate::error::{AtStage, CliError, Stage};
use crate::pipeline::{oversample_counts, run_full_experiment, stream_seeds, HISTORY_FILE};
use crate::report::{OutputDir, Stamp};

#[derive(Debug, Parser)]
#[command(
    name = "conngan",
    version,
    about = "Synthesize and evaluate brain connectivity matrices"
)]
pub struct Cli {
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (or CSV file for `metrics`, `similarity`, `evaluate`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Generate the synthetic two-class corpus.
    GenCorpus(GenCorpusArgs),
    /// Oversample a dataset with SMOTE or ADASYN.
    Augment(AugmentArgs),
    /// Train the conditional WGAN-GP.
    TrainGan(TrainGanArgs),
    /// Draw matrices from a generator checkpoint.
    Sample(SampleArgs),
    /// Per-sample topology metrics.
    Metrics(MetricsArgs),
    /// KL and MMD between real and synthetic topology features.
    Similarity(SimilarityArgs),
    /// Cross-validated GraphConv classification.
    Evaluate(EvaluateArgs),
    /// Full pipeline: data, GAN, all augmenters, similarity, cross-validation.
    Run(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenCorpus(_) => "gen-corpus",
            Command::Augment(_) => "augment",
            Command::TrainGan(_) => "train-gan",
            Command::Sample(_) => "sample",
            Command::Metrics(_) => "metrics",
            Command::Similarity(_) => "similarity",
            Command::Evaluate(_) => "evaluate",
            Command::Run(_) => "run",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenCorpusArgs {
    /// Nodes per matrix.
    #[arg(long)]
    pub n: Option<usize>,
    /// Subjects per class.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Number of communities.
    #[arg(long)]
    pub modules: Option<usize>,
    /// Inter-module weight factor for class 1.
    #[arg(long)]
    pub attenuation: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    /// Oversampler.
    #[arg(long, value_parser = ["smote", "adasyn"])]
    pub method: String,
    /// Manifest of the real dataset.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Synthetic samples per class.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Nearest neighbours.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainGanArgs {
    /// Manifest of the real dataset.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Generator iterations.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Gradient-penalty weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Critic updates per generator update.
    #[arg(long)]
    pub ncritic: Option<usize>,
    /// Latent dimension.
    #[arg(long)]
    pub zdim: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Batch size.
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// Generator checkpoint (.bngc).
    #[arg(long)]
    pub ckpt: PathBuf,
    /// 0 (CN) or 1 (AD).
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub label: u8,
    /// Number of matrices to draw.
    #[arg(long)]
    pub count: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    /// Manifest of the dataset.
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimilarityArgs {
    /// Manifest of the real dataset.
    #[arg(long)]
    pub real: PathBuf,
    /// Manifest of the synthetic dataset.
    #[arg(long)]
    pub fake: PathBuf,
    /// Histogram bins for KL.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Method tag written into the CSV.
    #[arg(long, default_value = "fake")]
    pub tag: String,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Manifest of the real dataset.
    #[arg(long)]
    pub real: PathBuf,
    /// Synthetic-data source; ignored for the baseline mode.
    #[arg(long, value_parser = ["smote", "adasyn", "gan"])]
    pub method: String,
    /// Training set: real only, synthetic only, or both.
    #[arg(long, value_parser = ["baseline", "fake-only", "combined"])]
    pub mode: String,
    /// Classifier reinitializations per fold.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Generator iterations for the per-fold GANs.
    #[arg(long)]
    pub gan_steps: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    /// Manifest of real data instead of the synthetic corpus.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Generator iterations of the main GAN.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Classifier reinitializations per fold.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Generator iterations for the per-fold GANs.
    #[arg(long)]
    pub gan_steps: Option<usize>,
    /// Synthetic corpus subjects per class.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Synthetic corpus nodes per matrix.
    #[arg(long)]
    pub n: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Loads the config, applies the command-line overrides and resolves seeds.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load_or_default(cli.config.as_deref())?;
    set(&mut cfg.seed, cli.seed);
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    match &cli.command {
        Command::GenCorpus(a) => {
            cfg.input = None;
            let c = cfg.corpus.get_or_insert_with(Default::default);
            set(&mut c.n, a.n);
            set(&mut c.per_class, a.per_class);
            set(&mut c.modules, a.modules);
            set(&mut c.attenuation, a.attenuation);
        }
        Command::Augment(a) => {
            set(&mut cfg.oversample.per_class_target, a.per_class);
            set(&mut cfg.oversample.k, a.k);
        }
        Command::TrainGan(a) => {
            set(&mut cfg.gan.steps, a.steps);
            set(&mut cfg.gan.lambda_gp, a.lambda);
            set(&mut cfg.gan.n_critic, a.ncritic);
            set(&mut cfg.gan.z_dim, a.zdim);
            set(&mut cfg.gan.lr, a.lr);
            set(&mut cfg.gan.batch, a.batch);
        }
        Command::Similarity(a) => set(&mut cfg.bins, a.bins),
        Command::Evaluate(a) => {
            set(&mut cfg.cv.repeats, a.repeats);
            if a.gan_steps.is_some() {
                cfg.cv.gan_steps = a.gan_steps;
            }
        }
        Command::Run(a) => {
            if let Some(p) = &a.input {
                cfg.input = Some(p.clone());
                cfg.corpus = None;
            }
            if a.per_class.is_some() || a.n.is_some() {
                let c = cfg.corpus.get_or_insert_with(Default::default);
                set(&mut c.per_class, a.per_class);
                set(&mut c.n, a.n);
            }
            set(&mut cfg.gan.steps, a.steps);
            set(&mut cfg.cv.repeats, a.repeats);
            if a.gan_steps.is_some() {
                cfg.cv.gan_steps = a.gan_steps;
            }
        }
        Command::Sample(_) | Command::Metrics(_) => {}
    }
    cfg.resolve()
}

/// Hash of the effective configuration together with the command and its
/// arguments, so outputs of different commands never share a hash.
pub fn invocation_hash(cfg: &ExperimentConfig, command: &Command) -> String {
    if let Command::Run(_) = command {
        return cfg.hash();
    }
    let json = serde_json::to_string(
        &serde_json::json!({ "config": cfg.without_out(), "command": command }),
    )
    .expect("invocation serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn out_path(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    cfg.out
        .clone()
        .ok_or_else(|| CliError::config("--out is required"))
}

/// Output directory for a single-file report: the file's parent, with the
/// provenance written next to it as `<file>.provenance.json`.
fn file_output(path: &Path, stamp: Stamp) -> Result<(OutputDir, String), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::config(format!("{} is not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let dir =
        OutputDir::create(parent, stamp)?.with_provenance_name(format!("{name}.provenance.json"));
    Ok((dir, name))
}

fn save_into(dir: &mut OutputDir, d: &LabeledDataset) -> Result<(), CliError> {
    save_dataset(d, dir.root()).at(Stage::Output)?;
    dir.register(MANIFEST_FILE)
}

fn load(path: &Path) -> Result<LabeledDataset, CliError> {
    load_dataset(path).at(Stage::Ingest)
}

/// Runs one parsed command line.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    let stamp = Stamp {
        seed: cfg.seed,
        config_hash: invocation_hash(&cfg, &cli.command),
    };
    let out = out_path(&cfg)?;
    let name = cli.command.name();
    let seeds = stream_seeds(&cfg);
    let record = serde_json::json!({ "config": cfg.without_out(), "command": cli.command });
    match &cli.command {
        Command::Run(_) => {
            run_full_experiment(&cfg, &out)?;
            return Ok(());
        }
        Command::Metrics(a) => {
            let d = load(&a.input)?;
            let csv = metrics_csv(&d).at(Stage::Metrics)?;
            let (mut dir, file) = file_output(&out, stamp)?;
            dir.write_csv(&file, &csv)?;
            dir.finish(name, "complete", &seeds, &record)?;
        }
        Command::Similarity(a) => {
            let real = load(&a.real)?;
            let fake = load(&a.fake)?;
            let r = similarity_report(&real, &fake, cfg.bins).at(Stage::Similarity)?;
            let (mut dir, file) = file_output(&out, stamp)?;
            dir.write_csv(
                &file,
                &format!("{}\n{}", SimilarityReport::CSV_HEADER, r.csv_rows(&a.tag)),
            )?;
            dir.finish(name, "complete", &seeds, &record)?;
        }
        Command::Evaluate(a) => {
            let real = load(&a.real)?;
            let method: Method = a.method.parse().at(Stage::Config)?;
            let mode: Mode = a.mode.parse().at(Stage::Config)?;
            let augmenter = match method {
                Method::Smote => Augmenter::Smote(cfg.oversample.clone()),
                Method::Adasyn => Augmenter::Adasyn(cfg.oversample.clone()),
                Method::Gan => Augmenter::Gan(cfg.cv_gan()),
            };
            let r = cross_validate(
                &real,
                &augmenter,
                mode,
                cfg.cv.repeats,
                cfg.stream_seed(streams::CV),
            )
            .at(Stage::Evaluate)?;
            let (mut dir, file) = file_output(&out, stamp)?;
            dir.write_csv(
                &file,
                &format!("{}\n{}\n", CvReport::CSV_HEADER, r.csv_row()),
            )?;
            let folds_name = format!("{}.folds.csv", file.trim_end_matches(".csv"));
            dir.write_csv(
                &folds_name,
                &format!("{}\n{}", CvReport::FOLDS_CSV_HEADER, r.folds_csv_rows()),
            )?;
            dir.finish(name, "complete", &seeds, &record)?;
        }
        Command::GenCorpus(_) => {
            let corpus = cfg.corpus.as_ref().expect("resolved config has a corpus");
            let d = generate_corpus(corpus).at(Stage::Corpus)?;
            let mut dir = OutputDir::create(&out, stamp)?;
            save_into(&mut dir, &d)?;
            dir.finish(name, "complete", &seeds, &record)?;
        }
        Command::Augment(a) => {
            let real = load(&a.input)?;
            let method: Method = a.method.parse().at(Stage::Config)?;
            let target = cfg.oversample.per_class_target;
            let fake = oversample_counts(&real, &cfg.oversample, method, [target; 2])
                .at(Stage::Augment)?;
            let mut dir = OutputDir::create(&out, stamp)?;
            save_into(&mut dir, &fake)?;
            dir.finish(name, "complete", &seeds, &record)?;
        }
        Command::TrainGan(a) => {
            let real = load(&a.input)?;
            let gan_cfg = conngan::gan::GanConfig {
                n: real.n(),
                ..cfg.gan.clone()
            };
            let mut dir = OutputDir::create(&out, stamp)?;
            let result = train(&real, &gan_cfg).at(Stage::TrainGan);
            let trained = match result {
                Ok(t) => t,
                Err(e) => {
                    dir.finish(name, &format!("failed: {e}"), &seeds, &record)?;
                    return Err(e);
                }
            };
            for (file, params) in [
                (GENERATOR_FILE, &trained.generator),
                (CRITIC_FILE, &trained.critic),
                (CLASSIFIER_FILE, &trained.classifier),
            ] {
                dir.write_checkpoint(file, params)?;
            }
            dir.write_csv(HISTORY_FILE, &trained.history.to_csv())?;
            dir.finish(name, "complete", &seeds, &record)?;
        }
        Command::Sample(a) => {
            let label = ClassLabel::try_from(a.label).map_err(CliError::config)?;
            let d = sample_checkpoint(&a.ckpt, label, a.count, cfg.stream_seed(streams::SAMPLING))
                .at(Stage::Sample)?;
            let mut dir = OutputDir::create(&out, stamp)?;
            save_into(&mut dir, &d)?;
            dir.finish(name, "complete", &seeds, &record)?;
        }
    }
    Ok(())
}
