use std::path::Path;

use conngan::connmat::{load_dataset, ClassLabel, LabeledDataset};
use conngan::distdist::{similarity_report, SimilarityReport};
use conngan::gan::{
    sample_like, train, TrainedGan, CLASSIFIER_FILE, CRITIC_FILE, GENERATOR_FILE,
};
use conngan::gnneval::{cross_validate_with, fold_fakes, Augmenter, CvReport, Method, Mode};
use conngan::oversample::{adasyn, smote_class, OversampleConfig};
use conngan::synthcorpus::generate_corpus;
use log::info;

use crate::config::{streams, ExperimentConfig};
use crate::error::{AtStage, CliError, Stage};
use crate::report::{OutputDir, Stamp};

pub const SIMILARITY_FILE: &str = "similarity.csv";
pub const CV_FILE: &str = "cv.csv";
pub const CV_FOLDS_FILE: &str = "cv_folds.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Real data named by the config: the manifest in `input`, or the synthetic corpus.
pub fn ingest(cfg: &ExperimentConfig) -> Result<LabeledDataset, CliError> {
    match (&cfg.input, &cfg.corpus) {
        (Some(path), _) => {
            let d = load_dataset(path).at(Stage::Ingest)?;
            d.require_both_classes().at(Stage::Ingest)?;
            Ok(d)
        }
        (None, Some(c)) => generate_corpus(c).at(Stage::Corpus),
        (None, None) => Err(CliError::config("no data source; resolve the config first")),
    }
}

/// Per-class oversampling; `counts` is indexed by class.
pub fn oversample_counts(
    real: &LabeledDataset,
    cfg: &OversampleConfig,
    method: Method,
    counts: [usize; 2],
) -> conngan::Result<LabeledDataset> {
    let mut out = LabeledDataset::new(real.n());
    for c in ClassLabel::ALL {
        let count = counts[c.index()];
        let part = match method {
            Method::Smote => smote_class(real, cfg, c, count)?,
            Method::Adasyn => adasyn(real, cfg, c, count)?,
            Method::Gan => unreachable!("GAN samples come from a generator"),
        };
        out.extend(&part)?;
    }
    Ok(out)
}

pub fn class_counts(d: &LabeledDataset) -> [usize; 2] {
    ClassLabel::ALL.map(|c| d.count(c))
}

pub fn stream_seeds(cfg: &ExperimentConfig) -> Vec<(String, u64)> {
    let mut v = Vec::new();
    if let Some(c) = &cfg.corpus {
        v.push(("corpus".to_string(), c.seed));
    }
    v.push(("gan".to_string(), cfg.gan.seed));
    v.push(("oversample".to_string(), cfg.oversample.seed));
    v.push(("cv".to_string(), cfg.stream_seed(streams::CV)));
    v.push(("sampling".to_string(), cfg.stream_seed(streams::SAMPLING)));
    v
}

/// Everything the full experiment produces.
pub struct RunOutputs {
    pub real: LabeledDataset,
    pub gan: TrainedGan,
    pub similarity: Vec<(Method, SimilarityReport)>,
    pub cv: Vec<CvReport>,
}

/// Ingest, train the GAN, synthesize with every method, compare
/// topologies, cross-validate, and write the reports into `out`. Files from
/// completed stages stay on disk if a later stage fails; the provenance
/// file then records the failing stage.
pub fn run_full_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutputs, CliError> {
    let stamp = Stamp {
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    let mut dir = OutputDir::create(out, stamp)?;
    let seeds = stream_seeds(cfg);
    let result = run_stages(cfg, &mut dir);
    let status = match &result {
        Ok(_) => "complete".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    dir.finish("run", &status, &seeds, &cfg.without_out())?;
    result
}

fn run_stages(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<RunOutputs, CliError> {
    info!("ingest");
    let real = ingest(cfg)?;
    info!("{} real samples, n = {}", real.len(), real.n());

    let gan_cfg = conngan::gan::GanConfig {
        n: real.n(),
        ..cfg.gan.clone()
    };
    info!("training GAN for {} steps", gan_cfg.steps);
    let gan = train(&real, &gan_cfg).at(Stage::TrainGan)?;
    dir.write_csv(HISTORY_FILE, &gan.history.to_csv())?;
    for (file, params) in [
        (GENERATOR_FILE, &gan.generator),
        (CRITIC_FILE, &gan.critic),
        (CLASSIFIER_FILE, &gan.classifier),
    ] {
        dir.write_checkpoint(&format!("{CHECKPOINT_DIR}/{file}"), params)?;
    }

    info!("similarity");
    let mut similarity = Vec::new();
    let mut csv = format!("{}\n", SimilarityReport::CSV_HEADER);
    for &method in &cfg.cv.methods {
        let fake = match method {
            Method::Gan => sample_like(&gan.generator, &real, cfg.stream_seed(streams::SAMPLING))
                .at(Stage::Sample)?,
            m => oversample_counts(&real, &cfg.oversample, m, class_counts(&real))
                .at(Stage::Augment)?,
        };
        let r = similarity_report(&real, &fake, cfg.bins).at(Stage::Similarity)?;
        csv.push_str(&r.csv_rows(method.as_str()));
        similarity.push((method, r));
    }
    dir.write_csv(SIMILARITY_FILE, &csv)?;

    let cv_seed = cfg.stream_seed(streams::CV);
    let mut reports = Vec::new();
    if cfg.cv.modes.contains(&Mode::Baseline) {
        info!("cross-validation: baseline");
        reports.push(
            cross_validate_with(&real, None, None, Mode::Baseline, cfg.cv.repeats, cv_seed)
                .at(Stage::Evaluate)?,
        );
    }
    let synthetic_modes: Vec<Mode> = cfg
        .cv
        .modes
        .iter()
        .copied()
        .filter(|&m| m != Mode::Baseline)
        .collect();
    if !synthetic_modes.is_empty() {
        for &method in &cfg.cv.methods {
            let augmenter = match method {
                Method::Smote => Augmenter::Smote(cfg.oversample.clone()),
                Method::Adasyn => Augmenter::Adasyn(cfg.oversample.clone()),
                Method::Gan => Augmenter::Gan(conngan::gan::GanConfig {
                    n: real.n(),
                    ..cfg.cv_gan()
                }),
            };
            info!("cross-validation: synthesizing per-fold {method} data");
            let fakes = fold_fakes(&real, &augmenter, cv_seed).at(Stage::Evaluate)?;
            for &mode in &synthetic_modes {
                info!("cross-validation: {mode} / {method}");
                reports.push(
                    cross_validate_with(
                        &real,
                        Some(&fakes),
                        Some(method),
                        mode,
                        cfg.cv.repeats,
                        cv_seed,
                    )
                    .at(Stage::Evaluate)?,
                );
            }
        }
    }
    let mut summary = format!("{}\n", CvReport::CSV_HEADER);
    let mut folds = format!("{}\n", CvReport::FOLDS_CSV_HEADER);
    for r in &reports {
        summary.push_str(&r.csv_row());
        summary.push('\n');
        folds.push_str(&r.folds_csv_rows());
    }
    dir.write_csv(CV_FILE, &summary)?;
    dir.write_csv(CV_FOLDS_FILE, &folds)?;

    Ok(RunOutputs {
        real,
        gan,
        similarity,
        cv: reports,
    })
}
