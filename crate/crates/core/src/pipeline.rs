//! The two experiments end to end: a corpus in memory, template or patch
//! extraction from its splits, training, test evaluation and repeated runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evalmetrics::{
    aggregate_by_image, evaluate_predictions, EvalReport, MetricsError, PatchPrediction, RunSummary,
};
use crate::imgdata::{
    split_dataset, DataError, Dataset, DatasetManifest, GrayImage, Split, SplitRatios,
};
use crate::orbfeat::OrbConfig;
use crate::patchgen::{extract_templates, generate_patches, Patch, PatchError, PatchSpec};
use crate::synth::SynthCorpus;
use crate::tabular::{
    grid_search_orb, OrbGrid, OrbModel, OrbSearchConfig, OrbSearchOutcome, QueryImage,
    TabularError, DEFAULT_LEARNING_RATE,
};
use crate::tinycnn::{
    hyper_search, predict_many, CnnError, ConvNet, Example, NetConfig, SearchOutcome, SearchSpace,
    TrainConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Significance level of every reported margin of error.
pub const ALPHA: f64 = 0.05;

/// Images of a manifest held in memory, in entry order.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub images: Vec<GrayImage>,
}

impl From<SynthCorpus> for Corpus {
    fn from(c: SynthCorpus) -> Self {
        Self {
            manifest: c.manifest,
            images: c.images,
        }
    }
}

impl Corpus {
    pub fn load(manifest_path: &Path) -> Result<Self, PipelineError> {
        let ds = Dataset::open(manifest_path)?;
        ds.manifest.validate()?;
        let images = ds
            .manifest
            .entries
            .par_iter()
            .map(|e| ds.load(e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            manifest: ds.manifest,
            images,
        })
    }

    /// Keeps an existing split assignment, otherwise draws one.
    pub fn with_splits(mut self, ratios: SplitRatios, seed: u64) -> Result<Self, PipelineError> {
        if self.manifest.split_assignment.is_none() {
            self.manifest = split_dataset(&self.manifest, ratios, seed)?;
        }
        Ok(self)
    }

    /// Entry indices in `split`, in manifest order.
    pub fn indices(&self, split: Split) -> Result<Vec<usize>, PipelineError> {
        if self.manifest.split_assignment.is_none() {
            return Err(PipelineError::Config(
                "corpus has no split assignment".into(),
            ));
        }
        Ok(self
            .manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| self.manifest.split_of(&e.image_id) == Some(split))
            .map(|(i, _)| i)
            .collect())
    }

    pub fn image_truth(&self, split: Split) -> Result<BTreeMap<String, bool>, PipelineError> {
        Ok(self
            .indices(split)?
            .into_iter()
            .map(|i| {
                let e = &self.manifest.entries[i];
                (e.image_id.clone(), e.label)
            })
            .collect())
    }

    pub fn queries(&self, split: Split) -> Result<Vec<QueryImage<'_>>, PipelineError> {
        Ok(self
            .indices(split)?
            .into_iter()
            .map(|i| QueryImage {
                id: &self.manifest.entries[i].image_id,
                image: &self.images[i],
                label: self.manifest.entries[i].label,
            })
            .collect())
    }

    pub fn patches(&self, split: Split, spec: &PatchSpec) -> Result<Vec<Patch>, PipelineError> {
        spec.validate()?;
        let per_image: Vec<Vec<Patch>> = self
            .indices(split)?
            .into_par_iter()
            .map(|i| generate_patches(&self.manifest.entries[i], &self.images[i], spec))
            .collect();
        Ok(per_image.into_iter().flatten().collect())
    }

    /// One template per annotation of every image in `split`.
    pub fn templates(&self, split: Split, size: u32) -> Result<Vec<GrayImage>, PipelineError> {
        let mut out = Vec::new();
        for i in self.indices(split)? {
            out.extend(extract_templates(
                &self.manifest.entries[i],
                &self.images[i],
                size,
            )?);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Orb,
    Cnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    FcOnly,
    FullModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Patch,
    Image,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbExperimentConfig {
    /// Side of the white canvas each annotation is centered on.
    pub template_size: u32,
    pub grid: OrbGrid,
    pub orb: OrbConfig,
    pub learning_rate: f64,
}

impl Default for OrbExperimentConfig {
    fn default() -> Self {
        Self {
            template_size: 224,
            grid: OrbGrid::default(),
            orb: OrbConfig::default(),
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnExperimentConfig {
    pub mode: TrainMode,
    pub net: NetConfig,
    pub trials: usize,
    /// Base settings for every trial; the search overwrites the sampled
    /// fields and the seed.
    pub train: TrainConfig,
    pub space: SearchSpace,
}

impl Default for CnnExperimentConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::FullModel,
            net: NetConfig::default(),
            trials: 25,
            train: TrainConfig::default(),
            space: SearchSpace::default(),
        }
    }
}

fn default_patch() -> PatchSpec {
    PatchSpec::with_size(224).expect("valid default")
}

/// One experiment. Seeds inside the method blocks are ignored; every random
/// stream derives from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Manifest path; relative paths resolve against the working directory.
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    /// Used only when the manifest carries no split assignment.
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default = "default_patch")]
    pub patch: PatchSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orb: Option<OrbExperimentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cnn: Option<CnnExperimentConfig>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.patch.validate()?;
        match (self.method, &self.orb, &self.cnn) {
            (Method::Orb, Some(o), None) => {
                o.grid.validate()?;
                o.orb.validate().map_err(TabularError::from)?;
                if o.template_size == 0 {
                    return Err(PipelineError::Config(
                        "template_size must be positive".into(),
                    ));
                }
            }
            (Method::Cnn, None, Some(c)) => {
                c.net.validate()?;
                c.train.validate()?;
                c.space.validate()?;
                if c.trials == 0 {
                    return Err(PipelineError::Config("trials must be at least 1".into()));
                }
                if c.net.input_size != self.patch.patch_size as usize {
                    return Err(PipelineError::Config(format!(
                        "net input_size {} differs from patch_size {}",
                        c.net.input_size, self.patch.patch_size
                    )));
                }
            }
            (m, _, _) => {
                return Err(PipelineError::Config(format!(
                    "method {m:?} needs exactly its own config block"
                )))
            }
        }
        Ok(())
    }

    pub fn orb_block(&self) -> Result<&OrbExperimentConfig, PipelineError> {
        self.orb
            .as_ref()
            .ok_or_else(|| PipelineError::Config("no orb block".into()))
    }

    pub fn cnn_block(&self) -> Result<&CnnExperimentConfig, PipelineError> {
        self.cnn
            .as_ref()
            .ok_or_else(|| PipelineError::Config("no cnn block".into()))
    }
}

/// Independent sub-seed for stream `k` of `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SPLIT: u64 = 0;
const STREAM_TRAIN: u64 = 1;

/// Corpus with splits drawn from the experiment seed when the manifest has
/// none.
pub fn prepare_corpus(corpus: Corpus, cfg: &PipelineConfig) -> Result<Corpus, PipelineError> {
    corpus.with_splits(cfg.split, derive_seed(cfg.seed, STREAM_SPLIT))
}

/// Grid search with templates from the train split only.
pub fn train_orb(
    corpus: &Corpus,
    exp: &OrbExperimentConfig,
    seed: u64,
) -> Result<OrbSearchOutcome, PipelineError> {
    let pool = corpus.templates(Split::Train, exp.template_size)?;
    log::info!("orb: {} templates from the train split", pool.len());
    let search = OrbSearchConfig {
        grid: exp.grid.clone(),
        orb: exp.orb.clone(),
        learning_rate: exp.learning_rate,
        seed: derive_seed(seed, STREAM_TRAIN),
    };
    Ok(grid_search_orb(
        &corpus.queries(Split::Train)?,
        &corpus.queries(Split::Validation)?,
        &pool,
        &search,
    )?)
}

/// Whole-image verdicts of an ORB model on one split.
pub fn predict_orb(
    model: &OrbModel,
    corpus: &Corpus,
    split: Split,
) -> Result<Vec<PatchPrediction>, PipelineError> {
    let queries = corpus.queries(split)?;
    let images: Vec<&GrayImage> = queries.iter().map(|q| q.image).collect();
    let probs = model.predict_many(&images)?;
    Ok(queries
        .iter()
        .zip(probs)
        .map(|(q, p)| PatchPrediction {
            image_id: q.id.to_string(),
            truth: q.label,
            predicted: p > 0.5,
            score: p,
        })
        .collect())
}

fn examples(patches: &[Patch]) -> Vec<Example<'_>> {
    patches.iter().map(Example::from).collect()
}

/// Random search over patch classifiers, refit on train ∪ validation.
pub fn train_cnn(
    corpus: &Corpus,
    patch: &PatchSpec,
    exp: &CnnExperimentConfig,
    seed: u64,
) -> Result<SearchOutcome, PipelineError> {
    let train = corpus.patches(Split::Train, patch)?;
    let val = corpus.patches(Split::Validation, patch)?;
    log::info!(
        "cnn: {} train / {} validation patches",
        train.len(),
        val.len()
    );
    let frozen = exp.mode == TrainMode::FcOnly;
    let net = exp.net.clone();
    let factory = move |s: u64| -> Result<ConvNet<f32>, CnnError> {
        let mut m = ConvNet::new(net.clone(), s)?;
        m.frozen_feature_layers = frozen;
        Ok(m)
    };
    let base = TrainConfig {
        seed: derive_seed(seed, STREAM_TRAIN),
        ..exp.train.clone()
    };
    let out = hyper_search(
        &factory,
        &examples(&train),
        &examples(&val),
        exp.trials,
        &base,
        &exp.space,
    )?;
    if frozen {
        let fresh = factory(out.best_config.seed)?;
        assert_eq!(
            out.model.feature_params(),
            fresh.feature_params(),
            "frozen feature layers changed during training"
        );
        log::info!("fc_only: feature layers verified unchanged");
    }
    Ok(out)
}

/// Patch-level verdicts of a CNN on one split, in patch order.
pub fn predict_cnn(
    model: &ConvNet<f32>,
    corpus: &Corpus,
    split: Split,
    patch: &PatchSpec,
) -> Result<Vec<PatchPrediction>, PipelineError> {
    let patches = corpus.patches(split, patch)?;
    let pixels: Vec<&GrayImage> = patches.iter().map(|p| &p.pixels).collect();
    let probs = predict_many(model, &pixels)?;
    Ok(patches
        .iter()
        .zip(probs)
        .map(|(p, s)| PatchPrediction {
            image_id: p.source_image_id.clone(),
            truth: p.label,
            predicted: s > 0.5,
            score: s,
        })
        .collect())
}

/// Report at the requested level; patch predictions are OR-aggregated per
/// image for [`Level::Image`].
pub fn evaluate(
    preds: &[PatchPrediction],
    level: Level,
    image_truth: &BTreeMap<String, bool>,
) -> Result<EvalReport, PipelineError> {
    Ok(match level {
        Level::Patch => evaluate_predictions(preds)?,
        Level::Image => evaluate_predictions(&aggregate_by_image(preds, image_truth)?)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub validation_macro_f1: f64,
    /// Absent for ORB, whose queries are whole images.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub patch: Option<EvalReport>,
    pub image: EvalReport,
}

/// Train on train/validation and score the test split.
pub fn run_once(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<RunResult, PipelineError> {
    let truth = corpus.image_truth(Split::Test)?;
    match cfg.method {
        Method::Orb => {
            let out = train_orb(corpus, cfg.orb_block()?, seed)?;
            let preds = predict_orb(&out.model, corpus, Split::Test)?;
            Ok(RunResult {
                seed,
                validation_macro_f1: out.best_val_macro_f1,
                patch: None,
                image: evaluate_predictions(&preds)?,
            })
        }
        Method::Cnn => {
            let out = train_cnn(corpus, &cfg.patch, cfg.cnn_block()?, seed)?;
            let preds = predict_cnn(&out.model, corpus, Split::Test, &cfg.patch)?;
            Ok(RunResult {
                seed,
                validation_macro_f1: out.trials[out.best_trial].best_val_macro_f1,
                patch: Some(evaluate(&preds, Level::Patch, &truth)?),
                image: evaluate(&preds, Level::Image, &truth)?,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub method: Method,
    pub runs: Vec<RunResult>,
    pub image_summary: RunSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub patch_summary: Option<RunSummary>,
}

/// `n_runs` independent trainings on the same corpus and split, seeded
/// `derive_seed(cfg.seed, 100 + r)`, summarized as mean ± margin of error.
pub fn repeat(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    n_runs: usize,
) -> Result<RepeatReport, PipelineError> {
    if n_runs < 2 {
        return Err(PipelineError::Metrics(MetricsError::TooFewScores(n_runs)));
    }
    let mut runs = Vec::with_capacity(n_runs);
    for r in 0..n_runs {
        let seed = derive_seed(cfg.seed, 100 + r as u64);
        let res = run_once(corpus, cfg, seed)?;
        log::info!("run {r}: image macro F1 {:.4}", res.image.macro_f1);
        runs.push(res);
    }
    let image_summary =
        RunSummary::from_scores(runs.iter().map(|r| r.image.macro_f1).collect(), ALPHA)?;
    let patch_summary = match cfg.method {
        Method::Cnn => Some(RunSummary::from_scores(
            runs.iter()
                .map(|r| r.patch.as_ref().map_or(0.0, |p| p.macro_f1))
                .collect(),
            ALPHA,
        )?),
        Method::Orb => None,
    };
    Ok(RepeatReport {
        method: cfg.method,
        runs,
        image_summary,
        patch_summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgdata::{AnnotatedImage, AnnotationBox};

    fn tiny_corpus() -> Corpus {
        let mut entries = Vec::new();
        let mut images = Vec::new();
        for i in 0..9 {
            let label = i % 3 != 0;
            let mut img = GrayImage::white(64, 48);
            let annotations = if label {
                for y in 10..20 {
                    for x in 10..20 {
                        img.set(x, y, 0);
                    }
                }
                vec![AnnotationBox::new(10, 10, 10, 10)]
            } else {
                vec![]
            };
            entries.push(AnnotatedImage {
                image_id: format!("im{i}"),
                path: format!("im{i}.pgm"),
                label,
                annotations,
            });
            images.push(img);
        }
        Corpus {
            manifest: DatasetManifest::new(entries),
            images,
        }
        .with_splits(SplitRatios::default(), 3)
        .unwrap()
    }

    #[test]
    fn derived_seeds_differ_and_repeat() {
        assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
    }

    #[test]
    fn splits_partition_the_corpus() {
        let c = tiny_corpus();
        let mut all: Vec<usize> = Split::ALL
            .iter()
            .flat_map(|&s| c.indices(s).unwrap())
            .collect();
        all.sort();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
        let t = c.templates(Split::Train, 32).unwrap();
        let n_pos = c
            .indices(Split::Train)
            .unwrap()
            .iter()
            .filter(|&&i| c.manifest.entries[i].label)
            .count();
        assert_eq!(t.len(), n_pos);
    }

    #[test]
    fn config_blocks_must_match_method() {
        let text =
            r#"{"dataset": "d/manifest.json", "output_dir": "out", "method": "orb", "cnn": {}}"#;
        assert!(matches!(
            PipelineConfig::from_json(text),
            Err(PipelineError::Config(_))
        ));
        let text =
            r#"{"dataset": "d/manifest.json", "output_dir": "out", "method": "orb", "orb": {}}"#;
        let cfg = PipelineConfig::from_json(text).unwrap();
        assert_eq!(cfg.patch.patch_size, 224);
        assert_eq!(cfg.orb_block().unwrap().grid.cells().len(), 24);
        let text = r#"{"dataset": "d", "output_dir": "o", "method": "cnn", "cnn": {"net": {"input_size": 64, "in_channels": 3, "channels": [4]}}}"#;
        assert!(PipelineConfig::from_json(text).is_err());
        let text = r#"{"dataset": "d", "output_dir": "o", "method": "orb", "orb": {}, "bogus": 1}"#;
        assert!(PipelineConfig::from_json(text).is_err());
    }

    #[test]
    fn image_level_applies_or() {
        let p = |id: &str, truth, predicted, score| PatchPrediction {
            image_id: id.into(),
            truth,
            predicted,
            score,
        };
        let preds = [
            p("a", false, false, 0.1),
            p("a", true, true, 0.9),
            p("b", false, false, 0.2),
            p("b", false, false, 0.3),
        ];
        let truth: BTreeMap<String, bool> = [("a".into(), true), ("b".into(), false)].into();
        let r = evaluate(&preds, Level::Image, &truth).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!((r.cm.tp, r.cm.tn), (1, 1));
        let r = evaluate(&preds, Level::Patch, &truth).unwrap();
        assert_eq!(r.cm.total(), 4);
    }

    #[test]
    fn repeat_needs_two_runs() {
        let c = tiny_corpus();
        let cfg = PipelineConfig::from_json(
            r#"{"dataset": "d", "output_dir": "o", "method": "orb", "orb": {}}"#,
        )
        .unwrap();
        assert!(matches!(
            repeat(&c, &cfg, 1),
            Err(PipelineError::Metrics(MetricsError::TooFewScores(1)))
        ));
    }
}
