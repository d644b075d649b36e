use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbdt::{fit_gbdt, GbdtParams, TreeEnsemble, DEFAULT_LEARNING_RATE};
use super::{describe_all, feature_row, table_from_descriptors, TabularError};
use crate::evalmetrics::{macro_f1, ConfusionMatrix};
use crate::imgdata::GrayImage;
use crate::orbfeat::{detect_and_describe, Descriptor, OrbConfig};

/// A whole image used as a matching query.
#[derive(Clone, Copy, Debug)]
pub struct QueryImage<'a> {
    pub id: &'a str,
    pub image: &'a GrayImage,
    pub label: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbGrid {
    pub orb_features: Vec<usize>,
    pub n_templates: Vec<usize>,
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<usize>,
}

impl Default for OrbGrid {
    fn default() -> Self {
        Self {
            orb_features: vec![500, 2000],
            n_templates: vec![50, 100, 250],
            n_estimators: vec![500, 1500],
            max_depth: vec![6, 15],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbGridCell {
    pub orb_features: usize,
    pub n_templates: usize,
    pub n_estimators: usize,
    pub max_depth: usize,
}

impl OrbGrid {
    pub fn single(cell: OrbGridCell) -> Self {
        Self {
            orb_features: vec![cell.orb_features],
            n_templates: vec![cell.n_templates],
            n_estimators: vec![cell.n_estimators],
            max_depth: vec![cell.max_depth],
        }
    }

    pub fn validate(&self) -> Result<(), TabularError> {
        let lists = [
            ("orb_features", &self.orb_features),
            ("n_templates", &self.n_templates),
            ("n_estimators", &self.n_estimators),
            ("max_depth", &self.max_depth),
        ];
        for (name, l) in lists {
            if l.is_empty() {
                return Err(TabularError::Config(format!("grid axis {name} is empty")));
            }
        }
        if self.orb_features.contains(&0) || self.n_templates.contains(&0) {
            return Err(TabularError::Config(
                "orb_features and n_templates must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Cartesian product, last axis fastest.
    pub fn cells(&self) -> Vec<OrbGridCell> {
        let mut out = Vec::new();
        for &orb_features in &self.orb_features {
            for &n_templates in &self.n_templates {
                for &n_estimators in &self.n_estimators {
                    for &max_depth in &self.max_depth {
                        out.push(OrbGridCell {
                            orb_features,
                            n_templates,
                            n_estimators,
                            max_depth,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbSearchConfig {
    pub grid: OrbGrid,
    /// Detector settings; `max_features` is overridden by the grid.
    pub orb: OrbConfig,
    pub learning_rate: f64,
    /// Seeds the template draw.
    pub seed: u64,
}

impl Default for OrbSearchConfig {
    fn default() -> Self {
        Self {
            grid: OrbGrid::default(),
            orb: OrbConfig::default(),
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbTrial {
    pub cell: OrbGridCell,
    pub templates_used: usize,
    pub val_macro_f1: f64,
}

pub const ORB_MODEL_FORMAT: &str = "orb-gbdt-v1";

/// Template descriptors plus the boosted classifier over their table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbModel {
    pub format: String,
    pub orb: OrbConfig,
    pub templates: Vec<Vec<Descriptor>>,
    pub gbdt: TreeEnsemble,
}

impl OrbModel {
    pub fn predict_proba(&self, img: &GrayImage) -> Result<f64, TabularError> {
        let (_, q) = detect_and_describe(img, &self.orb);
        self.gbdt
            .predict_proba(&feature_row(&q, &self.templates, self.orb.ratio))
    }

    pub fn predict_many(&self, images: &[&GrayImage]) -> Result<Vec<f64>, TabularError> {
        images
            .par_iter()
            .map(|img| self.predict_proba(img))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TabularError> {
        let m: Self = serde_json::from_str(text).map_err(|e| TabularError::Model(e.to_string()))?;
        if m.format != ORB_MODEL_FORMAT {
            return Err(TabularError::Model(format!(
                "unsupported format {:?}",
                m.format
            )));
        }
        if m.gbdt.n_features != m.templates.len() * super::COLUMNS_PER_TEMPLATE {
            return Err(TabularError::Model(
                "template count does not match the classifier".into(),
            ));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug)]
pub struct OrbSearchOutcome {
    pub best: OrbGridCell,
    pub best_val_macro_f1: f64,
    pub trials: Vec<OrbTrial>,
    /// Winner refit on train ∪ validation.
    pub model: OrbModel,
}

/// Seeded draw without replacement; smaller counts are prefixes of larger
/// ones so every grid cell sees a nested template set.
fn template_order(pool: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, pool, pool).into_vec()
}

fn hard_f1(truth: &[bool], probs: &[f64]) -> Result<f64, TabularError> {
    let pred: Vec<bool> = probs.iter().map(|&p| p > 0.5).collect();
    Ok(macro_f1(&ConfusionMatrix::from_labels(truth, &pred)?)?)
}

/// Exhaustive grid search scored by validation macro F1 on whole images;
/// the first cell reaching the best score wins and is refit on
/// train ∪ validation. Templates come only from `pool`.
pub fn grid_search_orb(
    train: &[QueryImage],
    validation: &[QueryImage],
    pool: &[GrayImage],
    cfg: &OrbSearchConfig,
) -> Result<OrbSearchOutcome, TabularError> {
    cfg.grid.validate()?;
    cfg.orb.validate()?;
    if pool.is_empty() {
        return Err(TabularError::NoTemplates);
    }
    if validation.is_empty() {
        return Err(TabularError::Config("validation set is empty".into()));
    }
    let order = template_order(pool.len(), cfg.seed);
    let max_templates = cfg
        .grid
        .n_templates
        .iter()
        .copied()
        .max()
        .unwrap_or(1)
        .min(pool.len());
    let drawn: Vec<&GrayImage> = order[..max_templates].iter().map(|&i| &pool[i]).collect();
    let train_labels: Vec<bool> = train.iter().map(|q| q.label).collect();
    let val_labels: Vec<bool> = validation.iter().map(|q| q.label).collect();
    let all_labels: Vec<bool> = train_labels.iter().chain(&val_labels).copied().collect();
    let ids =
        |set: &[QueryImage]| -> Vec<String> { set.iter().map(|q| q.id.to_string()).collect() };

    let mut trials = Vec::new();
    let mut best: Option<(OrbGridCell, f64)> = None;
    let mut per_features = Vec::new();
    for &orb_features in &cfg.grid.orb_features {
        let orb = OrbConfig {
            max_features: orb_features,
            ..cfg.orb.clone()
        };
        let t_desc = describe_all(&drawn, &orb);
        let tr_desc = describe_all(&images(train), &orb);
        let va_desc = describe_all(&images(validation), &orb);
        let tr_table = table_from_descriptors(&tr_desc, &ids(train), &t_desc, None, orb.ratio);
        let va_table = table_from_descriptors(&va_desc, &ids(validation), &t_desc, None, orb.ratio);
        for &n_templates in &cfg.grid.n_templates {
            let used = n_templates.min(max_templates);
            let cols: Vec<usize> = (0..used).collect();
            let tr = tr_table.select_templates(&cols);
            let va = va_table.select_templates(&cols);
            for &n_estimators in &cfg.grid.n_estimators {
                for &max_depth in &cfg.grid.max_depth {
                    let cell = OrbGridCell {
                        orb_features,
                        n_templates,
                        n_estimators,
                        max_depth,
                    };
                    let params = GbdtParams {
                        n_estimators,
                        max_depth,
                        learning_rate: cfg.learning_rate,
                    };
                    let model = fit_gbdt(&tr.values, &train_labels, &params)?;
                    let probs: Vec<f64> = va
                        .values
                        .iter()
                        .map(|r| model.predict_proba(r))
                        .collect::<Result<_, _>>()?;
                    let f1 = hard_f1(&val_labels, &probs)?;
                    log::info!(
                        "orb grid {orb_features}/{n_templates}/{n_estimators}/{max_depth}: val macro F1 {f1:.4}"
                    );
                    trials.push(OrbTrial {
                        cell,
                        templates_used: used,
                        val_macro_f1: f1,
                    });
                    if best.is_none_or(|(_, b)| f1 > b) {
                        best = Some((cell, f1));
                    }
                }
            }
        }
        per_features.push((orb_features, orb, t_desc, tr_desc, va_desc));
    }
    let (cell, best_f1) = best.expect("grid is non-empty");
    let (_, orb, t_desc, tr_desc, va_desc) = per_features
        .into_iter()
        .find(|(f, ..)| *f == cell.orb_features)
        .expect("winner was evaluated");
    let used = cell.n_templates.min(max_templates);
    let templates: Vec<Vec<Descriptor>> = t_desc[..used].to_vec();
    let all_desc: Vec<Vec<Descriptor>> = tr_desc.into_iter().chain(va_desc).collect();
    let all_ids: Vec<String> = ids(train).into_iter().chain(ids(validation)).collect();
    let table = table_from_descriptors(&all_desc, &all_ids, &templates, None, orb.ratio);
    let gbdt = fit_gbdt(
        &table.values,
        &all_labels,
        &GbdtParams {
            n_estimators: cell.n_estimators,
            max_depth: cell.max_depth,
            learning_rate: cfg.learning_rate,
        },
    )?;
    Ok(OrbSearchOutcome {
        best: cell,
        best_val_macro_f1: best_f1,
        trials,
        model: OrbModel {
            format: ORB_MODEL_FORMAT.into(),
            orb,
            templates,
            gbdt,
        },
    })
}

fn images<'a>(set: &[QueryImage<'a>]) -> Vec<&'a GrayImage> {
    set.iter().map(|q| q.image).collect()
}

/// One row per grid cell, in evaluation order.
pub fn write_search_csv(trials: &[OrbTrial], path: &Path) -> Result<(), TabularError> {
    let io = |e: std::io::Error| TabularError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record([
        "orb_features",
        "n_templates",
        "n_estimators",
        "max_depth",
        "templates_used",
        "val_macro_f1",
    ])
    .map_err(|e| io(e.into()))?;
    for t in trials {
        w.write_record([
            t.cell.orb_features.to_string(),
            t.cell.n_templates.to_string(),
            t.cell.n_estimators.to_string(),
            t.cell.max_depth.to_string(),
            t.templates_used.to_string(),
            t.val_macro_f1.to_string(),
        ])
        .map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}
