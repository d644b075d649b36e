//! Per-template match statistics as a feature table, a gradient-boosted
//! tree classifier over it, and the grid search tying both to ORB.

mod gbdt;
mod search;

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::imgdata::GrayImage;
use crate::orbfeat::{detect_and_describe, match_ratio_test, Descriptor, OrbConfig};

pub use gbdt::{
    fit_gbdt, fit_gbdt_traced, logistic_loss, sigmoid, GbdtParams, Node, Tree, TreeEnsemble,
    DEFAULT_LEARNING_RATE, LAMBDA,
};
pub use search::{
    grid_search_orb, write_search_csv, OrbGrid, OrbGridCell, OrbModel, OrbSearchConfig,
    OrbSearchOutcome, OrbTrial, QueryImage,
};

/// Stand-in distance for a missing match, worse than any real one.
pub const SENTINEL: f64 = 257.0;
pub const COLUMNS_PER_TEMPLATE: usize = 6;
pub const BEST_MATCHES: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum TabularError {
    #[error("degenerate training set: both classes are required")]
    DegenerateTrainingSet,
    #[error("row width {got} does not match expected {expected}")]
    Width { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no templates available")]
    NoTemplates,
    #[error("model: {0}")]
    Model(String),
    #[error(transparent)]
    Orb(#[from] crate::orbfeat::OrbError),
    #[error(transparent)]
    Metrics(#[from] crate::evalmetrics::MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub n_templates: usize,
    /// One row per query, `6 · n_templates` values each, template-major.
    pub values: Vec<Vec<f64>>,
    pub row_ids: Vec<String>,
    pub labels: Option<Vec<bool>>,
}

/// `[count, d1..d5]` for one query/template pair.
pub fn feature_block(query: &[Descriptor], template: &[Descriptor], ratio: f64) -> [f64; 6] {
    let matches = match_ratio_test(query, template, ratio);
    let mut block = [SENTINEL; COLUMNS_PER_TEMPLATE];
    block[0] = matches.len() as f64;
    for (slot, m) in block[1..].iter_mut().zip(&matches) {
        *slot = f64::from(m.distance);
    }
    block
}

/// Feature row of one query against every template, in template order.
pub fn feature_row(query: &[Descriptor], templates: &[Vec<Descriptor>], ratio: f64) -> Vec<f64> {
    templates
        .iter()
        .flat_map(|t| feature_block(query, t, ratio))
        .collect()
}

impl FeatureTable {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_columns(&self) -> usize {
        self.n_templates * COLUMNS_PER_TEMPLATE
    }

    /// Keeps the column blocks of the listed templates, in that order.
    pub fn select_templates(&self, templates: &[usize]) -> FeatureTable {
        FeatureTable {
            n_templates: templates.len(),
            values: self
                .values
                .iter()
                .map(|row| {
                    templates
                        .iter()
                        .flat_map(|&t| {
                            row[t * COLUMNS_PER_TEMPLATE..(t + 1) * COLUMNS_PER_TEMPLATE]
                                .iter()
                                .copied()
                        })
                        .collect()
                })
                .collect(),
            row_ids: self.row_ids.clone(),
            labels: self.labels.clone(),
        }
    }

    /// CSV with header `image_id,label,t0_count,t0_d1,…`; unlabeled rows
    /// leave the label empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,label");
        for t in 0..self.n_templates {
            write!(out, ",t{t}_count").unwrap();
            for d in 1..=BEST_MATCHES {
                write!(out, ",t{t}_d{d}").unwrap();
            }
        }
        out.push('\n');
        for (r, row) in self.values.iter().enumerate() {
            out.push_str(&self.row_ids[r]);
            out.push(',');
            if let Some(labels) = &self.labels {
                out.push_str(if labels[r] { "1" } else { "0" });
            }
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Descriptors of every image under `cfg`, computed in parallel.
pub fn describe_all(images: &[&GrayImage], cfg: &OrbConfig) -> Vec<Vec<Descriptor>> {
    images
        .par_iter()
        .map(|img| detect_and_describe(img, cfg).1)
        .collect()
}

/// Builds the table for `queries` against `templates`. Both sides use the
/// same ORB settings.
pub fn build_feature_table(
    queries: &[&GrayImage],
    row_ids: &[String],
    templates: &[&GrayImage],
    cfg: &OrbConfig,
) -> Result<FeatureTable, TabularError> {
    cfg.validate()?;
    if templates.is_empty() {
        return Err(TabularError::NoTemplates);
    }
    if queries.len() != row_ids.len() {
        return Err(TabularError::Width {
            expected: queries.len(),
            got: row_ids.len(),
        });
    }
    let tdesc = describe_all(templates, cfg);
    let qdesc = describe_all(queries, cfg);
    Ok(table_from_descriptors(
        &qdesc, row_ids, &tdesc, None, cfg.ratio,
    ))
}

pub fn table_from_descriptors(
    queries: &[Vec<Descriptor>],
    row_ids: &[String],
    templates: &[Vec<Descriptor>],
    labels: Option<Vec<bool>>,
    ratio: f64,
) -> FeatureTable {
    FeatureTable {
        n_templates: templates.len(),
        values: queries
            .par_iter()
            .map(|q| feature_row(q, templates, ratio))
            .collect(),
        row_ids: row_ids.to_vec(),
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(side: usize, cell: usize) -> GrayImage {
        let mut img = GrayImage::white(side, side);
        for y in 0..side {
            for x in 0..side {
                if (x / cell + y / cell).is_multiple_of(2)
                    && x > 20
                    && y > 20
                    && x < side - 20
                    && y < side - 20
                {
                    img.set(x, y, 0);
                }
            }
        }
        img
    }

    #[test]
    fn width_is_six_per_template() {
        let q = GrayImage::white(64, 64);
        let t = GrayImage::white(64, 64);
        let templates: Vec<&GrayImage> = vec![&t; 100];
        let table =
            build_feature_table(&[&q], &["a".into()], &templates, &OrbConfig::default()).unwrap();
        assert_eq!(table.n_columns(), 600);
        assert_eq!(table.values[0].len(), 600);
    }

    #[test]
    fn featureless_query_is_padded() {
        let q = GrayImage::white(80, 80);
        let t = checker(96, 7);
        let table =
            build_feature_table(&[&q], &["q".into()], &[&t, &t], &OrbConfig::default()).unwrap();
        for block in table.values[0].chunks(6) {
            assert_eq!(block, [0.0, 257.0, 257.0, 257.0, 257.0, 257.0]);
        }
    }

    #[test]
    fn self_match_counts_every_keypoint() {
        let img = checker(120, 9);
        let cfg = OrbConfig::default();
        let (_, mut d) = detect_and_describe(&img, &cfg);
        // repeated texture yields duplicate descriptors; keep one of each
        d.sort_by_key(|x| x.0);
        d.dedup();
        assert!(d.len() > 5);
        let block = feature_block(&d, &d, cfg.ratio);
        assert_eq!(block[0], d.len() as f64);
        assert_eq!(&block[1..], &[0.0; 5]);
    }

    #[test]
    fn csv_header_and_rows() {
        let table = FeatureTable {
            n_templates: 2,
            values: vec![vec![
                1.0, 3.0, 257.0, 257.0, 257.0, 257.0, 0.0, 257.0, 257.0, 257.0, 257.0, 257.0,
            ]],
            row_ids: vec!["img1".into()],
            labels: Some(vec![true]),
        };
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "image_id,label,t0_count,t0_d1,t0_d2,t0_d3,t0_d4,t0_d5,t1_count,t1_d1,t1_d2,t1_d3,t1_d4,t1_d5"
        );
        assert_eq!(
            lines.next().unwrap(),
            "img1,1,1,3,257,257,257,257,0,257,257,257,257,257"
        );
    }

    #[test]
    fn template_permutation_permutes_blocks() {
        let cfg = OrbConfig::default();
        let q = checker(140, 11);
        let ts = [checker(96, 7), checker(96, 9), checker(96, 13)];
        let refs: Vec<&GrayImage> = ts.iter().collect();
        let perm = [2usize, 0, 1];
        let permuted: Vec<&GrayImage> = perm.iter().map(|&i| &ts[i]).collect();
        let a = build_feature_table(&[&q], &["q".into()], &refs, &cfg).unwrap();
        let b = build_feature_table(&[&q], &["q".into()], &permuted, &cfg).unwrap();
        assert_eq!(a.select_templates(&perm), b);
    }
}
