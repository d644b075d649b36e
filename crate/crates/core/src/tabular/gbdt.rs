use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TabularError;

pub const LAMBDA: f64 = 1.0;
pub const DEFAULT_LEARNING_RATE: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl GbdtParams {
    pub fn new(n_estimators: usize, max_depth: usize) -> Self {
        Self {
            n_estimators,
            max_depth,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }
}

/// Rows with `x[feature] < threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: f64,
    },
}

/// Regression tree stored as a node array rooted at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { leaf } => return leaf,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] < threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

pub const FORMAT: &str = "gbdt-v1";

/// Boosted ensemble of logistic-loss regression trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub format: String,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub max_depth: usize,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl TreeEnsemble {
    pub fn margin(&self, row: &[f64]) -> Result<f64, TabularError> {
        if row.len() != self.n_features {
            return Err(TabularError::Width {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.learning_rate * t.leaf_value(row))
                .sum::<f64>())
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, TabularError> {
        self.margin(row).map(sigmoid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TabularError> {
        let m: Self = serde_json::from_str(text).map_err(|e| TabularError::Model(e.to_string()))?;
        if m.format != FORMAT {
            return Err(TabularError::Model(format!(
                "unsupported format {:?}",
                m.format
            )));
        }
        Ok(m)
    }
}

/// Mean logistic loss of `margins` against `labels`.
pub fn logistic_loss(margins: &[f64], labels: &[bool]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            // log(1 + e^z) - y z, stable for large |z|
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - if y { z } else { 0.0 }
        })
        .sum();
    total / margins.len() as f64
}

pub(crate) fn split_gain(gl: f64, hl: f64, g: f64, h: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - g * g / (h + LAMBDA))
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Feature-major column storage with per-feature ascending row orders.
pub(crate) struct Columns {
    n_rows: usize,
    cols: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Columns {
    pub(crate) fn new(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_features = rows.first().map_or(0, Vec::len);
        let cols: Vec<Vec<f64>> = (0..n_features)
            .map(|f| rows.iter().map(|r| r[f]).collect())
            .collect();
        let order = cols
            .par_iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self {
            n_rows,
            cols,
            order,
        }
    }
}

const INACTIVE: u32 = u32::MAX;

/// Grows one tree level by level. `grad`/`hess` are per row.
fn grow_tree(columns: &Columns, grad: &[f64], hess: &[f64], max_depth: usize) -> Tree {
    let n = columns.n_rows;
    let mut nodes = vec![Node::Leaf { leaf: 0.0 }];
    // node index in `nodes` for each row still in an open node
    let mut node_of: Vec<u32> = vec![0; n];
    let mut open: Vec<usize> = vec![0];
    for depth in 0..=max_depth {
        if open.is_empty() {
            break;
        }
        // position of each open node within `open`
        let mut slot = vec![INACTIVE; nodes.len()];
        for (k, &id) in open.iter().enumerate() {
            slot[id] = k as u32;
        }
        let mut g_tot = vec![0.0; open.len()];
        let mut h_tot = vec![0.0; open.len()];
        for i in 0..n {
            if node_of[i] != INACTIVE {
                let k = slot[node_of[i] as usize] as usize;
                g_tot[k] += grad[i];
                h_tot[k] += hess[i];
            }
        }
        let best: Vec<Option<Candidate>> = if depth == max_depth {
            vec![None; open.len()]
        } else {
            let per_feature: Vec<Vec<Option<Candidate>>> = (0..columns.cols.len())
                .into_par_iter()
                .map(|f| scan_feature(f, columns, &node_of, &slot, grad, hess, &g_tot, &h_tot))
                .collect();
            let mut best = vec![None::<Candidate>; open.len()];
            for cands in per_feature {
                for (b, c) in best.iter_mut().zip(cands) {
                    if let Some(c) = c {
                        if b.is_none_or(|cur| c.gain > cur.gain) {
                            *b = Some(c);
                        }
                    }
                }
            }
            best
        };
        let mut next_open = Vec::new();
        let mut child_of: Vec<Option<(usize, usize, usize, f64)>> = vec![None; open.len()];
        for (k, &id) in open.iter().enumerate() {
            match best[k] {
                Some(c) if c.gain > 0.0 => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { leaf: 0.0 });
                    nodes.push(Node::Leaf { leaf: 0.0 });
                    nodes[id] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    child_of[k] = Some((left, left + 1, c.feature, c.threshold));
                    next_open.push(left);
                    next_open.push(left + 1);
                }
                _ => {
                    nodes[id] = Node::Leaf {
                        leaf: -g_tot[k] / (h_tot[k] + LAMBDA),
                    };
                }
            }
        }
        for i in 0..n {
            if node_of[i] == INACTIVE {
                continue;
            }
            let k = slot[node_of[i] as usize] as usize;
            node_of[i] = match child_of[k] {
                Some((l, r, f, t)) => {
                    if columns.cols[f][i] < t {
                        l as u32
                    } else {
                        r as u32
                    }
                }
                None => INACTIVE,
            };
        }
        open = next_open;
    }
    Tree { nodes }
}

/// Best split per open node on feature `f`; thresholds are midpoints of
/// consecutive distinct values, scanned ascending so ties keep the lowest.
#[allow(clippy::too_many_arguments)]
fn scan_feature(
    f: usize,
    columns: &Columns,
    node_of: &[u32],
    slot: &[u32],
    grad: &[f64],
    hess: &[f64],
    g_tot: &[f64],
    h_tot: &[f64],
) -> Vec<Option<Candidate>> {
    let m = g_tot.len();
    let col = &columns.cols[f];
    let mut gl = vec![0.0; m];
    let mut hl = vec![0.0; m];
    let mut last = vec![f64::NAN; m];
    let mut best: Vec<Option<Candidate>> = vec![None; m];
    for &i in &columns.order[f] {
        let i = i as usize;
        if node_of[i] == INACTIVE {
            continue;
        }
        let k = slot[node_of[i] as usize] as usize;
        let v = col[i];
        if !last[k].is_nan() && v > last[k] {
            let gain = split_gain(gl[k], hl[k], g_tot[k], h_tot[k]);
            if best[k].is_none_or(|b| gain > b.gain) {
                best[k] = Some(Candidate {
                    gain,
                    feature: f,
                    threshold: last[k] + (v - last[k]) / 2.0,
                });
            }
        }
        gl[k] += grad[i];
        hl[k] += hess[i];
        last[k] = v;
    }
    best
}

/// Second-order logistic boosting with exact greedy splits.
pub fn fit_gbdt(
    rows: &[Vec<f64>],
    labels: &[bool],
    params: &GbdtParams,
) -> Result<TreeEnsemble, TabularError> {
    fit_gbdt_traced(rows, labels, params, |_, _| {})
}

/// [`fit_gbdt`] calling `on_round(round, train_loss)` after the prior
/// (round 0) and after every tree.
pub fn fit_gbdt_traced(
    rows: &[Vec<f64>],
    labels: &[bool],
    params: &GbdtParams,
    mut on_round: impl FnMut(usize, f64),
) -> Result<TreeEnsemble, TabularError> {
    if rows.len() != labels.len() {
        return Err(TabularError::Width {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if rows.len() < 2 || positives == 0 || positives == labels.len() {
        return Err(TabularError::DegenerateTrainingSet);
    }
    let n_features = rows[0].len();
    if rows.iter().any(|r| r.len() != n_features) {
        return Err(TabularError::Width {
            expected: n_features,
            got: rows
                .iter()
                .map(Vec::len)
                .find(|&l| l != n_features)
                .unwrap_or(0),
        });
    }
    if !(params.learning_rate > 0.0) {
        return Err(TabularError::Config(
            "learning_rate must be positive".into(),
        ));
    }
    let prior = positives as f64 / labels.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let columns = Columns::new(rows);
    let mut margins = vec![base_score; rows.len()];
    on_round(0, logistic_loss(&margins, labels));
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut grad = vec![0.0; rows.len()];
    let mut hess = vec![0.0; rows.len()];
    for round in 1..=params.n_estimators {
        for i in 0..rows.len() {
            let p = sigmoid(margins[i]);
            grad[i] = p - if labels[i] { 1.0 } else { 0.0 };
            hess[i] = p * (1.0 - p);
        }
        let tree = grow_tree(&columns, &grad, &hess, params.max_depth);
        for (m, r) in margins.iter_mut().zip(rows) {
            *m += params.learning_rate * tree.leaf_value(r);
        }
        trees.push(tree);
        on_round(round, logistic_loss(&margins, labels));
    }
    Ok(TreeEnsemble {
        format: FORMAT.into(),
        base_score,
        learning_rate: params.learning_rate,
        n_features,
        max_depth: params.max_depth,
        trees,
    })
}
