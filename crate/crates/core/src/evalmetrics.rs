//! Patch-to-image aggregation and the evaluation suite: confusion matrices,
//! macro F1, Student-t margin of error, ROC/AUC and the naive image-level TPR
//! bound.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty patch list")]
    NoPatches,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("need at least 2 run scores for a margin of error, got {0}")]
    TooFewScores(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("both classes must be present")]
    SingleClass,
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
}

/// True is the Markush class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self { tp, fn_, fp, tn }
    }

    pub fn from_labels(truth: &[bool], predicted: &[bool]) -> Result<Self, MetricsError> {
        if truth.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch(truth.len(), predicted.len()));
        }
        let mut cm = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fn_ += 1,
                (false, true) => cm.fp += 1,
                (false, false) => cm.tn += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// The same counts with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        Self::new(self.tn, self.fp, self.fn_, self.tp)
    }

    /// Scores for the Markush class (index 0) and the non-Markush class.
    pub fn class_scores(&self) -> [ClassScores; 2] {
        [
            ClassScores::from_counts("markush", self.tp, self.fp, self.fn_),
            ClassScores::from_counts("non_markush", self.tn, self.fn_, self.fp),
        ]
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassScores {
    fn from_counts(class: &str, tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            class: class.into(),
            precision,
            recall,
            f1,
        }
    }
}

/// Unweighted mean of the two per-class F1 scores; 0/0 ratios count as 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let [a, b] = cm.class_scores();
    Ok((a.f1 + b.f1) / 2.0)
}

/// An image is Markush when any of its patches is.
pub fn aggregate_image(patch_labels: &[bool]) -> Result<bool, MetricsError> {
    if patch_labels.is_empty() {
        return Err(MetricsError::NoPatches);
    }
    Ok(patch_labels.iter().any(|&l| l))
}

/// Regularized incomplete beta I_x(a, b).
fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    statrs::function::beta::beta_reg(a, b, x)
}

/// Student-t CDF with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Upper critical value t such that P(T > t) = `upper_tail`, found by
/// bisection on the incomplete-beta form of the CDF.
pub fn student_t_critical(upper_tail: f64, df: f64) -> f64 {
    assert!(upper_tail > 0.0 && upper_tail < 1.0 && df > 0.0);
    if upper_tail == 0.5 {
        return 0.0;
    }
    if upper_tail > 0.5 {
        return -student_t_critical(1.0 - upper_tail, df);
    }
    // P(T > t) = I_{df/(df+t²)}(df/2, 1/2) / 2 decreases in t
    let tail = |t: f64| 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while tail(hi) > upper_tail {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > upper_tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the n − 1 denominator.
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Half-width t_{α/2, n−1} · σ / √n of the two-sided confidence interval.
pub fn margin_of_error(scores: &[f64], alpha: f64) -> Result<f64, MetricsError> {
    if scores.len() < 2 {
        return Err(MetricsError::TooFewScores(scores.len()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::Alpha(alpha));
    }
    let n = scores.len() as f64;
    let t = student_t_critical(alpha / 2.0, n - 1.0);
    Ok(t * sample_std(scores) / n.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub alpha: f64,
    pub margin_of_error: f64,
}

impl RunSummary {
    pub fn from_scores(scores: Vec<f64>, alpha: f64) -> Result<Self, MetricsError> {
        let margin_of_error = margin_of_error(&scores, alpha)?;
        Ok(Self {
            mean: mean(&scores),
            std: sample_std(&scores),
            alpha,
            margin_of_error,
            scores,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (fpr, tpr) from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC over descending distinct score thresholds; tied scores move together,
/// so AUC by trapezoids counts ties as one half.
pub fn roc_curve(labels: &[bool], scores: &[f64]) -> Result<RocCurve, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), scores.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Heuristic upper bound on image-level TPR for an image with `k_indicators`
/// independent chances at a patch-level TPR of `patch_tpr`.
pub fn naive_image_tpr(patch_tpr: f64, k_indicators: u32) -> f64 {
    assert!((0.0..=1.0).contains(&patch_tpr) && k_indicators >= 1);
    patch_tpr.powf(1.0 / f64::from(k_indicators))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cm: ConfusionMatrix,
    pub per_class: Vec<ClassScores>,
    pub macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores hard predictions against ground truth; AUC is included when
/// per-item scores are given and both classes are present.
pub fn evaluate_run(
    truth: &[bool],
    predicted: &[bool],
    scores: Option<&[f64]>,
) -> Result<EvalReport, MetricsError> {
    let cm = ConfusionMatrix::from_labels(truth, predicted)?;
    let auc = match scores {
        Some(s) if s.len() != truth.len() => {
            return Err(MetricsError::LengthMismatch(truth.len(), s.len()))
        }
        Some(s) => roc_curve(truth, s).ok().map(|r| r.auc),
        None => None,
    };
    Ok(EvalReport {
        macro_f1: macro_f1(&cm)?,
        per_class: cm.class_scores().to_vec(),
        cm,
        auc,
    })
}

/// One classified patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPrediction {
    pub image_id: String,
    pub truth: bool,
    pub predicted: bool,
    pub score: f64,
}

/// Image-level verdicts: OR over each image's patch predictions, max patch
/// score as the image score. The image truth is supplied separately since
/// image labels need not equal the OR of patch labels.
pub fn aggregate_by_image(
    patches: &[PatchPrediction],
    image_truth: &BTreeMap<String, bool>,
) -> Result<Vec<PatchPrediction>, MetricsError> {
    let mut grouped: BTreeMap<&str, (Vec<bool>, f64)> = BTreeMap::new();
    for p in patches {
        let slot = grouped
            .entry(p.image_id.as_str())
            .or_insert_with(|| (Vec::new(), f64::NEG_INFINITY));
        slot.0.push(p.predicted);
        slot.1 = slot.1.max(p.score);
    }
    image_truth
        .iter()
        .map(|(id, &truth)| {
            let (labels, score) = grouped.get(id.as_str()).ok_or(MetricsError::NoPatches)?;
            Ok(PatchPrediction {
                image_id: id.clone(),
                truth,
                predicted: aggregate_image(labels)?,
                score: *score,
            })
        })
        .collect()
}

pub fn evaluate_predictions(preds: &[PatchPrediction]) -> Result<EvalReport, MetricsError> {
    let truth: Vec<bool> = preds.iter().map(|p| p.truth).collect();
    let predicted: Vec<bool> = preds.iter().map(|p| p.predicted).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    evaluate_run(&truth, &predicted, Some(&scores))
}

/// Minimal standalone SVG line plot of one or more ROC curves.
pub fn roc_svg(curves: &[(&str, &RocCurve)]) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let map = |(x, y): (f64, f64)| (PAD + x * SIZE, PAD + (1.0 - y) * SIZE);
    let mut svg = String::new();
    let total = SIZE + 2.0 * PAD;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{PAD}" y1="{}" x2="{}" y2="{PAD}" stroke="#999" stroke-dasharray="4 4"/>"##,
        PAD + SIZE,
        PAD + SIZE
    );
    for (k, (name, curve)) in curves.iter().enumerate() {
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|&p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name} (AUC {:.3})</text>"#,
            PAD + SIZE * 0.45,
            PAD + SIZE * 0.8 + 16.0 * k as f64,
            curve.auc
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12">FPR</text><text x="8" y="{}" font-size="12">TPR</text>"#,
        PAD + SIZE / 2.0,
        total - 10.0,
        PAD + SIZE / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}
