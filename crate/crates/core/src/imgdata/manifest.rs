use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::Rect;
use super::io::load_image;
use super::{DataError, GrayImage};

/// Pixel-level annotation marking a region responsible for a Markush label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl AnnotationBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(i64::from(self.x), i64::from(self.y), self.w, self.h)
    }

    pub fn area(&self) -> u64 {
        self.rect().area()
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1
            && self.h >= 1
            && (self.x as usize + self.w as usize) <= width
            && (self.y as usize + self.h as usize) <= height
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedImage {
    #[serde(rename = "id")]
    pub image_id: String,
    pub path: String,
    /// True when the image contains at least one Markush structure.
    pub label: bool,
    #[serde(default)]
    pub annotations: Vec<AnnotationBox>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(DataError::Manifest(format!("unknown split {other:?}"))),
        }
    }
}

/// A labeled image collection with an optional train/validation/test
/// assignment. Serialized as `{"images": [...], "splits": {...}}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(rename = "images")]
    pub entries: Vec<AnnotatedImage>,
    #[serde(rename = "splits", default, skip_serializing_if = "Option::is_none")]
    pub split_assignment: Option<BTreeMap<String, Split>>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<AnnotatedImage>) -> Self {
        Self {
            entries,
            split_assignment: None,
        }
    }

    /// Checks id uniqueness, label/annotation consistency and split coverage.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(DataError::Manifest(format!(
                    "duplicate image id {:?}",
                    e.image_id
                )));
            }
            if !e.label && !e.annotations.is_empty() {
                return Err(DataError::Manifest(format!(
                    "image {:?} is labeled false but has annotations",
                    e.image_id
                )));
            }
            if e.annotations.iter().any(|a| a.w == 0 || a.h == 0) {
                return Err(DataError::Manifest(format!(
                    "image {:?} has an empty annotation box",
                    e.image_id
                )));
            }
        }
        if let Some(splits) = &self.split_assignment {
            if splits.len() != self.entries.len()
                || self
                    .entries
                    .iter()
                    .any(|e| !splits.contains_key(&e.image_id))
            {
                return Err(DataError::Manifest(
                    "split assignment does not cover every image exactly once".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn split_of(&self, image_id: &str) -> Option<Split> {
        self.split_assignment.as_ref()?.get(image_id).copied()
    }

    /// Entries assigned to `split`, in manifest order.
    pub fn entries_in(&self, split: Split) -> Vec<&AnnotatedImage> {
        self.entries
            .iter()
            .filter(|e| self.split_of(&e.image_id) == Some(split))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let m: Self = serde_json::from_str(text).map_err(|e| DataError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        super::io::write_file(path.as_ref(), self.to_json().as_bytes())
    }
}

/// A manifest together with the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub root: PathBuf,
}

impl Dataset {
    pub fn open(manifest_path: impl AsRef<Path>) -> Result<Self, DataError> {
        let manifest_path = manifest_path.as_ref();
        let manifest = DatasetManifest::load(manifest_path)?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Self { manifest, root })
    }

    pub fn image_path(&self, entry: &AnnotatedImage) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Loads an entry's raster and checks its annotations fit inside it.
    pub fn load(&self, entry: &AnnotatedImage) -> Result<GrayImage, DataError> {
        let img = load_image(self.image_path(entry))?;
        if let Some(a) = entry
            .annotations
            .iter()
            .find(|a| !a.fits_in(img.width(), img.height()))
        {
            return Err(DataError::Manifest(format!(
                "annotation {a:?} of {:?} lies outside the {}x{} image",
                entry.image_id,
                img.width(),
                img.height()
            )));
        }
        Ok(img)
    }
}

/// Train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const SIXTY_TWENTY_TWENTY: SplitRatios = SplitRatios {
        train: 0.6,
        validation: 0.2,
        test: 0.2,
    };

    pub fn new(train: f64, validation: f64, test: f64) -> Self {
        Self {
            train,
            validation,
            test,
        }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::SIXTY_TWENTY_TWENTY
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`. `carry` holds
/// each split's accumulated shortfall from earlier strata and biases the
/// remainder ranking toward splits that are behind; it is updated in place.
fn apportion(n: usize, ratios: [f64; 3], carry: &mut [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: [usize; 3] = [0; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let left = n - counts.iter().sum::<usize>();
    let priority: Vec<f64> = (0..3)
        .map(|k| exact[k] - exact[k].floor() + carry[k])
        .collect();
    let mut order: Vec<usize> = (0..3).collect();
    // stable sort: earlier split wins ties
    order.sort_by(|&a, &b| priority[b].total_cmp(&priority[a]));
    for &k in order.iter().take(left) {
        counts[k] += 1;
    }
    for k in 0..3 {
        carry[k] += exact[k] - counts[k] as f64;
    }
    counts
}

/// Stratified, seeded train/validation/test assignment.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetManifest, DataError> {
    let r = ratios.as_array();
    if r.iter().any(|&x| !(x > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::Argument(format!(
            "split ratios must be positive and sum to 1, got {r:?}"
        )));
    }
    if manifest.entries.len() < 3 {
        return Err(DataError::TooFewImages {
            needed: 3,
            available: manifest.entries.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut sizes = [0usize; 3];
    let mut carry = [0.0; 3];
    for label in [true, false] {
        let mut ids: Vec<&str> = manifest
            .entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.image_id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        let counts = apportion(ids.len(), r, &mut carry);
        let mut it = ids.into_iter();
        for (k, &count) in counts.iter().enumerate() {
            sizes[k] += count;
            for id in it.by_ref().take(count) {
                assignment.insert(id.to_string(), Split::ALL[k]);
            }
        }
    }
    if sizes.contains(&0) {
        return Err(DataError::TooFewImages {
            needed: 3,
            available: manifest.entries.len(),
        });
    }
    Ok(DatasetManifest {
        entries: manifest.entries.clone(),
        split_assignment: Some(assignment),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_markush: usize,
    pub n_non_markush: usize,
    pub mean_annotations_per_markush: f64,
    pub annotation_width_q99: Option<u32>,
    pub annotation_height_q99: Option<u32>,
    /// (non-Markush, Markush) fractions.
    pub label_ratio: (f64, f64),
}

/// Nearest-rank quantile: the value at 1-based rank ceil(q·n) of the sorted list.
pub fn nearest_rank_quantile(values: &[u32], q: f64) -> Option<u32> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

pub fn dataset_stats(manifest: &DatasetManifest) -> Result<DatasetStats, DataError> {
    let n = manifest.entries.len();
    if n == 0 {
        return Err(DataError::EmptyManifest);
    }
    let markush: Vec<&AnnotatedImage> = manifest.entries.iter().filter(|e| e.label).collect();
    let n_markush = markush.len();
    let total_ann: usize = markush.iter().map(|e| e.annotations.len()).sum();
    let widths: Vec<u32> = markush
        .iter()
        .flat_map(|e| e.annotations.iter().map(|a| a.w))
        .collect();
    let heights: Vec<u32> = markush
        .iter()
        .flat_map(|e| e.annotations.iter().map(|a| a.h))
        .collect();
    Ok(DatasetStats {
        n_markush,
        n_non_markush: n - n_markush,
        mean_annotations_per_markush: if n_markush == 0 {
            0.0
        } else {
            total_ann as f64 / n_markush as f64
        },
        annotation_width_q99: nearest_rank_quantile(&widths, 0.99),
        annotation_height_q99: nearest_rank_quantile(&heights, 0.99),
        label_ratio: (
            (n - n_markush) as f64 / n as f64,
            n_markush as f64 / n as f64,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, label: bool, n_ann: usize) -> AnnotatedImage {
        AnnotatedImage {
            image_id: id.into(),
            path: format!("{id}.pgm"),
            label,
            annotations: (0..n_ann as u32)
                .map(|i| AnnotationBox::new(i, i, 5, 6))
                .collect(),
        }
    }

    fn manifest(n_true: usize, n_false: usize) -> DatasetManifest {
        let mut entries = Vec::new();
        for i in 0..n_true {
            entries.push(entry(&format!("t{i}"), true, 1));
        }
        for i in 0..n_false {
            entries.push(entry(&format!("f{i}"), false, 0));
        }
        DatasetManifest::new(entries)
    }

    #[test]
    fn json_schema_roundtrip_and_unknown_fields() {
        let mut m = manifest(2, 1);
        m.split_assignment = Some(
            m.entries
                .iter()
                .map(|e| (e.image_id.clone(), Split::Test))
                .collect(),
        );
        let text = m.to_json();
        assert!(text.contains("\"images\"") && text.contains("\"splits\""));
        assert_eq!(DatasetManifest::from_json(&text).unwrap(), m);

        let bad =
            r#"{"images":[{"id":"a","path":"a.pgm","label":false,"annotations":[],"extra":1}]}"#;
        assert!(DatasetManifest::from_json(bad).is_err());
        let bad_top = r#"{"images":[],"other":{}}"#;
        assert!(DatasetManifest::from_json(bad_top).is_err());
    }

    #[test]
    fn validate_catches_inconsistencies() {
        let mut m = manifest(1, 1);
        m.entries[1]
            .annotations
            .push(AnnotationBox::new(0, 0, 1, 1));
        assert!(m.validate().is_err());
        let mut m = manifest(2, 0);
        m.entries[1].image_id = "t0".into();
        assert!(m.validate().is_err());
    }

    #[test]
    fn split_ten_images() {
        let m = manifest(6, 4);
        let s = split_dataset(&m, SplitRatios::SIXTY_TWENTY_TWENTY, 7).unwrap();
        let sizes: Vec<usize> = Split::ALL
            .iter()
            .map(|&sp| s.entries_in(sp).len())
            .collect();
        assert_eq!(sizes, vec![6, 2, 2]);
        // stratified: each split's true count within one image of its share
        for sp in Split::ALL {
            let part = s.entries_in(sp);
            let t = part.iter().filter(|e| e.label).count() as f64;
            assert!((t - part.len() as f64 * 0.6).abs() <= 1.0);
        }
    }

    #[test]
    fn split_is_deterministic() {
        let m = manifest(30, 20);
        let a = split_dataset(&m, SplitRatios::default(), 3).unwrap();
        let b = split_dataset(&m, SplitRatios::default(), 3).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&m, SplitRatios::default(), 4).unwrap();
        assert_ne!(a.split_assignment, c.split_assignment);
    }

    #[test]
    fn split_rejects_bad_ratios_and_tiny_sets() {
        let m = manifest(6, 4);
        assert!(matches!(
            split_dataset(&m, SplitRatios::new(1.0, 0.0, 0.0), 0),
            Err(DataError::Argument(_))
        ));
        assert!(split_dataset(&m, SplitRatios::new(0.5, 0.2, 0.2), 0).is_err());
        assert!(matches!(
            split_dataset(&manifest(1, 1), SplitRatios::default(), 0),
            Err(DataError::TooFewImages { .. })
        ));
    }

    #[test]
    fn stats_table_one_ratio() {
        let s = dataset_stats(&manifest(164, 108)).unwrap();
        assert_eq!((s.n_markush, s.n_non_markush), (164, 108));
        assert!((s.label_ratio.0 - 0.397).abs() < 0.01);
        assert!((s.label_ratio.1 - 0.603).abs() < 0.01);
    }

    #[test]
    fn stats_single_image_mean() {
        let m = DatasetManifest::new(vec![entry("a", true, 3)]);
        assert_eq!(dataset_stats(&m).unwrap().mean_annotations_per_markush, 3.0);
    }

    #[test]
    fn stats_empty_errors() {
        assert!(matches!(
            dataset_stats(&DatasetManifest::default()),
            Err(DataError::EmptyManifest)
        ));
    }

    #[test]
    fn nearest_rank_q99() {
        let widths: Vec<u32> = (1..=100).map(|i| i * 10).collect();
        // sort + index oracle: rank ceil(0.99 * 100) = 99 -> 990
        let mut sorted = widths.clone();
        sorted.reverse();
        sorted.sort();
        assert_eq!(sorted[98], 990);
        assert_eq!(nearest_rank_quantile(&widths, 0.99), Some(990));
        assert_eq!(nearest_rank_quantile(&[], 0.99), None);
        assert_eq!(nearest_rank_quantile(&[4], 0.99), Some(4));
    }

    proptest::proptest! {
        #[test]
        fn split_partitions(n_true in 2usize..40, n_false in 2usize..40, seed: u64) {
            let m = manifest(n_true, n_false);
            let s = split_dataset(&m, SplitRatios::default(), seed).unwrap();
            let a = s.split_assignment.as_ref().unwrap();
            proptest::prop_assert_eq!(a.len(), m.entries.len());
            let total: usize = Split::ALL.iter().map(|&sp| s.entries_in(sp).len()).sum();
            proptest::prop_assert_eq!(total, m.entries.len());
            let p = n_true as f64 / (n_true + n_false) as f64;
            for sp in Split::ALL {
                let part = s.entries_in(sp);
                let t = part.iter().filter(|e| e.label).count() as f64;
                proptest::prop_assert!((t - part.len() as f64 * p).abs() <= 1.0);
            }
        }

        #[test]
        fn mean_matches_naive_pass(counts in proptest::collection::vec(0usize..12, 1..30)) {
            let entries: Vec<_> = counts.iter().enumerate()
                .map(|(i, &c)| entry(&format!("i{i}"), c > 0, c)).collect();
            let m = DatasetManifest::new(entries);
            let stats = dataset_stats(&m).unwrap();
            let mut sum = 0usize;
            let mut n = 0usize;
            for e in &m.entries {
                if e.label { sum += e.annotations.len(); n += 1; }
            }
            let naive = if n == 0 { 0.0 } else { sum as f64 / n as f64 };
            proptest::prop_assert_eq!(stats.mean_annotations_per_markush, naive);
        }
    }
}
