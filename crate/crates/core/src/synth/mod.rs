//! Synthetic annotated corpora: line-art "molecules" with atom-letter
//! distractors, plus procedurally drawn Markush indicators with exact boxes.

mod glyph;

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imgdata::{
    encode_pgm, write_file, AnnotatedImage, AnnotationBox, DataError, DatasetManifest, GrayImage,
    Rect,
};

use glyph::{draw_segment, render_shape, Shape};
pub use glyph::{render_glyph, stroke_radius, AtomLetter, GlyphId, INK};

/// White margin kept around every placed glyph.
const CLEARANCE: i64 = 3;
const PLACEMENT_TRIES: usize = 40;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_images: usize,
    /// `[min_w, min_h, max_w, max_h]` in pixels.
    pub size_range: [u32; 4],
    /// Inclusive glyph height range in pixels.
    pub indicator_scale_range: [u32; 2],
    pub markush_fraction: f64,
    pub indicators_per_image: [u32; 2],
    pub glyph_set: Vec<GlyphId>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_images: 100,
            size_range: [160, 240, 1200, 1000],
            indicator_scale_range: [5, 25],
            markush_fraction: 0.6,
            indicators_per_image: [1, 15],
            glyph_set: GlyphId::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let [min_w, min_h, max_w, max_h] = self.size_range;
        let bad = |m: &str| Err(SynthError::Config(m.into()));
        if self.n_images == 0 {
            return bad("n_images must be positive");
        }
        if min_w == 0 || min_h == 0 || min_w > max_w || min_h > max_h {
            return bad("size_range is empty");
        }
        let [lo, hi] = self.indicator_scale_range;
        if lo < 3 || lo > hi {
            return bad("indicator_scale_range must satisfy 3 <= min <= max");
        }
        let [klo, khi] = self.indicators_per_image;
        if klo == 0 || klo > khi {
            return bad("indicators_per_image must satisfy 1 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.markush_fraction) {
            return bad("markush_fraction must lie in [0, 1]");
        }
        if self.glyph_set.is_empty() {
            return bad("glyph_set is empty");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One generated image with its manifest entry.
#[derive(Clone, Debug)]
pub struct SynthImage {
    pub entry: AnnotatedImage,
    pub image: GrayImage,
    /// Indicator placements abandoned for lack of room.
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub manifest: DatasetManifest,
    pub images: Vec<GrayImage>,
    pub skipped_placements: usize,
}

fn image_id(index: usize) -> String {
    format!("img{index:05}")
}

/// Which images carry the Markush label: exactly `round(n * fraction)` of them.
fn assign_labels(cfg: &SynthConfig) -> Vec<bool> {
    let n_true = (cfg.n_images as f64 * cfg.markush_fraction).round() as usize;
    let mut labels: Vec<bool> = (0..cfg.n_images).map(|i| i < n_true).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    labels
}

pub fn generate_corpus_in_memory(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let labels = assign_labels(cfg);
    let generated: Vec<SynthImage> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| generate_image(cfg, i, label))
        .collect();
    let skipped_placements = generated.iter().map(|g| g.skipped).sum();
    if skipped_placements > 0 {
        log::warn!("synth: {skipped_placements} indicator placements skipped for lack of room");
    }
    let (entries, images) = generated.into_iter().map(|g| (g.entry, g.image)).unzip();
    Ok(SynthCorpus {
        manifest: DatasetManifest::new(entries),
        images,
        skipped_placements,
    })
}

/// Writes `images/*.pgm` and `manifest.json` under `out_dir`.
pub fn generate_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthCorpus, SynthError> {
    let corpus = generate_corpus_in_memory(cfg)?;
    corpus
        .manifest
        .entries
        .par_iter()
        .zip(corpus.images.par_iter())
        .try_for_each(|(entry, img)| write_file(&out_dir.join(&entry.path), &encode_pgm(img)))?;
    corpus.manifest.validate()?;
    write_file(
        &out_dir.join("manifest.json"),
        corpus.manifest.to_json().as_bytes(),
    )?;
    Ok(corpus)
}

/// Attachment point at the free end of a bond.
#[derive(Clone, Copy)]
struct Slot {
    at: (f64, f64),
    dir: (f64, f64),
}

struct Canvas {
    img: GrayImage,
    radius: f64,
    /// Annotated boxes grown by the clearance; nothing may enter them.
    reserved: Vec<Rect>,
}

impl Canvas {
    fn line(&mut self, a: (f64, f64), b: (f64, f64)) {
        draw_segment(&mut self.img, a, b, self.radius);
    }

    fn is_clear(&self, r: Rect) -> bool {
        let (x0, y0) = (r.x - CLEARANCE, r.y - CLEARANCE);
        let (x1, y1) = (r.right() + CLEARANCE, r.bottom() + CLEARANCE);
        if x0 < 0 || y0 < 0 || x1 > self.img.width() as i64 || y1 > self.img.height() as i64 {
            return false;
        }
        let grown = grow(r, CLEARANCE);
        if self
            .reserved
            .iter()
            .any(|q| q.intersection_area(&grown) > 0)
        {
            return false;
        }
        (y0..y1).all(|y| {
            self.img.row(y as usize)[x0 as usize..x1 as usize]
                .iter()
                .all(|&p| p >= 128)
        })
    }

    /// Places a rendered glyph so its ink box lands at `target`; returns the
    /// box on success.
    fn place(&mut self, glyph: &(GrayImage, Rect), target: (i64, i64)) -> Option<Rect> {
        let (raster, bbox) = glyph;
        let placed = Rect::new(target.0, target.1, bbox.w, bbox.h);
        if !self.is_clear(placed) {
            return None;
        }
        self.img
            .blit_where(raster, target.0 - bbox.x, target.1 - bbox.y, |p| p < 128);
        Some(placed)
    }

    /// Tries to hang the glyph off a bond end, on the far side of the slot.
    fn place_at_slot(&mut self, glyph: &(GrayImage, Rect), slot: Slot) -> Option<Rect> {
        let (bw, bh) = (f64::from(glyph.1.w), f64::from(glyph.1.h));
        let reach = slot.dir.0.abs() * bw / 2.0
            + slot.dir.1.abs() * bh / 2.0
            + self.radius
            + CLEARANCE as f64
            + 1.5;
        let cx = slot.at.0 + slot.dir.0 * reach;
        let cy = slot.at.1 + slot.dir.1 * reach;
        let target = (
            (cx - bw / 2.0).round() as i64,
            (cy - bh / 2.0).round() as i64,
        );
        self.place(glyph, target)
    }

    fn place_free(&mut self, glyph: &(GrayImage, Rect), rng: &mut ChaCha8Rng) -> Option<Rect> {
        let (w, h) = (self.img.width() as i64, self.img.height() as i64);
        let (bw, bh) = (i64::from(glyph.1.w), i64::from(glyph.1.h));
        let (xmax, ymax) = (w - bw - CLEARANCE, h - bh - CLEARANCE);
        if xmax < CLEARANCE || ymax < CLEARANCE {
            return None;
        }
        (0..PLACEMENT_TRIES).find_map(|_| {
            let t = (
                rng.random_range(CLEARANCE..=xmax),
                rng.random_range(CLEARANCE..=ymax),
            );
            self.place(glyph, t)
        })
    }
}

fn grow(r: Rect, by: i64) -> Rect {
    Rect::new(r.x - by, r.y - by, r.w + 2 * by as u32, r.h + 2 * by as u32)
}

fn hexagon(center: (f64, f64), radius: f64, phase: f64) -> Vec<(f64, f64)> {
    (0..6)
        .map(|k| {
            let a = phase + PI / 3.0 * f64::from(k);
            (center.0 + radius * a.cos(), center.1 + radius * a.sin())
        })
        .collect()
}

fn inside(p: (f64, f64), w: f64, h: f64, margin: f64) -> bool {
    p.0 >= margin && p.1 >= margin && p.0 <= w - 1.0 - margin && p.1 <= h - 1.0 - margin
}

/// Draws ring systems with substituent bonds; returns the free bond ends.
fn draw_skeleton(canvas: &mut Canvas, bond: f64, rng: &mut ChaCha8Rng) -> Vec<Slot> {
    let (w, h) = (canvas.img.width() as f64, canvas.img.height() as f64);
    let area = w * h;
    let target = (area / (12.0 * bond).powi(2)).round().clamp(1.0, 12.0) as usize;
    let margin = canvas.radius + 2.0;
    let mut centers: Vec<(f64, f64)> = Vec::new();
    let mut slots = Vec::new();
    for _ in 0..target * 4 {
        if centers.len() == target {
            break;
        }
        let reach = 2.0 * bond + margin;
        if w <= 2.0 * reach || h <= 2.0 * reach {
            break;
        }
        let c = (
            rng.random_range(reach..w - reach),
            rng.random_range(reach..h - reach),
        );
        if centers
            .iter()
            .any(|o| ((o.0 - c.0).powi(2) + (o.1 - c.1).powi(2)).sqrt() < 4.6 * bond)
        {
            continue;
        }
        centers.push(c);
        let ring = hexagon(c, bond, rng.random_range(0.0..PI / 3.0));
        let aromatic = rng.random_bool(0.5);
        for k in 0..6 {
            let (a, b) = (ring[k], ring[(k + 1) % 6]);
            canvas.line(a, b);
            if aromatic && k % 2 == 0 {
                // inner double-bond stroke
                let shrink = |p: (f64, f64)| (c.0 + (p.0 - c.0) * 0.72, c.1 + (p.1 - c.1) * 0.72);
                let (ia, ib) = (shrink(a), shrink(b));
                let t = 0.15;
                canvas.line(
                    (ia.0 + (ib.0 - ia.0) * t, ia.1 + (ib.1 - ia.1) * t),
                    (ib.0 + (ia.0 - ib.0) * t, ib.1 + (ia.1 - ib.1) * t),
                );
            }
        }
        for &v in &ring {
            if !rng.random_bool(0.6) {
                continue;
            }
            let d = ((v.0 - c.0) / bond, (v.1 - c.1) / bond);
            let end = (v.0 + d.0 * bond, v.1 + d.1 * bond);
            if !inside(end, w, h, margin) {
                continue;
            }
            canvas.line(v, end);
            let mut slot = Slot { at: end, dir: d };
            if rng.random_bool(0.3) {
                // zigzag continuation
                let turn = if rng.random_bool(0.5) {
                    PI / 3.0
                } else {
                    -PI / 3.0
                };
                let (s, co) = turn.sin_cos();
                let d2 = (d.0 * co - d.1 * s, d.0 * s + d.1 * co);
                let end2 = (end.0 + d2.0 * bond, end.1 + d2.1 * bond);
                if inside(end2, w, h, margin) {
                    canvas.line(end, end2);
                    slot = Slot { at: end2, dir: d2 };
                }
            }
            slots.push(slot);
        }
    }
    slots
}

fn glyph_height(base: u32, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> u32 {
    let [lo, hi] = cfg.indicator_scale_range;
    let jitter = rng.random_range(0.85..1.15);
    ((f64::from(base) * jitter).round() as u32).clamp(lo, hi)
}

/// Renders image `index`; deterministic in `(cfg.seed, index, label)`.
pub fn generate_image(cfg: &SynthConfig, index: usize, label: bool) -> SynthImage {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64);
    let [min_w, min_h, max_w, max_h] = cfg.size_range;
    let mut skipped = 0;
    loop {
        let w = rng.random_range(min_w..=max_w) as usize;
        let h = rng.random_range(min_h..=max_h) as usize;
        let [lo, hi] = cfg.indicator_scale_range;
        let scale = rng.random_range(lo..=hi);
        let radius = stroke_radius(scale);
        let bond = (2.2 * f64::from(scale)).min(w.min(h) as f64 / 5.0).max(8.0);
        let mut canvas = Canvas {
            img: GrayImage::white(w, h),
            radius,
            reserved: Vec::new(),
        };
        let mut slots = draw_skeleton(&mut canvas, bond, &mut rng);
        slots.shuffle(&mut rng);

        let mut annotations = Vec::new();
        if label {
            let [klo, khi] = cfg.indicators_per_image;
            let k = rng.random_range(klo..=khi);
            for _ in 0..k {
                let id = *cfg.glyph_set.choose(&mut rng).expect("validated non-empty");
                let gh = glyph_height(scale, cfg, &mut rng);
                let rotation = match id {
                    GlyphId::WavyLineOpen => rng.random_range(0.0..PI),
                    GlyphId::Arrow => [0.0, PI / 2.0, PI, 1.5 * PI][rng.random_range(0..4)],
                    _ => 0.0,
                };
                let rendered = render_glyph(id, gh, rotation);
                let mut placed = None;
                while placed.is_none() {
                    let Some(slot) = slots.pop() else { break };
                    placed = canvas.place_at_slot(&rendered, slot);
                }
                let placed = placed.or_else(|| canvas.place_free(&rendered, &mut rng));
                match placed {
                    Some(r) => {
                        canvas.reserved.push(grow(r, CLEARANCE));
                        annotations.push(AnnotationBox::new(r.x as u32, r.y as u32, r.w, r.h));
                    }
                    None => skipped += 1,
                }
            }
            if annotations.is_empty() {
                continue;
            }
        }

        // atom-letter distractors on remaining bond ends and as loose text
        let letters: Vec<Shape> = AtomLetter::ALL.iter().map(|l| l.shape()).collect();
        for slot in slots {
            if rng.random_bool(0.5) {
                let shape = letters.choose(&mut rng).expect("non-empty");
                let gh = glyph_height(scale, cfg, &mut rng);
                canvas.place_at_slot(&render_shape(shape, gh, 0.0), slot);
            }
        }
        let groups = rng.random_range(0..=2) + (w * h) / 150_000;
        for _ in 0..groups {
            let gh = glyph_height(scale, cfg, &mut rng);
            let word: Vec<_> = (0..rng.random_range(1..=4))
                .map(|_| render_shape(letters.choose(&mut rng).expect("non-empty"), gh, 0.0))
                .collect();
            let total_w: i64 = word.iter().map(|g| i64::from(g.1.w) + 2).sum();
            let max_x = w as i64 - total_w - CLEARANCE;
            let max_y = h as i64 - i64::from(gh) - CLEARANCE;
            if max_x < CLEARANCE || max_y < CLEARANCE {
                continue;
            }
            let (mut x, y) = (
                rng.random_range(CLEARANCE..=max_x),
                rng.random_range(CLEARANCE..=max_y),
            );
            for g in &word {
                canvas.place(g, (x, y + i64::from(gh) - i64::from(g.1.h)));
                x += i64::from(g.1.w) + 2;
            }
        }

        let id = image_id(index);
        return SynthImage {
            entry: AnnotatedImage {
                path: format!("images/{id}.pgm"),
                image_id: id,
                label,
                annotations,
            },
            image: canvas.img,
            skipped,
        };
    }
}
