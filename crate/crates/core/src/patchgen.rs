//! Labeled patch generation on two half-offset grids, plus annotation-centered
//! template patches.
//!
//! Grid A tiles the image from the origin. Grid B is shifted by half a patch
//! in both axes and starts at (-P/2, -P/2), so any annotation no larger than
//! P/2 on a side that straddles a grid-A seam sits fully inside a grid-B
//! patch. Parts of a patch rect outside the image are filled white.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::imgdata::{
    crop, encode_pgm, write_file, AnnotatedImage, AnnotationBox, DataError, GrayImage, Rect, WHITE,
};

#[derive(Debug, thiserror::Error)]
pub enum PatchError {
    #[error("patch size must be even and at least 2, got {0}")]
    PatchSize(u32),
    #[error("overlap threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("template size must be positive")]
    TemplateSize,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub patch_size: u32,
    #[serde(default = "default_threshold")]
    pub overlap_threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl PatchSpec {
    pub fn new(patch_size: u32, overlap_threshold: f64) -> Result<Self, PatchError> {
        let spec = Self {
            patch_size,
            overlap_threshold,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_size(patch_size: u32) -> Result<Self, PatchError> {
        Self::new(patch_size, default_threshold())
    }

    pub fn validate(&self) -> Result<(), PatchError> {
        if self.patch_size < 2 || !self.patch_size.is_multiple_of(2) {
            return Err(PatchError::PatchSize(self.patch_size));
        }
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0) {
            return Err(PatchError::Threshold(self.overlap_threshold));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Grid {
    A,
    B,
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Grid::A => "A",
            Grid::B => "B",
        })
    }
}

/// One cell of a grid: column `i`, row `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridCell {
    pub grid: Grid,
    pub i: u32,
    pub j: u32,
    pub rect: Rect,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Patch {
    pub source_image_id: String,
    pub grid: Grid,
    pub i: u32,
    pub j: u32,
    /// Top-left corner in source coordinates; negative for the first grid-B
    /// row and column.
    pub origin: (i64, i64),
    pub pixels: GrayImage,
    pub label: bool,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Patch rects of both grids, grid A row-major then grid B row-major.
pub fn generate_grids(img_w: usize, img_h: usize, spec: &PatchSpec) -> Vec<GridCell> {
    let p = u64::from(spec.patch_size);
    let half = p / 2;
    let mut cells = Vec::new();
    for (grid, offset) in [(Grid::A, 0i64), (Grid::B, -(half as i64))] {
        let extra = if grid == Grid::A { 0 } else { half };
        let cols = ceil_div(img_w as u64 + extra, p).max(1);
        let rows = ceil_div(img_h as u64 + extra, p).max(1);
        for j in 0..rows {
            for i in 0..cols {
                cells.push(GridCell {
                    grid,
                    i: i as u32,
                    j: j as u32,
                    rect: Rect::new(
                        (i * p) as i64 + offset,
                        (j * p) as i64 + offset,
                        spec.patch_size,
                        spec.patch_size,
                    ),
                });
            }
        }
    }
    cells
}

/// True iff some annotation has strictly more than `threshold` of its area
/// inside `rect`.
pub fn label_patch(rect: &Rect, annotations: &[AnnotationBox], threshold: f64) -> bool {
    annotations.iter().any(|a| {
        let area = a.area();
        area > 0 && (rect.intersection_area(&a.rect()) as f64 / area as f64) > threshold
    })
}

/// Crops and labels every grid cell of one image.
pub fn generate_patches(entry: &AnnotatedImage, img: &GrayImage, spec: &PatchSpec) -> Vec<Patch> {
    generate_grids(img.width(), img.height(), spec)
        .into_iter()
        .map(|cell| Patch {
            source_image_id: entry.image_id.clone(),
            grid: cell.grid,
            i: cell.i,
            j: cell.j,
            origin: (cell.rect.x, cell.rect.y),
            pixels: crop(img, cell.rect, WHITE).expect("grid rects are non-empty"),
            label: label_patch(&cell.rect, &entry.annotations, spec.overlap_threshold),
        })
        .collect()
}

/// One white `template_size`² canvas per annotation with the annotation's
/// contents centered on it. Oversized annotations are center-cropped.
pub fn extract_templates(
    entry: &AnnotatedImage,
    img: &GrayImage,
    template_size: u32,
) -> Result<Vec<GrayImage>, PatchError> {
    if template_size == 0 {
        return Err(PatchError::TemplateSize);
    }
    entry
        .annotations
        .iter()
        .map(|a| {
            let w = a.w.min(template_size);
            let h = a.h.min(template_size);
            let src = Rect::new(
                i64::from(a.x) + i64::from((a.w - w) / 2),
                i64::from(a.y) + i64::from((a.h - h) / 2),
                w,
                h,
            );
            let content = crop(img, src, WHITE)?;
            let t = template_size as usize;
            let mut canvas = GrayImage::white(t, t);
            let ox = ((template_size - w) / 2) as i64;
            let oy = ((template_size - h) / 2) as i64;
            canvas.blit_where(&content, ox, oy, |_| true);
            Ok(canvas)
        })
        .collect()
}

/// Entry of the JSON index written next to a patch dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchIndexEntry {
    pub file: String,
    pub image_id: String,
    pub grid: Grid,
    pub i: u32,
    pub j: u32,
    pub x: i64,
    pub y: i64,
    pub label: bool,
}

pub fn patch_file_name(p: &Patch) -> String {
    format!(
        "{}_{}_{}_{}_{}.pgm",
        p.source_image_id,
        p.grid,
        p.i,
        p.j,
        u8::from(p.label)
    )
}

/// Writes each patch as a PGM plus `index.json` into `dir`.
pub fn dump_patches(patches: &[Patch], dir: &Path) -> Result<Vec<PatchIndexEntry>, DataError> {
    let mut index = Vec::with_capacity(patches.len());
    for p in patches {
        let file = patch_file_name(p);
        write_file(&dir.join(&file), &encode_pgm(&p.pixels))?;
        index.push(PatchIndexEntry {
            file,
            image_id: p.source_image_id.clone(),
            grid: p.grid,
            i: p.i,
            j: p.j,
            x: p.origin.0,
            y: p.origin.1,
            label: p.label,
        });
    }
    let json = serde_json::to_string_pretty(&index).expect("index serializes");
    write_file(&dir.join("index.json"), json.as_bytes())?;
    Ok(index)
}
