//! Procedural stroke glyphs rendered as 1-bit ink on white.

use serde::{Deserialize, Serialize};

use crate::imgdata::{GrayImage, Rect};

/// Ink intensity used for all strokes.
pub const INK: u8 = 0;

/// Markush indicator symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GlyphId {
    #[serde(rename = "R_label")]
    RLabel,
    #[serde(rename = "X_label")]
    XLabel,
    #[serde(rename = "wavy_line_open")]
    WavyLineOpen,
    #[serde(rename = "paren_n")]
    ParenN,
    #[serde(rename = "arrow")]
    Arrow,
    #[serde(rename = "halogen_Z")]
    HalogenZ,
}

impl GlyphId {
    pub const ALL: [GlyphId; 6] = [
        GlyphId::RLabel,
        GlyphId::XLabel,
        GlyphId::WavyLineOpen,
        GlyphId::ParenN,
        GlyphId::Arrow,
        GlyphId::HalogenZ,
    ];

    pub(crate) fn shape(self) -> Shape {
        match self {
            GlyphId::RLabel => Shape::new(
                0.7,
                vec![
                    vec![
                        (0.0, 1.0),
                        (0.0, 0.0),
                        (0.45, 0.0),
                        (0.65, 0.12),
                        (0.65, 0.38),
                        (0.45, 0.5),
                        (0.0, 0.5),
                    ],
                    vec![(0.3, 0.5), (0.7, 1.0)],
                ],
            ),
            GlyphId::XLabel => Shape::new(
                0.7,
                vec![vec![(0.0, 0.0), (0.7, 1.0)], vec![(0.7, 0.0), (0.0, 1.0)]],
            ),
            GlyphId::HalogenZ => Shape::new(
                0.65,
                vec![vec![(0.0, 0.0), (0.65, 0.0), (0.0, 1.0), (0.65, 1.0)]],
            ),
            GlyphId::WavyLineOpen => {
                let pts = (0..=36)
                    .map(|k| {
                        let x = 2.0 * f64::from(k) / 36.0;
                        (x, 0.5 - 0.5 * (std::f64::consts::PI * 3.0 * x).sin())
                    })
                    .collect();
                Shape::new(2.0, vec![pts])
            }
            GlyphId::ParenN => {
                let arc = |x0: f64, bulge: f64| -> Vec<(f64, f64)> {
                    (0..=12)
                        .map(|k| {
                            let t = f64::from(k) / 12.0;
                            (x0 + bulge * (std::f64::consts::PI * t).sin(), t)
                        })
                        .collect()
                };
                Shape::new(
                    1.15,
                    vec![
                        arc(0.22, -0.22),
                        arc(0.6, 0.22),
                        vec![(0.9, 0.62), (0.9, 1.0)],
                        vec![
                            (0.9, 0.7),
                            (0.98, 0.62),
                            (1.07, 0.62),
                            (1.15, 0.7),
                            (1.15, 1.0),
                        ],
                    ],
                )
            }
            GlyphId::Arrow => Shape::new(
                1.6,
                vec![
                    vec![(0.0, 0.5), (1.6, 0.5)],
                    vec![(1.15, 0.0), (1.6, 0.5), (1.15, 1.0)],
                ],
            ),
        }
    }
}

impl std::fmt::Display for GlyphId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_string(self).expect("glyph id serializes");
        f.write_str(s.trim_matches('"'))
    }
}

/// Non-indicator atom letters drawn as distractors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomLetter {
    C,
    O,
    N,
    H,
}

impl AtomLetter {
    pub const ALL: [AtomLetter; 4] = [AtomLetter::C, AtomLetter::O, AtomLetter::N, AtomLetter::H];

    pub(crate) fn shape(self) -> Shape {
        let ellipse = |from: f64, to: f64| -> Vec<(f64, f64)> {
            (0..=24)
                .map(|k| {
                    let a = from + (to - from) * f64::from(k) / 24.0;
                    (0.35 + 0.35 * a.cos(), 0.5 + 0.5 * a.sin())
                })
                .collect()
        };
        use std::f64::consts::PI;
        match self {
            AtomLetter::C => Shape::new(0.7, vec![ellipse(PI * 0.25, PI * 1.75)]),
            AtomLetter::O => Shape::new(0.7, vec![ellipse(0.0, 2.0 * PI)]),
            AtomLetter::N => Shape::new(
                0.65,
                vec![vec![(0.0, 1.0), (0.0, 0.0), (0.65, 1.0), (0.65, 0.0)]],
            ),
            AtomLetter::H => Shape::new(
                0.65,
                vec![
                    vec![(0.0, 0.0), (0.0, 1.0)],
                    vec![(0.65, 0.0), (0.65, 1.0)],
                    vec![(0.0, 0.5), (0.65, 0.5)],
                ],
            ),
        }
    }
}

/// Polylines in a unit-height box of the given aspect width.
#[derive(Clone, Debug)]
pub(crate) struct Shape {
    pub width: f64,
    pub strokes: Vec<Vec<(f64, f64)>>,
}

impl Shape {
    fn new(width: f64, strokes: Vec<Vec<(f64, f64)>>) -> Self {
        Self { width, strokes }
    }
}

/// Stroke half-width for a glyph of the given pixel height.
pub fn stroke_radius(height: u32) -> f64 {
    (f64::from(height) / 14.0).max(0.5)
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Inks every pixel whose center lies within `radius` of the segment a-b.
pub(crate) fn draw_segment(img: &mut GrayImage, a: (f64, f64), b: (f64, f64), radius: f64) {
    let x0 = (a.0.min(b.0) - radius).floor().max(0.0) as i64;
    let y0 = (a.1.min(b.1) - radius).floor().max(0.0) as i64;
    let x1 = ((a.0.max(b.0) + radius).ceil() as i64).min(img.width() as i64 - 1);
    let y1 = ((a.1.max(b.1) + radius).ceil() as i64).min(img.height() as i64 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if segment_distance((x as f64, y as f64), a, b) <= radius + 1e-9 {
                img.set(x as usize, y as usize, INK);
            }
        }
    }
}

/// Renders a shape `height` pixels tall, rotated by `rotation` radians about
/// its center, on a white canvas with a one-pixel margin. Returns the canvas
/// and the ink bounding box within it.
pub(crate) fn render_shape(shape: &Shape, height: u32, rotation: f64) -> (GrayImage, Rect) {
    let h = f64::from(height.max(1));
    let r = stroke_radius(height);
    // centerlines span [r, h - 1 - r] so the ink spans h pixels
    let scale = (h - 1.0 - 2.0 * r).max(0.0);
    let (cx, cy) = (shape.width * 0.5, 0.5);
    let (sin, cos) = rotation.sin_cos();
    let rotated: Vec<Vec<(f64, f64)>> = shape
        .strokes
        .iter()
        .map(|s| {
            s.iter()
                .map(|&(x, y)| {
                    let (dx, dy) = ((x - cx) * scale, (y - cy) * scale);
                    (cos * dx - sin * dy, sin * dx + cos * dy)
                })
                .collect()
        })
        .collect();
    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in rotated.iter().flatten() {
        minx = minx.min(p.0);
        miny = miny.min(p.1);
        maxx = maxx.max(p.0);
        maxy = maxy.max(p.1);
    }
    // one pixel of white around the stroke extents
    let ox = r + 1.0 - minx;
    let oy = r + 1.0 - miny;
    let w = (maxx - minx + 2.0 * r + 3.0).ceil() as usize;
    let hh = (maxy - miny + 2.0 * r + 3.0).ceil() as usize;
    let mut img = GrayImage::white(w.max(3), hh.max(3));
    for stroke in &rotated {
        let pts: Vec<(f64, f64)> = stroke.iter().map(|&(x, y)| (x + ox, y + oy)).collect();
        if pts.len() == 1 {
            draw_segment(&mut img, pts[0], pts[0], r);
        }
        for seg in pts.windows(2) {
            draw_segment(&mut img, seg[0], seg[1], r);
        }
    }
    let bbox = img.ink_bbox(128).unwrap_or_else(|| Rect::new(1, 1, 1, 1));
    (img, bbox)
}

/// Renders an indicator glyph; see [`render_shape`].
pub fn render_glyph(id: GlyphId, height: u32, rotation: f64) -> (GrayImage, Rect) {
    render_shape(&id.shape(), height, rotation)
}
