//! Oriented FAST keypoints with rotated BRIEF descriptors, brute-force
//! Hamming matching and the nearest/second-nearest ratio test.

mod pattern;

use std::f64::consts::TAU;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::imgdata::GrayImage;
use pattern::PATTERN;

/// Minimum distance from a keypoint to the level border.
pub const PATCH_RADIUS: usize = 18;
/// Radius of the disk used for the intensity-centroid orientation.
pub const ORIENTATION_RADIUS: i64 = 15;
pub const ANGLE_BINS: usize = 30;
const HARRIS_K: f64 = 0.04;
const HARRIS_HALF_WINDOW: i64 = 3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OrbError {
    #[error("invalid ORB configuration: {0}")]
    Config(String),
    #[error("descriptor dump: {0}")]
    Dump(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbConfig {
    pub max_features: usize,
    pub fast_threshold: u8,
    pub n_levels: usize,
    pub scale_factor: f64,
    /// Lowe ratio for [`match_ratio_test`].
    pub ratio: f64,
}

impl Default for OrbConfig {
    fn default() -> Self {
        Self {
            max_features: 500,
            fast_threshold: 20,
            n_levels: 4,
            scale_factor: 1.3,
            ratio: 0.75,
        }
    }
}

impl OrbConfig {
    pub fn validate(&self) -> Result<(), OrbError> {
        let bad = |m: &str| Err(OrbError::Config(m.into()));
        if self.max_features == 0 {
            return bad("max_features must be at least 1");
        }
        if self.fast_threshold == 0 {
            return bad("fast_threshold must be at least 1");
        }
        if self.n_levels == 0 {
            return bad("n_levels must be at least 1");
        }
        if self.scale_factor.is_nan() || self.scale_factor <= 1.0 {
            return bad("scale_factor must exceed 1");
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad("ratio must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Column in the keypoint's pyramid level.
    pub x: u32,
    pub y: u32,
    /// Harris corner score.
    pub response: f64,
    /// Orientation in radians, in [0, 2π).
    pub angle: f64,
    pub octave: u8,
}

/// 256-bit packed BRIEF descriptor; bit k lives in word k / 64.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    pub fn bit(&self, k: usize) -> bool {
        self.0[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn set_bit(&mut self, k: usize) {
        self.0[k / 64] |= 1 << (k % 64);
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0; 32];
        for (w, chunk) in self.0.iter().zip(out.chunks_exact_mut(8)) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        Self(std::array::from_fn(|i| {
            u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes"))
        }))
    }
}

impl Serialize for Descriptor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for Descriptor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(&text, &mut bytes).map_err(serde::de::Error::custom)?;
        Ok(Self::from_bytes(&bytes))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeypointMatch {
    pub query_index: usize,
    pub template_index: usize,
    pub distance: u32,
}

/// Number of differing bits.
pub fn hamming(a: &Descriptor, b: &Descriptor) -> u32 {
    a.0.iter()
        .zip(&b.0)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum()
}

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(i64, i64); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// FAST-9 segment test: nine contiguous circle pixels all brighter than
/// `center + t` or all darker than `center - t`.
pub fn fast9(img: &GrayImage, x: usize, y: usize, threshold: u8) -> bool {
    if x < 3 || y < 3 || x + 3 >= img.width() || y + 3 >= img.height() {
        return false;
    }
    let c = i32::from(img.get(x, y));
    let t = i32::from(threshold);
    let ring: [i32; 16] = std::array::from_fn(|k| {
        let (dx, dy) = CIRCLE[k];
        i32::from(img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize))
    });
    for sign in [1, -1] {
        let mut run = 0;
        for k in 0..32 {
            let v = ring[k % 16];
            if sign * (v - c) > t {
                run += 1;
                if run >= 9 {
                    return true;
                }
            } else {
                run = 0;
            }
        }
    }
    false
}

/// Harris score `det(M) − k·trace(M)²` over a 7×7 window of Sobel gradients.
pub fn harris_response(img: &GrayImage, x: usize, y: usize) -> f64 {
    let p = |xx: i64, yy: i64| -> f64 {
        let cx = xx.clamp(0, img.width() as i64 - 1) as usize;
        let cy = yy.clamp(0, img.height() as i64 - 1) as usize;
        f64::from(img.get(cx, cy))
    };
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for dy in -HARRIS_HALF_WINDOW..=HARRIS_HALF_WINDOW {
        for dx in -HARRIS_HALF_WINDOW..=HARRIS_HALF_WINDOW {
            let (u, v) = (x as i64 + dx, y as i64 + dy);
            let gx = (p(u + 1, v - 1) + 2.0 * p(u + 1, v) + p(u + 1, v + 1))
                - (p(u - 1, v - 1) + 2.0 * p(u - 1, v) + p(u - 1, v + 1));
            let gy = (p(u - 1, v + 1) + 2.0 * p(u, v + 1) + p(u + 1, v + 1))
                - (p(u - 1, v - 1) + 2.0 * p(u, v - 1) + p(u + 1, v - 1));
            sxx += gx * gx;
            syy += gy * gy;
            sxy += gx * gy;
        }
    }
    sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy).powi(2)
}

/// Intensity-centroid orientation over the radius-15 disk, in [0, 2π).
pub fn orientation(img: &GrayImage, x: usize, y: usize) -> f64 {
    let r = ORIENTATION_RADIUS;
    let (mut m10, mut m01) = (0.0, 0.0);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let v = f64::from(img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize));
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    let a = m01.atan2(m10);
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Area-averaging resize.
pub fn resize_area(img: &GrayImage, new_w: usize, new_h: usize) -> GrayImage {
    let weights = |src: usize, dst: usize| -> Vec<Vec<(usize, f64)>> {
        let f = src as f64 / dst as f64;
        (0..dst)
            .map(|o| {
                let (a, b) = (o as f64 * f, (o + 1) as f64 * f);
                let mut w = Vec::new();
                let mut i = a.floor() as usize;
                while (i as f64) < b && i < src {
                    let cover = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                    if cover > 0.0 {
                        w.push((i, cover / f));
                    }
                    i += 1;
                }
                w
            })
            .collect()
    };
    let wx = weights(img.width(), new_w);
    let wy = weights(img.height(), new_h);
    let mut rows = vec![0.0f64; img.height() * new_w];
    for y in 0..img.height() {
        let src = img.row(y);
        for (ox, w) in wx.iter().enumerate() {
            rows[y * new_w + ox] = w.iter().map(|&(i, k)| f64::from(src[i]) * k).sum();
        }
    }
    let mut out = vec![0u8; new_w * new_h];
    for (oy, w) in wy.iter().enumerate() {
        for ox in 0..new_w {
            let v: f64 = w.iter().map(|&(i, k)| rows[i * new_w + ox] * k).sum();
            out[oy * new_w + ox] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    GrayImage::new(new_w, new_h, out).expect("positive dimensions")
}

/// Level `l` is the source box-downsampled by `scale_factor^l`. Levels too
/// small to hold a keypoint are omitted.
pub fn build_pyramid(img: &GrayImage, n_levels: usize, scale_factor: f64) -> Vec<GrayImage> {
    let mut levels = vec![img.clone()];
    for l in 1..n_levels {
        let s = scale_factor.powi(l as i32);
        let w = (img.width() as f64 / s).round() as usize;
        let h = (img.height() as f64 / s).round() as usize;
        if w <= 2 * PATCH_RADIUS || h <= 2 * PATCH_RADIUS {
            break;
        }
        levels.push(resize_area(img, w, h));
    }
    levels
}

fn detect_on_level(level: &GrayImage, octave: u8, threshold: u8) -> Vec<Keypoint> {
    let (w, h) = (level.width(), level.height());
    if w <= 2 * PATCH_RADIUS || h <= 2 * PATCH_RADIUS {
        return Vec::new();
    }
    let mut score = vec![f64::NEG_INFINITY; w * h];
    let mut candidates = Vec::new();
    for y in PATCH_RADIUS..h - PATCH_RADIUS {
        for x in PATCH_RADIUS..w - PATCH_RADIUS {
            if fast9(level, x, y, threshold) {
                let r = harris_response(level, x, y);
                score[y * w + x] = r;
                candidates.push((x, y));
            }
        }
    }
    candidates
        .into_iter()
        .filter(|&(x, y)| {
            // keep strict 3x3 maxima; equal neighbours yield to the earlier pixel
            let s = score[y * w + x];
            (-1i64..=1).all(|dy| {
                (-1i64..=1).all(|dx| {
                    if dx == 0 && dy == 0 {
                        return true;
                    }
                    let (u, v) = ((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                    let o = score[v * w + u];
                    let earlier = (dy, dx) < (0, 0);
                    if earlier {
                        o < s
                    } else {
                        o <= s
                    }
                })
            })
        })
        .map(|(x, y)| Keypoint {
            x: x as u32,
            y: y as u32,
            response: score[y * w + x],
            angle: orientation(level, x, y),
            octave,
        })
        .collect()
}

/// FAST-9 keypoints over the pyramid, ranked by Harris response and capped
/// at `max_features`.
pub fn detect_keypoints(img: &GrayImage, cfg: &OrbConfig) -> Vec<Keypoint> {
    let pyramid = build_pyramid(img, cfg.n_levels, cfg.scale_factor);
    detect_on_pyramid(&pyramid, cfg)
}

fn detect_on_pyramid(pyramid: &[GrayImage], cfg: &OrbConfig) -> Vec<Keypoint> {
    let mut kps: Vec<Keypoint> = pyramid
        .iter()
        .enumerate()
        .flat_map(|(l, level)| detect_on_level(level, l as u8, cfg.fast_threshold))
        .collect();
    kps.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.octave.cmp(&b.octave))
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    kps.truncate(cfg.max_features);
    kps
}

fn rotated_patterns() -> &'static Vec<[[i8; 4]; 256]> {
    static TABLE: OnceLock<Vec<[[i8; 4]; 256]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..ANGLE_BINS)
            .map(|bin| {
                let a = TAU * bin as f64 / ANGLE_BINS as f64;
                let (s, c) = a.sin_cos();
                let rot = |x: i8, y: i8| -> (i8, i8) {
                    let (x, y) = (f64::from(x), f64::from(y));
                    ((c * x - s * y).round() as i8, (s * x + c * y).round() as i8)
                };
                std::array::from_fn(|k| {
                    let [x1, y1, x2, y2] = PATTERN[k];
                    let (a1, b1) = rot(x1, y1);
                    let (a2, b2) = rot(x2, y2);
                    [a1, b1, a2, b2]
                })
            })
            .collect()
    })
}

/// Orientation bin of an angle, wrapping at 2π.
pub fn angle_bin(angle: f64) -> usize {
    let b = (angle / TAU * ANGLE_BINS as f64).round() as i64;
    b.rem_euclid(ANGLE_BINS as i64) as usize
}

/// Summed-area table with a zero top row and left column.
struct Integral {
    w: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(img: &GrayImage) -> Self {
        let w = img.width() + 1;
        let mut sums = vec![0u32; w * (img.height() + 1)];
        for y in 0..img.height() {
            let mut run = 0u32;
            for (x, &v) in img.row(y).iter().enumerate() {
                run += u32::from(v);
                sums[(y + 1) * w + x + 1] = sums[y * w + x + 1] + run;
            }
        }
        Self { w, sums }
    }

    /// Sum of the 5×5 box centred on (x, y); the caller guarantees bounds.
    fn box5(&self, x: i64, y: i64) -> u32 {
        let (x0, y0, x1, y1) = (
            (x - 2) as usize,
            (y - 2) as usize,
            (x + 3) as usize,
            (y + 3) as usize,
        );
        self.sums[y1 * self.w + x1] + self.sums[y0 * self.w + x0]
            - self.sums[y0 * self.w + x1]
            - self.sums[y1 * self.w + x0]
    }
}

fn describe_on_level(level: &GrayImage, integral: &Integral, kp: &Keypoint) -> Option<Descriptor> {
    let r = PATCH_RADIUS as u32;
    if kp.x < r
        || kp.y < r
        || kp.x as usize + PATCH_RADIUS >= level.width()
        || kp.y as usize + PATCH_RADIUS >= level.height()
    {
        return None;
    }
    let pattern = &rotated_patterns()[angle_bin(kp.angle)];
    let (cx, cy) = (i64::from(kp.x), i64::from(kp.y));
    let mut d = Descriptor::default();
    for (k, &[x1, y1, x2, y2]) in pattern.iter().enumerate() {
        let a = integral.box5(cx + i64::from(x1), cy + i64::from(y1));
        let b = integral.box5(cx + i64::from(x2), cy + i64::from(y2));
        if a < b {
            d.set_bit(k);
        }
    }
    Some(d)
}

/// Rotated-BRIEF descriptors for keypoints of `img` (level coordinates are
/// resolved against the pyramid built with `cfg`). Keypoints too close to a
/// border are dropped; the returned keypoints align with the descriptors.
pub fn compute_descriptors(
    img: &GrayImage,
    kps: &[Keypoint],
    cfg: &OrbConfig,
) -> (Vec<Keypoint>, Vec<Descriptor>) {
    let pyramid = build_pyramid(img, cfg.n_levels, cfg.scale_factor);
    describe_on_pyramid(&pyramid, kps)
}

fn describe_on_pyramid(
    pyramid: &[GrayImage],
    kps: &[Keypoint],
) -> (Vec<Keypoint>, Vec<Descriptor>) {
    let integrals: Vec<Integral> = pyramid.iter().map(Integral::new).collect();
    kps.iter()
        .filter_map(|kp| {
            let l = usize::from(kp.octave);
            let level = pyramid.get(l)?;
            describe_on_level(level, &integrals[l], kp).map(|d| (*kp, d))
        })
        .unzip()
}

/// Detection plus description with one shared pyramid.
pub fn detect_and_describe(img: &GrayImage, cfg: &OrbConfig) -> (Vec<Keypoint>, Vec<Descriptor>) {
    let pyramid = build_pyramid(img, cfg.n_levels, cfg.scale_factor);
    let kps = detect_on_pyramid(&pyramid, cfg);
    describe_on_pyramid(&pyramid, &kps)
}

/// For each query descriptor, the nearest template descriptor is kept when
/// `d1 < ratio · d2`. Returns matches sorted by distance (then query index);
/// fewer than two templates yields no matches.
pub fn match_ratio_test(
    query: &[Descriptor],
    templates: &[Descriptor],
    ratio: f64,
) -> Vec<KeypointMatch> {
    if templates.len() < 2 {
        return Vec::new();
    }
    let mut out: Vec<KeypointMatch> = query
        .iter()
        .enumerate()
        .filter_map(|(qi, q)| {
            let (mut best, mut second) = ((u32::MAX, 0usize), u32::MAX);
            for (ti, t) in templates.iter().enumerate() {
                let d = hamming(q, t);
                if d < best.0 {
                    second = best.0;
                    best = (d, ti);
                } else if d < second {
                    second = d;
                }
            }
            (f64::from(best.0) < ratio * f64::from(second)).then_some(KeypointMatch {
                query_index: qi,
                template_index: best.1,
                distance: best.0,
            })
        })
        .collect();
    out.sort_by_key(|m| (m.distance, m.query_index));
    out
}

const DUMP_MAGIC: &[u8; 4] = b"ORB1";

/// Binary dump: `ORB1`, u32 count, then per record u16 x, u16 y, f32 angle,
/// u8 octave and 32 descriptor bytes, all little-endian.
pub fn encode_descriptors(kps: &[Keypoint], descs: &[Descriptor]) -> Result<Vec<u8>, OrbError> {
    if kps.len() != descs.len() {
        return Err(OrbError::Dump("keypoint/descriptor count mismatch".into()));
    }
    let mut out = Vec::with_capacity(8 + kps.len() * 41);
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&(kps.len() as u32).to_le_bytes());
    for (kp, d) in kps.iter().zip(descs) {
        let x = u16::try_from(kp.x).map_err(|_| OrbError::Dump("x exceeds u16".into()))?;
        let y = u16::try_from(kp.y).map_err(|_| OrbError::Dump("y exceeds u16".into()))?;
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
        out.extend_from_slice(&(kp.angle as f32).to_le_bytes());
        out.push(kp.octave);
        out.extend_from_slice(&d.to_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_descriptors`]; responses are not stored and read as 0.
pub fn decode_descriptors(bytes: &[u8]) -> Result<(Vec<Keypoint>, Vec<Descriptor>), OrbError> {
    let bad = |m: &str| OrbError::Dump(m.into());
    if bytes.len() < 8 || &bytes[..4] != DUMP_MAGIC {
        return Err(bad("missing ORB1 header"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() != n * 41 {
        return Err(bad("record count does not match payload"));
    }
    Ok(body
        .chunks_exact(41)
        .map(|r| {
            let kp = Keypoint {
                x: u32::from(u16::from_le_bytes([r[0], r[1]])),
                y: u32::from(u16::from_le_bytes([r[2], r[3]])),
                response: 0.0,
                angle: f64::from(f32::from_le_bytes(r[4..8].try_into().expect("4 bytes"))),
                octave: r[8],
            };
            (
                kp,
                Descriptor::from_bytes(r[9..41].try_into().expect("32 bytes")),
            )
        })
        .unzip())
}
