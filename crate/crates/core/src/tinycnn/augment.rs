use rand::Rng;

use super::net::Tensor;
use super::CnnError;
use crate::imgdata::GrayImage;

/// Scales intensities to [0, 1] and copies the gray channel three times.
pub fn preprocess(img: &GrayImage, input_size: usize) -> Result<Tensor<f32>, CnnError> {
    if img.width() != input_size || img.height() != input_size {
        return Err(CnnError::Shape(format!(
            "patch is {}x{}, model expects {input_size}x{input_size}",
            img.width(),
            img.height()
        )));
    }
    let plane: Vec<f32> = img.pixels().iter().map(|&v| f32::from(v) / 255.0).collect();
    let mut data = Vec::with_capacity(plane.len() * 3);
    for _ in 0..3 {
        data.extend_from_slice(&plane);
    }
    Ok(Tensor {
        channels: 3,
        height: input_size,
        width: input_size,
        data,
    })
}

/// Applies perspective warp, posterization and sharpen-or-blur, each
/// independently with probability `p`. The same transform is applied to
/// every channel.
pub fn augment<R: Rng + ?Sized>(t: &Tensor<f32>, p: f64, rng: &mut R) -> Tensor<f32> {
    let draws: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let mut out = t.clone();
    if draws[0] < p {
        let side = t.width.min(t.height) as f64;
        let jitter: [f64; 8] = std::array::from_fn(|_| rng.random_range(-0.1..=0.1) * side);
        out = perspective_warp(&out, &jitter);
    }
    if draws[1] < p {
        let bits = rng.random_range(3..=7);
        posterize(&mut out, bits);
    }
    if draws[2] < p {
        out = if rng.random_bool(0.5) {
            sharpen(&out, 0.5)
        } else {
            gaussian_blur(&out)
        };
    }
    out
}

/// Keeps the top `bits` bits of each 8-bit-quantized value.
pub fn posterize(t: &mut Tensor<f32>, bits: u32) {
    let mask = if bits >= 8 {
        0xFF
    } else {
        0xFFu8 << (8 - bits)
    };
    for v in &mut t.data {
        let q = (*v * 255.0).round().clamp(0.0, 255.0) as u8;
        *v = f32::from(q & mask) / 255.0;
    }
}

/// 3x3 binomial blur with edge replication.
pub fn gaussian_blur(t: &Tensor<f32>) -> Tensor<f32> {
    let (w, h) = (t.width, t.height);
    let mut out = t.clone();
    let mut tmp = vec![0.0f32; w * h];
    for c in 0..t.channels {
        let src = t.plane(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                let l = row[x.saturating_sub(1)];
                let r = row[(x + 1).min(w - 1)];
                tmp[y * w + x] = (l + 2.0 * row[x] + r) * 0.25;
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            let up = y.saturating_sub(1);
            let down = (y + 1).min(h - 1);
            for x in 0..w {
                dst[y * w + x] =
                    (tmp[up * w + x] + 2.0 * tmp[y * w + x] + tmp[down * w + x]) * 0.25;
            }
        }
    }
    out
}

/// Unsharp mask `x + amount·(x − blur(x))`, clamped to [0, 1].
pub fn sharpen(t: &Tensor<f32>, amount: f32) -> Tensor<f32> {
    let blurred = gaussian_blur(t);
    let mut out = t.clone();
    for (o, &b) in out.data.iter_mut().zip(&blurred.data) {
        *o = (*o + amount * (*o - b)).clamp(0.0, 1.0);
    }
    out
}

/// Solves the 8x8 system for the homography taking `from` corners to `to`.
fn homography(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> Option<[f64; 9]> {
    let mut a = [[0.0f64; 9]; 8];
    for k in 0..4 {
        let (x, y) = from[k];
        let (u, v) = to[k];
        a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..9 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut h = [0.0; 9];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    h[8] = 1.0;
    Some(h)
}

/// Moves each output corner by `jitter` (x0,y0,…,x3,y3) and resamples
/// bilinearly; samples from outside the source are white.
pub fn perspective_warp(t: &Tensor<f32>, jitter: &[f64; 8]) -> Tensor<f32> {
    let (w, h) = (t.width, t.height);
    let (mx, my) = ((w - 1) as f64, (h - 1) as f64);
    let corners = [(0.0, 0.0), (mx, 0.0), (mx, my), (0.0, my)];
    let moved: [(f64, f64); 4] = std::array::from_fn(|k| {
        (
            corners[k].0 + jitter[2 * k],
            corners[k].1 + jitter[2 * k + 1],
        )
    });
    // maps output pixels back into the source
    let Some(hm) = homography(&moved, &corners) else {
        return t.clone();
    };
    let mut out = Tensor::filled(t.channels, h, w, 1.0f32);
    let sample = |plane: &[f32], x: i64, y: i64| -> f32 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            1.0
        } else {
            plane[y as usize * w + x as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let d = hm[6] * xf + hm[7] * yf + hm[8];
            if d.abs() < 1e-12 {
                continue;
            }
            let sx = (hm[0] * xf + hm[1] * yf + hm[2]) / d;
            let sy = (hm[3] * xf + hm[4] * yf + hm[5]) / d;
            if !(-1.0..=w as f64).contains(&sx) || !(-1.0..=h as f64).contains(&sy) {
                continue;
            }
            let (x0, y0) = (sx.floor() as i64, sy.floor() as i64);
            let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            for c in 0..t.channels {
                let p = t.plane(c);
                let top = sample(p, x0, y0) * (1.0 - fx) + sample(p, x0 + 1, y0) * fx;
                let bottom = sample(p, x0, y0 + 1) * (1.0 - fx) + sample(p, x0 + 1, y0 + 1) * fx;
                out.plane_mut(c)[y * w + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}
