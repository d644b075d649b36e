use super::DataError;

/// White background intensity.
pub const WHITE: u8 = 255;

/// 8-bit single-channel raster, row-major. 0 is black ink, 255 is white paper.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// Axis-aligned rectangle with a signed origin. Rects may extend past the
/// image they are applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: i64, y: i64, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn right(&self) -> i64 {
        self.x + i64::from(self.w)
    }

    pub fn bottom(&self) -> i64 {
        self.y + i64::from(self.h)
    }

    /// Pixel area shared by the two rects.
    pub fn intersection_area(&self, other: &Rect) -> u64 {
        let w = (self.right().min(other.right()) - self.x.max(other.x)).max(0);
        let h = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0);
        (w * h) as u64
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, DataError> {
        if width == 0 || height == 0 {
            return Err(DataError::InvalidDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(DataError::BufferLength {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image of a single intensity. Panics on zero dimensions.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn white(width: usize, height: usize) -> Self {
        Self::filled(width, height, WHITE)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Signed lookup; out-of-bounds coordinates return `None`.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> Option<u8> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width as u32, self.height as u32)
    }

    /// Number of pixels darker than `threshold`.
    pub fn ink_count(&self, threshold: u8) -> usize {
        self.pixels.iter().filter(|&&p| p < threshold).count()
    }

    /// Tight bounding box of pixels darker than `threshold`.
    pub fn ink_bbox(&self, threshold: u8) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        for y in 0..self.height {
            for (x, &p) in self.row(y).iter().enumerate() {
                if p < threshold {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| {
            Rect::new(
                x0 as i64,
                y0 as i64,
                (x1 - x0 + 1) as u32,
                (y1 - y0 + 1) as u32,
            )
        })
    }

    /// Copies `src` onto `self` with its top-left corner at (`x`, `y`),
    /// clipping whatever falls outside. Only pixels accepted by `keep` are
    /// written.
    pub fn blit_where(&mut self, src: &GrayImage, x: i64, y: i64, keep: impl Fn(u8) -> bool) {
        for sy in 0..src.height {
            let ty = y + sy as i64;
            if ty < 0 || ty as usize >= self.height {
                continue;
            }
            for sx in 0..src.width {
                let tx = x + sx as i64;
                if tx < 0 || tx as usize >= self.width {
                    continue;
                }
                let v = src.get(sx, sy);
                if keep(v) {
                    self.set(tx as usize, ty as usize, v);
                }
            }
        }
    }

    /// Rotates a quarter turn clockwise.
    pub fn rotate90(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                // (x, y) -> (h - 1 - y, x) in a h-wide image
                out[x * h + (h - 1 - y)] = self.get(x, y);
            }
        }
        GrayImage {
            width: h,
            height: w,
            pixels: out,
        }
    }
}

/// Adds white borders of the given widths.
pub fn pad_white(
    img: &GrayImage,
    left: usize,
    top: usize,
    right: usize,
    bottom: usize,
) -> GrayImage {
    let width = img.width + left + right;
    let height = img.height + top + bottom;
    let mut out = GrayImage::white(width, height);
    for y in 0..img.height {
        let dst = (y + top) * width + left;
        out.pixels[dst..dst + img.width].copy_from_slice(img.row(y));
    }
    out
}

/// Crops `rect` out of `img`; regions outside the image take `fill`.
pub fn crop(img: &GrayImage, rect: Rect, fill: u8) -> Result<GrayImage, DataError> {
    if rect.w == 0 || rect.h == 0 {
        return Err(DataError::EmptyRect);
    }
    let (w, h) = (rect.w as usize, rect.h as usize);
    let mut out = GrayImage::filled(w, h, fill);
    let x0 = rect.x.max(0);
    let x1 = rect.right().min(img.width as i64);
    let y0 = rect.y.max(0);
    let y1 = rect.bottom().min(img.height as i64);
    if x0 >= x1 || y0 >= y1 {
        return Ok(out);
    }
    let span = (x1 - x0) as usize;
    for sy in y0..y1 {
        let src = sy as usize * img.width + x0 as usize;
        let dst = (sy - rect.y) as usize * w + (x0 - rect.x) as usize;
        out.pixels[dst..dst + span].copy_from_slice(&img.pixels[src..src + span]);
    }
    Ok(out)
}

/// Integer luma with round-half-up: (299 R + 587 G + 114 B + 500) / 1000.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000) as u8
}
