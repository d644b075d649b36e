//! Raster I/O: binary PGM (P5), which is the native intermediate format, and
//! 8-bit PNG input.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::image::{luma, GrayImage};
use super::DataError;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Reads a PGM or PNG file, converting color to grayscale.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_image(&bytes)
}

/// Decodes an in-memory PGM or PNG file.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage, DataError> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err(DataError::Format("unrecognized raster signature".into()))
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width() as u32,
        img.height() as u32,
    );
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| DataError::Format(e.to_string()))?;
    writer
        .write_image_data(img.pixels())
        .map_err(|e| DataError::Format(e.to_string()))?;
    writer
        .finish()
        .map_err(|e| DataError::Format(e.to_string()))?;
    Ok(())
}

/// Returns the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

fn parse_header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize, DataError> {
    next_token(bytes, pos)
        .and_then(|t| std::str::from_utf8(t).ok())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DataError::Format(format!("PGM header: bad {what}")))
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, DataError> {
    let mut pos = 2;
    let width = parse_header_number(bytes, &mut pos, "width")?;
    let height = parse_header_number(bytes, &mut pos, "height")?;
    let maxval = parse_header_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(DataError::Format(format!(
            "PGM maxval {maxval} unsupported"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| DataError::Format("PGM dimensions overflow".into()))?;
    let data = bytes
        .get(pos..pos + n)
        .ok_or_else(|| DataError::Format("PGM raster truncated".into()))?;
    let pixels = if maxval == 255 {
        data.to_vec()
    } else {
        data.iter()
            .map(|&v| ((usize::from(v).min(maxval) * 255 + maxval / 2) / maxval) as u8)
            .collect()
    };
    GrayImage::new(width, height, pixels)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, DataError> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| DataError::Format(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| DataError::Format("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| DataError::Format(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let channels = info.color_type.samples();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(DataError::Format(format!(
            "PNG bit depth {:?} unsupported",
            info.bit_depth
        )));
    }
    let pixels: Vec<u8> = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => {
            data.chunks_exact(channels).map(|c| c[0]).collect()
        }
        png::ColorType::Rgb | png::ColorType::Rgba => data
            .chunks_exact(channels)
            .map(|c| luma(c[0], c[1], c[2]))
            .collect(),
        png::ColorType::Indexed => {
            return Err(DataError::Format("indexed PNG was not expanded".into()))
        }
    };
    GrayImage::new(w, h, pixels)
}

/// Writes raw bytes, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut f = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    f.write_all(bytes).map_err(io_err)?;
    f.flush().map_err(io_err)
}
