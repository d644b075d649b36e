//! Image and dataset representation: rasters, padding and cropping, manifest
//! I/O, stratified splits and dataset statistics.

mod image;
mod io;
mod manifest;

pub use image::{crop, luma, pad_white, GrayImage, Rect, WHITE};
pub(crate) use io::write_file;
pub use io::{decode_image, encode_pgm, load_image, save_pgm, save_png};
pub use manifest::{
    dataset_stats, nearest_rank_quantile, split_dataset, AnnotatedImage, AnnotationBox, Dataset,
    DatasetManifest, DatasetStats, Split, SplitRatios,
};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or malformed image: {0}")]
    Format(String),
    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("rectangle must have positive width and height")]
    EmptyRect,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("need at least {needed} images to populate every split, have {available}")]
    TooFewImages { needed: usize, available: usize },
    #[error("manifest has no images")]
    EmptyManifest,
    #[error("manifest: {0}")]
    Manifest(String),
}
