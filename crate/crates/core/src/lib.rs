//! Markush structure detection on document images.
//!
//! Images are tiled into labeled patches on two half-offset grids
//! ([`patchgen`]), classified either by ORB keypoint matching against
//! indicator templates followed by gradient-boosted trees ([`orbfeat`],
//! [`tabular`]) or by a small convolutional network ([`tinycnn`]). CNN patch
//! verdicts are OR-aggregated to an image verdict; everything is scored by
//! [`evalmetrics`]. [`synth`] generates annotated corpora with known ground
//! truth and [`pipeline`] wires the pieces into the two experiments.

pub mod evalmetrics;
pub mod imgdata;
pub mod orbfeat;
pub mod patchgen;
pub mod pipeline;
pub mod synth;
pub mod tabular;
pub mod tinycnn;
