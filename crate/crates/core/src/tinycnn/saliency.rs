use super::augment::preprocess;
use super::net::ConvNet;
use super::CnnError;
use crate::imgdata::GrayImage;

/// Vanilla input-gradient saliency of the predicted class: per pixel the
/// largest absolute channel gradient, min-max scaled to 0..=255. A flat
/// gradient gives an all-zero map.
pub fn saliency_map(model: &ConvNet<f32>, patch: &GrayImage) -> Result<GrayImage, CnnError> {
    let x = preprocess(patch, model.config().input_size)?.cast::<f64>();
    let net = model.cast::<f64>();
    let logits = net.forward(&x)?;
    let class = usize::from(logits[1] > logits[0]);
    let g = net.input_gradient(&x, class)?;
    let plane = g.height * g.width;
    let mag: Vec<f64> = (0..plane)
        .map(|i| {
            (0..g.channels)
                .map(|c| g.data[c * plane + i].abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let lo = mag.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mag.iter().copied().fold(0.0, f64::max);
    let pixels = if hi > lo {
        mag.iter()
            .map(|&m| ((m - lo) / (hi - lo) * 255.0).round() as u8)
            .collect()
    } else {
        vec![0; plane]
    };
    Ok(GrayImage::new(g.width, g.height, pixels).expect("dimensions match"))
}
