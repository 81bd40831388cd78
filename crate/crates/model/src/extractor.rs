//! Image features from the trained discriminator trunk.

use slogan_core::eval::FeatureExtractor;
use slogan_core::render::normalize_width;
use slogan_core::TextImage;

use crate::convert::{images_to_tensor, tensor_to_f64};
use crate::discriminator::Discriminators;

/// Trunk activations averaged over the spatial grid. Images are first
/// brought to a common width (white padding or resampling).
#[derive(Debug)]
pub struct TrunkExtractor<'a> {
    disc: &'a Discriminators,
    width: usize,
    dim: usize,
    chunk: usize,
}

impl<'a> TrunkExtractor<'a> {
    pub fn new(disc: &'a Discriminators, width: usize) -> Self {
        Self {
            disc,
            width,
            dim: disc.trunk_channels(),
            chunk: 64,
        }
    }
}

impl FeatureExtractor for TrunkExtractor<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, images: &[TextImage]) -> slogan_core::Result<Vec<Vec<f64>>> {
        let wrap = |e: crate::Error| slogan_core::Error::Metric(e.to_string());
        let kind = self.disc.kind();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(self.chunk) {
            let sized = chunk
                .iter()
                .map(|im| normalize_width(im, self.width))
                .collect::<slogan_core::Result<Vec<_>>>()?;
            let x = images_to_tensor(&sized, kind).map_err(wrap)?;
            let feats = tch::no_grad(|| self.disc.trunk(&x))
                .map_err(wrap)?
                .mean_dim([2, 3].as_slice(), false, kind);
            let flat = tensor_to_f64(&feats).map_err(wrap)?;
            out.extend(flat.chunks(self.dim).map(<[f64]>::to_vec));
        }
        Ok(out)
    }
}
