//! Moving images between [`TextImage`] and batched tensors.

use slogan_core::image::{CHANNELS, HEIGHT};
use slogan_core::TextImage;
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// Stacks equally sized images into a `[B, 3, 64, W]` tensor.
pub fn images_to_tensor(images: &[TextImage], kind: Kind) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty image batch".into()))?;
    let width = first.width();
    let mut data = Vec::with_capacity(images.len() * CHANNELS * HEIGHT * width);
    for (i, im) in images.iter().enumerate() {
        if im.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "image {i} is {:?}, batch expects {:?}",
                im.shape(),
                first.shape()
            )));
        }
        data.extend_from_slice(im.data());
    }
    let dims = [images.len() as i64, CHANNELS as i64, first.height() as i64, width as i64];
    Ok(Tensor::from_slice(&data).view(dims).to_kind(kind))
}

pub fn image_to_tensor(image: &TextImage, kind: Kind) -> Result<Tensor> {
    images_to_tensor(std::slice::from_ref(image), kind)
}

/// Splits a `[B, 3, H, W]` tensor into images, clamping into [-1, 1].
pub fn tensor_to_images(t: &Tensor) -> Result<Vec<TextImage>> {
    let size = t.size();
    if size.len() != 4 || size[1] != CHANNELS as i64 {
        return Err(Error::Shape(format!("expected [B, 3, H, W], got {size:?}")));
    }
    let (h, w) = (size[2] as usize, size[3] as usize);
    let flat = t
        .detach()
        .clamp(-1.0, 1.0)
        .to_kind(Kind::Float)
        .contiguous()
        .view([-1]);
    let values = Vec::<f32>::try_from(&flat)?;
    let per = CHANNELS * h * w;
    values
        .chunks(per)
        .map(|c| TextImage::from_chw(h, w, c.to_vec()).map_err(Error::from))
        .collect()
}

pub fn tensor_to_f64(t: &Tensor) -> Result<Vec<f64>> {
    let flat = t.detach().to_kind(Kind::Double).contiguous().view([-1]);
    Ok(Vec::<f64>::try_from(&flat)?)
}
