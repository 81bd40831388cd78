//! Training objectives. Adversarial terms are least-squares with targets 1
//! for real and 0 for fake.

use tch::{Kind, Tensor};

use crate::error::{Error, Result};

fn masked_mean(values: &Tensor, mask: &Tensor) -> Tensor {
    (values * mask).sum(values.kind()) / mask.sum(values.kind()).clamp_min(1.0)
}

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.size(), b.size())));
    }
    Ok(())
}

/// Negative log-likelihood of the labels summed over valid steps, averaged
/// over the batch. `logits` is `[B, T, C]`, `labels` `[B, T]` (int64),
/// `mask` `[B, T]` with 1 on valid steps.
pub fn char_content_loss(logits: &Tensor, labels: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let ls = logits.size();
    if ls.len() != 3 || labels.size() != ls[..2] || mask.size() != ls[..2] {
        return Err(Error::Shape(format!(
            "logits {ls:?}, labels {:?} and mask {:?} disagree on step counts",
            labels.size(),
            mask.size()
        )));
    }
    let logp = logits.log_softmax(-1, logits.kind());
    let picked = logp.gather(2, &labels.unsqueeze(-1), false).squeeze_dim(-1);
    let nll = -(picked * mask.to_kind(logits.kind()));
    Ok(nll.sum_dim_intlist([1].as_slice(), false, logits.kind()).mean(logits.kind()))
}

/// Discriminator side of the per-character adversarial loss.
pub fn char_adv_d_loss(
    real: &Tensor,
    real_mask: &Tensor,
    fake: &Tensor,
    fake_mask: &Tensor,
    lambda: f64,
) -> Result<Tensor> {
    check_same(real, real_mask, "real scores and mask")?;
    check_same(fake, fake_mask, "fake scores and mask")?;
    let fake_term = masked_mean(&fake.square(), &fake_mask.to_kind(fake.kind()));
    let real_term = masked_mean(&(real - 1.0).square(), &real_mask.to_kind(real.kind()));
    Ok((fake_term + real_term) * lambda)
}

/// Generator side of the per-character adversarial loss.
pub fn char_adv_g_loss(fake: &Tensor, fake_mask: &Tensor, lambda: f64) -> Result<Tensor> {
    check_same(fake, fake_mask, "fake scores and mask")?;
    Ok(masked_mean(&(fake - 1.0).square(), &fake_mask.to_kind(fake.kind())) * lambda)
}

/// Both sides of the per-character adversarial loss on unmasked scores.
pub fn char_adv_losses(real: &Tensor, fake: &Tensor, lambda: f64) -> Result<(Tensor, Tensor)> {
    let (rm, fm) = (real.ones_like(), fake.ones_like());
    Ok((
        char_adv_d_loss(real, &rm, fake, &fm, lambda)?,
        char_adv_g_loss(fake, &fm, lambda)?,
    ))
}

/// Patch-grid adversarial loss, discriminator side.
pub fn join_adv_d_loss(real: &Tensor, fake: &Tensor) -> Tensor {
    fake.square().mean(fake.kind()) + (real - 1.0).square().mean(real.kind())
}

/// Patch-grid adversarial loss, generator side.
pub fn join_adv_g_loss(fake: &Tensor) -> Tensor {
    (fake - 1.0).square().mean(fake.kind())
}

/// Mean cross-entropy of `[B, n]` writer logits against writer indices.
pub fn join_id_loss(logits: &Tensor, writers: &[usize]) -> Result<Tensor> {
    let s = logits.size();
    if s.len() != 2 || s[0] != writers.len() as i64 {
        return Err(Error::Shape(format!(
            "logits {s:?} do not match {} targets",
            writers.len()
        )));
    }
    if let Some(&bad) = writers.iter().find(|&&w| w as i64 >= s[1]) {
        return Err(Error::InvalidArgument(format!(
            "writer index {bad} out of range for {} writers",
            s[1]
        )));
    }
    let idx: Vec<i64> = writers.iter().map(|&w| w as i64).collect();
    let targets = Tensor::from_slice(&idx).to_device(logits.device());
    let logp = logits.log_softmax(-1, logits.kind());
    Ok(-logp
        .gather(1, &targets.unsqueeze(-1), false)
        .mean(logits.kind()))
}

/// Mean squared pixel error between a reconstruction and its source.
pub fn identity_loss(output: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same(output, target, "identity reconstruction")?;
    Ok((output - target).square().mean(output.kind()))
}

/// Scalar value of a loss tensor.
pub fn value(t: &Tensor) -> f64 {
    t.to_kind(Kind::Double).double_value(&[])
}
