//! Encoder, residual trunk with style fusion, decoder.
//!
//! Layer names: `enc0`..`enc4`, `res0`.., `fuse`, `dec0`..`dec4`.

use slogan_core::image::{CHANNELS, HEIGHT};
use tch::{nn, Tensor};

use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Init, Mode};

/// Encoder downsampling factor along each axis.
pub const REDUCTION: usize = 16;

/// Layer name and output shape, recorded during a traced forward pass.
pub type Trace = Vec<(String, Vec<i64>)>;

fn record(trace: &mut Option<&mut Trace>, name: &str, t: &Tensor) {
    if let Some(tr) = trace.as_deref_mut() {
        tr.push((name.to_owned(), t.size()));
    }
}

#[derive(Debug)]
struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl ConvBn {
    fn forward(&self, xs: &Tensor, mode: Mode) -> Tensor {
        self.bn.forward(&self.conv.forward(xs), mode).relu()
    }
}

#[derive(Debug)]
struct ResBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
}

impl ResBlock {
    fn new(path: &nn::Path, init: &mut Init, c: usize) -> Self {
        Self {
            conv1: Conv2d::new(&(path / "conv1"), init, c, c, 3, 1, 1),
            bn1: BatchNorm2d::new(&(path / "bn1"), c),
            conv2: Conv2d::new(&(path / "conv2"), init, c, c, 3, 1, 1),
            bn2: BatchNorm2d::new(&(path / "bn2"), c),
        }
    }

    fn forward(&self, xs: &Tensor, mode: Mode) -> Tensor {
        let h = self.bn1.forward(&self.conv1.forward(xs), mode).relu();
        xs + self.bn2.forward(&self.conv2.forward(&h), mode)
    }
}

#[derive(Debug)]
struct DeconvBn {
    deconv: ConvTranspose2d,
    bn: BatchNorm2d,
}

#[derive(Debug)]
pub struct Generator {
    enc: Vec<ConvBn>,
    res: Vec<ResBlock>,
    fuse: Conv2d,
    fuse_after: usize,
    dec: Vec<DeconvBn>,
    out: ConvTranspose2d,
    latent_dim: usize,
}

impl Generator {
    pub fn new(path: &nn::Path, init: &mut Init, arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let ch = &arch.gen_channels;
        let mut enc = Vec::with_capacity(ch.len());
        let mut c_in = CHANNELS;
        for (i, &c) in ch.iter().enumerate() {
            let p = path / format!("enc{i}");
            let (k, s, pad) = if i == 0 { (5, 1, 2) } else { (3, 2, 1) };
            enc.push(ConvBn {
                conv: Conv2d::new(&(&p / "conv"), init, c_in, c, k, s, pad),
                bn: BatchNorm2d::new(&(&p / "bn"), c),
            });
            c_in = c;
        }
        let top = *ch.last().expect("validated");
        let res = (0..arch.res_blocks)
            .map(|i| ResBlock::new(&(path / format!("res{i}")), init, top))
            .collect();
        let fuse = Conv2d::new(&(path / "fuse"), init, top + arch.latent_dim, top, 1, 1, 0);
        let mut dec = Vec::new();
        for i in 0..ch.len() - 1 {
            let (a, b) = (ch[ch.len() - 1 - i], ch[ch.len() - 2 - i]);
            let p = path / format!("dec{i}");
            dec.push(DeconvBn {
                deconv: ConvTranspose2d::new(&(&p / "deconv"), init, a, b, 3, 2, 1, 1),
                bn: BatchNorm2d::new(&(&p / "bn"), b),
            });
        }
        let p = path / format!("dec{}", ch.len() - 1);
        let out = ConvTranspose2d::new(&(&p / "deconv"), init, ch[0], CHANNELS, 5, 1, 2, 0);
        Ok(Self {
            enc,
            res,
            fuse,
            fuse_after: arch.fuse_after,
            dec,
            out,
            latent_dim: arch.latent_dim,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn check_input(xs: &Tensor) -> Result<()> {
        let s = xs.size();
        if s.len() != 4 || s[1] != CHANNELS as i64 || s[2] != HEIGHT as i64 {
            return Err(Error::Shape(format!("generator input must be [B, 3, 64, W], got {s:?}")));
        }
        if s[3] <= 0 || s[3] % REDUCTION as i64 != 0 {
            return Err(Error::Shape(format!(
                "generator input width must be a positive multiple of {REDUCTION}, got {}",
                s[3]
            )));
        }
        Ok(())
    }

    pub fn encode(&self, xs: &Tensor, mode: Mode) -> Result<Tensor> {
        Self::check_input(xs)?;
        Ok(self.encode_unchecked(xs, mode, &mut None))
    }

    fn encode_unchecked(&self, xs: &Tensor, mode: Mode, trace: &mut Option<&mut Trace>) -> Tensor {
        let mut h = xs.shallow_clone();
        for (i, layer) in self.enc.iter().enumerate() {
            h = layer.forward(&h, mode);
            record(trace, &format!("enc{i}"), &h);
        }
        h
    }

    /// Broadcasts `z` (`[B, d]`) over the feature grid, concatenates it to the
    /// maps and projects back with the 1x1 fusion convolution.
    pub fn inject_style(&self, features: &Tensor, z: &Tensor) -> Result<Tensor> {
        let fs = features.size();
        let zs = z.size();
        if zs.len() != 2 || zs[1] != self.latent_dim as i64 || fs.len() != 4 || zs[0] != fs[0] {
            return Err(Error::Shape(format!(
                "style {zs:?} does not match features {fs:?} with latent size {}",
                self.latent_dim
            )));
        }
        let zmap = z.view([zs[0], zs[1], 1, 1]).expand([zs[0], zs[1], fs[2], fs[3]], false);
        Ok(self.fuse.forward(&Tensor::cat(&[features, &zmap], 1)))
    }

    pub fn forward(&self, xs: &Tensor, z: &Tensor, mode: Mode) -> Result<Tensor> {
        self.forward_traced(xs, z, mode, None)
    }

    pub fn forward_traced(
        &self,
        xs: &Tensor,
        z: &Tensor,
        mode: Mode,
        trace: Option<&mut Trace>,
    ) -> Result<Tensor> {
        Self::check_input(xs)?;
        let mut trace = trace;
        let mut h = self.encode_unchecked(xs, mode, &mut trace);
        for (i, block) in self.res.iter().enumerate() {
            h = block.forward(&h, mode);
            record(&mut trace, &format!("res{i}"), &h);
            if i + 1 == self.fuse_after {
                h = self.inject_style(&h, z)?;
                record(&mut trace, "fuse", &h);
            }
        }
        for (i, layer) in self.dec.iter().enumerate() {
            h = layer.bn.forward(&layer.deconv.forward(&h), mode).relu();
            record(&mut trace, &format!("dec{i}"), &h);
        }
        let out = self.out.forward(&h).tanh();
        record(&mut trace, &format!("dec{}", self.dec.len()), &out);
        Ok(out)
    }
}
