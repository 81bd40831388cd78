//! Building blocks shared by the generator and discriminators.
//!
//! Weights are drawn from a seeded ChaCha stream rather than the libtorch
//! global generator so that network initialization is reproducible even
//! when several networks are built concurrently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tch::{nn, Kind, Tensor};

/// Batch-normalization behaviour for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Batch statistics; running statistics are left untouched.
    TrainFrozenStats,
    /// Running statistics.
    Eval,
}

pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn tensor(values: Vec<f32>, dims: &[i64]) -> Tensor {
        Tensor::from_slice(&values).view(dims)
    }

    pub fn normal(&mut self, dims: &[i64], std: f64) -> Tensor {
        let n: i64 = dims.iter().product();
        let dist = Normal::new(0.0, std).expect("finite std");
        let values = (0..n).map(|_| dist.sample(&mut self.rng) as f32).collect();
        Self::tensor(values, dims)
    }

    pub fn uniform(&mut self, dims: &[i64], bound: f64) -> Tensor {
        let n: i64 = dims.iter().product();
        let values = (0..n)
            .map(|_| self.rng.random_range(-bound..bound) as f32)
            .collect();
        Self::tensor(values, dims)
    }
}

fn param(path: &nn::Path, name: &str, init: Tensor) -> Tensor {
    path.var_copy(name, &init)
}

/// Conv kernels ~ N(0, 0.02), zero bias.
#[derive(Debug)]
pub struct Conv2d {
    pub ws: Tensor,
    pub bs: Tensor,
    stride: i64,
    padding: i64,
}

impl Conv2d {
    pub fn new(
        path: &nn::Path,
        init: &mut Init,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let (ci, co, k) = (c_in as i64, c_out as i64, kernel as i64);
        Self {
            ws: param(path, "weight", init.normal(&[co, ci, k, k], 0.02)),
            bs: param(path, "bias", Tensor::zeros([co], (Kind::Float, tch::Device::Cpu))),
            stride: stride as i64,
            padding: padding as i64,
        }
    }

    pub fn forward(&self, xs: &Tensor) -> Tensor {
        xs.conv2d(
            &self.ws,
            Some(&self.bs),
            [self.stride; 2],
            [self.padding; 2],
            [1, 1],
            1,
        )
    }
}

#[derive(Debug)]
pub struct ConvTranspose2d {
    pub ws: Tensor,
    pub bs: Tensor,
    stride: i64,
    padding: i64,
    output_padding: i64,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        path: &nn::Path,
        init: &mut Init,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        let (ci, co, k) = (c_in as i64, c_out as i64, kernel as i64);
        Self {
            ws: param(path, "weight", init.normal(&[ci, co, k, k], 0.02)),
            bs: param(path, "bias", Tensor::zeros([co], (Kind::Float, tch::Device::Cpu))),
            stride: stride as i64,
            padding: padding as i64,
            output_padding: output_padding as i64,
        }
    }

    pub fn forward(&self, xs: &Tensor) -> Tensor {
        xs.conv_transpose2d(
            &self.ws,
            Some(&self.bs),
            [self.stride; 2],
            [self.padding; 2],
            [self.output_padding; 2],
            1,
            [1, 1],
        )
    }
}

/// Batch normalization with unit gain, zero shift and tracked statistics.
#[derive(Debug)]
pub struct BatchNorm2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BatchNorm2d {
    const MOMENTUM: f64 = 0.1;
    const EPS: f64 = 1e-5;

    pub fn new(path: &nn::Path, channels: usize) -> Self {
        let c = channels as i64;
        Self {
            weight: path.ones("weight", &[c]),
            bias: path.zeros("bias", &[c]),
            running_mean: path.zeros_no_train("running_mean", &[c]),
            running_var: path.ones_no_train("running_var", &[c]),
        }
    }

    pub fn forward(&self, xs: &Tensor, mode: Mode) -> Tensor {
        let (w, b) = (Some(&self.weight), Some(&self.bias));
        match mode {
            Mode::Train => xs.batch_norm(
                w,
                b,
                Some(&self.running_mean),
                Some(&self.running_var),
                true,
                Self::MOMENTUM,
                Self::EPS,
                false,
            ),
            Mode::TrainFrozenStats => {
                xs.batch_norm(w, b, None::<&Tensor>, None, true, Self::MOMENTUM, Self::EPS, false)
            }
            Mode::Eval => xs.batch_norm(
                w,
                b,
                Some(&self.running_mean),
                Some(&self.running_var),
                false,
                Self::MOMENTUM,
                Self::EPS,
                false,
            ),
        }
    }
}

/// Per-sample, per-channel normalization without affine parameters.
pub fn instance_norm(xs: &Tensor) -> Tensor {
    xs.instance_norm(None::<&Tensor>, None, None, None, true, 0.1, 1e-5, false)
}

/// 3x3 convolution, instance norm, PReLU, optional average pooling with
/// ceiling-mode output sizes.
#[derive(Debug)]
pub struct DiscBlock {
    conv: Conv2d,
    prelu: Option<Tensor>,
    pool: Option<[i64; 2]>,
    norm: bool,
}

impl DiscBlock {
    pub fn new(
        path: &nn::Path,
        init: &mut Init,
        c_in: usize,
        c_out: usize,
        norm_act: bool,
        pool: Option<[i64; 2]>,
    ) -> Self {
        Self {
            conv: Conv2d::new(&(path / "conv"), init, c_in, c_out, 3, 1, 1),
            prelu: norm_act.then(|| path.var("prelu", &[1], nn::Init::Const(0.25))),
            pool,
            norm: norm_act,
        }
    }

    pub fn forward(&self, xs: &Tensor) -> Tensor {
        let mut ys = self.conv.forward(xs);
        if self.norm {
            ys = instance_norm(&ys);
        }
        if let Some(w) = &self.prelu {
            ys = ys.prelu(w);
        }
        if let Some(k) = self.pool {
            ys = ys.avg_pool2d(k, k, [0, 0], true, false, None);
        }
        ys
    }
}

/// Fully connected layer with PyTorch-style uniform init.
#[derive(Debug)]
pub struct Linear {
    pub ws: Tensor,
    pub bs: Option<Tensor>,
}

impl Linear {
    pub fn new(path: &nn::Path, init: &mut Init, d_in: usize, d_out: usize, bias: bool) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let (di, dout) = (d_in as i64, d_out as i64);
        Self {
            ws: param(path, "weight", init.uniform(&[dout, di], bound)),
            bs: bias.then(|| param(path, "bias", init.uniform(&[dout], bound))),
        }
    }

    pub fn forward(&self, xs: &Tensor) -> Tensor {
        xs.linear(&self.ws, self.bs.as_ref())
    }
}

/// Gated recurrent cell: reset and update gates, candidate state.
#[derive(Debug)]
pub struct GruCell {
    ih: Linear,
    hh: Linear,
}

impl GruCell {
    pub fn new(path: &nn::Path, init: &mut Init, d_in: usize, hidden: usize) -> Self {
        Self {
            ih: Linear::new(&(path / "ih"), init, d_in, 3 * hidden, true),
            hh: Linear::new(&(path / "hh"), init, hidden, 3 * hidden, true),
        }
    }

    pub fn step(&self, input: &Tensor, state: &Tensor) -> Tensor {
        let gi = self.ih.forward(input).chunk(3, -1);
        let gh = self.hh.forward(state).chunk(3, -1);
        let r = (&gi[0] + &gh[0]).sigmoid();
        let z = (&gi[1] + &gh[1]).sigmoid();
        let n = (&gi[2] + &r * &gh[2]).tanh();
        (1.0 - &z) * n + z * state
    }
}
