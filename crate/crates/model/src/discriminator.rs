//! Shared trunk, the attention character discriminator and the join
//! discriminator.

use slogan_core::image::{CHANNELS, HEIGHT};
use tch::{nn, Kind, Tensor};

use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::generator::Trace;
use crate::layers::{Conv2d, DiscBlock, GruCell, Init, Linear};

/// Teacher-forced decoder output for a batch.
#[derive(Debug)]
pub struct CharDecode {
    /// `[B, T, C]` class logits.
    pub logits: Tensor,
    /// `[B, T]` adversarial scores.
    pub adv: Tensor,
    /// `[B, T, H, W]` attention maps over the feature grid.
    pub attention: Tensor,
}

/// Every head evaluated from a single trunk pass.
#[derive(Debug)]
pub struct DiscOutput {
    pub trunk: Tensor,
    pub char: Option<CharDecode>,
    pub join_adv: Tensor,
    pub join_id: Tensor,
}

/// Which heads a forward pass needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Heads {
    pub char: bool,
    pub join_adv: bool,
    pub join_id: bool,
}

#[derive(Debug)]
pub struct Discriminators {
    trunk: Vec<DiscBlock>,
    char_ext: Vec<DiscBlock>,
    w_h: Linear,
    w_s: Linear,
    w_e: Linear,
    embed: Tensor,
    gru: GruCell,
    w_y: Linear,
    w_adv: Linear,
    join_adv: Vec<DiscBlock>,
    join_adv_out: Conv2d,
    join_id: Vec<DiscBlock>,
    join_id_out: Conv2d,
    num_classes: usize,
    writers: usize,
    gru_hidden: usize,
    trunk_channels: usize,
}

impl Discriminators {
    pub fn new(
        path: &nn::Path,
        init: &mut Init,
        arch: &ArchConfig,
        num_classes: usize,
        writers: usize,
    ) -> Result<Self> {
        arch.validate()?;
        if num_classes < 2 || writers == 0 {
            return Err(Error::InvalidArgument(format!(
                "need at least one symbol and one writer (classes {num_classes}, writers {writers})"
            )));
        }
        let mut trunk = Vec::new();
        let mut c_in = CHANNELS;
        for (i, &c) in arch.trunk_channels.iter().enumerate() {
            trunk.push(DiscBlock::new(&(path / format!("trunk{i}")), init, c_in, c, true, Some([2, 2])));
            c_in = c;
        }
        let trunk_out = c_in;
        let mut char_ext = Vec::new();
        for (i, &c) in arch.char_channels.iter().enumerate() {
            let pool = (i == 0).then_some([2, 1]);
            char_ext.push(DiscBlock::new(&(path / format!("char{i}")), init, c_in, c, true, pool));
            c_in = c;
        }
        let feat = c_in;
        let p = path / "attn";
        let w_h = Linear::new(&(&p / "w_h"), init, feat, arch.attn_hidden, true);
        let w_s = Linear::new(&(&p / "w_s"), init, arch.gru_hidden, arch.attn_hidden, false);
        let w_e = Linear::new(&(&p / "w_e"), init, arch.attn_hidden, 1, false);
        // One extra row for the start token.
        let embed = p.var_copy(
            "embed",
            &init.normal(&[num_classes as i64 + 1, arch.label_embed as i64], 1.0),
        );
        let gru = GruCell::new(&(&p / "gru"), init, arch.label_embed + feat, arch.gru_hidden);
        let w_y = Linear::new(&(&p / "w_y"), init, arch.gru_hidden, num_classes, true);
        let w_adv = Linear::new(&(&p / "w_adv"), init, arch.gru_hidden, 1, true);

        let [a0, a1] = [arch.join_adv_channels[0], arch.join_adv_channels[1]];
        let join_adv = vec![
            DiscBlock::new(&(path / "join_adv0"), init, trunk_out, a0, true, Some([2, 2])),
            DiscBlock::new(&(path / "join_adv1"), init, a0, a1, true, None),
        ];
        let join_adv_out = Conv2d::new(&(path / "join_adv2"), init, a1, 1, 3, 1, 1);
        let [i0, i1] = [arch.join_id_channels[0], arch.join_id_channels[1]];
        let join_id = vec![
            DiscBlock::new(&(path / "join_id0"), init, trunk_out, i0, true, Some([2, 2])),
            DiscBlock::new(&(path / "join_id1"), init, i0, i1, true, Some([2, 2])),
        ];
        let join_id_out = Conv2d::new(&(path / "join_id2"), init, i1, writers, 3, 1, 1);
        Ok(Self {
            trunk,
            char_ext,
            w_h,
            w_s,
            w_e,
            embed,
            gru,
            w_y,
            w_adv,
            join_adv,
            join_adv_out,
            join_id,
            join_id_out,
            num_classes,
            writers,
            gru_hidden: arch.gru_hidden,
            trunk_channels: trunk_out,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn writers(&self) -> usize {
        self.writers
    }

    /// Maps produced by the shared trunk.
    pub fn trunk_channels(&self) -> usize {
        self.trunk_channels
    }

    pub fn kind(&self) -> Kind {
        self.embed.kind()
    }

    /// Index of the start token fed as the label before the first step.
    pub fn start_token(&self) -> i64 {
        self.num_classes as i64
    }

    fn check_input(xs: &Tensor) -> Result<()> {
        let s = xs.size();
        if s.len() != 4 || s[1] != CHANNELS as i64 || s[2] != HEIGHT as i64 || s[3] <= 0 {
            return Err(Error::Shape(format!("discriminator input must be [B, 3, 64, W], got {s:?}")));
        }
        Ok(())
    }

    pub fn trunk(&self, xs: &Tensor) -> Result<Tensor> {
        Self::check_input(xs)?;
        Ok(self.trunk_traced(xs, &mut None))
    }

    fn trunk_traced(&self, xs: &Tensor, trace: &mut Option<&mut Trace>) -> Tensor {
        let mut h = xs.shallow_clone();
        for (i, b) in self.trunk.iter().enumerate() {
            h = b.forward(&h);
            push(trace, &format!("trunk{i}"), &h);
        }
        h
    }

    pub fn char_features(&self, trunk: &Tensor) -> Tensor {
        self.char_features_traced(trunk, &mut None)
    }

    fn char_features_traced(&self, trunk: &Tensor, trace: &mut Option<&mut Trace>) -> Tensor {
        let mut h = trunk.shallow_clone();
        for (i, b) in self.char_ext.iter().enumerate() {
            h = b.forward(&h);
            push(trace, &format!("char{i}"), &h);
        }
        h
    }

    /// Teacher-forced decoding. `teacher` is `[B, T]` label indices; step `t`
    /// consumes label `t - 1` (the start token at `t = 0`).
    pub fn char_decode_from(&self, trunk: &Tensor, teacher: &Tensor) -> Result<CharDecode> {
        let ts = teacher.size();
        if ts.len() != 2 || ts[1] == 0 {
            return Err(Error::InvalidArgument(format!(
                "teacher labels must be a nonempty [B, T] sequence, got {ts:?}"
            )));
        }
        let feats = self.char_features(trunk);
        let (b, steps) = (ts[0], ts[1]);
        let start = Tensor::full([b, 1], self.start_token(), (Kind::Int64, teacher.device()));
        let prev = Tensor::cat(&[start, teacher.narrow(1, 0, steps - 1)], 1);
        let mut dec = AttnDecoder::new(self, &feats)?;
        let mut logits = Vec::with_capacity(steps as usize);
        let mut adv = Vec::with_capacity(steps as usize);
        let mut attention = Vec::with_capacity(steps as usize);
        for t in 0..steps {
            let (s, alpha) = dec.step(&prev.select(1, t));
            logits.push(self.w_y.forward(&s));
            adv.push(self.w_adv.forward(&s).squeeze_dim(-1));
            attention.push(alpha);
        }
        Ok(CharDecode {
            logits: Tensor::stack(&logits, 1),
            adv: Tensor::stack(&adv, 1),
            attention: Tensor::stack(&attention, 1),
        })
    }

    pub fn char_decode(&self, xs: &Tensor, teacher: &Tensor) -> Result<CharDecode> {
        self.char_decode_from(&self.trunk(xs)?, teacher)
    }

    /// Free-running greedy decoding: each step consumes its own previous
    /// prediction. Returns label indices up to (excluding) the first EOS.
    pub fn greedy_decode(&self, xs: &Tensor, max_steps: usize) -> Result<Vec<Vec<usize>>> {
        let feats = self.char_features(&self.trunk(xs)?);
        let b = feats.size()[0];
        let eos = self.num_classes as i64 - 1;
        let mut dec = AttnDecoder::new(self, &feats)?;
        let mut prev = Tensor::full([b], self.start_token(), (Kind::Int64, feats.device()));
        let mut out = vec![Vec::new(); b as usize];
        let mut done = vec![false; b as usize];
        for _ in 0..max_steps {
            let (s, _) = dec.step(&prev);
            prev = self.w_y.forward(&s).argmax(-1, false);
            let picks = Vec::<i64>::try_from(&prev)?;
            for (i, &p) in picks.iter().enumerate() {
                if done[i] {
                    continue;
                }
                if p == eos {
                    done[i] = true;
                } else {
                    out[i].push(p as usize);
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out)
    }

    pub fn join_adv_from(&self, trunk: &Tensor) -> Tensor {
        self.join_adv_traced(trunk, &mut None)
    }

    fn join_adv_traced(&self, trunk: &Tensor, trace: &mut Option<&mut Trace>) -> Tensor {
        let mut h = trunk.shallow_clone();
        for (i, b) in self.join_adv.iter().enumerate() {
            h = b.forward(&h);
            push(trace, &format!("join_adv{i}"), &h);
        }
        let out = self.join_adv_out.forward(&h);
        push(trace, "join_adv2", &out);
        out
    }

    /// Writer logits `[B, n]`: the last map stack is averaged over the
    /// whole grid.
    pub fn join_id_from(&self, trunk: &Tensor) -> Tensor {
        self.join_id_traced(trunk, &mut None)
    }

    fn join_id_traced(&self, trunk: &Tensor, trace: &mut Option<&mut Trace>) -> Tensor {
        let mut h = trunk.shallow_clone();
        for (i, b) in self.join_id.iter().enumerate() {
            h = b.forward(&h);
            push(trace, &format!("join_id{i}"), &h);
        }
        let maps = self.join_id_out.forward(&h);
        let pooled = maps.adaptive_avg_pool2d([1, 1]);
        push(trace, "join_id2", &pooled);
        pooled.flatten(1, -1)
    }

    pub fn join_adv(&self, xs: &Tensor) -> Result<Tensor> {
        Ok(self.join_adv_from(&self.trunk(xs)?))
    }

    pub fn join_id(&self, xs: &Tensor) -> Result<Tensor> {
        Ok(self.join_id_from(&self.trunk(xs)?))
    }

    /// Evaluates the requested heads on one shared trunk pass.
    pub fn forward(&self, xs: &Tensor, teacher: Option<&Tensor>, heads: Heads) -> Result<DiscOutput> {
        let trunk = self.trunk(xs)?;
        let char = match (heads.char, teacher) {
            (true, Some(t)) => Some(self.char_decode_from(&trunk, t)?),
            (true, None) => {
                return Err(Error::InvalidArgument("character head needs teacher labels".into()))
            }
            _ => None,
        };
        let join_adv = if heads.join_adv {
            self.join_adv_from(&trunk)
        } else {
            Tensor::new()
        };
        let join_id = if heads.join_id {
            self.join_id_from(&trunk)
        } else {
            Tensor::new()
        };
        Ok(DiscOutput {
            trunk,
            char,
            join_adv,
            join_id,
        })
    }

    /// Output shape of every convolution stage on `xs`.
    pub fn trace_shapes(&self, xs: &Tensor) -> Result<Trace> {
        Self::check_input(xs)?;
        let mut trace = Trace::new();
        let mut t = Some(&mut trace);
        let trunk = self.trunk_traced(xs, &mut t);
        let _ = self.char_features_traced(&trunk, &mut t);
        let _ = self.join_adv_traced(&trunk, &mut t);
        let _ = self.join_id_traced(&trunk, &mut t);
        Ok(trace)
    }
}

fn push(trace: &mut Option<&mut Trace>, name: &str, t: &Tensor) {
    if let Some(tr) = trace.as_deref_mut() {
        tr.push((name.to_owned(), t.size()));
    }
}

/// Recurrent attention state over a fixed feature grid.
struct AttnDecoder<'a> {
    d: &'a Discriminators,
    /// `[B, P, C]` flattened features.
    flat: Tensor,
    /// `[B, P, A]` precomputed feature projections.
    proj: Tensor,
    grid: (i64, i64),
    state: Tensor,
}

impl<'a> AttnDecoder<'a> {
    fn new(d: &'a Discriminators, feats: &Tensor) -> Result<Self> {
        let s = feats.size();
        if s.len() != 4 {
            return Err(Error::Shape(format!("feature maps must be 4-d, got {s:?}")));
        }
        let flat = feats.flatten(2, 3).transpose(1, 2);
        let proj = d.w_h.forward(&flat);
        let state = Tensor::zeros([s[0], d.gru_hidden as i64], (feats.kind(), feats.device()));
        Ok(Self {
            d,
            flat,
            proj,
            grid: (s[2], s[3]),
            state,
        })
    }

    /// Consumes the previous labels `[B]`; returns the new state and the
    /// `[B, H, W]` attention map.
    fn step(&mut self, prev: &Tensor) -> (Tensor, Tensor) {
        let query = self.d.w_s.forward(&self.state).unsqueeze(1);
        let energy = self.d.w_e.forward(&(&self.proj + query).tanh()).squeeze_dim(-1);
        let alpha = energy.softmax(-1, energy.kind());
        let feat = alpha.unsqueeze(1).bmm(&self.flat).squeeze_dim(1);
        let label = self.d.embed.index_select(0, prev);
        self.state = self.d.gru.step(&Tensor::cat(&[label, feat], 1), &self.state);
        let b = alpha.size()[0];
        let map = alpha.view([b, self.grid.0, self.grid.1]);
        (self.state.shallow_clone(), map)
    }
}
