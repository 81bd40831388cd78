//! Alternating discriminator / generator optimization.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slogan_core::render::{layout_linear, normalize_width, render, GlyphAtlas};
use slogan_core::{Charset, Dataset, LabeledSample, TextImage};
use tch::{Kind, Tensor};

use crate::arch::ArchConfig;
use crate::config::TrainingConfig;
use crate::convert::{images_to_tensor, tensor_to_f64};
use crate::discriminator::{DiscOutput, Heads};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::losses;
use crate::networks::{Networks, Part};
use crate::optim::{Adam, AdamParams, ColumnAdam};

/// Largest glyph gap drawn when interval jitter is on.
pub const MAX_JITTER_PX: usize = 8;

/// Mixes `parts` into `seed` (splitmix64 finalizer per part).
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut x = seed;
    for &p in parts {
        x ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(x << 6).wrapping_add(x >> 2);
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossTerm {
    DCharContent,
    DCharAdv,
    DJoinAdv,
    DJoinId,
    GCharContent,
    GCharAdv,
    GJoinAdv,
    GJoinId,
    GIdt,
}

impl LossTerm {
    pub const ALL: [LossTerm; 9] = [
        LossTerm::DCharContent,
        LossTerm::DCharAdv,
        LossTerm::DJoinAdv,
        LossTerm::DJoinId,
        LossTerm::GCharContent,
        LossTerm::GCharAdv,
        LossTerm::GJoinAdv,
        LossTerm::GJoinId,
        LossTerm::GIdt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossTerm::DCharContent => "d.char_content",
            LossTerm::DCharAdv => "d.char_adv",
            LossTerm::DJoinAdv => "d.join_adv",
            LossTerm::DJoinId => "d.join_id",
            LossTerm::GCharContent => "g.char_content",
            LossTerm::GCharAdv => "g.char_adv",
            LossTerm::GJoinAdv => "g.join_adv",
            LossTerm::GJoinId => "g.join_id",
            LossTerm::GIdt => "g.idt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

/// Loss values of one iteration (or of a single D or G step).
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// 1-based iteration number.
    pub iteration: u64,
    pub terms: Vec<(LossTerm, f64)>,
}

impl LossReport {
    pub fn get(&self, term: LossTerm) -> Option<f64> {
        self.terms.iter().find(|(t, _)| *t == term).map(|(_, v)| *v)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.terms.iter().map(|(t, _)| t.name()).collect()
    }
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.iteration)?;
        for (t, v) in &self.terms {
            write!(f, " {}={v:.6}", t.name())?;
        }
        Ok(())
    }
}

/// One training batch as tensors.
#[derive(Debug)]
pub struct Batch {
    pub real: Tensor,
    pub writers: Vec<usize>,
    /// `[B, T]` label indices padded with EOS.
    pub real_labels: Tensor,
    /// `[B, T]`, 1 on steps that belong to the transcript or its EOS.
    pub real_mask: Tensor,
    pub print: Tensor,
    pub print_labels: Tensor,
    pub print_mask: Tensor,
    pub print_texts: Vec<String>,
}

/// Encodes transcripts with EOS and pads them to a common length.
pub fn encode_labels(charset: &Charset, texts: &[String], kind: Kind) -> Result<(Tensor, Tensor)> {
    let encoded = texts
        .iter()
        .map(|t| charset.encode(t))
        .collect::<slogan_core::Result<Vec<_>>>()?;
    let steps = encoded.iter().map(Vec::len).max().unwrap_or(1);
    let eos = charset.eos_index() as i64;
    let mut labels = Vec::with_capacity(texts.len() * steps);
    let mut mask = Vec::with_capacity(texts.len() * steps);
    for e in &encoded {
        for t in 0..steps {
            labels.push(e.get(t).map_or(eos, |&i| i as i64));
            mask.push(if t < e.len() { 1.0f32 } else { 0.0 });
        }
    }
    let dims = [texts.len() as i64, steps as i64];
    Ok((
        Tensor::from_slice(&labels).view(dims),
        Tensor::from_slice(&mask).view(dims).to_kind(kind),
    ))
}

impl Batch {
    pub fn new(
        charset: &Charset,
        kind: Kind,
        real: &[TextImage],
        transcripts: &[String],
        writers: Vec<usize>,
        print: &[TextImage],
        print_texts: Vec<String>,
    ) -> Result<Self> {
        if real.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if transcripts.len() != real.len() || writers.len() != real.len() || print.len() != real.len() {
            return Err(Error::InvalidArgument("batch fields differ in length".into()));
        }
        let (real_labels, real_mask) = encode_labels(charset, transcripts, kind)?;
        let (print_labels, print_mask) = encode_labels(charset, &print_texts, kind)?;
        Ok(Self {
            real: images_to_tensor(real, kind)?,
            writers,
            real_labels,
            real_mask,
            print: images_to_tensor(print, kind)?,
            print_labels,
            print_mask,
            print_texts,
        })
    }

    pub fn len(&self) -> usize {
        self.writers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.writers.is_empty()
    }
}

struct Prepared {
    image: TextImage,
    transcript: String,
    writer: usize,
}

pub struct Trainer {
    pub nets: Networks,
    pub config: TrainingConfig,
    samples: Vec<Prepared>,
    lexicon: Option<Vec<String>>,
    iteration: u64,
    opt_gen: Adam,
    opt_disc: Adam,
    opt_bank: ColumnAdam,
    atlas: &'static GlyphAtlas,
    print_cache: HashMap<(String, usize), TextImage>,
}

impl fmt::Debug for Trainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trainer")
            .field("iteration", &self.iteration)
            .field("samples", &self.samples.len())
            .field("nets", &self.nets)
            .finish()
    }
}

impl Trainer {
    /// Fresh networks sized by `config.arch_scale`.
    pub fn new(config: TrainingConfig, dataset: &Dataset) -> Result<Self> {
        let arch = ArchConfig::scaled_down(config.arch_scale);
        Self::with_arch(config, arch, dataset)
    }

    pub fn with_arch(config: TrainingConfig, arch: ArchConfig, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        let nets = Networks::new(
            arch,
            dataset.charset.clone(),
            dataset.writers.clone(),
            config.seed,
        )?;
        Self::from_networks(config, nets, dataset, 0)
    }

    /// Wraps existing networks; optimizer moments start at zero.
    pub fn from_networks(
        config: TrainingConfig,
        nets: Networks,
        dataset: &Dataset,
        iteration: u64,
    ) -> Result<Self> {
        config.validate()?;
        if dataset.samples.is_empty() {
            return Err(Error::InvalidArgument("dataset has no samples".into()));
        }
        if dataset.charset != nets.charset {
            return Err(Error::InvalidArgument(
                "dataset charset differs from the networks' charset".into(),
            ));
        }
        if dataset.writers != nets.writers {
            return Err(Error::InvalidArgument(
                "dataset writers differ from the style bank's writers".into(),
            ));
        }
        let atlas = GlyphAtlas::builtin();
        atlas.covers(&nets.charset)?;
        let max_chars = config.max_decode_len.saturating_sub(1);
        let mut samples = Vec::with_capacity(dataset.samples.len());
        for (i, s) in dataset.samples.iter().enumerate() {
            check_length(&s.transcript, max_chars, &format!("sample {i}"))?;
            samples.push(Prepared {
                image: normalize_width(&s.image, config.image_width)?,
                transcript: s.transcript.clone(),
                writer: s.writer_index,
            });
        }
        let lexicon = match &config.lexicon {
            None => None,
            Some(path) => {
                let words = read_lexicon(path)?;
                for w in &words {
                    nets.charset.check(w)?;
                    check_length(w, max_chars, "lexicon word")?;
                }
                Some(words)
            }
        };
        let hp = AdamParams::new(config.adam_beta1, config.adam_beta2);
        let opt_gen = Adam::new(hp, nets.trainable(Part::Gen));
        let opt_disc = Adam::new(hp, nets.trainable(Part::Disc));
        let opt_bank = ColumnAdam::new(hp, "table".into(), nets.bank.table.shallow_clone())?;
        Ok(Self {
            nets,
            config,
            samples,
            lexicon,
            iteration,
            opt_gen,
            opt_disc,
            opt_bank,
            atlas,
            print_cache: HashMap::new(),
        })
    }

    /// Completed iterations.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn optimizers(&self) -> (&Adam, &Adam, &ColumnAdam) {
        (&self.opt_gen, &self.opt_disc, &self.opt_bank)
    }

    pub fn optimizers_mut(&mut self) -> (&mut Adam, &mut Adam, &mut ColumnAdam) {
        (&mut self.opt_gen, &mut self.opt_disc, &mut self.opt_bank)
    }

    /// Printed conditioning image at the training width.
    pub fn print_image(&mut self, text: &str, interval: usize) -> Result<TextImage> {
        let key = (text.to_owned(), interval);
        if let Some(im) = self.print_cache.get(&key) {
            return Ok(im.clone());
        }
        let layout = layout_linear(text, interval, self.atlas)?;
        let im = normalize_width(&render(&layout, self.atlas)?, self.config.image_width)?;
        self.print_cache.insert(key, im.clone());
        Ok(im)
    }

    /// Sample indices of the batch for a 0-based iteration: consecutive
    /// slices of per-epoch shuffles, so any iteration can be reproduced
    /// without replaying earlier ones.
    pub fn batch_indices(&self, iteration: u64) -> Vec<usize> {
        let n = self.samples.len() as u64;
        let b = self.config.batch_size as u64;
        let mut perms: HashMap<u64, Vec<usize>> = HashMap::new();
        (0..b)
            .map(|k| {
                let pos = iteration * b + k;
                let epoch = pos / n;
                let perm = perms.entry(epoch).or_insert_with(|| {
                    let mut p: Vec<usize> = (0..n as usize).collect();
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[1, epoch]));
                    p.shuffle(&mut rng);
                    p
                });
                perm[(pos % n) as usize]
            })
            .collect()
    }

    pub fn batch_at(&mut self, iteration: u64) -> Result<Batch> {
        let idx = self.batch_indices(iteration);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[2, iteration]));
        let interval = if self.config.interval_jitter {
            rng.random_range(0..=MAX_JITTER_PX)
        } else {
            self.config.print_interval_px
        };
        let transcripts: Vec<String> = idx.iter().map(|&i| self.samples[i].transcript.clone()).collect();
        let print_texts = match &self.lexicon {
            Some(words) => (0..idx.len())
                .map(|_| words[rng.random_range(0..words.len())].clone())
                .collect(),
            None => transcripts.clone(),
        };
        let print = print_texts
            .iter()
            .map(|t| self.print_image(t, interval))
            .collect::<Result<Vec<_>>>()?;
        let real: Vec<TextImage> = idx.iter().map(|&i| self.samples[i].image.clone()).collect();
        let writers = idx.iter().map(|&i| self.samples[i].writer).collect();
        Batch::new(
            &self.nets.charset,
            self.nets.kind(),
            &real,
            &transcripts,
            writers,
            &print,
            print_texts,
        )
    }

    fn lr(&self) -> f64 {
        self.config.lr_at(self.iteration)
    }

    /// Generator outputs in training mode: the fake batch and, when the
    /// identity term is on, the reconstruction of the real batch. Both go
    /// through one forward pass so they share normalization statistics.
    fn generate_train(&self, batch: &Batch, z: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let g = &self.nets.generator;
        if self.config.switches.idt {
            let x = Tensor::cat(&[&batch.print, &batch.real], 0);
            let zz = Tensor::cat(&[z, z], 0);
            let out = g.forward(&x, &zz, Mode::Train)?;
            let b = batch.len() as i64;
            Ok((out.narrow(0, 0, b), Some(out.narrow(0, b, b))))
        } else {
            Ok((g.forward(&batch.print, z, Mode::Train)?, None))
        }
    }

    fn d_update(&mut self, batch: &Batch, fake: &Tensor) -> Result<Vec<(LossTerm, f64)>> {
        let s = self.config.switches;
        if !(s.char_content || s.char_adv || s.join_adv || s.join_id) {
            return Ok(Vec::new());
        }
        let d = &self.nets.discriminators;
        let real_out = d.forward(
            &batch.real,
            Some(&batch.real_labels),
            Heads {
                char: s.char_content || s.char_adv,
                join_adv: s.join_adv,
                join_id: s.join_id,
            },
        )?;
        let fake_out = if s.char_adv || s.join_adv {
            Some(d.forward(
                fake,
                Some(&batch.print_labels),
                Heads {
                    char: s.char_adv,
                    join_adv: s.join_adv,
                    join_id: false,
                },
            )?)
        } else {
            None
        };
        let mut terms: Vec<(LossTerm, Tensor)> = Vec::new();
        let real_char = real_out.char.as_ref();
        if s.char_content {
            let c = real_char.expect("char head requested");
            terms.push((
                LossTerm::DCharContent,
                losses::char_content_loss(&c.logits, &batch.real_labels, &batch.real_mask)?,
            ));
        }
        if s.char_adv {
            let r = real_char.expect("char head requested");
            let f = fake_out.as_ref().and_then(|o| o.char.as_ref()).expect("char head requested");
            terms.push((
                LossTerm::DCharAdv,
                losses::char_adv_d_loss(&r.adv, &batch.real_mask, &f.adv, &batch.print_mask, self.config.lambda)?,
            ));
        }
        if s.join_adv {
            let f = &fake_out.as_ref().expect("fake pass").join_adv;
            terms.push((LossTerm::DJoinAdv, losses::join_adv_d_loss(&real_out.join_adv, f)));
        }
        if s.join_id {
            terms.push((LossTerm::DJoinId, losses::join_id_loss(&real_out.join_id, &batch.writers)?));
        }
        self.nets.zero_grad(Part::Disc);
        let report = backward(terms)?;
        let lr = self.lr();
        self.opt_disc.step(lr);
        self.nets.zero_grad(Part::Disc);
        Ok(report)
    }

    fn g_terms(&self, batch: &Batch, fake: &Tensor, rec: Option<&Tensor>) -> Result<Vec<(LossTerm, Tensor)>> {
        let s = self.config.switches;
        let mut terms: Vec<(LossTerm, Tensor)> = Vec::new();
        if s.char_content || s.char_adv || s.join_adv || s.join_id {
            let out: DiscOutput = self.nets.discriminators.forward(
                fake,
                Some(&batch.print_labels),
                Heads {
                    char: s.char_content || s.char_adv,
                    join_adv: s.join_adv,
                    join_id: s.join_id,
                },
            )?;
            if s.char_content {
                let c = out.char.as_ref().expect("char head requested");
                terms.push((
                    LossTerm::GCharContent,
                    losses::char_content_loss(&c.logits, &batch.print_labels, &batch.print_mask)?,
                ));
            }
            if s.char_adv {
                let c = out.char.as_ref().expect("char head requested");
                terms.push((
                    LossTerm::GCharAdv,
                    losses::char_adv_g_loss(&c.adv, &batch.print_mask, self.config.lambda)?,
                ));
            }
            if s.join_adv {
                terms.push((LossTerm::GJoinAdv, losses::join_adv_g_loss(&out.join_adv)));
            }
            if s.join_id {
                terms.push((LossTerm::GJoinId, losses::join_id_loss(&out.join_id, &batch.writers)?));
            }
        }
        if let Some(rec) = rec {
            terms.push((LossTerm::GIdt, losses::identity_loss(rec, &batch.real)?));
        }
        Ok(terms)
    }

    fn g_update(&mut self, batch: &Batch, fake: &Tensor, rec: Option<&Tensor>) -> Result<Vec<(LossTerm, f64)>> {
        let terms = self.g_terms(batch, fake, rec)?;
        if terms.is_empty() {
            return Ok(Vec::new());
        }
        self.nets.zero_grad(Part::Gen);
        self.nets.zero_grad(Part::Bank);
        let report = backward(terms)?;
        let lr = self.lr();
        self.opt_gen.step(lr);
        self.opt_bank.step_columns(lr, &batch.writers);
        self.nets.zero_grad(Part::Disc);
        Ok(report)
    }

    /// The summed generator objective of the enabled terms on `batch`,
    /// differentiable in the generator weights and the style bank. `mode`
    /// selects how generator normalization layers behave.
    pub fn generator_objective(&self, batch: &Batch, mode: Mode) -> Result<Tensor> {
        let z = self.nets.bank.select(&batch.writers)?;
        let g = &self.nets.generator;
        let (fake, rec) = if self.config.switches.idt {
            let x = Tensor::cat(&[&batch.print, &batch.real], 0);
            let out = g.forward(&x, &Tensor::cat(&[&z, &z], 0), mode)?;
            let b = batch.len() as i64;
            (out.narrow(0, 0, b), Some(out.narrow(0, b, b)))
        } else {
            (g.forward(&batch.print, &z, mode)?, None)
        };
        let terms = self.g_terms(batch, &fake, rec.as_ref())?;
        terms
            .into_iter()
            .map(|(_, t)| t)
            .reduce(|a, b| a + b)
            .ok_or_else(|| Error::InvalidArgument("no generator loss term is enabled".into()))
    }

    /// Discriminator update on `batch` with the generator frozen (its
    /// normalization statistics included).
    pub fn d_step(&mut self, batch: &Batch) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let fake = tch::no_grad(|| -> Result<Tensor> {
            let z = self.nets.bank.select(&batch.writers)?;
            self.nets.generator.forward(&batch.print, &z, Mode::TrainFrozenStats)
        })?;
        let terms = self.d_update(batch, &fake)?;
        Ok(LossReport {
            iteration: self.iteration + 1,
            terms,
        })
    }

    /// Generator and style-bank update on `batch`.
    pub fn g_step(&mut self, batch: &Batch) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let z = self.nets.bank.select(&batch.writers)?;
        let (fake, rec) = self.generate_train(batch, &z)?;
        let terms = self.g_update(batch, &fake, rec.as_ref())?;
        Ok(LossReport {
            iteration: self.iteration + 1,
            terms,
        })
    }

    /// One full iteration: a discriminator step on the fake batch, then a
    /// generator step through the updated discriminators.
    pub fn step(&mut self) -> Result<LossReport> {
        let batch = self.batch_at(self.iteration)?;
        let z = self.nets.bank.select(&batch.writers)?;
        let (fake, rec) = self.generate_train(&batch, &z)?;
        let mut terms = self.d_update(&batch, &fake.detach())?;
        terms.extend(self.g_update(&batch, &fake, rec.as_ref())?);
        self.iteration += 1;
        Ok(LossReport {
            iteration: self.iteration,
            terms,
        })
    }

    pub fn set_iteration(&mut self, iteration: u64) {
        self.iteration = iteration;
    }

    fn chunks(&self, len: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
        let b = self.config.batch_size.max(1);
        (0..len.div_ceil(b)).map(move |i| i * b..((i + 1) * b).min(len))
    }

    fn prepare(&self, samples: &[LabeledSample]) -> Result<Vec<TextImage>> {
        samples
            .iter()
            .map(|s| normalize_width(&s.image, self.config.image_width).map_err(Error::from))
            .collect()
    }

    /// Teacher-forced per-character accuracy of the content head on real
    /// images (end-of-sequence steps excluded).
    pub fn char_accuracy(&self, samples: &[LabeledSample]) -> Result<f64> {
        let images = self.prepare(samples)?;
        let (mut hit, mut total) = (0usize, 0usize);
        tch::no_grad(|| -> Result<()> {
            for r in self.chunks(samples.len()) {
                let texts: Vec<String> = samples[r.clone()].iter().map(|s| s.transcript.clone()).collect();
                let (labels, _) = encode_labels(&self.nets.charset, &texts, self.nets.kind())?;
                let x = images_to_tensor(&images[r], self.nets.kind())?;
                let dec = self.nets.discriminators.char_decode(&x, &labels)?;
                let pred = Vec::<i64>::try_from(&dec.logits.argmax(-1, false).flatten(0, -1))?;
                let gold = Vec::<i64>::try_from(&labels.flatten(0, -1))?;
                let steps = labels.size()[1] as usize;
                for (row, t) in texts.iter().enumerate() {
                    for k in 0..t.chars().count() {
                        total += 1;
                        hit += usize::from(pred[row * steps + k] == gold[row * steps + k]);
                    }
                }
            }
            Ok(())
        })?;
        Ok(hit as f64 / total.max(1) as f64)
    }

    /// Writer classification accuracy on real images.
    pub fn writer_accuracy(&self, samples: &[LabeledSample]) -> Result<f64> {
        let images = self.prepare(samples)?;
        let mut hit = 0usize;
        tch::no_grad(|| -> Result<()> {
            for r in self.chunks(samples.len()) {
                let x = images_to_tensor(&images[r.clone()], self.nets.kind())?;
                let pred = Vec::<i64>::try_from(&self.nets.discriminators.join_id(&x)?.argmax(-1, false))?;
                hit += samples[r]
                    .iter()
                    .zip(pred)
                    .filter(|(s, p)| s.writer_index as i64 == *p)
                    .count();
            }
            Ok(())
        })?;
        Ok(hit as f64 / samples.len().max(1) as f64)
    }

    /// Mean identity loss of the inference-mode generator on real images.
    pub fn identity_loss_on(&self, samples: &[LabeledSample]) -> Result<f64> {
        let images = self.prepare(samples)?;
        let mut sum = 0.0;
        tch::no_grad(|| -> Result<()> {
            for r in self.chunks(samples.len()) {
                let writers: Vec<usize> = samples[r.clone()].iter().map(|s| s.writer_index).collect();
                let x = images_to_tensor(&images[r.clone()], self.nets.kind())?;
                let z = self.nets.bank.select(&writers)?;
                let out = self.nets.generator.forward(&x, &z, Mode::Eval)?;
                let per = (out - &x).square().mean_dim([1, 2, 3].as_slice(), false, x.kind());
                sum += tensor_to_f64(&per)?.iter().sum::<f64>();
            }
            Ok(())
        })?;
        Ok(sum / samples.len().max(1) as f64)
    }

    /// Generates each text in its writer's style and decodes it with the
    /// content head (free-running). Returns the decoded strings.
    pub fn decode_generated(&mut self, texts: &[String], writers: &[usize]) -> Result<Vec<String>> {
        if texts.len() != writers.len() {
            return Err(Error::InvalidArgument("texts and writers differ in length".into()));
        }
        let interval = self.config.print_interval_px;
        let prints = texts
            .iter()
            .map(|t| self.print_image(t, interval))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(texts.len());
        tch::no_grad(|| -> Result<()> {
            for r in self.chunks(texts.len()) {
                let x = images_to_tensor(&prints[r.clone()], self.nets.kind())?;
                let z = self.nets.bank.select(&writers[r])?;
                let fake = self.nets.generator.forward(&x, &z, Mode::Eval)?;
                for seq in self.nets.discriminators.greedy_decode(&fake, self.config.max_decode_len)? {
                    out.push(self.nets.charset.decode_indices(&seq));
                }
            }
            Ok(())
        })?;
        Ok(out)
    }
}

fn backward(terms: Vec<(LossTerm, Tensor)>) -> Result<Vec<(LossTerm, f64)>> {
    let mut total: Option<Tensor> = None;
    let mut report = Vec::with_capacity(terms.len());
    for (term, t) in terms {
        let v = losses::value(&t);
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{} is not finite", term.name())));
        }
        report.push((term, v));
        total = Some(match total {
            None => t,
            Some(acc) => acc + t,
        });
    }
    if let Some(t) = total {
        t.backward();
    }
    Ok(report)
}

fn check_length(text: &str, max_chars: usize, what: &str) -> Result<()> {
    let n = text.chars().count();
    if n > max_chars {
        return Err(Error::Config(format!(
            "{what} {text:?} has {n} characters; max_decode_len allows {max_chars}"
        )));
    }
    Ok(())
}

fn read_lexicon(path: &std::path::Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let words: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    if words.is_empty() {
        return Err(Error::Config(format!("lexicon {} is empty", path.display())));
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LossSwitches;
    use slogan_core::toy::toy_samples;
    use slogan_core::WriterMap;

    pub(crate) fn toy_dataset(count: usize) -> Dataset {
        let samples = toy_samples(count, 7).unwrap();
        let charset = Charset::from_transcripts(samples.iter().map(|s| s.0.as_str()));
        let writers = WriterMap::from_ids(["w0".to_string(), "w1".to_string()]).unwrap();
        let samples = samples
            .into_iter()
            .map(|(t, w, image)| LabeledSample {
                image,
                transcript: t,
                writer_id: format!("w{w}"),
                writer_index: w,
            })
            .collect();
        Dataset {
            samples,
            writers,
            charset,
        }
    }

    fn trainer(switches: LossSwitches) -> Trainer {
        let config = TrainingConfig {
            batch_size: 4,
            image_width: 96,
            switches,
            ..TrainingConfig::default()
        };
        Trainer::with_arch(config, ArchConfig::micro(), &toy_dataset(6)).unwrap()
    }

    #[test]
    fn batches_are_reproducible_and_cover_epochs() {
        let t = trainer(LossSwitches::all());
        assert_eq!(t.batch_indices(3), t.batch_indices(3));
        let mut seen: Vec<usize> = (0..3).flat_map(|i| t.batch_indices(i)).collect();
        seen.truncate(6);
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn step_reports_enabled_terms() {
        let mut t = trainer(LossSwitches::ablation_row(1).unwrap());
        let r = t.step().unwrap();
        assert_eq!(r.iteration, 1);
        assert_eq!(r.names(), vec!["d.join_adv", "g.join_adv"]);
        let mut t = trainer(LossSwitches::all());
        let r = t.step().unwrap();
        assert_eq!(r.terms.len(), 9);
        assert!(r.to_string().starts_with("1 d.char_content="));
    }

    #[test]
    fn labels_pad_with_eos() {
        let cs = Charset::new(['a', 'b']).unwrap();
        let (l, m) = encode_labels(&cs, &["ab".into(), "a".into()], Kind::Float).unwrap();
        assert_eq!(Vec::<i64>::try_from(&l.flatten(0, -1)).unwrap(), vec![0, 1, 2, 0, 2, 2]);
        assert_eq!(Vec::<f32>::try_from(&m.flatten(0, -1)).unwrap(), vec![1., 1., 1., 1., 1., 0.]);
    }

    #[test]
    fn long_transcripts_rejected() {
        let config = TrainingConfig {
            max_decode_len: 3,
            image_width: 96,
            ..TrainingConfig::default()
        };
        let ds = toy_dataset(6);
        assert!(ds.samples.iter().any(|s| s.transcript.len() > 2));
        assert!(Trainer::with_arch(config, ArchConfig::micro(), &ds).is_err());
    }
}
