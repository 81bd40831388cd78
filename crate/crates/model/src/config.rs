//! Training configuration and the `key=value` text format it is stored in.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which loss terms participate in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossSwitches {
    pub join_adv: bool,
    pub idt: bool,
    pub char_content: bool,
    pub char_adv: bool,
    pub join_id: bool,
}

impl Default for LossSwitches {
    fn default() -> Self {
        Self::all()
    }
}

impl LossSwitches {
    pub fn all() -> Self {
        Self {
            join_adv: true,
            idt: true,
            char_content: true,
            char_adv: true,
            join_id: true,
        }
    }

    pub fn none() -> Self {
        Self {
            join_adv: false,
            idt: false,
            char_content: false,
            char_adv: false,
            join_id: false,
        }
    }

    /// Cumulative ablation rows: 1 = join_adv only, then + idt,
    /// + char_content, + char_adv, and 5 = everything.
    pub fn ablation_row(row: usize) -> Result<Self> {
        if !(1..=5).contains(&row) {
            return Err(Error::InvalidArgument(format!("ablation row {row} not in 1..=5")));
        }
        Ok(Self {
            join_adv: true,
            idt: row >= 2,
            char_content: row >= 3,
            char_adv: row >= 4,
            join_id: row >= 5,
        })
    }

    pub fn any(&self) -> bool {
        self.join_adv || self.idt || self.char_content || self.char_adv || self.join_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Weight of the character-level adversarial terms.
    pub lambda: f64,
    pub base_lr: f64,
    pub final_lr: f64,
    pub decay_start_iter: u64,
    pub decay_len_iter: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    /// Maximum decoder steps, end-of-sequence included.
    pub max_decode_len: usize,
    pub switches: LossSwitches,
    pub seed: u64,
    /// Width every training image is padded or resampled to.
    pub image_width: usize,
    /// Gap between glyphs of the printed conditioning images.
    pub print_interval_px: usize,
    /// Draw a per-batch glyph gap uniformly from `0..=8` instead.
    pub interval_jitter: bool,
    /// Optional word list for printed transcripts; by default the real
    /// batch's transcripts are reused.
    pub lexicon: Option<PathBuf>,
    /// Divides every channel count of the default architecture.
    pub arch_scale: usize,
    pub max_iters: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            base_lr: 1e-4,
            final_lr: 1e-5,
            decay_start_iter: 300_000,
            decay_len_iter: 300_000,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 128,
            max_decode_len: 25,
            switches: LossSwitches::all(),
            seed: 0,
            image_width: 400,
            print_interval_px: 2,
            interval_jitter: false,
            lexicon: None,
            arch_scale: 1,
            max_iters: 600_000,
            checkpoint_every: 10_000,
        }
    }
}

impl TrainingConfig {
    /// Learning rate: flat, then a linear ramp to `final_lr`, then flat.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        if iteration < self.decay_start_iter {
            return self.base_lr;
        }
        let into = iteration - self.decay_start_iter;
        if self.decay_len_iter == 0 || into >= self.decay_len_iter {
            return self.final_lr;
        }
        let frac = into as f64 / self.decay_len_iter as f64;
        self.base_lr + (self.final_lr - self.base_lr) * frac
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.final_lr > 0.0 && self.final_lr <= self.base_lr) {
            return fail(format!(
                "need 0 < final_lr <= base_lr, got final_lr={} base_lr={}",
                self.final_lr, self.base_lr
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("adam betas must lie in [0, 1)".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.max_decode_len < 2 {
            return fail("max_decode_len must be at least 2".into());
        }
        if self.image_width == 0 || self.image_width % 16 != 0 {
            return fail(format!(
                "image_width must be a positive multiple of 16, got {}",
                self.image_width
            ));
        }
        if self.arch_scale == 0 {
            return fail("arch_scale must be positive".into());
        }
        if self.checkpoint_every == 0 {
            return fail("checkpoint_every must be positive".into());
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return fail(format!("lambda must be a nonnegative number, got {}", self.lambda));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("lambda", self.lambda.to_string());
        kv("base_lr", self.base_lr.to_string());
        kv("final_lr", self.final_lr.to_string());
        kv("decay_start_iter", self.decay_start_iter.to_string());
        kv("decay_len_iter", self.decay_len_iter.to_string());
        kv("adam_beta1", self.adam_beta1.to_string());
        kv("adam_beta2", self.adam_beta2.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("max_decode_len", self.max_decode_len.to_string());
        kv("join_adv", self.switches.join_adv.to_string());
        kv("idt", self.switches.idt.to_string());
        kv("char_content", self.switches.char_content.to_string());
        kv("char_adv", self.switches.char_adv.to_string());
        kv("join_id", self.switches.join_id.to_string());
        kv("seed", self.seed.to_string());
        kv("image_width", self.image_width.to_string());
        kv("print_interval_px", self.print_interval_px.to_string());
        kv("interval_jitter", self.interval_jitter.to_string());
        if let Some(p) = &self.lexicon {
            kv("lexicon", p.display().to_string());
        }
        kv("arch_scale", self.arch_scale.to_string());
        kv("max_iters", self.max_iters.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        s
    }

    /// Parses `key=value` lines on top of the defaults. Unknown keys and
    /// unparsable values are errors naming the key.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (line, key, value) in parse_key_values(text)? {
            let (l, k, v) = (line, key.as_str(), value.as_str());
            match k {
                "lambda" => c.lambda = parse_value(l, k, v)?,
                "base_lr" => c.base_lr = parse_value(l, k, v)?,
                "final_lr" => c.final_lr = parse_value(l, k, v)?,
                "decay_start_iter" => c.decay_start_iter = parse_value(l, k, v)?,
                "decay_len_iter" => c.decay_len_iter = parse_value(l, k, v)?,
                "adam_beta1" => c.adam_beta1 = parse_value(l, k, v)?,
                "adam_beta2" => c.adam_beta2 = parse_value(l, k, v)?,
                "batch_size" => c.batch_size = parse_value(l, k, v)?,
                "max_decode_len" => c.max_decode_len = parse_value(l, k, v)?,
                "join_adv" => c.switches.join_adv = parse_value(l, k, v)?,
                "idt" => c.switches.idt = parse_value(l, k, v)?,
                "char_content" => c.switches.char_content = parse_value(l, k, v)?,
                "char_adv" => c.switches.char_adv = parse_value(l, k, v)?,
                "join_id" => c.switches.join_id = parse_value(l, k, v)?,
                "seed" => c.seed = parse_value(l, k, v)?,
                "image_width" => c.image_width = parse_value(l, k, v)?,
                "print_interval_px" => c.print_interval_px = parse_value(l, k, v)?,
                "interval_jitter" => c.interval_jitter = parse_value(l, k, v)?,
                "lexicon" => c.lexicon = Some(PathBuf::from(v)),
                "arch_scale" => c.arch_scale = parse_value(l, k, v)?,
                "max_iters" => c.max_iters = parse_value(l, k, v)?,
                "checkpoint_every" => c.checkpoint_every = parse_value(l, k, v)?,
                _ => return Err(Error::Config(format!("line {l}: unknown key {k:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_text(&text)
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments. Returns
/// (1-based line number, key, value) triples.
pub(crate) fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        out.push((i + 1, k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value {value:?} for key {key:?}")))
}

pub(crate) fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse_value(line, key, v.trim()))
        .collect()
}
