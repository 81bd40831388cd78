//! Inference: styled images for arbitrary text, style sweeps and synthetic
//! dataset export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slogan_core::dataset::{write_manifest, ManifestRecord};
use slogan_core::render::{layout_curved, layout_linear, render, GlyphAtlas, LayoutSpec};
use slogan_core::TextImage;

use crate::checkpoint::Checkpoint;
use crate::config::TrainingConfig;
use crate::convert::{image_to_tensor, tensor_to_images};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::networks::Networks;
use crate::stylebank::{interpolate, LatentStyleVector};
use crate::trainer::derive_seed;

/// Where the style vector of a request comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum StyleChoice {
    /// A stored writer's vector.
    Writer(usize),
    /// An explicit vector, clamped to the bank's per-dimension bounds.
    Vector(LatentStyleVector),
    /// A uniform draw inside the bank's bounds.
    Random { seed: u64 },
}

/// How a synthetic dataset assigns styles to items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StylePolicy {
    /// Fresh bounded sample per item.
    #[default]
    Random,
    /// One stored writer for every item.
    Writer(usize),
    /// Stored writers in turn.
    Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curve {
    pub radius_px: f64,
    pub span_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisRequest {
    pub text: String,
    pub style: StyleChoice,
    /// Glyph gap; `None` uses the gap the model was trained with.
    pub interval_px: Option<usize>,
    /// Lays the text on an arc instead of a straight line.
    pub curve: Option<Curve>,
}

impl SynthesisRequest {
    pub fn new(text: impl Into<String>, style: StyleChoice) -> Self {
        Self {
            text: text.into(),
            style,
            interval_px: None,
            curve: None,
        }
    }

    pub fn interval(mut self, px: usize) -> Self {
        self.interval_px = Some(px);
        self
    }

    pub fn curved(mut self, radius_px: f64, span_rad: f64) -> Self {
        self.curve = Some(Curve { radius_px, span_rad });
        self
    }
}

pub struct Synthesizer {
    pub nets: Networks,
    pub config: TrainingConfig,
    atlas: GlyphAtlas,
}

impl std::fmt::Debug for Synthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Synthesizer").field("nets", &self.nets).finish()
    }
}

impl Synthesizer {
    pub fn new(nets: Networks, config: TrainingConfig) -> Self {
        Self {
            nets,
            config,
            atlas: GlyphAtlas::builtin().clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(Self::new(ck.to_networks()?, ck.config.clone()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn with_atlas(mut self, atlas: GlyphAtlas) -> Self {
        self.atlas = atlas;
        self
    }

    pub fn atlas(&self) -> &GlyphAtlas {
        &self.atlas
    }

    /// Text must use charset symbols; spaces are always accepted as layout
    /// blanks.
    pub fn check_text(&self, text: &str) -> Result<()> {
        if text.is_empty() {
            return Err(Error::InvalidArgument("text is empty".into()));
        }
        if let Some(c) = text.chars().find(|&c| c != ' ' && !self.nets.charset.contains(c)) {
            return Err(slogan_core::Error::UnknownSymbol(c).into());
        }
        Ok(())
    }

    pub fn layout(&self, req: &SynthesisRequest) -> Result<LayoutSpec> {
        self.check_text(&req.text)?;
        let layout = match req.curve {
            Some(c) => layout_curved(&req.text, c.radius_px, c.span_rad, &self.atlas)?,
            None => layout_linear(
                &req.text,
                req.interval_px.unwrap_or(self.config.print_interval_px),
                &self.atlas,
            )?,
        };
        Ok(layout)
    }

    /// The printed conditioning image of a request.
    pub fn conditioning(&self, req: &SynthesisRequest) -> Result<TextImage> {
        Ok(render(&self.layout(req)?, &self.atlas)?)
    }

    pub fn resolve_style(&self, style: &StyleChoice) -> Result<LatentStyleVector> {
        let bank = &self.nets.bank;
        match style {
            StyleChoice::Writer(i) => bank.lookup(*i),
            StyleChoice::Vector(z) => {
                if z.dim() != bank.dim() {
                    return Err(Error::Shape(format!(
                        "style vector has {} entries, the model expects {}",
                        z.dim(),
                        bank.dim()
                    )));
                }
                bank.bounds()?.clamp(z)
            }
            StyleChoice::Random { seed } => bank.sample_style(&mut ChaCha8Rng::seed_from_u64(*seed)),
        }
    }

    /// Runs the generator (inference mode) on a printed image.
    pub fn generate_with(&self, print: &TextImage, z: &LatentStyleVector) -> Result<TextImage> {
        let kind = self.nets.kind();
        let x = image_to_tensor(print, kind)?;
        let zt = z.to_tensor(kind);
        let out = tch::no_grad(|| self.nets.generator.forward(&x, &zt, Mode::Eval))?;
        Ok(tensor_to_images(&out)?.remove(0))
    }

    pub fn generate(&self, req: &SynthesisRequest) -> Result<TextImage> {
        let print = self.conditioning(req)?;
        let z = self.resolve_style(&req.style)?;
        self.generate_with(&print, &z)
    }

    /// Images for `t = 0, 1/(steps-1), ..., 1` between two styles.
    pub fn style_sweep(
        &self,
        base: &SynthesisRequest,
        z_a: &LatentStyleVector,
        z_b: &LatentStyleVector,
        steps: usize,
    ) -> Result<Vec<TextImage>> {
        if steps < 2 {
            return Err(Error::InvalidArgument(format!("a sweep needs at least 2 steps, got {steps}")));
        }
        (0..steps)
            .map(|i| {
                let t = i as f64 / (steps - 1) as f64;
                let mut req = base.clone();
                req.style = StyleChoice::Vector(interpolate(z_a, z_b, t)?);
                self.generate(&req)
            })
            .collect()
    }

    /// Writes `count` generated images, `manifest.tsv` and a `styles.tsv`
    /// sidecar recording where each item's style came from. Item `i` uses
    /// randomness derived from `(seed, i)` only.
    pub fn synthesize_dataset(
        &self,
        lexicon: &[String],
        count: usize,
        policy: StylePolicy,
        seed: u64,
        out_dir: impl AsRef<Path>,
    ) -> Result<PathBuf> {
        if lexicon.is_empty() {
            return Err(Error::InvalidArgument("lexicon is empty".into()));
        }
        if count == 0 {
            return Err(Error::InvalidArgument("count must be positive".into()));
        }
        let offenders: Vec<&str> = lexicon
            .iter()
            .filter(|w| self.check_text(w).is_err() || w.contains(['\t', '\n']))
            .map(String::as_str)
            .collect();
        if !offenders.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "lexicon words outside the charset: {offenders:?}"
            )));
        }
        if let StylePolicy::Writer(w) = policy {
            self.nets.bank.lookup(w)?;
        }
        let dir = out_dir.as_ref();
        std::fs::create_dir_all(dir.join("images"))?;
        let interval = self.config.print_interval_px;
        let mut records = Vec::with_capacity(count);
        let mut styles = String::from("# image\tsource\tvector\n");
        for i in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
            let word = &lexicon[rng.random_range(0..lexicon.len())];
            let (choice, writer_id, source) = match policy {
                StylePolicy::Random => {
                    let s = rng.random::<u64>();
                    (StyleChoice::Random { seed: s }, format!("sampled{i:06}"), "sampled".to_string())
                }
                StylePolicy::Writer(w) => self.writer_choice(w)?,
                StylePolicy::Cycle => self.writer_choice(i % self.nets.bank.len())?,
            };
            let z = self.resolve_style(&choice)?;
            let req = SynthesisRequest::new(word.clone(), choice).interval(interval);
            let image = self.generate_with(&self.conditioning(&req)?, &z)?;
            let rel = PathBuf::from("images").join(format!("{i:06}.png"));
            image.save(dir.join(&rel))?;
            let values: Vec<String> = z.values.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(styles, "{}\t{source}\t{}", rel.display(), values.join(","));
            records.push(ManifestRecord::new(rel, word, &writer_id));
        }
        let manifest = dir.join("manifest.tsv");
        write_manifest(&manifest, &records)?;
        std::fs::write(dir.join("styles.tsv"), styles)?;
        Ok(manifest)
    }

    fn writer_choice(&self, w: usize) -> Result<(StyleChoice, String, String)> {
        let id = self
            .nets
            .writers
            .id(w)
            .ok_or_else(|| Error::InvalidArgument(format!("writer index {w} out of range")))?
            .to_owned();
        Ok((StyleChoice::Writer(w), id.clone(), format!("writer:{id}")))
    }
}
