//! A small synthetic handwriting set for smoke tests and demos: rendered
//! words from a three-letter alphabet, written by two "writers" that differ
//! in stroke thickness, slant and letter spacing.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{write_manifest, ManifestRecord};
use crate::error::Result;
use crate::image::{TextImage, HEIGHT};
use crate::render::{layout_linear, render, GlyphAtlas, WIDTH_QUANTUM};

pub const TOY_ALPHABET: [char; 3] = ['a', 'b', 'c'];
pub const TOY_MIN_LEN: usize = 2;
pub const TOY_MAX_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyWriter {
    /// Dilation radius in pixels applied to the ink.
    pub thickness: usize,
    /// Horizontal shear: pixels of rightward shift per pixel above row 32.
    pub slant: f64,
    pub interval_px: usize,
}

pub const TOY_WRITERS: [ToyWriter; 2] = [
    ToyWriter {
        thickness: 1,
        slant: 0.0,
        interval_px: 1,
    },
    ToyWriter {
        thickness: 0,
        slant: 0.3,
        interval_px: 3,
    },
];

/// Renders `text` in the hand of `writer`. The canvas is wide enough for
/// the longest toy word in either hand.
pub fn toy_image(text: &str, writer: &ToyWriter, atlas: &GlyphAtlas) -> Result<TextImage> {
    let layout = layout_linear(text, writer.interval_px, atlas)?;
    let last = layout.placements.last().expect("layout of a nonempty word");
    let extent = last.x as usize + atlas.advance(last.symbol)?;
    let printed = render(&layout, atlas)?;
    let extra = (writer.slant * HEIGHT as f64 / 2.0).ceil() as usize + 2 * writer.thickness;
    let width = (extent + extra).div_ceil(WIDTH_QUANTUM) * WIDTH_QUANTUM;
    let src = printed.gray();
    let ink_at = |x: i64, y: i64| -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < printed.width()
            && (y as usize) < HEIGHT
            && src[y as usize * printed.width() + x as usize] < 0.0
    };
    let r = writer.thickness as i64;
    let mut gray = vec![1.0f32; HEIGHT * width];
    for y in 0..HEIGHT as i64 {
        let shift = writer.slant * ((HEIGHT / 2) as f64 - y as f64 - 0.5);
        for x in 0..width as i64 {
            let sx = (x as f64 + 0.5 - shift - writer.thickness as f64).floor() as i64;
            let inked = (-r..=r).any(|dy| (-r..=r).any(|dx| ink_at(sx + dx, y + dy)));
            if inked {
                gray[y as usize * width + x as usize] = -1.0;
            }
        }
    }
    TextImage::from_gray(HEIGHT, width, &gray)
}

/// A toy sample: word, writer index, image.
pub type ToySample = (String, usize, TextImage);

/// `count` samples alternating between the two writers, words of length
/// 2 to 4 drawn uniformly from the toy alphabet.
pub fn toy_samples(count: usize, seed: u64) -> Result<Vec<ToySample>> {
    let atlas = GlyphAtlas::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let word = random_word(&mut rng);
        let writer = i % TOY_WRITERS.len();
        let image = toy_image(&word, &TOY_WRITERS[writer], atlas)?;
        out.push((word, writer, image));
    }
    Ok(out)
}

pub fn random_word(rng: &mut impl Rng) -> String {
    let len = rng.random_range(TOY_MIN_LEN..=TOY_MAX_LEN);
    (0..len)
        .map(|_| TOY_ALPHABET[rng.random_range(0..TOY_ALPHABET.len())])
        .collect()
}

/// Writes the toy set as PNGs plus `manifest.tsv` under `dir`.
pub fn write_toy_dataset(dir: impl AsRef<Path>, count: usize, seed: u64) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("images"))?;
    let mut records = Vec::with_capacity(count);
    for (i, (word, writer, image)) in toy_samples(count, seed)?.into_iter().enumerate() {
        let rel = PathBuf::from("images").join(format!("{i:04}.png"));
        image.save(dir.join(&rel))?;
        records.push(ManifestRecord::new(rel, &word, &format!("writer{writer}")));
    }
    let manifest = dir.join("manifest.tsv");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}
