//! Shared data model for handwriting-style synthesis: charsets and label
//! encoding, text images, the printed-text renderer, dataset manifests and
//! the evaluation metrics (Fréchet distance, CER/WER).

pub mod charset;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod image;
pub mod render;
pub mod toy;

pub use charset::Charset;
pub use dataset::{load_dataset, load_dataset_with_charset, Dataset, LabeledSample, WriterMap};
pub use error::{Error, Result};
pub use image::TextImage;
pub use render::{GlyphAtlas, GlyphPlacement, LayoutSpec};
