//! Handwriting-style transfer networks and their training loop.
//!
//! A [`StyleBank`] holds one trainable latent vector per writer. The
//! [`Generator`] maps a rendered printed-text image plus a style vector to a
//! handwriting image. Two discriminators share a convolutional trunk: the
//! character discriminator decodes the transcript with an attention GRU and
//! scores every decoded character, and the join discriminator scores image
//! patches and classifies the writer. [`Trainer`] alternates discriminator
//! and generator updates; [`Synthesizer`] runs inference on a checkpoint.

pub mod arch;
pub mod checkpoint;
pub mod config;
pub mod convert;
pub mod discriminator;
pub mod error;
pub mod extractor;
pub mod generator;
pub mod layers;
pub mod losses;
pub mod networks;
pub mod optim;
pub mod stylebank;
pub mod synthesis;
pub mod trainer;

pub use arch::ArchConfig;
pub use checkpoint::Checkpoint;
pub use config::{LossSwitches, TrainingConfig};
pub use discriminator::{CharDecode, Discriminators};
pub use error::{Error, Result};
pub use generator::Generator;
pub use layers::Mode;
pub use networks::{Networks, Part};
pub use stylebank::{interpolate, LatentStyleVector, StyleBank, StyleBounds};
pub use extractor::TrunkExtractor;
pub use synthesis::{Curve, StyleChoice, StylePolicy, SynthesisRequest, Synthesizer};
pub use trainer::{derive_seed, Batch, LossReport, LossTerm, Trainer};
