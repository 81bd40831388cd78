//! The three parameter groups (generator, discriminators, style bank) and
//! the label spaces they were built for.

use slogan_core::{Charset, WriterMap};
use tch::nn::VarStore;
use tch::{Device, Kind, Tensor};

use crate::arch::ArchConfig;
use crate::discriminator::Discriminators;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::layers::Init;
use crate::stylebank::StyleBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Part {
    Gen,
    Disc,
    Bank,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Gen, Part::Disc, Part::Bank];

    pub fn name(self) -> &'static str {
        match self {
            Part::Gen => "gen",
            Part::Disc => "disc",
            Part::Bank => "bank",
        }
    }
}

pub struct Networks {
    pub arch: ArchConfig,
    pub charset: Charset,
    pub writers: WriterMap,
    gen_vs: VarStore,
    disc_vs: VarStore,
    bank_vs: VarStore,
    pub generator: Generator,
    pub discriminators: Discriminators,
    pub bank: StyleBank,
}

impl std::fmt::Debug for Networks {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Networks")
            .field("arch", &self.arch)
            .field("classes", &self.charset.num_classes())
            .field("writers", &self.writers.len())
            .finish()
    }
}

impl Networks {
    /// Fresh networks; `seed` fixes every initial weight.
    pub fn new(arch: ArchConfig, charset: Charset, writers: WriterMap, seed: u64) -> Result<Self> {
        arch.validate()?;
        if charset.is_empty() {
            return Err(Error::InvalidArgument("charset is empty".into()));
        }
        let gen_vs = VarStore::new(Device::Cpu);
        let disc_vs = VarStore::new(Device::Cpu);
        let bank_vs = VarStore::new(Device::Cpu);
        let generator = Generator::new(&gen_vs.root(), &mut Init::new(seed), &arch)?;
        let discriminators = Discriminators::new(
            &disc_vs.root(),
            &mut Init::new(seed.wrapping_add(1)),
            &arch,
            charset.num_classes(),
            writers.len(),
        )?;
        let bank = StyleBank::new(
            &bank_vs.root(),
            &mut Init::new(seed.wrapping_add(2)),
            arch.latent_dim,
            writers.len(),
        )?;
        Ok(Self {
            arch,
            charset,
            writers,
            gen_vs,
            disc_vs,
            bank_vs,
            generator,
            discriminators,
            bank,
        })
    }

    pub fn store(&self, part: Part) -> &VarStore {
        match part {
            Part::Gen => &self.gen_vs,
            Part::Disc => &self.disc_vs,
            Part::Bank => &self.bank_vs,
        }
    }

    /// Element type of the weights.
    pub fn kind(&self) -> Kind {
        self.bank.table.kind()
    }

    /// Converts every weight and buffer to f64 (for numerical checks).
    pub fn to_double(&mut self) {
        self.gen_vs.double();
        self.disc_vs.double();
        self.bank_vs.double();
    }

    /// All variables of a part, including normalization buffers, sorted by
    /// name.
    pub fn named(&self, part: Part) -> Vec<(String, Tensor)> {
        let mut v: Vec<_> = self.store(part).variables().into_iter().collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    /// Trainable variables of a part, sorted by name.
    pub fn trainable(&self, part: Part) -> Vec<(String, Tensor)> {
        self.named(part)
            .into_iter()
            .filter(|(_, t)| t.requires_grad())
            .collect()
    }

    pub fn zero_grad(&self, part: Part) {
        for (_, mut t) in self.trainable(part) {
            t.zero_grad();
        }
    }

    /// Overwrites a part's variables. Every variable must be supplied with
    /// a matching shape.
    pub fn load_part(&mut self, part: Part, values: &[(String, Tensor)]) -> Result<()> {
        let vars = self.store(part).variables();
        if values.len() != vars.len() {
            return Err(Error::Checkpoint(format!(
                "{} holds {} tensors, expected {}",
                part.name(),
                values.len(),
                vars.len()
            )));
        }
        tch::no_grad(|| -> Result<()> {
            for (name, value) in values {
                let mut var = vars.get(name).ok_or_else(|| {
                    Error::Checkpoint(format!("unknown tensor {}.{name}", part.name()))
                })?
                .shallow_clone();
                if var.size() != value.size() {
                    return Err(Error::Checkpoint(format!(
                        "tensor {}.{name} has shape {:?}, expected {:?}",
                        part.name(),
                        value.size(),
                        var.size()
                    )));
                }
                if var.kind() != value.kind() {
                    var.set_data(&var.to_kind(value.kind()));
                }
                var.copy_(value);
            }
            Ok(())
        })
    }
}
