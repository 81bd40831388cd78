//! Binary checkpoint container.
//!
//! Layout: magic `SLGN`, format version (u32 LE), section count (u32 LE),
//! then sections of `name_len u16, name, payload_len u64, payload`, then a
//! CRC-32 of every preceding byte. Tensor sections hold a u32 record count
//! followed by `name_len u16, name, kind u8 (0 f32, 1 f64), ndim u8,
//! dims u64 x ndim, little-endian data`.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use slogan_core::{Charset, Dataset, WriterMap};
use tch::{Kind, Tensor};

use crate::arch::ArchConfig;
use crate::config::{parse_key_values, parse_value, TrainingConfig};
use crate::error::{Error, Result};
use crate::networks::{Networks, Part};
use crate::optim::Slot;
use crate::trainer::Trainer;

pub const MAGIC: &[u8; 4] = b"SLGN";
pub const FORMAT_VERSION: u32 = 1;

pub type NamedTensors = Vec<(String, Tensor)>;

#[derive(Debug)]
pub struct Checkpoint {
    /// Completed training iterations.
    pub iteration: u64,
    pub arch: ArchConfig,
    pub config: TrainingConfig,
    pub charset: Charset,
    pub writers: WriterMap,
    pub tensors: BTreeMap<Part, NamedTensors>,
    /// Optimizer moments and step counts; empty for inference-only files.
    pub optimizer: BTreeMap<Part, NamedTensors>,
}

fn copy_named(v: Vec<(String, Tensor)>) -> NamedTensors {
    v.into_iter().map(|(n, t)| (n, t.detach().copy())).collect()
}

fn slot_state(s: &Slot) -> NamedTensors {
    let steps: Vec<f64> = s.steps.iter().map(|&x| x as f64).collect();
    vec![
        (format!("{}/m", s.name), s.m.copy()),
        (format!("{}/v", s.name), s.v.copy()),
        (format!("{}/steps", s.name), Tensor::from_slice(&steps)),
    ]
}

fn restore_slot(s: &mut Slot, state: &BTreeMap<&str, &Tensor>, part: Part) -> Result<()> {
    let get = |suffix: &str| -> Result<&Tensor> {
        state
            .get(format!("{}/{suffix}", s.name).as_str())
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("missing optimizer state {}.{}/{suffix}", part.name(), s.name)))
    };
    let (m, v, steps) = (get("m")?, get("v")?, get("steps")?);
    if m.size() != s.m.size() || v.size() != s.v.size() || steps.numel() != s.steps.len() {
        return Err(Error::Checkpoint(format!(
            "optimizer state for {}.{} has the wrong shape",
            part.name(),
            s.name
        )));
    }
    s.m = m.to_kind(s.param.kind()).copy();
    s.v = v.to_kind(s.param.kind()).copy();
    s.steps = Vec::<f64>::try_from(&steps.to_kind(Kind::Double))?
        .into_iter()
        .map(|x| x as u64)
        .collect();
    Ok(())
}

impl Checkpoint {
    /// Weights only; optimizer state is left empty.
    pub fn from_networks(nets: &Networks, config: &TrainingConfig, iteration: u64) -> Self {
        let tensors = Part::ALL
            .into_iter()
            .map(|p| (p, copy_named(nets.named(p))))
            .collect();
        Self {
            iteration,
            arch: nets.arch.clone(),
            config: config.clone(),
            charset: nets.charset.clone(),
            writers: nets.writers.clone(),
            tensors,
            optimizer: BTreeMap::new(),
        }
    }

    pub fn from_trainer(trainer: &Trainer) -> Self {
        let mut ck = Self::from_networks(&trainer.nets, &trainer.config, trainer.iteration());
        let (g, d, b) = trainer.optimizers();
        ck.optimizer.insert(Part::Gen, g.slots.iter().flat_map(slot_state).collect());
        ck.optimizer.insert(Part::Disc, d.slots.iter().flat_map(slot_state).collect());
        ck.optimizer.insert(Part::Bank, slot_state(&b.slot));
        ck
    }

    pub fn to_networks(&self) -> Result<Networks> {
        let mut nets = Networks::new(
            self.arch.clone(),
            self.charset.clone(),
            self.writers.clone(),
            self.config.seed,
        )?;
        for part in Part::ALL {
            let values = self
                .tensors
                .get(&part)
                .ok_or_else(|| Error::Checkpoint(format!("missing {} weights", part.name())))?;
            nets.load_part(part, values)?;
        }
        Ok(nets)
    }

    /// Rebuilds the trainer, optimizer state included, to continue training
    /// on `dataset`.
    pub fn into_trainer(&self, dataset: &Dataset) -> Result<Trainer> {
        let nets = self.to_networks()?;
        let mut trainer = Trainer::from_networks(self.config.clone(), nets, dataset, self.iteration)?;
        if self.optimizer.is_empty() {
            return Ok(trainer);
        }
        let (g, d, b) = trainer.optimizers_mut();
        for (part, slots) in [(Part::Gen, &mut g.slots), (Part::Disc, &mut d.slots)] {
            let state = self.optimizer_state(part)?;
            for s in slots.iter_mut() {
                restore_slot(s, &state, part)?;
            }
        }
        let state = self.optimizer_state(Part::Bank)?;
        restore_slot(&mut b.slot, &state, Part::Bank)?;
        Ok(trainer)
    }

    fn optimizer_state(&self, part: Part) -> Result<BTreeMap<&str, &Tensor>> {
        let v = self
            .optimizer
            .get(&part)
            .ok_or_else(|| Error::Checkpoint(format!("missing {} optimizer state", part.name())))?;
        Ok(v.iter().map(|(n, t)| (n.as_str(), t)).collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut sections: Vec<(String, Vec<u8>)> = vec![
            ("meta".into(), format!("iteration={}\n", self.iteration).into_bytes()),
            ("arch".into(), self.arch.to_text().into_bytes()),
            ("config".into(), self.config.to_text().into_bytes()),
            ("charset".into(), self.charset.symbols().iter().collect::<String>().into_bytes()),
            ("writers".into(), self.writers.ids().join("\n").into_bytes()),
        ];
        for (part, v) in &self.tensors {
            sections.push((format!("tensors.{}", part.name()), encode_tensors(v)?));
        }
        for (part, v) in &self.optimizer {
            sections.push((format!("adam.{}", part.name()), encode_tensors(v)?));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LE>(FORMAT_VERSION)?;
        out.write_u32::<LE>(sections.len() as u32)?;
        for (name, payload) in &sections {
            out.write_u16::<LE>(name.len() as u16)?;
            out.write_all(name.as_bytes())?;
            out.write_u64::<LE>(payload.len() as u64)?;
            out.write_all(payload)?;
        }
        let crc = crc32fast::hash(&out);
        out.write_u32::<LE>(crc)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Checkpoint(format!("file truncated: only {} bytes", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic bytes {:?}, expected {:?}",
                &bytes[..4],
                MAGIC
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}; this reader handles version {FORMAT_VERSION}"
            )));
        }
        let mut r = Cursor::new(&bytes[8..]);
        let count = r.read_u32::<LE>().map_err(truncated)?;
        let mut sections = BTreeMap::new();
        for _ in 0..count {
            let name = read_string(&mut r)?;
            let len = r.read_u64::<LE>().map_err(truncated)? as usize;
            let start = r.position() as usize;
            let rest = &r.get_ref()[start..];
            if rest.len() < len {
                return Err(Error::Checkpoint(format!(
                    "file truncated inside section {name:?} ({} of {len} bytes present)",
                    rest.len()
                )));
            }
            sections.insert(name, rest[..len].to_vec());
            r.set_position((start + len) as u64);
        }
        let body_end = 8 + r.position() as usize;
        let stored = r.read_u32::<LE>().map_err(|_| {
            Error::Checkpoint("file truncated: checksum missing".into())
        })?;
        if r.position() as usize != r.get_ref().len() {
            return Err(Error::Checkpoint("trailing bytes after checksum".into()));
        }
        let actual = crc32fast::hash(&bytes[..body_end]);
        if stored != actual {
            return Err(Error::Checkpoint(format!(
                "checksum mismatch (stored {stored:08x}, computed {actual:08x}); file is corrupted"
            )));
        }

        let text = |name: &str| -> Result<String> {
            let raw = sections
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing section {name:?}")))?;
            String::from_utf8(raw.clone())
                .map_err(|_| Error::Checkpoint(format!("section {name:?} is not UTF-8")))
        };
        let mut iteration = None;
        for (line, key, value) in parse_key_values(&text("meta")?)? {
            if key == "iteration" {
                iteration = Some(parse_value::<u64>(line, &key, &value)?);
            }
        }
        let iteration = iteration.ok_or_else(|| Error::Checkpoint("meta lacks iteration".into()))?;
        let arch = ArchConfig::from_text(&text("arch")?)?;
        let config = TrainingConfig::from_text(&text("config")?)?;
        let charset = Charset::new(text("charset")?.chars())?;
        let writers_text = text("writers")?;
        let writers = WriterMap::from_ids(writers_text.split('\n').map(str::to_owned))?;
        let mut tensors = BTreeMap::new();
        let mut optimizer = BTreeMap::new();
        for part in Part::ALL {
            let key = format!("tensors.{}", part.name());
            let raw = sections
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing section {key:?}")))?;
            tensors.insert(part, decode_tensors(raw, &key)?);
            let key = format!("adam.{}", part.name());
            if let Some(raw) = sections.get(&key) {
                optimizer.insert(part, decode_tensors(raw, &key)?);
            }
        }
        Ok(Self {
            iteration,
            arch,
            config,
            charset,
            writers,
            tensors,
            optimizer,
        })
    }

    /// Writes to a temporary file next to `path`, then renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn truncated(_: std::io::Error) -> Error {
    Error::Checkpoint("file truncated".into())
}

fn read_string(r: &mut Cursor<&[u8]>) -> Result<String> {
    let len = r.read_u16::<LE>().map_err(truncated)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
}

fn encode_tensors(v: &NamedTensors) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.write_u32::<LE>(v.len() as u32)?;
    for (name, t) in v {
        out.write_u16::<LE>(name.len() as u16)?;
        out.write_all(name.as_bytes())?;
        let flat = t.detach().contiguous().view([-1]);
        let kind = t.kind();
        out.write_u8(match kind {
            Kind::Float => 0,
            Kind::Double => 1,
            other => return Err(Error::Checkpoint(format!("cannot store {other:?} tensor {name}"))),
        })?;
        let dims = t.size();
        out.write_u8(dims.len() as u8)?;
        for d in dims {
            out.write_u64::<LE>(d as u64)?;
        }
        if kind == Kind::Float {
            for x in Vec::<f32>::try_from(&flat)? {
                out.write_f32::<LE>(x)?;
            }
        } else {
            for x in Vec::<f64>::try_from(&flat)? {
                out.write_f64::<LE>(x)?;
            }
        }
    }
    Ok(out)
}

fn decode_tensors(raw: &[u8], section: &str) -> Result<NamedTensors> {
    let bad = |what: &str| Error::Checkpoint(format!("section {section:?}: {what}"));
    let mut r = Cursor::new(raw);
    let count = r.read_u32::<LE>().map_err(|_| bad("truncated"))?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name = read_string(&mut r).map_err(|_| bad("truncated name"))?;
        let kind = r.read_u8().map_err(|_| bad("truncated"))?;
        let ndim = r.read_u8().map_err(|_| bad("truncated"))? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.read_u64::<LE>().map_err(|_| bad("truncated dims"))? as i64);
        }
        let n: i64 = dims.iter().product();
        let width = match kind {
            0 => 4,
            1 => 8,
            k => return Err(bad(&format!("tensor {name} has unknown element kind {k}"))),
        };
        let remaining = raw.len() - r.position() as usize;
        if (n as usize).saturating_mul(width) > remaining {
            return Err(bad(&format!("tensor {name} data truncated")));
        }
        let t = if kind == 0 {
            let mut v = vec![0f32; n as usize];
            r.read_f32_into::<LE>(&mut v).map_err(|_| bad("truncated data"))?;
            Tensor::from_slice(&v)
        } else {
            let mut v = vec![0f64; n as usize];
            r.read_f64_into::<LE>(&mut v).map_err(|_| bad("truncated data"))?;
            Tensor::from_slice(&v)
        };
        out.push((name, t.view(dims.as_slice())));
    }
    if r.position() as usize != raw.len() {
        return Err(bad("unexpected trailing bytes"));
    }
    Ok(out)
}
