use std::fmt::Write as _;

use crate::config::{parse_key_values, parse_list, parse_value};
use crate::error::{Error, Result};

/// Layer widths of the generator and discriminators. The default is the
/// full-size network; smaller settings exist for tests and quick runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    /// Latent style dimensionality.
    pub latent_dim: usize,
    /// Output maps of the five encoder convolutions; the decoder mirrors them.
    pub gen_channels: Vec<usize>,
    pub res_blocks: usize,
    /// Number of residual blocks before the style is fused in.
    pub fuse_after: usize,
    /// The four convolutions shared by both discriminators.
    pub trunk_channels: Vec<usize>,
    /// Character discriminator extension convolutions.
    pub char_channels: Vec<usize>,
    pub attn_hidden: usize,
    pub gru_hidden: usize,
    pub label_embed: usize,
    pub join_adv_channels: Vec<usize>,
    pub join_id_channels: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            gen_channels: vec![16, 32, 64, 128, 256],
            res_blocks: 6,
            fuse_after: 3,
            trunk_channels: vec![16, 64, 128, 128],
            char_channels: vec![192, 256, 256],
            attn_hidden: 256,
            gru_hidden: 256,
            label_embed: 256,
            join_adv_channels: vec![64, 16],
            join_id_channels: vec![192, 256],
        }
    }
}

impl ArchConfig {
    /// A very small network for gradient checks and plumbing tests.
    pub fn micro() -> Self {
        Self {
            latent_dim: 3,
            gen_channels: vec![2, 2, 3, 3, 4],
            res_blocks: 2,
            fuse_after: 1,
            trunk_channels: vec![2, 3, 3, 4],
            char_channels: vec![4, 4, 4],
            attn_hidden: 3,
            gru_hidden: 4,
            label_embed: 3,
            join_adv_channels: vec![3, 2],
            join_id_channels: vec![3, 4],
        }
    }

    /// Every channel count divided by `factor` (at least 1); head counts
    /// and the latent size are kept.
    pub fn scaled_down(factor: usize) -> Self {
        let full = Self::default();
        let div = |v: &[usize]| v.iter().map(|c| (c / factor).max(1)).collect::<Vec<_>>();
        Self {
            gen_channels: div(&full.gen_channels),
            trunk_channels: div(&full.trunk_channels),
            char_channels: div(&full.char_channels),
            attn_hidden: (full.attn_hidden / factor).max(1),
            gru_hidden: (full.gru_hidden / factor).max(1),
            label_embed: (full.label_embed / factor).max(1),
            join_adv_channels: div(&full.join_adv_channels),
            join_id_channels: div(&full.join_id_channels),
            ..full
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lens = [
            ("gen_channels", self.gen_channels.len(), 5),
            ("trunk_channels", self.trunk_channels.len(), 4),
            ("char_channels", self.char_channels.len(), 3),
            ("join_adv_channels", self.join_adv_channels.len(), 2),
            ("join_id_channels", self.join_id_channels.len(), 2),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(Error::Config(format!("{name} needs {want} entries, got {got}")));
            }
        }
        if self.fuse_after == 0 || self.fuse_after > self.res_blocks {
            return Err(Error::Config(format!(
                "fuse_after must lie in 1..={}, got {}",
                self.res_blocks, self.fuse_after
            )));
        }
        let all_sizes = self
            .gen_channels
            .iter()
            .chain(&self.trunk_channels)
            .chain(&self.char_channels)
            .chain(&self.join_adv_channels)
            .chain(&self.join_id_channels)
            .chain([&self.latent_dim, &self.attn_hidden, &self.gru_hidden, &self.label_embed]);
        if all_sizes.into_iter().any(|&c| c == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "latent_dim={}", self.latent_dim);
        let _ = writeln!(s, "gen_channels={}", list(&self.gen_channels));
        let _ = writeln!(s, "res_blocks={}", self.res_blocks);
        let _ = writeln!(s, "fuse_after={}", self.fuse_after);
        let _ = writeln!(s, "trunk_channels={}", list(&self.trunk_channels));
        let _ = writeln!(s, "char_channels={}", list(&self.char_channels));
        let _ = writeln!(s, "attn_hidden={}", self.attn_hidden);
        let _ = writeln!(s, "gru_hidden={}", self.gru_hidden);
        let _ = writeln!(s, "label_embed={}", self.label_embed);
        let _ = writeln!(s, "join_adv_channels={}", list(&self.join_adv_channels));
        let _ = writeln!(s, "join_id_channels={}", list(&self.join_id_channels));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut arch = Self::default();
        for (line, key, value) in parse_key_values(text)? {
            match key.as_str() {
                "latent_dim" => arch.latent_dim = parse_value(line, &key, &value)?,
                "gen_channels" => arch.gen_channels = parse_list(line, &key, &value)?,
                "res_blocks" => arch.res_blocks = parse_value(line, &key, &value)?,
                "fuse_after" => arch.fuse_after = parse_value(line, &key, &value)?,
                "trunk_channels" => arch.trunk_channels = parse_list(line, &key, &value)?,
                "char_channels" => arch.char_channels = parse_list(line, &key, &value)?,
                "attn_hidden" => arch.attn_hidden = parse_value(line, &key, &value)?,
                "gru_hidden" => arch.gru_hidden = parse_value(line, &key, &value)?,
                "label_embed" => arch.label_embed = parse_value(line, &key, &value)?,
                "join_adv_channels" => arch.join_adv_channels = parse_list(line, &key, &value)?,
                "join_id_channels" => arch.join_id_channels = parse_list(line, &key, &value)?,
                _ => return Err(Error::Config(format!("line {line}: unknown key {key:?}"))),
            }
        }
        arch.validate()?;
        Ok(arch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for arch in [ArchConfig::default(), ArchConfig::micro(), ArchConfig::scaled_down(4)] {
            assert_eq!(ArchConfig::from_text(&arch.to_text()).unwrap(), arch);
        }
    }

    #[test]
    fn validation() {
        let mut a = ArchConfig::micro();
        a.fuse_after = 3;
        assert!(a.validate().is_err());
        let mut a = ArchConfig::micro();
        a.gen_channels.pop();
        assert!(a.validate().is_err());
        assert!(ArchConfig::from_text("bogus=1\n").is_err());
    }
}
