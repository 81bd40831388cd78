use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

/// Ordered set of recognizable symbols. Class indices `0..len()` map to the
/// symbols in order; the end-of-sequence class is always `len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Charset {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl Charset {
    /// Builds a charset from symbols in the given order. Duplicates are rejected.
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for c in symbols {
            if index.insert(c, out.len()).is_some() {
                return Err(Error::DuplicateSymbol(c));
            }
            out.push(c);
        }
        Ok(Self {
            symbols: out,
            index,
        })
    }

    /// Union of all characters in `texts`, sorted by code point.
    pub fn from_transcripts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<char> = texts.into_iter().flat_map(str::chars).collect();
        Self::new(set).expect("a set has no duplicates")
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Number of real symbols (EOS excluded).
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn eos_index(&self) -> usize {
        self.symbols.len()
    }

    /// Size of the classifier output space: every symbol plus EOS.
    pub fn num_classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, index: usize) -> Option<char> {
        self.symbols.get(index).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// Fails on the first character not covered by the charset.
    pub fn check(&self, text: &str) -> Result<()> {
        match text.chars().find(|c| !self.contains(*c)) {
            Some(c) => Err(Error::UnknownSymbol(c)),
            None => Ok(()),
        }
    }

    /// Per-character class indices followed by the EOS index.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(text.chars().count() + 1);
        for c in text.chars() {
            out.push(self.index_of(c).ok_or(Error::UnknownSymbol(c))?);
        }
        out.push(self.eos_index());
        Ok(out)
    }

    /// Greedy decoding of per-step class scores: argmax per row, stopping at
    /// the first EOS. Rows after the first EOS are ignored.
    pub fn decode<R: AsRef<[f32]>>(&self, rows: &[R]) -> String {
        let mut out = String::new();
        for row in rows {
            match argmax(row.as_ref()).and_then(|i| self.symbol(i)) {
                Some(c) => out.push(c),
                None => break,
            }
        }
        out
    }

    /// Same as [`Charset::decode`] for already-selected class indices.
    pub fn decode_indices(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .map_while(|&i| self.symbol(i))
            .collect()
    }

    /// One-hot rows for an encoded sequence; the inverse of [`Charset::decode`].
    pub fn one_hot(&self, indices: &[usize]) -> Vec<Vec<f32>> {
        indices
            .iter()
            .map(|&i| {
                let mut row = vec![0.0; self.num_classes()];
                row[i] = 1.0;
                row
            })
            .collect()
    }
}

fn argmax(row: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in row.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
