use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../data/framing_lexicon.txt");

/// Term → replacement pairs used for framing swaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pairs: Vec<(String, String)>,
}

impl Lexicon {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("framing lexicon is empty"));
        }
        Ok(Lexicon { pairs })
    }

    /// Parse the two-column text format; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            match cols.as_slice() {
                [term, replacement] => pairs.push((term.to_string(), replacement.to_string())),
                _ => {
                    return Err(Error::data(format!(
                        "lexicon line {}: expected `term replacement`, got `{line}`",
                        n + 1
                    )))
                }
            }
        }
        Lexicon::new(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read lexicon {}: {e}", path.display())))?;
        Lexicon::parse(&text)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// First replacement wins when a term is listed twice.
    pub(crate) fn lookup(&self) -> BTreeMap<&str, &str> {
        let mut map = BTreeMap::new();
        for (t, r) in &self.pairs {
            map.entry(t.as_str()).or_insert(r.as_str());
        }
        map
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }
}
