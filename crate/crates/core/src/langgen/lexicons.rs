use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

pub const BUILTIN_NAMES: &str = include_str!("../../data/names.txt");
pub const BUILTIN_CONFUSIONS: &str = include_str!("../../data/confusion.tsv");

/// Names available for naming episodes, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameLexicon {
    names: Vec<String>,
}

impl NameLexicon {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let name = line.split_whitespace().collect::<Vec<_>>().join(" ");
            if names.iter().any(|n| n.eq_ignore_ascii_case(&name)) {
                return Err(Error::Format {
                    source_name: source_name.to_string(),
                    line: idx + 1,
                    message: format!("duplicate name {name:?}"),
                });
            }
            names.push(name);
        }
        if names.is_empty() {
            return Err(Error::Validation(format!("{source_name}: no names")));
        }
        Ok(Self { names })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_NAMES, "builtin names").expect("builtin names are valid")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Symmetric table of category words people confuse (dog ↔ cat).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionTable {
    pairs: BTreeMap<String, BTreeSet<String>>,
}

impl ConfusionTable {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let words: Vec<&str> = line.split('\t').map(str::trim).collect();
            let [a, b] = words.as_slice() else {
                return Err(Error::Format {
                    source_name: source_name.to_string(),
                    line: idx + 1,
                    message: "expected <word> TAB <word>".into(),
                });
            };
            if a == b || a.is_empty() || b.is_empty() {
                return Err(Error::Format {
                    source_name: source_name.to_string(),
                    line: idx + 1,
                    message: "a confusion pair needs two distinct words".into(),
                });
            }
            pairs.entry(a.to_string()).or_default().insert(b.to_string());
            pairs.entry(b.to_string()).or_default().insert(a.to_string());
        }
        Ok(Self { pairs })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_CONFUSIONS, "builtin confusions").expect("builtin confusions are valid")
    }

    pub fn confusions_for(&self, word: &str) -> impl Iterator<Item = &str> {
        self.pairs
            .get(word)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.pairs.keys().map(String::as_str)
    }
}
