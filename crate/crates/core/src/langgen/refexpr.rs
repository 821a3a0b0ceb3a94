use std::collections::BTreeMap;

use rand::seq::IndexedRandom;

use crate::error::{Error, Result};
use crate::langgen::Descriptor;
use crate::rng::Rng;
use crate::vocab::size_word;

pub const BUILTIN_REFEXPRS: &str = include_str!("../../data/refexpr.tsv");

/// Minimum realizations per attribute pattern (the pronoun key is exempt).
pub const MIN_REALIZATIONS: usize = 6;

pub const BANK_KEYS: [&str; 9] = [
    "pronoun",
    "cat",
    "cat+col",
    "cat+size",
    "cat+shape",
    "cat+col+size",
    "cat+col+shape",
    "cat+size+shape",
    "cat+col+size+shape",
];

/// Surface realizations of descriptors, keyed by which fields are present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefExprBank {
    by_key: BTreeMap<String, Vec<String>>,
}

impl RefExprBank {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Format {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut by_key: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, realization)) = line.split_once('\t') else {
                return Err(err(idx + 1, "expected <key> TAB <realization>".into()));
            };
            if !BANK_KEYS.contains(&key) {
                return Err(err(idx + 1, format!("unknown key {key:?}")));
            }
            for field in ["{CAT}", "{COL}", "{SIZE}", "{SHAPE}"] {
                let needed = match field {
                    "{CAT}" => key.contains("cat"),
                    "{COL}" => key.contains("col"),
                    "{SIZE}" => key.contains("size"),
                    _ => key.contains("shape"),
                };
                if needed != realization.contains(field) {
                    return Err(err(
                        idx + 1,
                        format!("realization {realization:?} does not match key {key}"),
                    ));
                }
            }
            by_key
                .entry(key.to_string())
                .or_default()
                .push(realization.to_string());
        }
        for key in BANK_KEYS {
            let n = by_key.get(key).map_or(0, Vec::len);
            let min = if key == "pronoun" { 1 } else { MIN_REALIZATIONS };
            if n < min {
                return Err(Error::Validation(format!(
                    "{source_name}: key {key} has {n} realizations, need {min}"
                )));
            }
        }
        Ok(Self { by_key })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_REFEXPRS, "builtin referring expressions")
            .expect("builtin referring expressions are valid")
    }

    pub fn realizations(&self, key: &str) -> &[String] {
        self.by_key.get(key).map_or(&[], Vec::as_slice)
    }

    /// Fills one realization with the descriptor's words.
    pub fn fill(pattern: &str, d: &Descriptor) -> String {
        let colors = d.colors.join(" and ");
        let mut out = pattern
            .replace("{CAT}", d.category.as_deref().unwrap_or("object"))
            .replace("{COL}", &colors)
            .replace("{SIZE}", d.size.map(size_word).unwrap_or(""))
            .replace("{SHAPE}", d.shape.as_deref().unwrap_or(""));
        if let Some(rest) = out.strip_prefix("a ") {
            if rest.starts_with(['a', 'e', 'i', 'o', 'u']) {
                out = format!("an {rest}");
            }
        }
        out
    }

    /// Picks a realization for the descriptor's key; `None` if the descriptor
    /// has no bank key.
    pub fn realize(&self, d: &Descriptor, rng: &mut Rng) -> Option<String> {
        let key = d.bank_key()?;
        let pattern = self.realizations(&key).choose(rng)?;
        Some(Self::fill(pattern, d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SizeClass;

    #[test]
    fn builtin_has_six_per_pattern() {
        let bank = RefExprBank::builtin();
        for key in BANK_KEYS.iter().skip(1) {
            assert!(bank.realizations(key).len() >= MIN_REALIZATIONS, "{key}");
        }
        assert_eq!(bank.realizations("pronoun"), ["it"]);
    }

    #[test]
    fn fill_uses_an_before_vowels() {
        let d = Descriptor::category("apple").with_colors(["red"]);
        assert_eq!(RefExprBank::fill("a {CAT}", &d), "an apple");
        assert_eq!(RefExprBank::fill("a {COL} {CAT}", &d), "a red apple");
        let d = Descriptor::category("can")
            .with_colors(["yellow", "red"])
            .with_size(SizeClass::Medium);
        assert_eq!(
            RefExprBank::fill("the {CAT} that is {SIZE}", &d),
            "the can that is medium-sized"
        );
        assert_eq!(RefExprBank::fill("{COL} {CAT}", &d), "yellow and red can");
    }

    #[test]
    fn mismatched_placeholder_rejected() {
        assert!(RefExprBank::parse("cat+col\tthe {CAT}", "t").is_err());
        assert!(RefExprBank::parse("bogus\tthe {CAT}", "t").is_err());
    }
}
