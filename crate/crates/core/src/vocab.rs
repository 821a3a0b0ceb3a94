//! Shared lexicon: tokenization, attribute vocabulary and the closed word
//! class that names may not be drawn from.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::scene::{ObjectLibrary, SizeClass};

pub const DETERMINERS: &[&str] = &["the", "a", "an", "this", "that"];
pub const PRONOUNS: &[&str] = &["it", "this", "that"];
pub const GENERIC_NOUNS: &[&str] = &["one", "object", "thing", "item"];
pub const FILLER_ADJECTIVES: &[&str] = &["only", "single"];
pub const RELATIVE_PRONOUNS: &[&str] = &["that", "which"];
pub const CONJUNCTION: &str = "and";

/// Size words accepted by the parser; the first word per class is canonical.
pub const SIZE_WORDS: &[(&str, SizeClass)] = &[
    ("small", SizeClass::Small),
    ("little", SizeClass::Small),
    ("tiny", SizeClass::Small),
    ("medium-sized", SizeClass::Medium),
    ("medium", SizeClass::Medium),
    ("mid-sized", SizeClass::Medium),
    ("large", SizeClass::Large),
    ("big", SizeClass::Large),
];

pub fn size_word(size: SizeClass) -> &'static str {
    SIZE_WORDS
        .iter()
        .find(|(_, s)| *s == size)
        .map(|(w, _)| *w)
        .expect("every size has a word")
}

pub fn parse_size(word: &str) -> Option<SizeClass> {
    SIZE_WORDS.iter().find(|(w, _)| *w == word).map(|(_, s)| *s)
}

/// Half-open character span `[start, end)` into an instruction text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Substring of `text` covered by this span, by character index.
    pub fn slice<'t>(&self, text: &'t str) -> Option<&'t str> {
        let mut idx = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
        let b0 = idx.by_ref().nth(self.start)?;
        let b1 = if self.end == self.start {
            b0
        } else {
            idx.nth(self.end - self.start - 1)?
        };
        text.get(b0..b1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub lower: String,
    pub span: Span,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\''
}

/// Splits on anything that is not alphanumeric, `-` or `'`; punctuation is dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        if is_word_char(c) {
            if cur.is_empty() {
                start = i;
            }
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(make_token(std::mem::take(&mut cur), start, i));
        }
    }
    if !cur.is_empty() {
        out.push(make_token(cur, start, n));
    }
    out
}

fn make_token(text: String, start: usize, end: usize) -> Token {
    let lower = text.to_lowercase();
    Token {
        text,
        lower,
        span: Span::new(start, end),
    }
}

/// Attribute vocabulary plus the reserved words of the instruction grammar.
#[derive(Debug, Clone)]
pub struct Lexicon {
    categories: BTreeSet<String>,
    /// Head noun → library categories it denotes (a category denotes itself).
    noun_targets: BTreeMap<String, BTreeSet<String>>,
    /// Nouns known to the parser that no library object carries.
    foreign_nouns: BTreeSet<String>,
    colors: BTreeSet<String>,
    shapes: BTreeSet<String>,
    closed: HashSet<String>,
}

impl Lexicon {
    pub fn new<'a>(
        library: &ObjectLibrary,
        extra_nouns: impl IntoIterator<Item = &'a str>,
        grammar_words: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let categories = library.categories();
        let mut noun_targets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for c in &categories {
            noun_targets.entry(c.clone()).or_default().insert(c.clone());
        }
        for (cat, aliases) in library.aliases_by_category() {
            for a in aliases {
                noun_targets.entry(a).or_default().insert(cat.clone());
            }
        }
        let foreign_nouns: BTreeSet<String> = extra_nouns
            .into_iter()
            .filter(|w| !noun_targets.contains_key(*w))
            .map(str::to_string)
            .collect();
        let colors = library.colors();
        let shapes = library.shapes();
        let mut closed: HashSet<String> = HashSet::new();
        closed.extend(noun_targets.keys().cloned());
        closed.extend(foreign_nouns.iter().cloned());
        closed.extend(colors.iter().cloned());
        closed.extend(shapes.iter().cloned());
        closed.extend(SIZE_WORDS.iter().map(|(w, _)| w.to_string()));
        for list in [DETERMINERS, PRONOUNS, GENERIC_NOUNS, FILLER_ADJECTIVES, RELATIVE_PRONOUNS] {
            closed.extend(list.iter().map(|w| w.to_string()));
        }
        closed.insert(CONJUNCTION.into());
        closed.insert("is".into());
        closed.extend(grammar_words.into_iter().map(str::to_string));
        Self {
            categories,
            noun_targets,
            foreign_nouns,
            colors,
            shapes,
            closed,
        }
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn colors(&self) -> &BTreeSet<String> {
        &self.colors
    }

    pub fn shapes(&self) -> &BTreeSet<String> {
        &self.shapes
    }

    pub fn is_color(&self, w: &str) -> bool {
        self.colors.contains(w)
    }

    pub fn is_shape(&self, w: &str) -> bool {
        self.shapes.contains(w)
    }

    /// True for library categories, aliases and foreign (confusion-only) nouns.
    pub fn is_head_noun(&self, w: &str) -> bool {
        self.noun_targets.contains_key(w) || self.foreign_nouns.contains(w)
    }

    pub fn is_generic_noun(&self, w: &str) -> bool {
        GENERIC_NOUNS.contains(&w)
    }

    /// Whether noun `word` can denote an object whose category is `category`.
    pub fn noun_denotes(&self, word: &str, category: &str) -> bool {
        self.noun_targets
            .get(word)
            .is_some_and(|cats| cats.contains(category))
    }

    /// Library categories a noun can denote (empty for foreign nouns).
    pub fn noun_categories(&self, word: &str) -> BTreeSet<String> {
        self.noun_targets.get(word).cloned().unwrap_or_default()
    }

    pub fn is_closed(&self, w: &str) -> bool {
        self.closed.contains(w)
    }

    /// A token may be part of a name when it is capitalized (or starts with a
    /// digit) or is not a reserved word.
    pub fn is_name_token(&self, tok: &Token) -> bool {
        let first = tok.text.chars().next();
        let has_alnum = tok.text.chars().any(char::is_alphanumeric);
        has_alnum
            && (first.is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
                || !self.is_closed(&tok.lower))
    }
}
