use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUILTIN_TEMPLATES: &str = include_str!("../../data/templates.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstructionClass {
    NamingObject,
    PickAndPlace,
    InstructionNotSupported,
}

impl InstructionClass {
    pub const ALL: [InstructionClass; 3] = [
        InstructionClass::NamingObject,
        InstructionClass::PickAndPlace,
        InstructionClass::InstructionNotSupported,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InstructionClass::NamingObject => "naming-object",
            InstructionClass::PickAndPlace => "pick-and-place",
            InstructionClass::InstructionNotSupported => "instruction-not-supported",
        }
    }

    pub fn is_positive(self) -> bool {
        self != InstructionClass::InstructionNotSupported
    }
}

impl fmt::Display for InstructionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstructionClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        InstructionClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown instruction class {s:?}"))
    }
}

/// Template slot. `Obj` is the object-to-be-named slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Src,
    Dst,
    Name,
    #[serde(rename = "object_to_be_named")]
    Obj,
}

impl SlotKind {
    fn marker(self) -> &'static str {
        match self {
            SlotKind::Src => "{SRC}",
            SlotKind::Dst => "{DST}",
            SlotKind::Name => "{NAME}",
            SlotKind::Obj => "{OBJ}",
        }
    }

    fn from_marker(s: &str) -> Option<Self> {
        [SlotKind::Src, SlotKind::Dst, SlotKind::Name, SlotKind::Obj]
            .into_iter()
            .find(|k| k.marker() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternItem {
    Word(String),
    Slot(SlotKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub template_id: String,
    pub class: InstructionClass,
    pub pattern: Vec<PatternItem>,
}

impl Template {
    pub fn slots(&self) -> impl Iterator<Item = SlotKind> + '_ {
        self.pattern.iter().filter_map(|p| match p {
            PatternItem::Slot(k) => Some(*k),
            PatternItem::Word(_) => None,
        })
    }

    pub fn has_slot(&self, kind: SlotKind) -> bool {
        self.slots().any(|k| k == kind)
    }

    pub fn literal_count(&self) -> usize {
        self.pattern
            .iter()
            .filter(|p| matches!(p, PatternItem::Word(_)))
            .count()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.pattern.iter().filter_map(|p| match p {
            PatternItem::Word(w) => Some(w.as_str()),
            PatternItem::Slot(_) => None,
        })
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let counts = |k| self.slots().filter(|s| *s == k).count();
        if [SlotKind::Src, SlotKind::Dst, SlotKind::Name, SlotKind::Obj]
            .iter()
            .any(|k| counts(*k) > 1)
        {
            return Err("a slot may appear at most once".into());
        }
        let ok = match self.class {
            InstructionClass::NamingObject => {
                self.has_slot(SlotKind::Name)
                    && self.has_slot(SlotKind::Obj)
                    && !self.has_slot(SlotKind::Src)
                    && !self.has_slot(SlotKind::Dst)
            }
            InstructionClass::PickAndPlace => {
                self.has_slot(SlotKind::Src)
                    && !self.has_slot(SlotKind::Name)
                    && !self.has_slot(SlotKind::Obj)
            }
            InstructionClass::InstructionNotSupported => {
                !self.has_slot(SlotKind::Name) && !self.has_slot(SlotKind::Obj)
            }
        };
        if !ok {
            return Err(format!("slot set not allowed for class {}", self.class));
        }
        for (a, b) in self.pattern.iter().zip(self.pattern.iter().skip(1)) {
            if matches!((a, b), (PatternItem::Slot(_), PatternItem::Slot(_))) {
                // Adjacent slots are only allowed when one is the NAME slot,
                // whose token class is disjoint from descriptors.
                if !matches!(
                    (a, b),
                    (PatternItem::Slot(SlotKind::Obj), PatternItem::Slot(SlotKind::Name))
                ) {
                    return Err("adjacent slots".into());
                }
            }
        }
        Ok(())
    }
}

/// Instruction templates plus the politeness insertions the grammar accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBank {
    pub templates: Vec<Template>,
    pub prefixes: Vec<Vec<String>>,
    pub suffixes: Vec<Vec<String>>,
}

fn literal_words(text: &str) -> std::result::Result<Vec<String>, String> {
    text.split_whitespace()
        .map(|w| {
            let ok = w
                .chars()
                .all(|c| c.is_ascii_lowercase() || c == '\'' || c == '-');
            if ok {
                Ok(w.to_string())
            } else {
                Err(format!("literal {w:?} must be lowercase"))
            }
        })
        .collect()
}

impl TemplateBank {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Format {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut bank = TemplateBank {
            templates: Vec::new(),
            prefixes: Vec::new(),
            suffixes: Vec::new(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["@prefix", words] => bank
                    .prefixes
                    .push(literal_words(words).map_err(|m| err(line_no, m))?),
                ["@suffix", words] => bank
                    .suffixes
                    .push(literal_words(words).map_err(|m| err(line_no, m))?),
                [id, class, pattern] => {
                    let class = class.parse().map_err(|m| err(line_no, m))?;
                    let mut items = Vec::new();
                    for w in pattern.split_whitespace() {
                        if w.starts_with('{') {
                            let slot = SlotKind::from_marker(w)
                                .ok_or_else(|| err(line_no, format!("unknown slot {w}")))?;
                            items.push(PatternItem::Slot(slot));
                        } else {
                            let mut lit = literal_words(w).map_err(|m| err(line_no, m))?;
                            items.push(PatternItem::Word(lit.remove(0)));
                        }
                    }
                    if items.is_empty() {
                        return Err(err(line_no, "empty pattern".into()));
                    }
                    let t = Template {
                        template_id: id.to_string(),
                        class,
                        pattern: items,
                    };
                    t.validate()
                        .map_err(|m| err(line_no, format!("{id}: {m}")))?;
                    if bank.templates.iter().any(|o| o.template_id == t.template_id) {
                        return Err(err(line_no, format!("duplicate template id {id}")));
                    }
                    bank.templates.push(t);
                }
                _ => {
                    return Err(err(
                        line_no,
                        "expected <id> TAB <class> TAB <pattern> or @prefix/@suffix TAB <words>"
                            .into(),
                    ))
                }
            }
        }
        Ok(bank)
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TEMPLATES, "builtin templates").expect("builtin templates are valid")
    }

    pub fn of_class(&self, class: InstructionClass) -> impl Iterator<Item = &Template> {
        self.templates.iter().filter(move |t| t.class == class)
    }

    pub fn get(&self, template_id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.template_id == template_id)
    }

    /// Every literal word used by templates and politeness insertions.
    pub fn all_words(&self) -> impl Iterator<Item = &str> {
        self.templates
            .iter()
            .flat_map(|t| t.words())
            .chain(self.prefixes.iter().flatten().map(String::as_str))
            .chain(self.suffixes.iter().flatten().map(String::as_str))
    }
}
