//! Template-grammar parser: instruction classification, slot extraction and
//! descriptor parsing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::Grammar;
use crate::langgen::{Descriptor, InstructionClass, PatternItem, SlotKind, Template};
use crate::vocab::{
    parse_size, tokenize, Lexicon, Span, Token, CONJUNCTION, DETERMINERS, FILLER_ADJECTIVES,
    PRONOUNS, RELATIVE_PRONOUNS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Name,
    ObjectToBeNamed,
    Src,
    Dst,
}

/// A phrase captured by a template slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    pub phrase: String,
    pub span: Span,
    pub entity_type: EntityType,
    /// Slot that captured the phrase; a name in the SRC slot is the pick target.
    pub slot: SlotKind,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub class: InstructionClass,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub entities: Vec<ExtractedEntity>,
}

enum Modifier {
    Color(String),
    Size(crate::scene::SizeClass),
    Shape(String),
    Filler,
    Unknown(String),
}

fn modifier(lex: &Lexicon, tok: &Token) -> Option<Modifier> {
    let w = tok.lower.as_str();
    if lex.is_color(w) {
        Some(Modifier::Color(w.to_string()))
    } else if let Some(s) = parse_size(w) {
        Some(Modifier::Size(s))
    } else if lex.is_shape(w) {
        Some(Modifier::Shape(w.to_string()))
    } else if FILLER_ADJECTIVES.contains(&w) {
        Some(Modifier::Filler)
    } else if !lex.is_closed(w) && tok.text.chars().any(char::is_alphanumeric) {
        Some(Modifier::Unknown(w.to_string()))
    } else {
        None
    }
}

/// Modifier run with `and` only between two modifiers.
fn modifier_run(lex: &Lexicon, toks: &[Token], allow_unknown: bool) -> Option<Vec<Modifier>> {
    let mut out = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.lower == CONJUNCTION {
            if i == 0 || i + 1 == toks.len() || toks[i - 1].lower == CONJUNCTION {
                return None;
            }
            continue;
        }
        match modifier(lex, t)? {
            Modifier::Unknown(_) if !allow_unknown => return None,
            m => out.push(m),
        }
    }
    Some(out)
}

/// Strict descriptor grammar used for slot acceptance:
/// `it | this | that | [det] modifier* head [(that|which) is modifier+]`.
pub fn parse_descriptor_strict(lex: &Lexicon, toks: &[Token]) -> Option<Descriptor> {
    if toks.is_empty() {
        return None;
    }
    if toks.len() == 1 && PRONOUNS.contains(&toks[0].lower.as_str()) {
        return Some(Descriptor::pronoun());
    }
    let start = usize::from(toks.len() > 1 && DETERMINERS.contains(&toks[0].lower.as_str()));
    for h in start..toks.len() {
        let head = toks[h].lower.as_str();
        let generic = lex.is_generic_noun(head);
        if !lex.is_head_noun(head) && !generic {
            continue;
        }
        let Some(pre) = modifier_run(lex, &toks[start..h], true) else {
            continue;
        };
        let post_toks = &toks[h + 1..];
        let post = if post_toks.is_empty() {
            Vec::new()
        } else {
            if post_toks.len() < 3
                || !RELATIVE_PRONOUNS.contains(&post_toks[0].lower.as_str())
                || post_toks[1].lower != "is"
            {
                continue;
            }
            match modifier_run(lex, &post_toks[2..], false) {
                Some(m) if !m.is_empty() => m,
                _ => continue,
            }
        };
        let mut d = Descriptor::default();
        if !generic {
            d.category = Some(head.to_string());
        }
        for m in pre.into_iter().chain(post) {
            match m {
                Modifier::Color(c) => {
                    if !d.colors.contains(&c) {
                        d.colors.push(c)
                    }
                }
                Modifier::Size(s) => d.size = Some(s),
                Modifier::Shape(s) => d.shape = Some(s),
                Modifier::Filler => {}
                Modifier::Unknown(w) => d.unmatched.push(w),
            }
        }
        if generic && d.field_count() == 0 && d.unmatched.is_empty() {
            return Some(Descriptor::pronoun());
        }
        return Some(d);
    }
    None
}

/// Maps a phrase onto descriptor fields. Phrases outside the descriptor
/// grammar keep every unrecognised content word in `unmatched`.
pub fn parse_descriptor(grammar: &Grammar, phrase: &str) -> Descriptor {
    let lex = &grammar.lexicon;
    let toks = tokenize(phrase);
    if let Some(d) = parse_descriptor_strict(lex, &toks) {
        return d;
    }
    let mut d = Descriptor::default();
    for t in &toks {
        let w = t.lower.as_str();
        if lex.is_head_noun(w) {
            d.category = Some(w.to_string());
        } else if let Some(m) = modifier(lex, t) {
            match m {
                Modifier::Color(c) => d.colors.push(c),
                Modifier::Size(s) => d.size = Some(s),
                Modifier::Shape(s) => d.shape = Some(s),
                Modifier::Filler => {}
                Modifier::Unknown(_) => d.unmatched.push(t.text.clone()),
            }
        }
    }
    if !d.is_valid() {
        d.unmatched = toks.iter().map(|t| t.text.clone()).collect();
    }
    d
}

pub fn is_name_phrase(lex: &Lexicon, toks: &[Token]) -> bool {
    !toks.is_empty() && toks.iter().all(|t| lex.is_name_token(t))
}

/// Fraction of a slot phrase's tokens that the vocabulary recognises.
fn descriptor_confidence(d: &Descriptor, n_tokens: usize) -> f64 {
    if n_tokens == 0 {
        return 0.0;
    }
    1.0 - d.unmatched.len() as f64 / n_tokens as f64
}

struct Capture {
    slot: SlotKind,
    lo: usize,
    hi: usize,
    entity_type: EntityType,
    confidence: f64,
}

fn accept_slot(
    lex: &Lexicon,
    class: InstructionClass,
    slot: SlotKind,
    toks: &[Token],
) -> Option<(EntityType, f64)> {
    let descriptor = || parse_descriptor_strict(lex, toks);
    match (class, slot) {
        (InstructionClass::InstructionNotSupported, _) => {
            (descriptor().is_some() || is_name_phrase(lex, toks)).then_some((EntityType::Src, 1.0))
        }
        (_, SlotKind::Name) => is_name_phrase(lex, toks).then_some((EntityType::Name, 1.0)),
        (_, SlotKind::Obj) => descriptor()
            .map(|d| (EntityType::ObjectToBeNamed, descriptor_confidence(&d, toks.len()))),
        (_, SlotKind::Src | SlotKind::Dst) => {
            let ty = if slot == SlotKind::Src {
                EntityType::Src
            } else {
                EntityType::Dst
            };
            if let Some(d) = descriptor() {
                Some((ty, descriptor_confidence(&d, toks.len())))
            } else {
                is_name_phrase(lex, toks).then_some((EntityType::Name, 1.0))
            }
        }
    }
}

fn match_items(
    lex: &Lexicon,
    class: InstructionClass,
    items: &[PatternItem],
    toks: &[Token],
    pos: usize,
    caps: &mut Vec<Capture>,
) -> bool {
    let Some((item, rest)) = items.split_first() else {
        return pos == toks.len();
    };
    match item {
        PatternItem::Word(w) => {
            pos < toks.len()
                && toks[pos].lower == *w
                && match_items(lex, class, rest, toks, pos + 1, caps)
        }
        PatternItem::Slot(slot) => {
            // Leave room for the literal words still to come.
            let min_rest = rest.len();
            let max_end = toks.len().saturating_sub(min_rest);
            for end in pos + 1..=max_end {
                if let Some((ty, conf)) = accept_slot(lex, class, *slot, &toks[pos..end]) {
                    caps.push(Capture {
                        slot: *slot,
                        lo: pos,
                        hi: end,
                        entity_type: ty,
                        confidence: conf,
                    });
                    if match_items(lex, class, rest, toks, end, caps) {
                        return true;
                    }
                    caps.pop();
                }
            }
            false
        }
    }
}

fn strip_affix<'t>(toks: &'t [Token], affix: &[String], at_start: bool) -> Option<&'t [Token]> {
    if affix.len() >= toks.len() {
        return None;
    }
    let (head, body) = if at_start {
        (&toks[..affix.len()], &toks[affix.len()..])
    } else {
        (&toks[toks.len() - affix.len()..], &toks[..toks.len() - affix.len()])
    };
    head.iter()
        .zip(affix)
        .all(|(t, w)| t.lower == *w)
        .then_some(body)
}

struct TemplateMatch<'g> {
    template: &'g Template,
    body_tokens: usize,
    caps: Vec<Capture>,
    offset: usize,
}

impl TemplateMatch<'_> {
    /// Literal words matched, counting politeness words as literals.
    fn literals(&self, total: usize) -> usize {
        self.template.literal_count() + total - self.body_tokens
    }
}

fn best_match<'g>(grammar: &'g Grammar, toks: &[Token]) -> Option<TemplateMatch<'g>> {
    let bank = &grammar.templates;
    let empty: Vec<String> = Vec::new();
    let prefixes = std::iter::once(&empty).chain(bank.prefixes.iter());
    let mut best: Option<TemplateMatch<'g>> = None;
    for prefix in prefixes {
        let Some(after_prefix) = (if prefix.is_empty() {
            Some(toks)
        } else {
            strip_affix(toks, prefix, true)
        }) else {
            continue;
        };
        for suffix in std::iter::once(&empty).chain(bank.suffixes.iter()) {
            let Some(body) = (if suffix.is_empty() {
                Some(after_prefix)
            } else {
                strip_affix(after_prefix, suffix, false)
            }) else {
                continue;
            };
            for t in &bank.templates {
                let literals = t.literal_count() + toks.len() - body.len();
                if best.as_ref().is_some_and(|b| b.literals(toks.len()) >= literals) {
                    continue;
                }
                let mut caps = Vec::new();
                if match_items(&grammar.lexicon, t.class, &t.pattern, body, 0, &mut caps) {
                    best = Some(TemplateMatch {
                        template: t,
                        body_tokens: body.len(),
                        caps,
                        offset: prefix.len(),
                    });
                }
            }
        }
    }
    best
}

fn fallback_confidence(grammar: &Grammar, toks: &[Token]) -> f64 {
    if toks.is_empty() {
        return 1.0;
    }
    let overlap = grammar
        .templates
        .templates
        .iter()
        .filter(|t| t.class.is_positive())
        .map(|t| {
            toks.iter()
                .filter(|tok| t.words().any(|w| w == tok.lower))
                .count()
        })
        .max()
        .unwrap_or(0);
    1.0 - overlap as f64 / toks.len() as f64
}

/// Classifies and extracts in one pass over the template grammar.
pub fn parse_instruction(grammar: &Grammar, text: &str) -> ParseOutcome {
    let toks = tokenize(text);
    let Some(m) = best_match(grammar, &toks) else {
        return ParseOutcome {
            class: InstructionClass::InstructionNotSupported,
            confidence: fallback_confidence(grammar, &toks),
            template_id: None,
            entities: Vec::new(),
        };
    };
    let class = m.template.class;
    let confidence = m.body_tokens as f64 / toks.len() as f64;
    let entities = if class.is_positive() {
        let body = &toks[m.offset..m.offset + m.body_tokens];
        m.caps
            .iter()
            .map(|c| {
                let span = Span::new(body[c.lo].span.start, body[c.hi - 1].span.end);
                ExtractedEntity {
                    phrase: span.slice(text).unwrap_or_default().to_string(),
                    span,
                    entity_type: c.entity_type,
                    slot: c.slot,
                    confidence: c.confidence,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    ParseOutcome {
        class,
        confidence,
        template_id: Some(m.template.template_id.clone()),
        entities,
    }
}

pub fn classify_instruction(grammar: &Grammar, text: &str) -> (InstructionClass, f64) {
    let p = parse_instruction(grammar, text);
    (p.class, p.confidence)
}

pub fn extract_entities(grammar: &Grammar, text: &str) -> Result<Vec<ExtractedEntity>> {
    let p = parse_instruction(grammar, text);
    if !p.class.is_positive() {
        return Err(Error::Extraction(format!(
            "no slots to extract from an instruction classified as {}",
            p.class
        )));
    }
    if p.entities.iter().any(|e| e.span.is_empty()) {
        return Err(Error::Extraction("empty slot".into()));
    }
    Ok(p.entities)
}
