//! Instruction generation: referring expressions under a uniqueness
//! constraint, template filling, ambiguous variants and name substitution.

pub mod dataset;
pub mod descriptor;
pub mod lexicons;
pub mod refexpr;
pub mod templates;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::Grammar;
use crate::grounder::{exact_candidates, AmbiguityLabel, EntityType};
use crate::rng::{rng_for, Rng};
use crate::scene::{ObjectLibrary, ObjectSpec, Scene};
use crate::vocab::Span;

pub use dataset::{gen_dataset, Dataset, Mix};
pub use descriptor::Descriptor;
pub use lexicons::{ConfusionTable, NameLexicon};
pub use refexpr::RefExprBank;
pub use templates::{InstructionClass, PatternItem, SlotKind, Template, TemplateBank};

/// Highest detail level accepted by [`gen_referring_expression`].
pub const MAX_LEVEL: usize = 3;

/// Probability of wrapping a generated instruction in a politeness prefix / suffix.
const P_PREFIX: f64 = 0.15;
const P_SUFFIX: f64 = 0.1;

/// Object phrases used by naming instructions that do not describe the object.
pub const DEICTIC_PHRASES: &[&str] = &["it", "this", "that", "this one", "that object", "this thing"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldEntity {
    pub phrase: String,
    pub span: Span,
    pub entity_type: EntityType,
    pub slot: SlotKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_instance_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<Descriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedInstruction {
    pub instruction_id: String,
    pub scene_id: String,
    pub text: String,
    pub instruction_class: InstructionClass,
    pub template_id: String,
    pub entities: Vec<GoldEntity>,
    pub ambiguity_label: AmbiguityLabel,
}

impl AnnotatedInstruction {
    pub fn entity(&self, slot: SlotKind) -> Option<&GoldEntity> {
        self.entities.iter().find(|e| e.slot == slot)
    }

    pub fn entity_index(&self, slot: SlotKind) -> Option<usize> {
        self.entities.iter().position(|e| e.slot == slot)
    }

    /// Checks span bounds, phrase/substring agreement and non-overlap.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entities.iter().enumerate() {
            if e.span.is_empty() || e.span.slice(&self.text) != Some(e.phrase.as_str()) {
                return Err(Error::Validation(format!(
                    "{}: entity {i} span {:?} does not index {:?}",
                    self.instruction_id, e.span, e.phrase
                )));
            }
            if self.entities[..i].iter().any(|o| o.span.overlaps(&e.span)) {
                return Err(Error::Validation(format!(
                    "{}: overlapping entity spans",
                    self.instruction_id
                )));
            }
        }
        Ok(())
    }
}

/// Candidate descriptors for `spec` in ladder order: by number of fields,
/// category always present, then colors before size before shape.
fn ladder(spec: &ObjectSpec) -> Vec<Descriptor> {
    let base = Descriptor::category(spec.category.clone());
    let col = |d: Descriptor| d.with_colors(spec.colors.clone());
    let size = |d: Descriptor| d.with_size(spec.size_class);
    let shape = |d: Descriptor| d.with_shape(spec.shape.clone());
    vec![
        base.clone(),
        col(base.clone()),
        size(base.clone()),
        shape(base.clone()),
        size(col(base.clone())),
        shape(col(base.clone())),
        shape(size(base.clone())),
        shape(size(col(base))),
    ]
}

/// Least-detailed descriptor at or above `level` that denotes only `target`.
pub fn unique_descriptor(
    grammar: &Grammar,
    scene: &Scene,
    library: &ObjectLibrary,
    target: &str,
    level: usize,
) -> Result<Descriptor> {
    let spec = scene
        .spec_of(library, target)
        .ok_or_else(|| Error::UnknownInstance(target.to_string()))?;
    if level == 0 && scene.len() == 1 {
        return Ok(Descriptor::pronoun());
    }
    let lex = &grammar.lexicon;
    let mut last = Vec::new();
    for d in ladder(spec).into_iter().filter(|d| d.field_count() >= level.max(1)) {
        let cands = exact_candidates(lex, scene, library, &d);
        if cands.len() == 1 && cands[0] == target {
            return Ok(d);
        }
        last = cands;
    }
    Err(Error::NonUnique {
        target: target.to_string(),
        candidates: last,
    })
}

fn realize(grammar: &Grammar, d: &Descriptor, rng: &mut Rng) -> Result<String> {
    grammar
        .refexprs
        .realize(d, rng)
        .ok_or_else(|| Error::Validation(format!("no realization for descriptor {d:?}")))
}

/// Unique referring expression for `target` at detail `level` (0 = "it").
pub fn gen_referring_expression(
    grammar: &Grammar,
    scene: &Scene,
    library: &ObjectLibrary,
    target: &str,
    level: usize,
    seed: u64,
) -> Result<(Descriptor, String)> {
    if level > MAX_LEVEL {
        return Err(Error::Validation(format!("detail level {level} above {MAX_LEVEL}")));
    }
    let d = unique_descriptor(grammar, scene, library, target, level)?;
    let mut rng = rng_for(seed);
    let text = realize(grammar, &d, &mut rng)?;
    Ok((d, text))
}

/// What to put into one template slot.
struct SlotFill {
    slot: SlotKind,
    text: String,
    entity_type: EntityType,
    gold: Option<String>,
    descriptor: Option<Descriptor>,
}

fn capitalize_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Renders a template with slot fills, adding politeness words at random.
fn render(
    grammar: &Grammar,
    template: &Template,
    fills: Vec<SlotFill>,
    rng: &mut Rng,
) -> (String, Vec<GoldEntity>) {
    // Politeness words only read naturally around imperatives.
    let polite = template.class == InstructionClass::PickAndPlace;
    let mut words: Vec<String> = Vec::new();
    if polite && rng.random_bool(P_PREFIX) {
        if let Some(p) = grammar.templates.prefixes.choose(rng) {
            words.extend(p.iter().cloned());
        }
    }
    let mut text = words.join(" ");
    let mut entities = Vec::new();
    let mut fills = fills;
    for item in &template.pattern {
        if !text.is_empty() {
            text.push(' ');
        }
        match item {
            PatternItem::Word(w) => text.push_str(w),
            PatternItem::Slot(kind) => {
                let idx = fills
                    .iter()
                    .position(|f| f.slot == *kind)
                    .expect("every template slot has a fill");
                let f = fills.swap_remove(idx);
                let start = text.chars().count();
                text.push_str(&f.text);
                let end = text.chars().count();
                entities.push(GoldEntity {
                    phrase: f.text,
                    span: Span::new(start, end),
                    entity_type: f.entity_type,
                    slot: f.slot,
                    gold_instance_id: f.gold,
                    descriptor: f.descriptor,
                });
            }
        }
    }
    if polite && rng.random_bool(P_SUFFIX) {
        if let Some(s) = grammar.templates.suffixes.choose(rng) {
            text.push(' ');
            text.push_str(&s.join(" "));
        }
    }
    // Upper-casing the first character keeps the char count, so spans hold.
    let text = capitalize_first(&text);
    for e in &mut entities {
        e.phrase = e.span.slice(&text).unwrap_or_default().to_string();
    }
    (text, entities)
}

fn graspable_ids(scene: &Scene, library: &ObjectLibrary) -> Vec<String> {
    scene
        .instances
        .iter()
        .filter(|i| library.get(&i.object_id).is_some_and(|s| s.graspable))
        .map(|i| i.instance_id.clone())
        .collect()
}

fn descriptor_fill(
    grammar: &Grammar,
    slot: SlotKind,
    d: Descriptor,
    gold: &str,
    rng: &mut Rng,
) -> Result<SlotFill> {
    let entity_type = match slot {
        SlotKind::Src => EntityType::Src,
        SlotKind::Dst => EntityType::Dst,
        SlotKind::Obj => EntityType::ObjectToBeNamed,
        SlotKind::Name => EntityType::Name,
    };
    Ok(SlotFill {
        slot,
        text: realize(grammar, &d, rng)?,
        entity_type,
        gold: Some(gold.to_string()),
        descriptor: Some(d),
    })
}

/// Picks a pick-and-place template; templates with a DST slot need a second object.
fn pnp_template<'g>(grammar: &'g Grammar, with_dst: bool, rng: &mut Rng) -> &'g Template {
    let pool: Vec<&Template> = grammar
        .templates
        .of_class(InstructionClass::PickAndPlace)
        .filter(|t| with_dst || !t.has_slot(SlotKind::Dst))
        .collect();
    pool.choose(rng).expect("template bank has pick-only templates")
}

fn dst_fill(
    grammar: &Grammar,
    scene: &Scene,
    library: &ObjectLibrary,
    exclude: &[&str],
    rng: &mut Rng,
) -> Result<SlotFill> {
    let pool: Vec<&str> = scene
        .instances
        .iter()
        .map(|i| i.instance_id.as_str())
        .filter(|id| !exclude.contains(id))
        .collect();
    let dst = pool
        .choose(rng)
        .ok_or_else(|| Error::Infeasible("no object left to place on".into()))?;
    let level = rng.random_range(1..=MAX_LEVEL);
    let d = unique_descriptor(grammar, scene, library, dst, level)?;
    descriptor_fill(grammar, SlotKind::Dst, d, dst, rng)
}

/// An unambiguous instruction of `class` over `scene`.
pub fn gen_instruction(
    grammar: &Grammar,
    scene: &Scene,
    library: &ObjectLibrary,
    class: InstructionClass,
    seed: u64,
) -> Result<AnnotatedInstruction> {
    let mut rng = rng_for(seed);
    let (template, fills) = match class {
        InstructionClass::PickAndPlace => {
            let srcs = graspable_ids(scene, library);
            let src = srcs
                .choose(&mut rng)
                .ok_or_else(|| Error::Infeasible("no graspable object in scene".into()))?
                .clone();
            let template = pnp_template(grammar, scene.len() > 1, &mut rng);
            let level = rng.random_range(0..=MAX_LEVEL);
            let d = unique_descriptor(grammar, scene, library, &src, level)?;
            let mut fills = vec![descriptor_fill(grammar, SlotKind::Src, d, &src, &mut rng)?];
            if template.has_slot(SlotKind::Dst) {
                fills.push(dst_fill(grammar, scene, library, &[&src], &mut rng)?);
            }
            (template, fills)
        }
        InstructionClass::NamingObject => {
            let target = scene
                .instances
                .choose(&mut rng)
                .ok_or_else(|| Error::Infeasible("nothing to name in an empty scene".into()))?
                .instance_id
                .clone();
            let name = grammar
                .names
                .names()
                .choose(&mut rng)
                .expect("name lexicon is non-empty")
                .clone();
            let template = *grammar
                .templates
                .of_class(class)
                .collect::<Vec<_>>()
                .choose(&mut rng)
                .expect("template bank has naming templates");
            let level = rng.random_range(0..=MAX_LEVEL);
            let d = unique_descriptor(grammar, scene, library, &target, level)?;
            let fills = vec![
                descriptor_fill(grammar, SlotKind::Obj, d, &target, &mut rng)?,
                name_fill(&name, Some(&target)),
            ];
            (template, fills)
        }
        InstructionClass::InstructionNotSupported => {
            let pool: Vec<&Template> = grammar
                .templates
                .of_class(class)
                .filter(|t| t.slots().count() <= scene.len())
                .collect();
            let template = *pool.choose(&mut rng).expect("slot-free negative templates exist");
            let mut ids: Vec<&str> = scene.instances.iter().map(|i| i.instance_id.as_str()).collect();
            let mut fills = Vec::new();
            for slot in template.slots() {
                let idx = rng.random_range(0..ids.len());
                let id = ids.swap_remove(idx);
                let level = rng.random_range(1..=MAX_LEVEL);
                let d = unique_descriptor(grammar, scene, library, id, level)?;
                fills.push(descriptor_fill(grammar, slot, d, id, &mut rng)?);
            }
            (template, fills)
        }
    };
    let (text, mut entities) = render(grammar, template, fills, &mut rng);
    if class == InstructionClass::InstructionNotSupported {
        entities.clear();
    }
    Ok(AnnotatedInstruction {
        instruction_id: String::new(),
        scene_id: scene.scene_id.clone(),
        text,
        instruction_class: class,
        template_id: template.template_id.clone(),
        entities,
        ambiguity_label: AmbiguityLabel::Unambiguous,
    })
}

fn name_fill(name: &str, gold: Option<&str>) -> SlotFill {
    SlotFill {
        slot: SlotKind::Name,
        text: name.to_string(),
        entity_type: EntityType::Name,
        gold: gold.map(str::to_string),
        descriptor: None,
    }
}

/// Descriptors that denote `target` together with at least one other object:
/// attributes dropped one at a time (shape, size, colors), then shared aliases.
fn shared_descriptors(
    grammar: &Grammar,
    scene: &Scene,
    library: &ObjectLibrary,
    target: &str,
) -> Vec<(Descriptor, Vec<String>)> {
    let Some(spec) = scene.spec_of(library, target) else {
        return Vec::new();
    };
    let lex = &grammar.lexicon;
    let full = ladder(spec).pop().expect("ladder is non-empty");
    let mut steps = vec![full.clone()];
    let mut d = full;
    for drop in 0..3 {
        match drop {
            0 => d.shape = None,
            1 => d.size = None,
            _ => d.colors.clear(),
        }
        steps.push(d.clone());
    }
    for alias in &spec.aliases {
        steps.push(Descriptor::category(alias.clone()));
    }
    let mut out = Vec::new();
    for d in steps {
        let cands = exact_candidates(lex, scene, library, &d);
        if cands.len() >= 2 && cands.iter().any(|c| c == target) {
            out.push((d, cands));
        }
    }
    out
}

/// A pick-and-place instruction whose src reference is ambiguous.
pub fn gen_ambiguous_instruction(
    grammar: &Grammar,
    scene: &Scene,
    library: &ObjectLibrary,
    kind: AmbiguityLabel,
    seed: u64,
) -> Result<AnnotatedInstruction> {
    let mut rng = rng_for(seed);
    let graspable = graspable_ids(scene, library);
    let (src_fill, exclude) = match kind {
        AmbiguityLabel::Unambiguous => {
            return Err(Error::Validation(
                "use gen_instruction for unambiguous instructions".into(),
            ))
        }
        AmbiguityLabel::MultipleCandidates => {
            // The first (most detailed) shared descriptor of each graspable object.
            let mut options: Vec<(Descriptor, Vec<String>)> = Vec::new();
            for id in &graspable {
                if let Some(first) = shared_descriptors(grammar, scene, library, id).into_iter().next() {
                    if !options.iter().any(|(d, _)| *d == first.0) {
                        options.push(first);
                    }
                }
            }
            let (d, cands) = options.choose(&mut rng).cloned().ok_or_else(|| {
                Error::Infeasible("no two objects share a descriptor".into())
            })?;
            let intended: Vec<&String> = cands.iter().filter(|c| graspable.contains(c)).collect();
            let gold = (*intended.choose(&mut rng).expect("options built from graspable")).clone();
            let fill = descriptor_fill(grammar, SlotKind::Src, d, &gold, &mut rng)?;
            (fill, cands)
        }
        AmbiguityLabel::IncorrectReference => {
            let lex = &grammar.lexicon;
            let mut options: Vec<(String, String)> = Vec::new();
            for id in &graspable {
                let spec = scene.spec_of(library, id).expect("graspable ids come from scene");
                for wrong in grammar.confusions.confusions_for(&spec.category) {
                    let probe = Descriptor::category(wrong);
                    if exact_candidates(lex, scene, library, &probe).is_empty() {
                        options.push((id.clone(), wrong.to_string()));
                    }
                }
            }
            let (gold, wrong) = options.choose(&mut rng).cloned().ok_or_else(|| {
                Error::Infeasible("no scene object has a confusable category".into())
            })?;
            let level = 1;
            let mut d = unique_descriptor(grammar, scene, library, &gold, level)?;
            d.category = Some(wrong);
            let fill = descriptor_fill(grammar, SlotKind::Src, d, &gold, &mut rng)?;
            let exclude = vec![gold];
            (fill, exclude)
        }
    };
    let gold = src_fill.gold.clone().expect("src has gold");
    let mut exclude: Vec<&str> = exclude.iter().map(String::as_str).collect();
    if !exclude.contains(&gold.as_str()) {
        exclude.push(&gold);
    }
    let with_dst = scene.len() > exclude.len();
    let template = pnp_template(grammar, with_dst, &mut rng);
    let mut fills = vec![src_fill];
    if template.has_slot(SlotKind::Dst) {
        fills.push(dst_fill(grammar, scene, library, &exclude, &mut rng)?);
    }
    let (text, entities) = render(grammar, template, fills, &mut rng);
    Ok(AnnotatedInstruction {
        instruction_id: String::new(),
        scene_id: scene.scene_id.clone(),
        text,
        instruction_class: InstructionClass::PickAndPlace,
        template_id: template.template_id.clone(),
        entities,
        ambiguity_label: kind,
    })
}

/// Replaces the phrase of a src/dst entity with `name`, shifting later spans.
pub fn substitute_name(
    instr: &AnnotatedInstruction,
    entity_index: usize,
    name: &str,
) -> Result<AnnotatedInstruction> {
    let e = instr.entities.get(entity_index).ok_or_else(|| {
        Error::Validation(format!(
            "entity index {entity_index} out of range ({} entities)",
            instr.entities.len()
        ))
    })?;
    if !matches!(e.entity_type, EntityType::Src | EntityType::Dst) {
        return Err(Error::Validation(format!(
            "entity {entity_index} has type {:?}; only src/dst can be named",
            e.entity_type
        )));
    }
    if name.trim().is_empty() {
        return Err(Error::Validation("empty name".into()));
    }
    let chars: Vec<char> = instr.text.chars().collect();
    let (s, t) = (e.span.start, e.span.end);
    let mut text: String = chars[..s].iter().collect();
    text.push_str(name);
    text.extend(&chars[t..]);
    let new_len = name.chars().count();
    let delta = new_len as isize - (t - s) as isize;
    let mut out = instr.clone();
    out.text = text;
    for (i, other) in out.entities.iter_mut().enumerate() {
        if i == entity_index {
            other.phrase = name.to_string();
            other.span = Span::new(s, s + new_len);
            other.entity_type = EntityType::Name;
            other.descriptor = None;
        } else if other.span.start >= t {
            other.span = Span::new(
                (other.span.start as isize + delta) as usize,
                (other.span.end as isize + delta) as usize,
            );
        }
    }
    Ok(out)
}

/// A naming instruction binding `name` to the object described by `object`
/// (a deictic phrase when `None`).
pub fn gen_naming_instruction(
    grammar: &Grammar,
    name: &str,
    object: Option<&Descriptor>,
    seed: u64,
) -> Result<AnnotatedInstruction> {
    if name.trim().is_empty() {
        return Err(Error::Validation("empty name".into()));
    }
    let mut rng = rng_for(seed);
    let templates: Vec<&Template> = grammar.templates.of_class(InstructionClass::NamingObject).collect();
    let template = *templates.choose(&mut rng).expect("template bank has naming templates");
    let (obj_text, descriptor) = match object {
        Some(d) => (realize(grammar, d, &mut rng)?, d.clone()),
        None => (
            DEICTIC_PHRASES.choose(&mut rng).expect("non-empty").to_string(),
            Descriptor::pronoun(),
        ),
    };
    let fills = vec![
        SlotFill {
            slot: SlotKind::Obj,
            text: obj_text,
            entity_type: EntityType::ObjectToBeNamed,
            gold: None,
            descriptor: Some(descriptor),
        },
        name_fill(name, None),
    ];
    let (text, entities) = render(grammar, template, fills, &mut rng);
    Ok(AnnotatedInstruction {
        instruction_id: String::new(),
        scene_id: String::new(),
        text,
        instruction_class: InstructionClass::NamingObject,
        template_id: template.template_id.clone(),
        entities,
        ambiguity_label: AmbiguityLabel::Unambiguous,
    })
}
