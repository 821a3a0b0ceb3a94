//! Instruction grounding: template parsing, noisy scene observation and
//! attribute-level candidate ranking.

pub mod parse;

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::Grammar;
use crate::langgen::{Descriptor, InstructionClass};
use crate::rng::{derive_str, rng_for};
use crate::scene::camera::clamp_to_frame;
use crate::scene::{CameraView, ObjectLibrary, Scene, SizeClass};
use crate::vocab::Lexicon;
use crate::BBox;

pub use parse::{
    classify_instruction, extract_entities, parse_descriptor, parse_instruction, EntityType,
    ExtractedEntity, ParseOutcome,
};

/// Minimum candidate score the executor accepts as a detection.
pub const DETECTION_THRESHOLD: f64 = 0.5;
/// Score ceiling for descriptors carrying unmatched words.
pub const UNMATCHED_SCORE_CAP: f64 = 0.49;

/// Perception noise. The defaults are calibrated so that descriptor-based
/// grounding of ambiguous instructions succeeds about a third of the time
/// while naming stays reliable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Probability that one attribute of one instance is misread.
    pub p_flip: f64,
    /// Maximum per-edge bounding-box jitter in pixels.
    pub jitter_px: f64,
    /// Feature noise scale for the matcher.
    pub sigma: f64,
    /// Matcher acceptance threshold.
    pub tau: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            p_flip: 0.002,
            jitter_px: 4.0,
            sigma: 0.05,
            tau: 0.9,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            p_flip: 0.0,
            jitter_px: 0.0,
            sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_flip) {
            return Err(Error::Validation(format!("p_flip {} outside [0, 1)", self.p_flip)));
        }
        if !(self.jitter_px >= 0.0 && self.jitter_px.is_finite()) {
            return Err(Error::Validation("jitter_px must be >= 0".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Validation("sigma must be >= 0".into()));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Validation("tau must be >= 0".into()));
        }
        Ok(())
    }
}

/// Attribute values as perceived (or as ground truth).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attributes {
    pub category: String,
    pub colors: Vec<String>,
    pub size: SizeClass,
    pub shape: String,
}

impl Attributes {
    pub fn of(spec: &crate::scene::ObjectSpec) -> Self {
        Self {
            category: spec.category.clone(),
            colors: spec.colors.clone(),
            size: spec.size_class,
            shape: spec.shape.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedInstance {
    pub instance_id: String,
    pub attributes: Attributes,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObservation {
    pub scene_id: String,
    pub camera_view: CameraView,
    pub seed: u64,
    pub instances: Vec<ObservedInstance>,
}

impl SceneObservation {
    pub fn instance(&self, instance_id: &str) -> Option<&ObservedInstance> {
        self.instances.iter().find(|o| o.instance_id == instance_id)
    }
}

fn flip<T: Clone + PartialEq>(rng: &mut crate::rng::Rng, truth: &T, pool: &[T], p: f64) -> T {
    if p > 0.0 && rng.random_bool(p) {
        let others: Vec<&T> = pool.iter().filter(|v| *v != truth).collect();
        if let Some(v) = others.choose(rng) {
            return (*v).clone();
        }
    }
    truth.clone()
}

/// Observes `scene` from its camera view. Each instance draws from its own
/// stream so adding an object does not perturb the others.
pub fn observe_scene(
    scene: &Scene,
    library: &ObjectLibrary,
    noise: &NoiseConfig,
    seed: u64,
) -> SceneObservation {
    observe_from(scene, library, scene.camera_view, noise, seed)
}

pub fn observe_from(
    scene: &Scene,
    library: &ObjectLibrary,
    view: CameraView,
    noise: &NoiseConfig,
    seed: u64,
) -> SceneObservation {
    let categories: Vec<String> = library.categories().into_iter().collect();
    let color_sets: Vec<Vec<String>> = library
        .specs()
        .iter()
        .map(|s| s.colors.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let shapes: Vec<String> = library.shapes().into_iter().collect();
    let instances = scene
        .instances
        .iter()
        .map(|inst| {
            let spec = library
                .get(&inst.object_id)
                .expect("scene validated against library");
            let truth = Attributes::of(spec);
            let mut rng = rng_for(derive_str(seed, &inst.instance_id));
            let p = noise.p_flip;
            let attributes = Attributes {
                category: flip(&mut rng, &truth.category, &categories, p),
                colors: flip(&mut rng, &truth.colors, &color_sets, p),
                size: flip(&mut rng, &truth.size, &SizeClass::ALL, p),
                shape: flip(&mut rng, &truth.shape, &shapes, p),
            };
            let gold: BBox = crate::scene::project_bbox(inst, spec, view);
            let bbox = if noise.jitter_px > 0.0 {
                let j = noise.jitter_px;
                let mut d = || rng.random_range(-j..=j);
                let (a, b, c, e) = (d(), d(), d(), d());
                clamp_to_frame(gold.x_min + a, gold.y_min + b, gold.x_max + c, gold.y_max + e)
            } else {
                gold
            };
            ObservedInstance {
                instance_id: inst.instance_id.clone(),
                attributes,
                bbox,
            }
        })
        .collect();
    SceneObservation {
        scene_id: scene.scene_id.clone(),
        camera_view: view,
        seed,
        instances,
    }
}

/// Ground-truth observation (no noise, no RNG).
pub fn exact_observation(scene: &Scene, library: &ObjectLibrary) -> SceneObservation {
    observe_scene(scene, library, &NoiseConfig::zero(), 0)
}

/// Whether every descriptor field holds for `attrs`. Pronouns hold for anything;
/// unmatched words hold for nothing.
pub fn satisfies(lex: &Lexicon, d: &Descriptor, attrs: &Attributes) -> bool {
    if d.pronoun {
        return true;
    }
    d.unmatched.is_empty() && satisfied_fields(lex, d, attrs) == d.field_count()
}

fn satisfied_fields(lex: &Lexicon, d: &Descriptor, attrs: &Attributes) -> usize {
    let cat = d
        .category
        .as_deref()
        .is_some_and(|w| lex.noun_denotes(w, &attrs.category));
    let col = !d.colors.is_empty() && d.colors.iter().all(|c| attrs.colors.contains(c));
    let size = d.size == Some(attrs.size);
    let shape = d.shape.as_deref() == Some(attrs.shape.as_str());
    usize::from(cat) + usize::from(col) + usize::from(size) + usize::from(shape)
}

/// Fraction of the descriptor's fields that hold for `attrs`.
pub fn score(lex: &Lexicon, d: &Descriptor, attrs: &Attributes, n_instances: usize) -> f64 {
    if d.pronoun {
        return if n_instances == 0 { 0.0 } else { 1.0 / n_instances as f64 };
    }
    let total = d.field_count() + d.unmatched.len();
    if total == 0 {
        return 0.0;
    }
    let s = satisfied_fields(lex, d, attrs) as f64 / total as f64;
    if d.unmatched.is_empty() {
        s
    } else {
        s.min(UNMATCHED_SCORE_CAP)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub instance_id: String,
    pub bbox: BBox,
    pub score: f64,
}

/// Instances with a non-zero score, best first, ties by instance id.
pub fn candidates(lex: &Lexicon, obs: &SceneObservation, d: &Descriptor) -> Vec<Candidate> {
    let n = obs.instances.len();
    let mut out: Vec<Candidate> = obs
        .instances
        .iter()
        .map(|o| Candidate {
            instance_id: o.instance_id.clone(),
            bbox: o.bbox,
            score: score(lex, d, &o.attributes, n),
        })
        .filter(|c| c.score > 0.0)
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.instance_id.cmp(&b.instance_id))
    });
    out
}

/// Instances the descriptor denotes under exact semantics, in scene order.
pub fn exact_candidates(
    lex: &Lexicon,
    scene: &Scene,
    library: &ObjectLibrary,
    d: &Descriptor,
) -> Vec<String> {
    scene
        .instances
        .iter()
        .filter(|inst| {
            let spec = library.get(&inst.object_id).expect("scene validated");
            satisfies(lex, d, &Attributes::of(spec))
        })
        .map(|inst| inst.instance_id.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmbiguityLabel {
    Unambiguous,
    MultipleCandidates,
    IncorrectReference,
}

impl AmbiguityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityLabel::Unambiguous => "unambiguous",
            AmbiguityLabel::MultipleCandidates => "multiple-candidates",
            AmbiguityLabel::IncorrectReference => "incorrect-reference",
        }
    }

    pub fn is_ambiguous(self) -> bool {
        self != AmbiguityLabel::Unambiguous
    }
}

impl std::fmt::Display for AmbiguityLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn label_for_count(n: usize) -> AmbiguityLabel {
    match n {
        0 => AmbiguityLabel::IncorrectReference,
        1 => AmbiguityLabel::Unambiguous,
        _ => AmbiguityLabel::MultipleCandidates,
    }
}

pub fn ambiguity_oracle(
    lex: &Lexicon,
    scene: &Scene,
    library: &ObjectLibrary,
    d: &Descriptor,
) -> AmbiguityLabel {
    label_for_count(exact_candidates(lex, scene, library, d).len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedEntity {
    #[serde(flatten)]
    pub entity: ExtractedEntity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<Descriptor>,
    /// Ranked candidates; empty for name entities, which the matcher resolves.
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub instruction_class: InstructionClass,
    pub class_confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub entities: Vec<GroundedEntity>,
}

/// Parses `text` and ranks candidates for every descriptor entity.
pub fn ground_instruction(grammar: &Grammar, obs: &SceneObservation, text: &str) -> GroundingResult {
    let parsed = parse_instruction(grammar, text);
    let entities = parsed
        .entities
        .into_iter()
        .map(|entity| {
            if entity.entity_type == EntityType::Name {
                GroundedEntity {
                    entity,
                    descriptor: None,
                    candidates: Vec::new(),
                }
            } else {
                let d = parse_descriptor(grammar, &entity.phrase);
                let candidates = candidates(&grammar.lexicon, obs, &d);
                GroundedEntity {
                    entity,
                    descriptor: Some(d),
                    candidates,
                }
            }
        })
        .collect();
    GroundingResult {
        instruction_class: parsed.class,
        class_confidence: parsed.confidence,
        template_id: parsed.template_id,
        entities,
    }
}
