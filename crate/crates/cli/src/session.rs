//! Interactive sessions: one scene, one memory store, an append-only log.

use std::ops::RangeInclusive;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use namegrounder_core::executor::{
    execute, execute_naming, resolve_target, ChosenTarget, EpisodeContext, EpisodeResult, TieBreak,
};
use namegrounder_core::grounder::{
    ground_instruction, observe_scene, AmbiguityLabel, GroundedEntity, GroundingResult, NoiseConfig,
};
use namegrounder_core::langgen::{AnnotatedInstruction, GoldEntity, InstructionClass, SlotKind};
use namegrounder_core::matcher::FeatureSpace;
use namegrounder_core::memory::MemoryStore;
use namegrounder_core::rng::derive_str;
use namegrounder_core::scene::camera::{Camera, IMAGE_HEIGHT, IMAGE_WIDTH};
use namegrounder_core::scene::{footprint_rect, generate_scene, project_bbox, ObjectLibrary, Scene};
use namegrounder_core::{BBox, Grammar, Result};

pub const RESPONSE_SCHEMA: &str = "namegrounder.response/v1";
pub const SCENE_SCHEMA: &str = "namegrounder.scene/v1";
pub const MEMORY_SCHEMA: &str = "namegrounder.memory/v1";

/// Object count for session scenes when none is requested.
pub const DEFAULT_OBJECTS: RangeInclusive<usize> = 4..=6;

/// Immutable state shared by every session.
pub struct Engine {
    pub library: ObjectLibrary,
    pub grammar: Grammar,
    pub space: FeatureSpace,
    pub noise: NoiseConfig,
    pub tie_break: TieBreak,
    /// Store file loaded by new sessions and rewritten after each naming.
    pub memory_path: Option<PathBuf>,
}

impl Engine {
    pub fn new(library: ObjectLibrary, noise: NoiseConfig, tie_break: TieBreak) -> Result<Self> {
        noise.validate()?;
        let grammar = Grammar::builtin(&library)?;
        let space = FeatureSpace::from_library(&library);
        Ok(Self {
            library,
            grammar,
            space,
            noise,
            tie_break,
            memory_path: None,
        })
    }

    pub fn with_memory(mut self, path: Option<PathBuf>) -> Self {
        self.memory_path = path;
        self
    }

    fn ctx(&self) -> EpisodeContext<'_> {
        EpisodeContext {
            grammar: &self.grammar,
            library: &self.library,
            space: &self.space,
            noise: self.noise,
            tie_break: self.tie_break,
        }
    }

    fn load_store(&self) -> Result<MemoryStore> {
        match &self.memory_path {
            Some(p) if p.exists() => MemoryStore::load(p),
            _ => Ok(MemoryStore::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub turn: usize,
    pub scene_id: String,
    pub text: String,
    pub grounding: GroundingResult,
    pub episode: EpisodeResult,
}

/// One instance as the console draws it. Boxes and polygons are image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drawable {
    pub instance_id: String,
    pub object_id: String,
    pub category: String,
    pub colors: Vec<String>,
    pub graspable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resting_on: Option<String>,
    pub bbox: BBox,
    /// Footprint corners projected at the object's base.
    pub footprint: [[f64; 2]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePayload {
    pub schema: String,
    pub session_id: String,
    pub image_width: f64,
    pub image_height: f64,
    pub drawables: Vec<Drawable>,
    pub scene: Scene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub name: String,
    pub created_at: u64,
    pub source_scene_id: String,
    pub views: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPayload {
    pub schema: String,
    pub session_id: String,
    pub records: Vec<MemoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub schema: String,
    pub session_id: String,
    pub turn: usize,
    pub text: String,
    pub instruction_class: InstructionClass,
    pub class_confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub entities: Vec<GroundedEntity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_src: Option<ChosenTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_dst: Option<ChosenTarget>,
    /// Naming target (the object to be named), when the turn named something.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_object: Option<ChosenTarget>,
    pub episode: EpisodeResult,
    pub memory_updated: bool,
    pub scene: ScenePayload,
}

pub struct Session {
    pub session_id: String,
    pub scene: Scene,
    pub store: MemoryStore,
    pub log: Vec<LogEntry>,
}

/// Best-confidence entity for `slot`.
fn role(grounding: &GroundingResult, slot: SlotKind) -> Option<&GroundedEntity> {
    grounding
        .entities
        .iter()
        .filter(|e| e.entity.slot == slot)
        .max_by(|a, b| a.entity.confidence.total_cmp(&b.entity.confidence))
}

impl Session {
    pub fn new(
        engine: &Engine,
        session_id: impl Into<String>,
        seed: u64,
        objects: Option<RangeInclusive<usize>>,
    ) -> Result<Self> {
        let session_id = session_id.into();
        Ok(Self {
            scene: generate_scene(&engine.library, objects.unwrap_or(DEFAULT_OBJECTS), seed)?,
            store: engine.load_store()?,
            session_id,
            log: Vec::new(),
        })
    }

    /// Replaces the scene; memory and log are kept.
    pub fn new_scene(&mut self, engine: &Engine, seed: u64, objects: Option<RangeInclusive<usize>>) -> Result<()> {
        self.scene = generate_scene(&engine.library, objects.unwrap_or(DEFAULT_OBJECTS), seed)?;
        Ok(())
    }

    pub fn scene_payload(&self, engine: &Engine) -> ScenePayload {
        let cam = Camera::<f64>::for_view(self.scene.camera_view);
        let drawables = self
            .scene
            .instances
            .iter()
            .map(|inst| {
                let spec = engine.library.get(&inst.object_id).expect("session scenes are validated");
                let r = footprint_rect(&inst.pose, spec);
                let z = inst.base_z();
                let corner = |x: f64, y: f64| {
                    let (u, v) = cam.project([x, y, z]);
                    [u, v]
                };
                Drawable {
                    instance_id: inst.instance_id.clone(),
                    object_id: inst.object_id.clone(),
                    category: spec.category.clone(),
                    colors: spec.colors.clone(),
                    graspable: spec.graspable,
                    resting_on: inst.resting_on.as_ref().map(|s| s.instance_id.clone()),
                    bbox: project_bbox(inst, spec, self.scene.camera_view),
                    footprint: [corner(r.x0, r.y0), corner(r.x1, r.y0), corner(r.x1, r.y1), corner(r.x0, r.y1)],
                }
            })
            .collect();
        ScenePayload {
            schema: SCENE_SCHEMA.into(),
            session_id: self.session_id.clone(),
            image_width: IMAGE_WIDTH,
            image_height: IMAGE_HEIGHT,
            drawables,
            scene: self.scene.clone(),
        }
    }

    pub fn memory_payload(&self) -> MemoryPayload {
        MemoryPayload {
            schema: MEMORY_SCHEMA.into(),
            session_id: self.session_id.clone(),
            records: self
                .store
                .records()
                .map(|r| MemoryEntry {
                    name: r.name.clone(),
                    created_at: r.created_at,
                    source_scene_id: r.source_scene_id.clone(),
                    views: r.observations.len(),
                })
                .collect(),
        }
    }

    /// Runs one turn. There is no gold in a live session, so the episode is
    /// scored against the session's own reading of the text: targets are the
    /// instances it resolved, and success means the action went through.
    pub fn submit_instruction(&mut self, engine: &Engine, text: &str) -> Result<Response> {
        let ctx = engine.ctx();
        let turn = self.log.len();
        let seed = derive_str(self.scene.seed, &format!("{}#{turn}", self.session_id));
        let obs = observe_scene(&self.scene, &engine.library, &engine.noise, derive_str(seed, "observe"));
        let grounding = ground_instruction(&engine.grammar, &obs, text);
        let class = grounding.instruction_class;

        let resolved = |slot: SlotKind, tag: &str| {
            role(&grounding, slot).and_then(|e| resolve_target(&ctx, e, &self.store, &obs, derive_str(seed, tag)).ok())
        };
        let targets = [
            (SlotKind::Src, resolved(SlotKind::Src, "src")),
            (SlotKind::Dst, resolved(SlotKind::Dst, "dst")),
            (SlotKind::Obj, resolved(SlotKind::Obj, "object")),
        ];
        let chosen = |slot: SlotKind| targets.iter().find(|(s, _)| *s == slot).and_then(|(_, c)| c.clone());
        let reading = AnnotatedInstruction {
            instruction_id: format!("{}/{turn}", self.session_id),
            scene_id: self.scene.scene_id.clone(),
            text: text.to_string(),
            instruction_class: class,
            template_id: grounding.template_id.clone().unwrap_or_default(),
            entities: grounding
                .entities
                .iter()
                .map(|e| GoldEntity {
                    phrase: e.entity.phrase.clone(),
                    span: e.entity.span,
                    entity_type: e.entity.entity_type,
                    slot: e.entity.slot,
                    gold_instance_id: chosen(e.entity.slot).map(|c| c.instance_id),
                    descriptor: e.descriptor.clone(),
                })
                .collect(),
            ambiguity_label: AmbiguityLabel::Unambiguous,
        };

        let before = self.store.clone();
        let mut chosen_object = None;
        let episode = match class {
            InstructionClass::NamingObject => {
                let ep = execute_naming(&ctx, &reading, &self.scene, &mut self.store, &obs, &grounding, seed);
                chosen_object = ep.chosen_src.clone();
                EpisodeResult { chosen_src: None, ..ep }
            }
            _ => {
                let (ep, post) = execute(&ctx, &reading, &self.scene, &self.store, &obs, &grounding, seed);
                if ep.sr_ok && class == InstructionClass::PickAndPlace {
                    self.scene = post;
                }
                ep
            }
        };
        let memory_updated = self.store != before;
        if memory_updated {
            if let Some(path) = &engine.memory_path {
                self.store.persist(path)?;
            }
        }
        self.log.push(LogEntry {
            turn,
            scene_id: self.scene.scene_id.clone(),
            text: text.to_string(),
            grounding: grounding.clone(),
            episode: episode.clone(),
        });
        Ok(Response {
            schema: RESPONSE_SCHEMA.into(),
            session_id: self.session_id.clone(),
            turn,
            text: text.to_string(),
            instruction_class: class,
            class_confidence: grounding.class_confidence,
            template_id: grounding.template_id,
            entities: grounding.entities,
            chosen_src: episode.chosen_src.clone(),
            chosen_dst: episode.chosen_dst.clone(),
            chosen_object,
            episode,
            memory_updated,
            scene: self.scene_payload(engine),
        })
    }
}
