//! Episode drivers: naming (bind a name to an object) and manipulation
//! (resolve src/dst, grasp, place).

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::grammar::Grammar;
use crate::grounder::{
    ground_instruction, observe_scene, EntityType, GroundedEntity, GroundingResult, NoiseConfig,
    SceneObservation, DETECTION_THRESHOLD,
};
use crate::langgen::{AnnotatedInstruction, InstructionClass, SlotKind};
use crate::matcher::{match_named, FeatureSpace, MatchDecision};
use crate::memory::{capture_views, MemoryStore, DEFAULT_VIEWS};
use crate::rng::{derive_str, rng_for};
use crate::scalar::Scalar;
use crate::scene::camera::Camera;
use crate::scene::geometry::{iou, BBox as GBox};
use crate::scene::{footprint_rect, ObjectLibrary, Scene, Support};
use crate::vocab::Span;
use crate::BBox;

/// Minimum IoU with the gold box for a box to count as correctly grounded.
pub const BR_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    /// Lowest instance id among the best-scoring candidates.
    #[default]
    Deterministic,
    /// Seeded uniform choice among the best-scoring candidates.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureStage {
    Classify,
    Extract,
    Ground,
    Match,
    Grasp,
    Place,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Descriptor,
    Name,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenTarget {
    pub instance_id: String,
    pub bbox: BBox,
    pub via: Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspPlan {
    pub target: String,
    /// Grasp points in image pixels, one per annotated grasp.
    pub candidates: Vec<[f64; 2]>,
    pub filtered: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub instruction_id: String,
    pub scene_id: String,
    pub text: String,
    pub gold_class: InstructionClass,
    pub predicted_class: InstructionClass,
    pub icr_ok: bool,
    pub pr_ok: bool,
    pub br_ok: bool,
    pub sr_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_src: Option<ChosenTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_dst: Option<ChosenTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_point: Option<[f64; 2]>,
    pub failure_stage: FailureStage,
}

/// Shared, read-only episode inputs.
#[derive(Debug, Clone)]
pub struct EpisodeContext<'a> {
    pub grammar: &'a Grammar,
    pub library: &'a ObjectLibrary,
    pub space: &'a FeatureSpace,
    pub noise: NoiseConfig,
    pub tie_break: TieBreak,
}

/// Mean of the four box corners.
pub fn place_point<T: Scalar>(b: &GBox<T>) -> (T, T) {
    let four = T::lit(4.0);
    let corners = b.corners();
    let sx = corners.iter().fold(T::zero(), |a, c| a + c.0);
    let sy = corners.iter().fold(T::zero(), |a, c| a + c.1);
    (sx / four, sy / four)
}

/// Projects the spec's grasp annotations (on the top face) into the image and
/// keeps those inside the observed box.
pub fn plan_grasp(
    obs: &SceneObservation,
    scene: &Scene,
    library: &ObjectLibrary,
    target: &str,
) -> Option<GraspPlan> {
    let inst = scene.instance(target)?;
    let spec = library.get(&inst.object_id)?;
    let observed = obs.instance(target)?;
    if !spec.graspable {
        return None;
    }
    let cam = Camera::<f64>::for_view(obs.camera_view);
    let (s, c) = inst.pose.yaw.sin_cos();
    let z = inst.base_z() + spec.height;
    let candidates: Vec<[f64; 2]> = spec
        .grasp_offsets()
        .iter()
        .map(|[dx, dy]| {
            let (u, v) = cam.project([inst.pose.x + c * dx - s * dy, inst.pose.y + s * dx + c * dy, z]);
            [u, v]
        })
        .collect();
    let filtered: Vec<[f64; 2]> = candidates
        .iter()
        .copied()
        .filter(|[u, v]| observed.bbox.contains(*u, *v))
        .collect();
    if filtered.is_empty() {
        return None;
    }
    Some(GraspPlan {
        target: target.to_string(),
        candidates,
        filtered,
    })
}

/// Entities competing for one role, best confidence first.
fn role(grounding: &GroundingResult, slot: SlotKind) -> Option<&GroundedEntity> {
    grounding
        .entities
        .iter()
        .filter(|e| e.entity.slot == slot)
        .max_by(|a, b| a.entity.confidence.total_cmp(&b.entity.confidence))
}

/// Resolves one role to an instance. `Err` carries the stage that failed.
pub fn resolve_target(
    ctx: &EpisodeContext<'_>,
    entity: &GroundedEntity,
    store: &MemoryStore,
    obs: &SceneObservation,
    seed: u64,
) -> Result<ChosenTarget, FailureStage> {
    if entity.entity.entity_type == EntityType::Name {
        let record = store.recall(&entity.entity.phrase).ok_or(FailureStage::Match)?;
        let MatchDecision { best, accepted, .. } =
            match_named(ctx.space, record, obs, ctx.noise.sigma, ctx.noise.tau, seed);
        return match best {
            Some(b) if accepted => Ok(ChosenTarget {
                instance_id: b.instance_id,
                bbox: b.bbox,
                via: Resolution::Name,
            }),
            _ => Err(FailureStage::Match),
        };
    }
    let top = entity
        .candidates
        .first()
        .filter(|c| c.score >= DETECTION_THRESHOLD)
        .ok_or(FailureStage::Ground)?;
    let ties: Vec<_> = entity
        .candidates
        .iter()
        .take_while(|c| c.score == top.score)
        .collect();
    let pick = match ctx.tie_break {
        TieBreak::Deterministic => ties[0],
        TieBreak::Uniform => *ties.choose(&mut rng_for(seed)).expect("ties non-empty"),
    };
    Ok(ChosenTarget {
        instance_id: pick.instance_id.clone(),
        bbox: pick.bbox,
        via: Resolution::Descriptor,
    })
}

fn entity_key(t: EntityType, s: SlotKind, span: Span) -> (EntityType, SlotKind, Span) {
    (t, s, span)
}

/// Predicted entities equal gold entities as (type, slot, span) sets.
fn phrases_match(gold: &AnnotatedInstruction, grounding: &GroundingResult) -> bool {
    let want: BTreeSet<_> = if gold.instruction_class.is_positive() {
        gold.entities
            .iter()
            .map(|e| entity_key(e.entity_type, e.slot, e.span))
            .collect()
    } else {
        BTreeSet::new()
    };
    let got: BTreeSet<_> = grounding
        .entities
        .iter()
        .map(|e| entity_key(e.entity.entity_type, e.entity.slot, e.entity.span))
        .collect();
    want == got
}

fn box_ok(scene: &Scene, library: &ObjectLibrary, gold_id: Option<&str>, chosen: Option<&ChosenTarget>) -> bool {
    match (gold_id.and_then(|g| scene.gold_box(library, g)), chosen) {
        (Some(gold), Some(c)) => iou(&c.bbox, &gold) > BR_IOU,
        _ => false,
    }
}

fn gold_of(gold: &AnnotatedInstruction, slot: SlotKind) -> Option<&str> {
    gold.entity(slot).and_then(|e| e.gold_instance_id.as_deref())
}

/// Runs one manipulation episode and returns the result with the post-state scene.
pub fn run_manipulation_episode(
    ctx: &EpisodeContext<'_>,
    gold: &AnnotatedInstruction,
    scene: &Scene,
    store: &MemoryStore,
    seed: u64,
) -> (EpisodeResult, Scene) {
    let obs = observe_scene(scene, ctx.library, &ctx.noise, derive_str(seed, "observe"));
    let grounding = ground_instruction(ctx.grammar, &obs, &gold.text);
    let (result, post) = execute(ctx, gold, scene, store, &obs, &grounding, seed);
    (result, post)
}

/// Manipulation given an existing observation and grounding.
pub fn execute(
    ctx: &EpisodeContext<'_>,
    gold: &AnnotatedInstruction,
    scene: &Scene,
    store: &MemoryStore,
    obs: &SceneObservation,
    grounding: &GroundingResult,
    seed: u64,
) -> (EpisodeResult, Scene) {
    let predicted = grounding.instruction_class;
    let icr_ok = predicted == gold.instruction_class;
    let pr_ok = phrases_match(gold, grounding);
    let mut result = EpisodeResult {
        instruction_id: gold.instruction_id.clone(),
        scene_id: scene.scene_id.clone(),
        text: gold.text.clone(),
        gold_class: gold.instruction_class,
        predicted_class: predicted,
        icr_ok,
        pr_ok,
        br_ok: false,
        sr_ok: false,
        chosen_src: None,
        chosen_dst: None,
        place_point: None,
        failure_stage: FailureStage::None,
    };
    let mut post = scene.clone();

    if predicted != InstructionClass::PickAndPlace {
        // No manipulation is attempted.
        let negative = gold.instruction_class == InstructionClass::InstructionNotSupported;
        result.br_ok = negative;
        result.sr_ok = negative && icr_ok && pr_ok;
        result.failure_stage = if result.sr_ok {
            FailureStage::None
        } else if !icr_ok {
            FailureStage::Classify
        } else {
            FailureStage::Extract
        };
        return (result, post);
    }

    // The robot acts on whatever it grounded; stages are judged afterwards.
    let mut stage: Option<FailureStage> = None;
    let src = match role(grounding, SlotKind::Src) {
        Some(e) => resolve_target(ctx, e, store, obs, derive_str(seed, "src")),
        None => Err(FailureStage::Extract),
    };
    let dst_entity = role(grounding, SlotKind::Dst);
    let dst = dst_entity.map(|e| resolve_target(ctx, e, store, obs, derive_str(seed, "dst")));
    result.chosen_src = src.as_ref().ok().cloned();
    result.chosen_dst = dst.as_ref().and_then(|d| d.as_ref().ok().cloned());

    let gold_src = gold_of(gold, SlotKind::Src);
    let gold_dst = gold_of(gold, SlotKind::Dst);
    let src_box_ok = box_ok(scene, ctx.library, gold_src, result.chosen_src.as_ref());
    let dst_box_ok = gold_dst.is_none() || box_ok(scene, ctx.library, gold_dst, result.chosen_dst.as_ref());
    result.br_ok = gold.instruction_class == InstructionClass::PickAndPlace && src_box_ok && dst_box_ok;

    let mut grasp_ok = false;
    let mut place_ok = dst_entity.is_none();
    if let Ok(s) = &src {
        grasp_ok = plan_grasp(obs, scene, ctx.library, &s.instance_id).is_some();
        if let (true, Some(Ok(d))) = (grasp_ok, &dst) {
            if d.instance_id != s.instance_id {
                let (u, v) = place_point(&d.bbox);
                result.place_point = Some([u, v]);
                place_ok = place_on(&mut post, ctx.library, obs, &s.instance_id, &d.instance_id, (u, v));
            }
        }
    }

    let wrong_src = src.as_ref().ok().map(|s| Some(s.instance_id.as_str()) != gold_src);
    let wrong_dst = dst
        .as_ref()
        .and_then(|d| d.as_ref().ok())
        .map(|d| Some(d.instance_id.as_str()) != gold_dst);
    let via_stage = |c: &ChosenTarget| match c.via {
        Resolution::Name => FailureStage::Match,
        Resolution::Descriptor => FailureStage::Ground,
    };
    let mut note = |s: FailureStage| {
        stage.get_or_insert(s);
    };
    if !icr_ok {
        note(FailureStage::Classify);
    }
    if !pr_ok {
        note(FailureStage::Extract);
    }
    if let Err(s) = &src {
        note(*s);
    }
    if let Some(Err(s)) = &dst {
        note(*s);
    }
    if gold_dst.is_some() && dst.is_none() {
        note(FailureStage::Extract);
    }
    if wrong_src == Some(true) {
        note(via_stage(result.chosen_src.as_ref().expect("resolved")));
    }
    if wrong_dst == Some(true) {
        note(via_stage(result.chosen_dst.as_ref().expect("resolved")));
    }
    if src.is_ok() && !grasp_ok {
        note(FailureStage::Grasp);
    }
    if !place_ok {
        note(FailureStage::Place);
    }
    if !result.br_ok {
        note(FailureStage::Ground);
    }
    result.failure_stage = stage.unwrap_or(FailureStage::None);
    result.sr_ok = result.failure_stage == FailureStage::None;
    (result, post)
}

/// Moves `src` onto the table point under `(u, v)`; success when that point
/// lies within the destination footprint.
fn place_on(
    scene: &mut Scene,
    library: &ObjectLibrary,
    obs: &SceneObservation,
    src: &str,
    dst: &str,
    (u, v): (f64, f64),
) -> bool {
    let Some(dst_inst) = scene.instance(dst).cloned() else {
        return false;
    };
    let Some(dst_spec) = library.get(&dst_inst.object_id) else {
        return false;
    };
    let top = dst_inst.base_z() + dst_spec.height;
    let cam = Camera::<f64>::for_view(obs.camera_view);
    let Some((x, y)) = cam.backproject(u, v, dst_inst.base_z() + dst_spec.height / 2.0) else {
        return false;
    };
    let r = footprint_rect(&dst_inst.pose, dst_spec);
    let inside = x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1;
    if inside {
        if let Some(inst) = scene.instances.iter_mut().find(|i| i.instance_id == src) {
            inst.pose.x = x;
            inst.pose.y = y;
            inst.resting_on = Some(Support {
                instance_id: dst.to_string(),
                z: top,
            });
        }
    }
    inside
}

/// Runs a naming episode: the grounded object's views are stored under the
/// extracted name. Classification, extraction and grounding failures leave
/// the store untouched.
pub fn run_naming_episode(
    ctx: &EpisodeContext<'_>,
    gold: &AnnotatedInstruction,
    scene: &Scene,
    store: &mut MemoryStore,
    seed: u64,
) -> EpisodeResult {
    let obs = observe_scene(scene, ctx.library, &ctx.noise, derive_str(seed, "observe"));
    let grounding = ground_instruction(ctx.grammar, &obs, &gold.text);
    execute_naming(ctx, gold, scene, store, &obs, &grounding, seed)
}

/// Naming given an existing observation and grounding.
pub fn execute_naming(
    ctx: &EpisodeContext<'_>,
    gold: &AnnotatedInstruction,
    scene: &Scene,
    store: &mut MemoryStore,
    obs: &SceneObservation,
    grounding: &GroundingResult,
    seed: u64,
) -> EpisodeResult {
    let predicted = grounding.instruction_class;
    let mut result = EpisodeResult {
        instruction_id: gold.instruction_id.clone(),
        scene_id: scene.scene_id.clone(),
        text: gold.text.clone(),
        gold_class: gold.instruction_class,
        predicted_class: predicted,
        icr_ok: predicted == gold.instruction_class,
        pr_ok: phrases_match(gold, grounding),
        br_ok: false,
        sr_ok: false,
        chosen_src: None,
        chosen_dst: None,
        place_point: None,
        failure_stage: FailureStage::None,
    };
    if predicted != InstructionClass::NamingObject {
        result.failure_stage = FailureStage::Classify;
        return result;
    }
    let (Some(name), Some(object)) = (role(grounding, SlotKind::Name), role(grounding, SlotKind::Obj)) else {
        result.failure_stage = FailureStage::Extract;
        return result;
    };
    let chosen = match resolve_target(ctx, object, store, obs, derive_str(seed, "object")) {
        Ok(c) => c,
        Err(s) => {
            result.failure_stage = s;
            return result;
        }
    };
    let gold_obj = gold_of(gold, SlotKind::Obj).map(str::to_string).or_else(|| {
        // Deictic naming over a one-object scene refers to that object.
        (scene.len() == 1).then(|| scene.instances[0].instance_id.clone())
    });
    result.br_ok = box_ok(scene, ctx.library, gold_obj.as_deref(), Some(&chosen));
    let target_ok = gold_obj.as_deref() == Some(chosen.instance_id.as_str());
    let mut alone = scene.clone();
    alone.instances.retain(|i| i.instance_id == chosen.instance_id);
    result.chosen_src = Some(chosen);
    let stored = capture_views(&alone, ctx.library, ctx.space, &ctx.noise, DEFAULT_VIEWS, derive_str(seed, "views"))
        .and_then(|views| store.store_name(&name.entity.phrase, views, &scene.scene_id));
    result.failure_stage = if !result.icr_ok {
        FailureStage::Classify
    } else if !result.pr_ok {
        FailureStage::Extract
    } else if !target_ok || !result.br_ok || stored.is_err() {
        FailureStage::Ground
    } else {
        FailureStage::None
    };
    result.sr_ok = result.failure_stage == FailureStage::None;
    result
}
