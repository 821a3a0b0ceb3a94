//! World model: object catalog, scene sampling, camera projection and box
//! geometry.

pub mod camera;
pub mod geometry;
pub mod library;

use std::f64::consts::FRAC_PI_2;
use std::ops::RangeInclusive;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

pub use camera::CameraView;
pub use geometry::{iou, BBox};
pub use library::{load_object_library, Footprint, ObjectLibrary, ObjectSpec, SizeClass};

/// Minimum gap between two footprints in a generated scene, millimetres.
pub const PLACEMENT_CLEARANCE: f64 = 10.0;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 20_000;
pub const MAX_GENERATED_OBJECTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableBounds {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Default for TableBounds {
    fn default() -> Self {
        Self {
            x_min: -400.0,
            y_min: -300.0,
            x_max: 400.0,
            y_max: 300.0,
        }
    }
}

impl TableBounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Table position in millimetres plus yaw in radians (snapped to 0 or π/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn is_quarter_turn(&self) -> bool {
        (self.yaw.rem_euclid(std::f64::consts::PI) - FRAC_PI_2).abs() < 1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub instance_id: String,
    pub object_id: String,
    pub pose: Pose,
    /// Set once the object has been placed on top of another instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resting_on: Option<Support>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub instance_id: String,
    /// Height of the supporting surface in millimeters.
    pub z: f64,
}

impl ObjectInstance {
    pub fn base_z(&self) -> f64 {
        self.resting_on.as_ref().map_or(0.0, |s| s.z)
    }

}

/// Objects on the same support (the table or one object) may not overlap.
fn same_level(a: &ObjectInstance, b: &ObjectInstance) -> bool {
    let support = |i: &ObjectInstance| i.resting_on.as_ref().map(|s| s.instance_id.clone());
    support(a) == support(b)
}

/// Axis-aligned footprint rectangle on the table, `(x0, y0, x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn overlaps(&self, other: &Rect, clearance: f64) -> bool {
        self.x0 < other.x1 + clearance
            && other.x0 < self.x1 + clearance
            && self.y0 < other.y1 + clearance
            && other.y0 < self.y1 + clearance
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }
}

/// Footprint extents after snapping yaw to the nearest quarter turn.
pub fn footprint_rect(pose: &Pose, spec: &ObjectSpec) -> Rect {
    let (w, d) = if pose.is_quarter_turn() {
        (spec.footprint.depth, spec.footprint.width)
    } else {
        (spec.footprint.width, spec.footprint.depth)
    };
    Rect {
        x0: pose.x - w / 2.0,
        y0: pose.y - d / 2.0,
        x1: pose.x + w / 2.0,
        y1: pose.y + d / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub seed: u64,
    pub camera_view: CameraView,
    pub table_bounds: TableBounds,
    pub instances: Vec<ObjectInstance>,
}

impl Scene {
    pub fn instance(&self, instance_id: &str) -> Option<&ObjectInstance> {
        self.instances.iter().find(|i| i.instance_id == instance_id)
    }

    pub fn spec_of<'l>(&self, library: &'l ObjectLibrary, instance_id: &str) -> Option<&'l ObjectSpec> {
        self.instance(instance_id)
            .and_then(|i| library.get(&i.object_id))
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Ground-truth box of every instance in the scene's camera view.
    pub fn gold_boxes(&self, library: &ObjectLibrary) -> Vec<(String, BBox<f64>)> {
        self.instances
            .iter()
            .filter_map(|inst| {
                let spec = library.get(&inst.object_id)?;
                Some((inst.instance_id.clone(), project_bbox(inst, spec, self.camera_view)))
            })
            .collect()
    }

    pub fn gold_box(&self, library: &ObjectLibrary, instance_id: &str) -> Option<BBox<f64>> {
        let inst = self.instance(instance_id)?;
        let spec = library.get(&inst.object_id)?;
        Some(project_bbox(inst, spec, self.camera_view))
    }

    /// Checks every scene invariant against the library.
    pub fn validate(&self, library: &ObjectLibrary) -> Result<()> {
        let mut rects = Vec::with_capacity(self.instances.len());
        for inst in &self.instances {
            let spec = library
                .get(&inst.object_id)
                .ok_or_else(|| Error::Validation(format!("unknown object {}", inst.object_id)))?;
            let r = footprint_rect(&inst.pose, spec);
            let b = &self.table_bounds;
            // A resting object may overhang; its centre must still be over the table.
            let off_table = if inst.resting_on.is_some() {
                !b.contains(inst.pose.x, inst.pose.y)
            } else {
                r.x0 < b.x_min || r.x1 > b.x_max || r.y0 < b.y_min || r.y1 > b.y_max
            };
            if off_table {
                return Err(Error::Validation(format!(
                    "{} lies outside the table",
                    inst.instance_id
                )));
            }
            rects.push((inst, r));
        }
        for (i, (a, ra)) in rects.iter().enumerate() {
            for (b, rb) in &rects[i + 1..] {
                if ra.overlaps(rb, 0.0) && same_level(a, b) {
                    return Err(Error::Validation(format!(
                        "{} overlaps {}",
                        a.instance_id, b.instance_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Projects the instance's bounding cuboid into `view`, clamped to the frame.
pub fn project_bbox<T: Scalar>(instance: &ObjectInstance, spec: &ObjectSpec, view: CameraView) -> BBox<T> {
    let r = footprint_rect(&instance.pose, spec);
    camera::project_cuboid(
        view,
        (T::lit(r.x0), T::lit(r.y0), T::lit(r.x1), T::lit(r.y1)),
        (T::lit(instance.base_z()), T::lit(instance.base_z() + spec.height)),
    )
}

fn sample_pose(rng: &mut rng::Rng, bounds: &TableBounds, spec: &ObjectSpec) -> Option<Pose> {
    let yaw = if rng.random_bool(0.5) { 0.0 } else { FRAC_PI_2 };
    let probe = Pose { x: 0.0, y: 0.0, yaw };
    let r = footprint_rect(&probe, spec);
    let (hw, hd) = (r.x1, r.y1);
    let (x_lo, x_hi) = (bounds.x_min + hw, bounds.x_max - hw);
    let (y_lo, y_hi) = (bounds.y_min + hd, bounds.y_max - hd);
    if x_lo > x_hi || y_lo > y_hi {
        return None;
    }
    // Millimetre grid keeps serialized scenes compact.
    let x = rng.random_range(x_lo..=x_hi).round().clamp(x_lo.ceil(), x_hi.floor());
    let y = rng.random_range(y_lo..=y_hi).round().clamp(y_lo.ceil(), y_hi.floor());
    Some(Pose { x, y, yaw })
}

/// Rejection sampling: each object gets `ATTEMPTS_PER_OBJECT` tries, and a
/// stuck layout is discarded and restarted, up to `MAX_PLACEMENT_ATTEMPTS`
/// draws in total.
fn place_all(
    specs: &[&ObjectSpec],
    bounds: &TableBounds,
    rng: &mut rng::Rng,
) -> Result<Vec<Pose>> {
    const ATTEMPTS_PER_OBJECT: usize = 200;
    let mut attempts = 0usize;
    let mut best = 0usize;
    'layout: while attempts < MAX_PLACEMENT_ATTEMPTS {
        let mut placed: Vec<Rect> = Vec::with_capacity(specs.len());
        let mut poses = Vec::with_capacity(specs.len());
        for spec in specs {
            let mut ok = false;
            for _ in 0..ATTEMPTS_PER_OBJECT {
                attempts += 1;
                let Some(pose) = sample_pose(rng, bounds, spec) else {
                    continue;
                };
                let r = footprint_rect(&pose, spec);
                if placed.iter().all(|p| !p.overlaps(&r, PLACEMENT_CLEARANCE)) {
                    placed.push(r);
                    poses.push(pose);
                    ok = true;
                    break;
                }
            }
            if !ok {
                best = best.max(poses.len());
                continue 'layout;
            }
        }
        return Ok(poses);
    }
    Err(Error::Placement {
        requested: specs.len(),
        placed: best,
        attempts,
    })
}

fn instance_id(i: usize) -> String {
    format!("i{i:02}")
}

/// Samples `n_objects` distinct library objects and places them without overlap.
///
/// The result is a pure function of `(library, n_objects, seed)`.
pub fn generate_scene(
    library: &ObjectLibrary,
    n_objects: RangeInclusive<usize>,
    seed: u64,
) -> Result<Scene> {
    let (lo, hi) = (*n_objects.start(), *n_objects.end());
    if lo == 0 || hi > MAX_GENERATED_OBJECTS || lo > hi {
        return Err(Error::Validation(format!(
            "object count range {lo}..={hi} must lie within 1..=10"
        )));
    }
    if library.is_empty() {
        return Err(Error::Validation("object library is empty".into()));
    }
    if lo > library.len() {
        return Err(Error::Validation(format!(
            "library holds {} objects, cannot sample {lo}",
            library.len()
        )));
    }
    let mut rng = rng::rng_for(seed);
    let n = rng.random_range(lo..=hi).min(library.len());
    let chosen: Vec<&ObjectSpec> = library.specs().choose_multiple(&mut rng, n).collect();
    let camera_view = *CameraView::ALL.choose(&mut rng).expect("four views");
    let bounds = TableBounds::default();
    let poses = place_all(&chosen, &bounds, &mut rng)?;
    let instances = chosen
        .iter()
        .zip(poses)
        .enumerate()
        .map(|(i, (spec, pose))| ObjectInstance {
            instance_id: instance_id(i),
            object_id: spec.object_id.clone(),
            pose,
            resting_on: None,
        })
        .collect();
    Ok(Scene {
        scene_id: format!("scene-{seed}"),
        seed,
        camera_view,
        table_bounds: bounds,
        instances,
    })
}

/// Places the listed objects (in the given order) on an otherwise empty table.
pub fn scene_with_objects(
    library: &ObjectLibrary,
    object_ids: &[&str],
    scene_id: impl Into<String>,
    seed: u64,
) -> Result<Scene> {
    let specs = object_ids
        .iter()
        .map(|id| {
            library
                .get(id)
                .ok_or_else(|| Error::Validation(format!("unknown object {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = rng::rng_for(seed);
    let camera_view = *CameraView::ALL.choose(&mut rng).expect("four views");
    let bounds = TableBounds::default();
    let poses = place_all(&specs, &bounds, &mut rng)?;
    Ok(Scene {
        scene_id: scene_id.into(),
        seed,
        camera_view,
        table_bounds: bounds,
        instances: specs
            .iter()
            .zip(poses)
            .enumerate()
            .map(|(i, (s, pose))| ObjectInstance {
                instance_id: instance_id(i),
                object_id: s.object_id.clone(),
                pose,
                resting_on: None,
            })
            .collect(),
    })
}

/// Shuffles instance ids so id order carries no information about sampling order.
pub fn shuffled_ids(scene: &Scene, seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = scene.instances.iter().map(|i| i.instance_id.clone()).collect();
    ids.shuffle(&mut rng::rng_for(seed));
    ids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib() -> ObjectLibrary {
        ObjectLibrary::builtin()
    }

    fn centered(object_id: &str, x: f64, y: f64) -> ObjectInstance {
        ObjectInstance {
            instance_id: "i00".into(),
            object_id: object_id.into(),
            pose: Pose { x, y, yaw: 0.0 },
            resting_on: None,
        }
    }

    #[test]
    fn generated_scene_respects_invariants() {
        let lib = lib();
        for seed in 0..50 {
            let s = generate_scene(&lib, 6..=8, seed).unwrap();
            assert!((6..=8).contains(&s.len()));
            s.validate(&lib).unwrap();
            let mut ids: Vec<_> = s.instances.iter().map(|i| &i.object_id).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), s.len(), "sampled without replacement");
        }
    }

    #[test]
    fn single_object_scene_shape() {
        let s = generate_scene(&lib(), 1..=1, 0).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(&lib(), 6..=8, 7).unwrap();
        let b = generate_scene(&lib(), 6..=8, 7).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn bad_ranges_rejected() {
        assert!(generate_scene(&lib(), 0..=3, 1).is_err());
        assert!(generate_scene(&lib(), 2..=11, 1).is_err());
    }

    #[test]
    fn scene_json_round_trip_is_byte_stable() {
        let s = generate_scene(&lib(), 1..=10, 99).unwrap();
        let text = s.to_json();
        let back = Scene::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn centred_object_is_horizontally_centred_in_front_view() {
        let lib = lib();
        let spec = lib.get("can_red").unwrap();
        let b: BBox<f64> = project_bbox(&centered("can_red", 0.0, 0.0), spec, CameraView::Front);
        let (cx, _) = b.center();
        assert!((cx - 320.0).abs() < 1e-9);
    }

    #[test]
    fn left_and_right_views_mirror() {
        let lib = lib();
        let spec = lib.get("box_black").unwrap();
        let inst = centered("box_black", 0.0, 120.0);
        let l: BBox<f64> = project_bbox(&inst, spec, CameraView::Left);
        let r: BBox<f64> = project_bbox(&inst, spec, CameraView::Right);
        assert!((l.x_min - (640.0 - r.x_max)).abs() < 1e-9);
        assert!((l.x_max - (640.0 - r.x_min)).abs() < 1e-9);
        assert!((l.y_min - r.y_min).abs() < 1e-9 && (l.y_max - r.y_max).abs() < 1e-9);
    }

    #[test]
    fn shifting_right_moves_box_right() {
        // Hand check for a 66x66x120 can at (0,0) and (100,0), front view:
        // eye (0,-900,700), n = |(0,900,-700)| = 1140.175. The rightmost image
        // point is the near top corner (33,-33,120): rel = (33,867,-580),
        // zc = (867*900 + 580*700)/n = 1040.454, u = 320 + 600*33/zc = 339.03.
        // Shifted by 100mm: u = 320 + 600*133/1040.454 = 396.70.
        let lib = lib();
        let spec = lib.get("can_red").unwrap();
        let a: BBox<f64> = project_bbox(&centered("can_red", 0.0, 0.0), spec, CameraView::Front);
        let b: BBox<f64> = project_bbox(&centered("can_red", 100.0, 0.0), spec, CameraView::Front);
        assert!(b.x_min > a.x_min && b.x_max > a.x_max);
        assert!((a.x_max - 339.03).abs() < 0.01, "{}", a.x_max);
        assert!((b.x_max - 396.70).abs() < 0.01, "{}", b.x_max);
    }

    #[test]
    fn distinct_positions_give_distinct_boxes() {
        let lib = lib();
        let spec = lib.get("cup_white").unwrap();
        for view in CameraView::ALL {
            let mut seen = std::collections::HashSet::new();
            for gx in -6..=6 {
                for gy in -4..=4 {
                    let inst = centered("cup_white", gx as f64 * 50.0, gy as f64 * 50.0);
                    let b: BBox<f64> = project_bbox(&inst, spec, view);
                    let key = (
                        b.x_min.round() as i64,
                        b.y_min.round() as i64,
                        b.x_max.round() as i64,
                        b.y_max.round() as i64,
                    );
                    assert!(seen.insert(key), "{view}: collision at {gx},{gy}");
                }
            }
        }
    }

    #[test]
    fn generic_projection_agrees_across_scalars() {
        let lib = lib();
        let spec = lib.get("bottle_green").unwrap();
        let inst = centered("bottle_green", -120.0, 80.0);
        let a: BBox<f64> = project_bbox(&inst, spec, CameraView::Back);
        let b: BBox<f32> = project_bbox(&inst, spec, CameraView::Back);
        assert!((a.x_min - b.x_min as f64).abs() < 1e-2);
        assert!((a.y_max - b.y_max as f64).abs() < 1e-2);
    }
}
