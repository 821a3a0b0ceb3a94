use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::Grammar;
use crate::grounder::AmbiguityLabel;
use crate::langgen::{gen_ambiguous_instruction, gen_instruction, AnnotatedInstruction, InstructionClass};
use crate::rng::{derive, derive_str, rng_for};
use crate::scene::{generate_scene, ObjectLibrary, Scene};

/// Attempts per (scene, instruction kind) before the scene counts as infeasible.
const SEED_RETRIES: u64 = 8;

/// Proportions of instruction kinds in a generated dataset. The defaults put
/// 17% of instructions in the two ambiguous kinds, split 31:24.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mix {
    pub pick_and_place: f64,
    pub multiple_candidates: f64,
    pub incorrect_reference: f64,
    pub not_supported: f64,
    pub naming: f64,
}

impl Default for Mix {
    fn default() -> Self {
        Self {
            pick_and_place: 0.78,
            multiple_candidates: 0.17 * 31.0 / 55.0,
            incorrect_reference: 0.17 * 24.0 / 55.0,
            not_supported: 0.05,
            naming: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Multiple,
    Incorrect,
    Naming,
    NotSupported,
    PickAndPlace,
}

impl Kind {
    fn tag(self) -> &'static str {
        match self {
            Kind::Multiple => "multiple",
            Kind::Incorrect => "incorrect",
            Kind::Naming => "naming",
            Kind::NotSupported => "not-supported",
            Kind::PickAndPlace => "pick-and-place",
        }
    }
}

impl Mix {
    pub fn validate(&self) -> Result<()> {
        let parts = self.parts();
        if parts.iter().any(|(_, p)| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::Validation("mix proportions must be non-negative".into()));
        }
        let sum: f64 = parts.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("mix proportions sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn ambiguous_fraction(&self) -> f64 {
        self.multiple_candidates + self.incorrect_reference
    }

    /// Ambiguous kinds first: they are the hardest to place.
    fn parts(&self) -> [(Kind, f64); 5] {
        [
            (Kind::Multiple, self.multiple_candidates),
            (Kind::Incorrect, self.incorrect_reference),
            (Kind::Naming, self.naming),
            (Kind::NotSupported, self.not_supported),
            (Kind::PickAndPlace, self.pick_and_place),
        ]
    }

    /// Largest-remainder apportionment of `total` instructions.
    fn quotas(&self, total: usize) -> Vec<(Kind, usize)> {
        let parts = self.parts();
        let exact: Vec<f64> = parts.iter().map(|(_, p)| p * total as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut left = total - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..parts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for i in order {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        parts.iter().map(|(k, _)| *k).zip(counts).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenes: Vec<Scene>,
    pub instructions: Vec<AnnotatedInstruction>,
}

fn generate_one(
    grammar: &Grammar,
    scene: &Scene,
    library: &ObjectLibrary,
    kind: Kind,
    seed: u64,
) -> Result<AnnotatedInstruction> {
    match kind {
        Kind::Multiple => {
            gen_ambiguous_instruction(grammar, scene, library, AmbiguityLabel::MultipleCandidates, seed)
        }
        Kind::Incorrect => {
            gen_ambiguous_instruction(grammar, scene, library, AmbiguityLabel::IncorrectReference, seed)
        }
        Kind::Naming => gen_instruction(grammar, scene, library, InstructionClass::NamingObject, seed),
        Kind::NotSupported => {
            gen_instruction(grammar, scene, library, InstructionClass::InstructionNotSupported, seed)
        }
        Kind::PickAndPlace => gen_instruction(grammar, scene, library, InstructionClass::PickAndPlace, seed),
    }
}

/// Generates `n_scenes` scenes with `per_scene` instructions each. Kinds are
/// spread round-robin over the scenes that can realize them; a shortfall is
/// an error, never silently absorbed.
pub fn gen_dataset(
    grammar: &Grammar,
    library: &ObjectLibrary,
    n_scenes: usize,
    per_scene: usize,
    objects: RangeInclusive<usize>,
    mix: &Mix,
    seed: u64,
) -> Result<Dataset> {
    mix.validate()?;
    let mut scenes = Vec::with_capacity(n_scenes);
    for i in 0..n_scenes {
        let mut scene = generate_scene(library, objects.clone(), derive(seed, i as u64))?;
        scene.scene_id = format!("scene-{i:03}");
        scenes.push(scene);
    }
    let mut slots: Vec<Vec<AnnotatedInstruction>> = vec![Vec::new(); n_scenes];
    let mut cursor = 0usize;
    for (kind, quota) in mix.quotas(n_scenes * per_scene) {
        let mut infeasible = vec![false; n_scenes];
        let mut made = 0;
        while made < quota {
            let open: Vec<usize> = (0..n_scenes)
                .map(|k| (cursor + k) % n_scenes)
                .filter(|&s| !infeasible[s] && slots[s].len() < per_scene)
                .collect();
            let Some(&s) = open.first() else {
                return Err(Error::PartialGeneration(format!(
                    "only {made} of {quota} {} instructions could be generated",
                    kind.tag()
                )));
            };
            cursor = (s + 1) % n_scenes;
            let scene = &scenes[s];
            let base = derive_str(scene.seed, kind.tag()) ^ slots[s].len() as u64;
            let attempt = (0..SEED_RETRIES)
                .map(|r| generate_one(grammar, scene, library, kind, derive(base, r)))
                .find(|r| r.is_ok());
            match attempt {
                Some(Ok(instr)) => {
                    slots[s].push(instr);
                    made += 1;
                }
                _ => infeasible[s] = true,
            }
        }
    }
    let mut instructions = Vec::with_capacity(n_scenes * per_scene);
    for (scene, mut list) in scenes.iter().zip(slots) {
        list.shuffle(&mut rng_for(derive_str(scene.seed, "order")));
        for (j, mut instr) in list.into_iter().enumerate() {
            instr.instruction_id = format!("{}/{j:02}", scene.scene_id);
            instructions.push(instr);
        }
    }
    Ok(Dataset { scenes, instructions })
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("dataset records serialize"));
        out.push('\n');
    }
    out
}

fn from_jsonl<T: for<'de> Deserialize<'de>>(text: &str, source_name: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                source_name: source_name.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub const SCENES_FILE: &str = "scenes.jsonl";
pub const INSTRUCTIONS_FILE: &str = "instructions.jsonl";

impl Dataset {
    pub fn scenes_jsonl(&self) -> String {
        to_jsonl(&self.scenes)
    }

    pub fn instructions_jsonl(&self) -> String {
        to_jsonl(&self.instructions)
    }

    pub fn scene(&self, scene_id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.scene_id == scene_id)
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SCENES_FILE), self.scenes_jsonl())?;
        fs::write(dir.join(INSTRUCTIONS_FILE), self.instructions_jsonl())?;
        Ok(())
    }

    /// Reads a dataset directory, e.g. one holding externally written instructions.
    pub fn read_from(dir: &Path, library: &ObjectLibrary) -> Result<Self> {
        let scenes: Vec<Scene> = from_jsonl(&fs::read_to_string(dir.join(SCENES_FILE))?, SCENES_FILE)?;
        let instructions: Vec<AnnotatedInstruction> =
            from_jsonl(&fs::read_to_string(dir.join(INSTRUCTIONS_FILE))?, INSTRUCTIONS_FILE)?;
        for s in &scenes {
            s.validate(library)?;
        }
        let ds = Self { scenes, instructions };
        for instr in &ds.instructions {
            instr.validate()?;
            if ds.scene(&instr.scene_id).is_none() {
                return Err(Error::Validation(format!(
                    "{} refers to unknown scene {}",
                    instr.instruction_id, instr.scene_id
                )));
            }
        }
        Ok(ds)
    }

    pub fn ambiguous_count(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| i.ambiguity_label.is_ambiguous())
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_quotas_for_three_hundred() {
        let q = Mix::default().quotas(300);
        assert_eq!(
            q,
            vec![
                (Kind::Multiple, 29),
                (Kind::Incorrect, 22),
                (Kind::Naming, 0),
                (Kind::NotSupported, 15),
                (Kind::PickAndPlace, 234),
            ]
        );
    }

    #[test]
    fn mix_must_sum_to_one() {
        let mix = Mix {
            pick_and_place: 0.5,
            ..Mix::default()
        };
        assert!(mix.validate().is_err());
    }
}
