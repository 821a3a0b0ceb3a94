//! Experiment runner: dataset generation, w/o and w/ naming conditions,
//! metrics, reports and a reproducibility manifest.

pub mod metrics;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::executor::{run_manipulation_episode, run_naming_episode, EpisodeContext, TieBreak};
use crate::grammar::Grammar;
use crate::grounder::NoiseConfig;
use crate::langgen::{
    gen_dataset, gen_naming_instruction, substitute_name, AnnotatedInstruction, Dataset, Descriptor,
    InstructionClass, Mix, SlotKind,
};
use crate::matcher::FeatureSpace;
use crate::memory::MemoryStore;
use crate::rng::{derive_str, rng_for};
use crate::scene::{load_object_library, scene_with_objects, ObjectLibrary, Scene};

pub use metrics::{
    compare_reports, compute_metrics, render_deltas, render_table, Condition, DeltaRow, EpisodeRecord,
    MetricsReport, Rate, SliceMetrics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Scene and instruction generation.
    pub dataset: u64,
    /// Perception noise, tie-breaks and naming episodes.
    pub episodes: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            dataset: 7,
            episodes: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Object library file; the built-in library when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
    /// Existing dataset directory to evaluate instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub n_scenes: usize,
    pub per_scene: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub tie_break: TieBreak,
    pub seeds: Seeds,
    pub mix: Mix,
    pub noise: NoiseConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            library: None,
            dataset: None,
            n_scenes: 20,
            per_scene: 15,
            min_objects: 6,
            max_objects: 8,
            tie_break: TieBreak::Deterministic,
            seeds: Seeds::default(),
            mix: Mix::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format {
            source_name: "experiment config".into(),
            line: e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        // Relative paths resolve against the config file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.library, &mut cfg.dataset].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.mix.validate()?;
        self.noise.validate()?;
        if self.dataset.is_none() && (self.n_scenes == 0 || self.per_scene == 0) {
            return Err(Error::Validation("n_scenes and per_scene must be positive".into()));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects || self.max_objects > 10 {
            return Err(Error::Validation(format!(
                "object range {}..={} must lie within 1..=10",
                self.min_objects, self.max_objects
            )));
        }
        for p in [&self.library, &self.dataset].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Validation(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn load_library(&self) -> Result<ObjectLibrary> {
        match &self.library {
            Some(p) => load_object_library(p),
            None => Ok(ObjectLibrary::builtin()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub dataset: Dataset,
    pub without: Vec<EpisodeRecord>,
    pub with: Vec<EpisodeRecord>,
    pub report_without: MetricsReport,
    pub report_with: MetricsReport,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub library_sha256: String,
    pub instructions: usize,
    /// Output file → SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

fn naming_names(grammar: &Grammar, scene: &Scene, seed: u64) -> Vec<String> {
    let mut names = grammar.names.names().to_vec();
    names.shuffle(&mut rng_for(derive_str(seed, &scene.scene_id)));
    names
}

fn gold(instr: &AnnotatedInstruction, slot: SlotKind) -> Option<String> {
    instr.entity(slot).and_then(|e| e.gold_instance_id.clone())
}

fn record(
    episode: crate::executor::EpisodeResult,
    instr: &AnnotatedInstruction,
    naming: Option<crate::executor::EpisodeResult>,
) -> EpisodeRecord {
    EpisodeRecord {
        episode,
        ambiguity_label: instr.ambiguity_label,
        gold_src: gold(instr, SlotKind::Src),
        gold_dst: gold(instr, SlotKind::Dst),
        naming,
    }
}

/// Runs one instruction without any naming.
fn run_plain(
    ctx: &EpisodeContext<'_>,
    scene: &Scene,
    instr: &AnnotatedInstruction,
    store: &MemoryStore,
    seed: u64,
) -> EpisodeRecord {
    let episode = if instr.instruction_class == InstructionClass::NamingObject {
        run_naming_episode(ctx, instr, scene, &mut store.clone(), seed)
    } else {
        run_manipulation_episode(ctx, instr, scene, store, seed).0
    };
    record(episode, instr, None)
}

/// Evaluates `dataset` under both conditions with the given context.
pub fn evaluate(
    ctx: &EpisodeContext<'_>,
    dataset: &Dataset,
    episode_seed: u64,
) -> Result<(Vec<EpisodeRecord>, Vec<EpisodeRecord>)> {
    let mut without = Vec::with_capacity(dataset.instructions.len());
    let mut with = Vec::with_capacity(dataset.instructions.len());
    for scene in &dataset.scenes {
        let instrs: Vec<&AnnotatedInstruction> = dataset
            .instructions
            .iter()
            .filter(|i| i.scene_id == scene.scene_id)
            .collect();
        let empty = MemoryStore::new();
        for instr in &instrs {
            let seed = derive_str(episode_seed, &instr.instruction_id);
            without.push(run_plain(ctx, scene, instr, &empty, seed));
        }

        // Naming phase: every pick-and-place target gets its own name, taught
        // in a one-object scene before any manipulation in this scene.
        let mut store = MemoryStore::new();
        let names = naming_names(ctx.grammar, scene, episode_seed);
        let mut named: Vec<Option<(AnnotatedInstruction, crate::executor::EpisodeResult)>> = Vec::new();
        let mut next_name = 0;
        for instr in &instrs {
            let (Some(idx), Some(target)) = (instr.entity_index(SlotKind::Src), gold(instr, SlotKind::Src)) else {
                named.push(None);
                continue;
            };
            if instr.instruction_class != InstructionClass::PickAndPlace {
                named.push(None);
                continue;
            }
            let name = names
                .get(next_name)
                .ok_or_else(|| Error::Infeasible(format!("name lexicon exhausted in {}", scene.scene_id)))?;
            next_name += 1;
            let seed = derive_str(episode_seed, &format!("{}#naming", instr.instruction_id));
            let object_id = &scene.instance(&target).ok_or_else(|| Error::UnknownInstance(target.clone()))?.object_id;
            let naming_scene = scene_with_objects(
                ctx.library,
                &[object_id],
                format!("{}#naming", instr.instruction_id),
                seed,
            )?;
            let mut rng = rng_for(seed);
            let spec = ctx.library.get(object_id).expect("scene validated");
            let described = rng.random_bool(0.5).then(|| Descriptor::category(spec.category.clone()));
            let mut naming = gen_naming_instruction(ctx.grammar, name, described.as_ref(), derive_str(seed, "text"))?;
            naming.instruction_id = format!("{}#naming", instr.instruction_id);
            naming.scene_id = naming_scene.scene_id.clone();
            for e in &mut naming.entities {
                if e.slot == SlotKind::Obj {
                    e.gold_instance_id = Some(naming_scene.instances[0].instance_id.clone());
                }
            }
            let naming_result = run_naming_episode(ctx, &naming, &naming_scene, &mut store, seed);
            let renamed = substitute_name(instr, idx, name)?;
            named.push(Some((renamed, naming_result)));
        }
        for (instr, naming) in instrs.iter().zip(named) {
            let seed = derive_str(episode_seed, &instr.instruction_id);
            let rec = match naming {
                Some((renamed, naming_result)) => {
                    let (episode, _) = run_manipulation_episode(ctx, &renamed, scene, &store, seed);
                    let mut rec = record(episode, &renamed, Some(naming_result));
                    rec.ambiguity_label = instr.ambiguity_label;
                    rec
                }
                None => run_plain(ctx, scene, instr, &empty, seed),
            };
            with.push(rec);
        }
    }
    Ok((without, with))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for i in items {
        out.push_str(&serde_json::to_string(i).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Generates (or loads) the dataset and evaluates both conditions.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let library = config.load_library()?;
    let grammar = Grammar::builtin(&library)?;
    let dataset = match &config.dataset {
        Some(dir) => Dataset::read_from(dir, &library)?,
        None => gen_dataset(
            &grammar,
            &library,
            config.n_scenes,
            config.per_scene,
            config.min_objects..=config.max_objects,
            &config.mix,
            config.seeds.dataset,
        )?,
    };
    let space = FeatureSpace::from_library(&library);
    let ctx = EpisodeContext {
        grammar: &grammar,
        library: &library,
        space: &space,
        noise: config.noise,
        tie_break: config.tie_break,
    };
    let (without, with) = evaluate(&ctx, &dataset, config.seeds.episodes)?;
    let report_without = compute_metrics(Condition::WithoutNaming, &without)?;
    let report_with = compute_metrics(Condition::WithNaming, &with)?;
    let mut out = ExperimentOutput {
        manifest: Manifest {
            config: config.clone(),
            config_sha256: config.hash(),
            library_sha256: hex::encode(Sha256::digest(library.to_json_pretty().as_bytes())),
            instructions: dataset.instructions.len(),
            files: BTreeMap::new(),
        },
        dataset,
        without,
        with,
        report_without,
        report_with,
    };
    out.manifest.files = out
        .files()
        .into_iter()
        .filter(|(name, _)| *name != MANIFEST_FILE)
        .map(|(name, body)| (name.to_string(), hex::encode(Sha256::digest(body.as_bytes()))))
        .collect();
    Ok(out)
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl ExperimentOutput {
    pub fn table(&self) -> String {
        let mut t = render_table(&[&self.report_without, &self.report_with]);
        t.push('\n');
        let deltas = compare_reports(&self.report_without, &self.report_with).expect("same dataset");
        t.push_str(&render_deltas(&deltas));
        t
    }

    /// Output files keyed by relative path.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dataset/scenes.jsonl", self.dataset.scenes_jsonl()),
            ("dataset/instructions.jsonl", self.dataset.instructions_jsonl()),
            ("episodes_wo.jsonl", jsonl(&self.without)),
            ("episodes_w.jsonl", jsonl(&self.with)),
            ("report_wo.json", pretty(&self.report_without)),
            ("report_w.json", pretty(&self.report_with)),
            ("report.txt", self.table()),
            (MANIFEST_FILE, pretty(&self.manifest)),
        ]
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, body) in self.files() {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, body)?;
        }
        Ok(())
    }
}
