//! Named-object memory: names bound to multi-view feature observations,
//! with a versioned line-oriented file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounder::{observe_from, NoiseConfig};
use crate::matcher::{FeatureSpace, FeatureVec};
use crate::rng::derive;
use crate::scene::{CameraView, ObjectLibrary, Scene};

pub const STORE_VERSION: u32 = 1;
pub const STORE_MAGIC: &str = "namegrounder-memory";
/// Views captured per naming episode.
pub const DEFAULT_VIEWS: usize = 4;

/// Case-folded, whitespace-normalized lookup key.
pub fn name_key(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamingRecord {
    /// Name as first given (display form).
    pub name: String,
    pub observations: Vec<FeatureVec>,
    /// Logical clock value at insertion.
    pub created_at: u64,
    pub source_scene_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenamePolicy {
    /// A name given again replaces the earlier record.
    #[default]
    Replace,
    /// A name given again is refused.
    Reject,
}

impl RenamePolicy {
    fn as_str(self) -> &'static str {
        match self {
            RenamePolicy::Replace => "replace",
            RenamePolicy::Reject => "reject",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryStore {
    records: BTreeMap<String, NamingRecord>,
    clock: u64,
    pub policy: RenamePolicy,
}

/// One feature vector per view, cycling through the four camera views.
pub fn capture_views(
    scene: &Scene,
    library: &ObjectLibrary,
    space: &FeatureSpace,
    noise: &NoiseConfig,
    k: usize,
    seed: u64,
) -> Result<Vec<FeatureVec>> {
    if scene.len() != 1 {
        return Err(Error::NamingScene(scene.len()));
    }
    if k == 0 {
        return Err(Error::Validation("at least one view is required".into()));
    }
    Ok((0..k)
        .map(|i| {
            let view = CameraView::ALL[i % CameraView::ALL.len()];
            let view_seed = derive(seed, i as u64);
            let obs = observe_from(scene, library, view, noise, view_seed);
            space.embed(&obs.instances[0].attributes, noise.sigma, derive(view_seed, 1))
        })
        .collect())
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_policy(policy: RenamePolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &NamingRecord> {
        self.records.values()
    }

    pub fn store_name(
        &mut self,
        name: &str,
        observations: Vec<FeatureVec>,
        source_scene_id: &str,
    ) -> Result<()> {
        let key = name_key(name);
        if key.is_empty() {
            return Err(Error::Store("empty name".into()));
        }
        let Some(first) = observations.first() else {
            return Err(Error::Store(format!("no observations for {name:?}")));
        };
        if observations.iter().any(|o| o.dim() != first.dim()) {
            return Err(Error::Store("observations differ in dimension".into()));
        }
        if self.policy == RenamePolicy::Reject && self.records.contains_key(&key) {
            return Err(Error::Store(format!("{name:?} is already taken")));
        }
        self.clock += 1;
        self.records.insert(
            key,
            NamingRecord {
                name: name.split_whitespace().collect::<Vec<_>>().join(" "),
                observations,
                created_at: self.clock,
                source_scene_id: source_scene_id.to_string(),
            },
        );
        Ok(())
    }

    pub fn recall(&self, name: &str) -> Option<&NamingRecord> {
        self.records.get(&name_key(name))
    }

    /// Serializes to the store file format (see docs/formats.md).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let json = |s: &str| serde_json::to_string(s).expect("strings serialize");
        let _ = writeln!(out, "{STORE_MAGIC} v{STORE_VERSION}");
        let _ = writeln!(out, "clock {}", self.clock);
        let _ = writeln!(out, "policy {}", self.policy.as_str());
        for r in self.records.values() {
            let dim = r.observations.first().map_or(0, FeatureVec::dim);
            let _ = writeln!(out, "record {} {} {}", r.created_at, r.observations.len(), dim);
            let _ = writeln!(out, "name {}", json(&r.name));
            let _ = writeln!(out, "scene {}", json(&r.source_scene_id));
            for o in &r.observations {
                let vals: Vec<String> = o.0.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "obs {}", vals.join(" "));
            }
        }
        let _ = writeln!(out, "end {}", self.records.len());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }

    /// Writes atomically via a temporary file in the same directory.
    pub fn persist(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_text())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

struct Parser<'t> {
    text: &'t str,
    offset: usize,
}

impl<'t> Parser<'t> {
    fn new(text: &'t str) -> Self {
        Self { text, offset: 0 }
    }

    fn corrupt(&self, message: impl Into<String>) -> Error {
        Error::Corrupt {
            offset: self.offset,
            message: message.into(),
        }
    }

    /// Next line split into keyword and rest; advances the offset past it.
    fn line(&mut self, keyword: &str) -> Result<&'t str> {
        let rest = &self.text[self.offset..];
        let Some(nl) = rest.find('\n') else {
            return Err(self.corrupt(format!("expected `{keyword}` line, found end of file")));
        };
        let line = &rest[..nl];
        let body = line
            .strip_prefix(keyword)
            .and_then(|b| b.strip_prefix(' '))
            .ok_or_else(|| self.corrupt(format!("expected `{keyword}` line")))?;
        self.offset += nl + 1;
        Ok(body)
    }

    fn number<N: std::str::FromStr>(&self, s: &str) -> Result<N> {
        s.parse().map_err(|_| self.corrupt(format!("bad number {s:?}")))
    }

    fn string(&self, s: &str) -> Result<String> {
        serde_json::from_str(s).map_err(|e| self.corrupt(format!("bad string: {e}")))
    }

    fn parse(mut self) -> Result<MemoryStore> {
        let header = self.line(STORE_MAGIC)?;
        let found: u32 = header
            .strip_prefix('v')
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| self.corrupt("bad version tag"))?;
        if found != STORE_VERSION {
            return Err(Error::Migration {
                found,
                expected: STORE_VERSION,
            });
        }
        let clock_line = self.line("clock")?;
        let clock: u64 = self.number(clock_line)?;
        let policy = match self.line("policy")? {
            "replace" => RenamePolicy::Replace,
            "reject" => RenamePolicy::Reject,
            other => return Err(self.corrupt(format!("unknown policy {other:?}"))),
        };
        let mut records = BTreeMap::new();
        loop {
            if self.text[self.offset..].starts_with("end ") {
                let end_line = self.line("end")?;
                let n: usize = self.number(end_line)?;
                if n != records.len() {
                    return Err(self.corrupt(format!("trailer counts {n} records, read {}", records.len())));
                }
                if self.offset != self.text.len() {
                    return Err(self.corrupt("trailing data after end marker"));
                }
                return Ok(MemoryStore {
                    records,
                    clock,
                    policy,
                });
            }
            let head_line = self.line("record")?;
            let head: Vec<&str> = head_line.split(' ').collect();
            let [created, n_obs, dim] = head.as_slice() else {
                return Err(self.corrupt("record header needs 3 fields"));
            };
            let created_at: u64 = self.number(created)?;
            let n_obs: usize = self.number(n_obs)?;
            let dim: usize = self.number(dim)?;
            let name_line = self.line("name")?;
            let name = self.string(name_line)?;
            let scene_line = self.line("scene")?;
            let source_scene_id = self.string(scene_line)?;
            let mut observations = Vec::with_capacity(n_obs);
            for _ in 0..n_obs {
                let at = self.offset;
                let vals = self.line("obs")?;
                let v: Vec<f64> = vals
                    .split(' ')
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Corrupt {
                        offset: at,
                        message: "bad feature value".into(),
                    })?;
                if v.len() != dim {
                    return Err(Error::Corrupt {
                        offset: at,
                        message: format!("expected {dim} values, found {}", v.len()),
                    });
                }
                observations.push(FeatureVec(v));
            }
            if observations.is_empty() {
                return Err(self.corrupt("record without observations"));
            }
            let key = name_key(&name);
            if records.contains_key(&key) {
                return Err(self.corrupt(format!("duplicate name {name:?}")));
            }
            records.insert(
                key,
                NamingRecord {
                    name,
                    observations,
                    created_at,
                    source_scene_id,
                },
            );
        }
    }
}
