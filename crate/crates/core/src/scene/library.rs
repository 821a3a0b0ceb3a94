use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUILTIN_LIBRARY: &str = include_str!("../../data/library.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Table footprint in millimetres (width along x, depth along y at yaw 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footprint {
    pub width: f64,
    pub depth: f64,
}

/// One catalog object with its ground-truth attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub object_id: String,
    pub category: String,
    pub colors: Vec<String>,
    pub size_class: SizeClass,
    pub shape: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub graspable: bool,
    pub footprint: Footprint,
    /// Cuboid height in millimetres, used by the camera projection.
    pub height: f64,
    /// Grasp annotations as (dx, dy) offsets in millimetres from the footprint
    /// centre on the top face, in the object frame. Empty means the default
    /// five-point pattern.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grasps: Vec<[f64; 2]>,
}

impl ObjectSpec {
    fn validate(&self) -> Result<()> {
        let id = &self.object_id;
        if id.trim().is_empty() {
            return Err(Error::Validation("object_id must be non-empty".into()));
        }
        if self.colors.is_empty() {
            return Err(Error::Validation(format!("{id}: colors must be non-empty")));
        }
        if !(self.footprint.width > 0.0 && self.footprint.depth > 0.0) {
            return Err(Error::Validation(format!(
                "{id}: footprint must be strictly positive"
            )));
        }
        if !self.height.is_finite() || self.height <= 0.0 {
            return Err(Error::Validation(format!("{id}: height must be positive")));
        }
        let words = std::iter::once(&self.category)
            .chain(self.colors.iter())
            .chain(std::iter::once(&self.shape))
            .chain(self.aliases.iter());
        for w in words {
            if !is_vocab_token(w) {
                return Err(Error::Validation(format!(
                    "{id}: attribute token {w:?} must be a single lowercase word"
                )));
            }
        }
        Ok(())
    }

    /// Grasp offsets, falling back to the centre plus four inner points.
    pub fn grasp_offsets(&self) -> Vec<[f64; 2]> {
        if !self.grasps.is_empty() {
            return self.grasps.clone();
        }
        let (qw, qd) = (self.footprint.width / 4.0, self.footprint.depth / 4.0);
        vec![[0.0, 0.0], [qw, 0.0], [-qw, 0.0], [0.0, qd], [0.0, -qd]]
    }
}

fn is_vocab_token(w: &str) -> bool {
    !w.is_empty()
        && w.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

/// Validated, immutable object catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLibrary {
    specs: Vec<ObjectSpec>,
}

impl ObjectLibrary {
    pub fn new(specs: Vec<ObjectSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &specs {
            s.validate()?;
            if !seen.insert(s.object_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate object_id {:?}",
                    s.object_id
                )));
            }
        }
        Ok(Self { specs })
    }

    pub fn from_json_str(text: &str, source_name: &str) -> Result<Self> {
        let specs: Vec<ObjectSpec> =
            serde_json::from_str(text).map_err(|e| Error::Format {
                source_name: source_name.to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
        Self::new(specs)
    }

    pub fn builtin() -> Self {
        Self::from_json_str(BUILTIN_LIBRARY, "builtin library").expect("builtin library is valid")
    }

    pub fn specs(&self) -> &[ObjectSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, object_id: &str) -> Option<&ObjectSpec> {
        self.specs.iter().find(|s| s.object_id == object_id)
    }

    pub fn categories(&self) -> BTreeSet<String> {
        self.specs.iter().map(|s| s.category.clone()).collect()
    }

    pub fn colors(&self) -> BTreeSet<String> {
        self.specs.iter().flat_map(|s| s.colors.iter().cloned()).collect()
    }

    pub fn shapes(&self) -> BTreeSet<String> {
        self.specs.iter().map(|s| s.shape.clone()).collect()
    }

    /// Alias words grouped by the category they can stand for.
    pub fn aliases_by_category(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for s in &self.specs {
            out.entry(s.category.clone())
                .or_default()
                .extend(s.aliases.iter().cloned());
        }
        out
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.specs).expect("specs serialize")
    }
}

/// Reads and validates an object library file (JSON array of object specs).
pub fn load_object_library(path: impl AsRef<Path>) -> Result<ObjectLibrary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    ObjectLibrary::from_json_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: &str) -> ObjectSpec {
        ObjectSpec {
            object_id: id.into(),
            category: "bottle".into(),
            colors: vec!["brown".into()],
            size_class: SizeClass::Medium,
            shape: "cylindrical".into(),
            aliases: vec![],
            graspable: true,
            footprint: Footprint { width: 70.0, depth: 70.0 },
            height: 200.0,
            grasps: vec![],
        }
    }

    #[test]
    fn builtin_has_24_objects() {
        assert_eq!(ObjectLibrary::builtin().len(), 24);
    }

    #[test]
    fn file_round_trip_preserves_count() {
        let lib = ObjectLibrary::builtin();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lib.json");
        std::fs::write(&p, lib.to_json_pretty()).unwrap();
        let back = load_object_library(&p).unwrap();
        assert_eq!(back.len(), 24);
        assert_eq!(back, lib);
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = ObjectLibrary::new(vec![spec("bottle_brown"), spec("bottle_brown")]).unwrap_err();
        assert!(matches!(err, Error::Validation(m) if m.contains("bottle_brown")));
    }

    #[test]
    fn empty_colors_rejected() {
        let mut s = spec("x");
        s.colors.clear();
        assert!(matches!(ObjectLibrary::new(vec![s]), Err(Error::Validation(_))));
    }

    #[test]
    fn non_positive_footprint_rejected() {
        let mut s = spec("x");
        s.footprint.depth = 0.0;
        assert!(ObjectLibrary::new(vec![s]).is_err());
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "[\n  {\"object_id\": \"a\",\n   \"category\": 3}\n]";
        match ObjectLibrary::from_json_str(text, "t.json") {
            Err(Error::Format { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("invalid type"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
