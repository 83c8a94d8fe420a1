//! Frame ontology: frames, their roles (frame elements), and the lexical
//! units that evoke them.
//!
//! The store is loaded from a strict JSON file and is immutable afterwards.
//! Lemmas are normalized to lowercase with single-space separators, so a
//! multi-word target is looked up by joining its tokens with one space.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Characters the span-role target grammar reserves.
pub const RESERVED_ROLE_CHARS: [char; 2] = ['=', '|'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleDef {
    pub name: String,
    pub definition: String,
    pub core: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexicalUnit {
    pub lemma: String,
    pub pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDef {
    pub name: String,
    pub definition: String,
    pub elements: Vec<RoleDef>,
    pub lexical_units: Vec<LexicalUnit>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyFile {
    frames: Vec<FrameDef>,
}

/// Lowercases and collapses internal whitespace.
pub fn normalize_lemma(lemma: &str) -> String {
    lemma
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct OntologyStore {
    frames: BTreeMap<String, FrameDef>,
    lu_index: BTreeMap<String, BTreeSet<String>>,
}

impl OntologyStore {
    /// Validates the frames and builds the lemma index.
    pub fn from_frames(frames: Vec<FrameDef>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Validation("no frames".into()));
        }
        let mut by_name = BTreeMap::new();
        let mut lu_index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for mut frame in frames {
            validate_frame(&frame)?;
            for lu in &mut frame.lexical_units {
                lu.lemma = normalize_lemma(&lu.lemma);
            }
            let mut seen = HashSet::new();
            for lu in &frame.lexical_units {
                if !seen.insert((lu.lemma.clone(), lu.pos.clone())) {
                    return Err(Error::Validation(format!(
                        "duplicate lexical unit {}.{} in frame {}",
                        lu.lemma, lu.pos, frame.name
                    )));
                }
                lu_index
                    .entry(lu.lemma.clone())
                    .or_default()
                    .insert(frame.name.clone());
            }
            if by_name.contains_key(&frame.name) {
                return Err(Error::Validation(format!("duplicate frame {}", frame.name)));
            }
            by_name.insert(frame.name.clone(), frame);
        }
        Ok(OntologyStore {
            frames: by_name,
            lu_index,
        })
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let file: OntologyFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_frames(file.frames)
    }

    /// Serializes to the on-disk JSON format, frames in name order.
    pub fn to_json_string(&self) -> String {
        let file = OntologyFile {
            frames: self.frames.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("ontology serializes")
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, name: &str) -> Option<&FrameDef> {
        self.frames.get(name)
    }

    /// Frames in name order.
    pub fn frames(&self) -> impl Iterator<Item = &FrameDef> {
        self.frames.values()
    }

    /// Distinct normalized lemmas in lexicographic order.
    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.lu_index.keys().map(String::as_str)
    }

    /// Frame names evoked by `lemma`, sorted. Empty for out-of-ontology lemmas.
    pub fn frames_for_lemma(&self, lemma: &str) -> Vec<String> {
        self.lu_index
            .get(&normalize_lemma(lemma))
            .map(|set| set.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Roles of `frame` in declaration order.
    pub fn roles_for_frame(&self, frame: &str) -> Result<&[RoleDef]> {
        self.frames
            .get(frame)
            .map(|f| f.elements.as_slice())
            .ok_or_else(|| Error::UnknownFrame(frame.to_string()))
    }

    pub fn is_ambiguous(&self, lemma: &str) -> bool {
        self.lu_index
            .get(&normalize_lemma(lemma))
            .is_some_and(|set| set.len() >= 2)
    }
}

fn validate_frame(frame: &FrameDef) -> Result<()> {
    if frame.name.trim().is_empty() {
        return Err(Error::Validation("frame with empty name".into()));
    }
    // Frame names appear verbatim in the arg-id prompt head.
    if frame.name.chars().any(char::is_whitespace) {
        return Err(Error::Validation(format!(
            "frame name {:?} contains whitespace",
            frame.name
        )));
    }
    if frame.definition.trim().is_empty() {
        return Err(Error::Validation(format!(
            "frame {} has an empty definition",
            frame.name
        )));
    }
    let mut names = HashSet::new();
    for role in &frame.elements {
        if role.name.trim().is_empty() {
            return Err(Error::Validation(format!(
                "frame {} has a role with an empty name",
                frame.name
            )));
        }
        if role.name.contains(RESERVED_ROLE_CHARS) {
            return Err(Error::Validation(format!(
                "role {:?} in frame {} contains a reserved character ('=' or '|')",
                role.name, frame.name
            )));
        }
        if role.name.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!(
                "role {:?} in frame {} contains whitespace",
                role.name, frame.name
            )));
        }
        if role.definition.trim().is_empty() {
            return Err(Error::Validation(format!(
                "role {} in frame {} has an empty definition",
                role.name, frame.name
            )));
        }
        if !names.insert(role.name.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate role {} in frame {}",
                role.name, frame.name
            )));
        }
    }
    for lu in &frame.lexical_units {
        if lu.lemma.trim().is_empty() {
            return Err(Error::Validation(format!(
                "frame {} has a lexical unit with an empty lemma",
                frame.name
            )));
        }
    }
    Ok(())
}

pub fn load_ontology(path: impl AsRef<Path>) -> Result<OntologyStore> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    OntologyStore::from_json_str(&text, path)
}
