//! JSONL pair manifests: one `{"audio": .., "text": .., "label": 0|1}`
//! object per line. Relative audio paths resolve against the manifest's
//! directory. An optional `text_features` field names a KWSF file of
//! precomputed per-character text features.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::io_util::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub audio: PathBuf,
    pub text: String,
    pub label: u8,
    pub text_features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub examples: Vec<Example>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    /// The first `n` examples.
    pub fn truncated(&self, n: usize) -> Manifest {
        Manifest {
            examples: self.examples.iter().take(n).cloned().collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    audio: String,
    text: String,
    label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_features: Option<String>,
}

fn parse_lines(text: &str, base: &Path) -> Result<Vec<(usize, Example)>, DataError> {
    let mut examples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |msg: String| DataError::Manifest { line, msg };
        let parsed: Line = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        if parsed.label > 1 {
            return Err(err(format!("label must be 0 or 1, got {}", parsed.label)));
        }
        if parsed.text.is_empty() {
            return Err(err("text is empty".into()));
        }
        let example = Example {
            audio: base.join(&parsed.audio),
            text: parsed.text,
            label: parsed.label,
            text_features: parsed.text_features.map(|p| base.join(p)),
        };
        examples.push((line, example));
    }
    if examples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(examples)
}

/// Parses manifest text; `base` resolves relative paths. File existence is
/// not checked here.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Manifest, DataError> {
    let examples = parse_lines(text, base)?.into_iter().map(|(_, e)| e).collect();
    Ok(Manifest { examples })
}

/// Reads and validates a manifest, including that every referenced file exists.
pub fn load_manifest(path: &Path) -> Result<Manifest, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let lines = parse_lines(&text, path.parent().unwrap_or(Path::new("")))?;
    for (line, ex) in &lines {
        for p in std::iter::once(&ex.audio).chain(&ex.text_features) {
            if !p.is_file() {
                return Err(DataError::Manifest {
                    line: *line,
                    msg: format!("file {} does not exist", p.display()),
                });
            }
        }
    }
    Ok(Manifest {
        examples: lines.into_iter().map(|(_, e)| e).collect(),
    })
}

/// Writes `manifest` to `path`, storing paths relative to its directory
/// where possible.
pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<(), DataError> {
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned();
    let mut out = String::new();
    for ex in &manifest.examples {
        let line = Line {
            audio: rel(&ex.audio),
            text: ex.text.clone(),
            label: ex.label,
            text_features: ex.text_features.as_deref().map(rel),
        };
        out.push_str(&serde_json::to_string(&line).expect("manifest line serialises"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(|e| DataError::io(path, e))
}
