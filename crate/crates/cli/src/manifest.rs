//! Tab-separated batch manifests.
//!
//! Each non-blank line that does not start with `#` holds
//! `prompt_id <TAB> prompt_text <TAB> mesh_path`, optionally followed by a
//! fourth `sample_id` column. Without it, samples are numbered from 0 in order
//! of appearance within their prompt.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub line: usize,
    pub prompt_id: String,
    pub prompt_text: String,
    /// Path exactly as written; reported in the CSV `file` column.
    pub mesh_path: String,
    pub sample_id: String,
}

impl ManifestRecord {
    /// Relative paths are taken from the manifest's directory.
    pub fn resolve(&self, base: &Path) -> PathBuf {
        let p = Path::new(&self.mesh_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, CliError> {
    let mut records = Vec::new();
    let mut counters: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(CliError::Input(format!(
                "manifest line {line}: expected 3 or 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let prompt_id = fields[0].trim().to_string();
        let mesh_path = fields[2].trim().to_string();
        if prompt_id.is_empty() || mesh_path.is_empty() {
            return Err(CliError::Input(format!("manifest line {line}: empty prompt id or mesh path")));
        }
        let counter = counters.entry(prompt_id.clone()).or_default();
        let sample_id = match fields.get(3) {
            Some(s) if !s.trim().is_empty() => s.trim().to_string(),
            _ => counter.to_string(),
        };
        *counter += 1;
        if !seen.insert((prompt_id.clone(), sample_id.clone())) {
            return Err(CliError::Input(format!(
                "manifest line {line}: duplicate sample {sample_id} for prompt {prompt_id}"
            )));
        }
        records.push(ManifestRecord {
            line,
            prompt_id,
            prompt_text: fields[1].to_string(),
            mesh_path,
            sample_id,
        });
    }
    Ok(records)
}
