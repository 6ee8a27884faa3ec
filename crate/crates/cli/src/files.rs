//! Input discovery, stem handling and overwrite protection.

use std::path::{Path, PathBuf};

use crate::CliError;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

pub fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Expands directories into their image files (sorted) and checks that
/// plain files exist.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(list_images(p)?);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(CliError::Usage(format!("input {} does not exist", p.display())));
        }
    }
    Ok(out)
}

pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    Ok(files)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Stem with a trailing `_flare` removed, so synthesized pairs share a name.
pub fn base_stem(path: &Path) -> String {
    let stem = file_stem(path);
    stem.strip_suffix("_flare").map(str::to_string).unwrap_or(stem)
}

/// First existing `<dir>/<name>.<ext>` over the candidate names.
pub fn find_image(dir: &Path, names: &[String]) -> Option<PathBuf> {
    names.iter().find_map(|n| {
        IMAGE_EXTENSIONS.iter().map(|e| dir.join(format!("{n}.{e}"))).find(|p| p.is_file())
    })
}

/// Refuses to proceed if any planned output exists, unless `force`.
pub fn guard_outputs(paths: &[PathBuf], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    let existing: Vec<String> = paths.iter().filter(|p| p.exists()).map(|p| p.display().to_string()).collect();
    if existing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{} output file(s) already exist (first: {}); pass --force to overwrite",
            existing.len(),
            existing[0]
        )))
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}
