//! Subcommand implementations and the small I/O helpers they share.
//!
//! Conventions common to every command:
//! - data goes to files and standard output, diagnostics to standard error;
//! - files are written atomically (write-temp-then-rename);
//! - errors carry the offending path in their context;
//! - reports embed the configuration snapshot that produced them.

pub mod allocate;
pub mod bdrate;
pub mod calibrate;
pub mod decode;
pub mod encode;
pub mod evaluate;
pub mod sweep;
pub mod synth;
pub mod weights;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use mfiba_core::container;
use mfiba_core::fsutil::atomic_write;
use mfiba_core::pyramid::FeaturePyramid;
use mfiba_core::rdmodel::ModelFile;

/// Writes one line of data to standard output. A broken pipe (the reader
/// closed early, as under `mfiba ... | head`) ends the process quietly like
/// any well-behaved filter instead of panicking.
pub(crate) fn emit(text: impl AsRef<str>) {
    use std::io::Write;
    if let Err(err) = writeln!(std::io::stdout(), "{}", text.as_ref()) {
        if err.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing to standard output: {err}");
        std::process::exit(1);
    }
}

/// Loads a pyramid and restores the metadata the container does not carry:
/// the source id becomes the file stem and the object-size parameter comes
/// from the configuration (or a flag override).
pub(crate) fn load_pyramid(path: &Path, object_size_param: f64) -> Result<FeaturePyramid> {
    let mut p = container::load_pyramid(path)
        .with_context(|| format!("loading pyramid {}", path.display()))?;
    p.source_id = file_stem_id(path);
    p.object_size_param = object_size_param;
    Ok(p)
}

/// File stem reduced to the character set run identifiers allow.
pub(crate) fn file_stem_id(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let id: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':') {
                c
            } else {
                '-'
            }
        })
        .collect();
    if id.is_empty() {
        "input".to_string()
    } else {
        id
    }
}

pub(crate) fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model file {}", path.display()))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Sorted pyramid corpus listing; errors when the directory holds none.
pub(crate) fn pyramid_corpus(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("reading pyramid directory {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.path())
        .filter(|path| path.extension().is_some_and(|ext| ext == "fpyr"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no pyramid files (*.fpyr) in {}", dir.display());
    }
    Ok(paths)
}
