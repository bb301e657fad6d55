//! Stage bookkeeping: content hashes, atomic writes, per-stage manifests,
//! and the working-directory lock that keeps runs from overlapping.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Hash of a directory tree: every file's relative path and content, in
/// sorted path order, folded into one digest.
pub fn sha256_tree(root: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .collect();
    files.sort();
    let mut h = Sha256::new();
    for path in files {
        let rel = path.strip_prefix(root).unwrap_or(&path);
        h.update(rel.to_string_lossy().replace('\\', "/").as_bytes());
        h.update([0u8]);
        h.update(sha256_file(&path)?.as_bytes());
        h.update([0u8]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Write through a temporary file in the same directory and rename into
/// place, so an interrupted stage never leaves a partial file at the
/// final path.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Record of one completed stage run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StageManifest {
    pub stage: String,
    /// Hash of the configuration subset this stage depends on.
    pub config_hash: String,
    /// Input path (relative to the work dir where applicable) -> sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path -> sha256.
    pub outputs: BTreeMap<String, String>,
    pub started_at: u64,
    pub finished_at: u64,
}

impl StageManifest {
    pub fn begin(stage: &str, config_hash: String, inputs: BTreeMap<String, String>) -> Self {
        StageManifest {
            stage: stage.to_string(),
            config_hash,
            inputs,
            outputs: BTreeMap::new(),
            started_at: unix_now(),
            finished_at: 0,
        }
    }

    pub fn finish(&mut self, outputs: BTreeMap<String, String>) {
        self.outputs = outputs;
        self.finished_at = unix_now();
    }
}

pub fn manifest_path(work_dir: &Path, stage: &str) -> PathBuf {
    work_dir.join("manifests").join(format!("{stage}.json"))
}

pub fn save_manifest(work_dir: &Path, manifest: &StageManifest) -> Result<()> {
    let path = manifest_path(work_dir, &manifest.stage);
    let mut bytes = serde_json::to_vec_pretty(manifest)
        .map_err(|e| Error::json(&path, e))?;
    bytes.push(b'\n');
    atomic_write(&path, &bytes)
}

pub fn load_manifest(work_dir: &Path, stage: &str) -> Option<StageManifest> {
    let path = manifest_path(work_dir, stage);
    let bytes = fs::read(&path).ok()?;
    serde_json::from_slice(&bytes).ok()
}

/// Whether a stage can be skipped: a manifest exists, its config hash and
/// every recorded input hash match the current state, and every recorded
/// output still exists. With `strict`, output hashes are re-verified too.
pub fn stage_is_current(
    work_dir: &Path,
    stage: &str,
    config_hash: &str,
    current_inputs: &BTreeMap<String, String>,
    strict: bool,
) -> bool {
    let Some(manifest) = load_manifest(work_dir, stage) else {
        return false;
    };
    if manifest.config_hash != config_hash || manifest.inputs != *current_inputs {
        return false;
    }
    for (rel, recorded) in &manifest.outputs {
        let path = work_dir.join(rel);
        if !path.exists() {
            return false;
        }
        if strict {
            match sha256_file(&path) {
                Ok(actual) if actual == *recorded => {}
                _ => {
                    log::warn!(
                        "stage {stage}: output {rel} hash mismatch; refusing to skip"
                    );
                    return false;
                }
            }
        }
    }
    true
}

/// Exclusive lock on a working directory, released on drop. At most one
/// pipeline instance may operate on a directory at a time.
#[derive(Debug)]
pub struct WorkLock {
    path: PathBuf,
}

impl WorkLock {
    pub fn acquire(work_dir: &Path) -> Result<Self> {
        fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
        let path = work_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(path))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for WorkLock {
    fn drop(&mut self) {
        if let Err(e) = fs::remove_file(&self.path) {
            log::warn!("failed to remove lock {}: {e}", self.path.display());
        }
    }
}
