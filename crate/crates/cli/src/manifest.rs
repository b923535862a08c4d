use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub sha256: String,
    pub bytes: u64,
}

/// One per run. `outputs` covers every file the run wrote except the
/// manifest itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub outputs: BTreeMap<String, FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Output directory that records a digest for every file it writes.
pub struct OutputDir {
    dir: PathBuf,
    started: Instant,
    files: BTreeMap<String, FileDigest>,
}

impl OutputDir {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(OutputDir { dir, started: Instant::now(), files: BTreeMap::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        let digest = FileDigest { sha256: sha256_hex(bytes), bytes: bytes.len() as u64 };
        self.files.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, text.as_bytes())
    }

    pub fn digests(&self) -> &BTreeMap<String, FileDigest> {
        &self.files
    }

    /// Writes `manifest.json` and returns it.
    pub fn finish(self, command: &str, seed: Option<u64>, config: serde_json::Value) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: command.to_string(),
            seed,
            config,
            versions: BTreeMap::from([
                ("subsidy-core".to_string(), subsidy_core::VERSION.to_string()),
                ("subsidy-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ]),
            threads: rayon::current_num_threads(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join(MANIFEST), &bytes)?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_every_output() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(tmp.path().join("run")).unwrap();
        out.write_text("a.txt", "hello\n").unwrap();
        out.write_json("b.json", &[1, 2, 3]).unwrap();
        let m = out.finish("test", Some(4), serde_json::Value::Null).unwrap();
        assert_eq!(m.outputs.len(), 2);
        assert_eq!(m.outputs["a.txt"].bytes, 6);
        let back = read_manifest(&tmp.path().join("run")).unwrap();
        assert_eq!(back, m);
        let names: Vec<String> = std::fs::read_dir(tmp.path().join("run"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names.len(), 3, "no temporary files left behind: {names:?}");
    }
}
