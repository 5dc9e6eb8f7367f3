//! Run manifests and map sidecars.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cache::CacheStats;

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// What a command read and wrote, with which settings and how long it took.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: Option<String>,
    pub config: Option<serde_json::Value>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub cache: Option<CacheStats>,
    pub wall_seconds: BTreeMap<String, f64>,
    pub summary: serde_json::Map<String, serde_json::Value>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: None,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            cache: None,
            wall_seconds: BTreeMap::new(),
            summary: serde_json::Map::new(),
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord {
            path: path.to_path_buf(),
            sha256: file_hash(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileRecord {
            path: path.to_path_buf(),
            sha256: file_hash(path)?,
        });
        Ok(())
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        *self.wall_seconds.entry(stage.into()).or_default() += t.elapsed().as_secs_f64();
        r
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary
            .insert(key.into(), serde_json::to_value(value).expect("summary values serialize"));
    }

    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        if let Some(t) = self.started {
            self.wall_seconds.insert("total".into(), t.elapsed().as_secs_f64());
        }
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.manifest.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Provenance stored next to every map file as `<map>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub producer: String,
    pub config_hash: Option<String>,
    pub query_mesh: String,
    pub reference_mesh: String,
}

pub fn sidecar_path(map: &Path) -> PathBuf {
    let mut name = map.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    map.with_file_name(name)
}

pub fn write_sidecar(map: &Path, meta: &MapMeta) -> Result<()> {
    let path = sidecar_path(map);
    std::fs::write(&path, serde_json::to_string_pretty(meta)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_sidecar(map: &Path) -> Result<Option<MapMeta>> {
    let path = sidecar_path(map);
    match std::fs::read_to_string(&path) {
        Ok(text) => Ok(Some(
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        )),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = dir.path().join("q.map");
        assert!(read_sidecar(&map).unwrap().is_none());
        let meta = MapMeta {
            producer: "infer".into(),
            config_hash: Some("ab".into()),
            query_mesh: "01".into(),
            reference_mesh: "02".into(),
        };
        write_sidecar(&map, &meta).unwrap();
        assert_eq!(sidecar_path(&map), dir.path().join("q.map.meta.json"));
        assert_eq!(read_sidecar(&map).unwrap(), Some(meta));
    }

    #[test]
    fn manifest_records_files_and_times() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "abc").unwrap();
        let mut m = Manifest::new("demo");
        m.input(&input).unwrap();
        let v = m.time("stage", || 3);
        assert_eq!(v, 3);
        m.note("answer", 42);
        let path = m.write(dir.path()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(
            json["inputs"][0]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(json["wall_seconds"]["stage"].is_number());
        assert!(json["wall_seconds"]["total"].is_number());
        assert_eq!(json["summary"]["answer"], 42);
    }
}
