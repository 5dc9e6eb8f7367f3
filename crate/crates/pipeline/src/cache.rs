//! Content-addressed artifact cache.
//!
//! Each artifact lives at `<root>/<stage>/<key>.bin`, where the key hashes
//! everything the artifact depends on. Files end in a SHA-256 of their
//! payload; a file that fails the checksum or does not decode is rebuilt
//! with a warning. Writes go through a temporary file and a rename, so
//! readers never see partial artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use acnn::binio::{Decoder, Encoder};
use acnn::mesh::TriangleFrame;
use acnn::Frame;
use nalgebra::Vector3;

#[derive(Debug, Default)]
pub struct Cache {
    root: PathBuf,
    counters: Counters,
}

#[derive(Debug, Default)]
struct Counters {
    built: [AtomicUsize; STAGES.len()],
    loaded: [AtomicUsize; STAGES.len()],
    corrupt: AtomicUsize,
}

pub const STAGES: [&str; 5] = ["frames", "operators", "bases", "patches", "descriptor_bases"];

/// Per-stage build and load counts since the cache was opened.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub built: Vec<(String, usize)>,
    pub loaded: Vec<(String, usize)>,
    pub corrupt: usize,
    pub eigendecompositions: usize,
}

/// Cache key: SHA-256 over length-prefixed parts.
#[derive(Debug, Default)]
pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new(stage: &str) -> Self {
        let mut k = Self::default();
        k.bytes(stage.as_bytes());
        k
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn finish(&mut self) -> String {
        hex::encode(std::mem::take(&mut self.0).finalize())
    }
}

impl Cache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating cache directory {}", root.display()))?;
        Ok(Self {
            root,
            counters: Counters::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(stage).join(format!("{key}.bin"))
    }

    pub fn stats(&self) -> CacheStats {
        let collect = |c: &[AtomicUsize; STAGES.len()]| {
            STAGES
                .iter()
                .zip(c)
                .map(|(s, n)| (s.to_string(), n.load(Ordering::Relaxed)))
                .collect()
        };
        let built = |stage: &str| self.counters.built[stage_index(stage)].load(Ordering::Relaxed);
        CacheStats {
            built: collect(&self.counters.built),
            loaded: collect(&self.counters.loaded),
            corrupt: self.counters.corrupt.load(Ordering::Relaxed),
            eigendecompositions: built("bases") + built("descriptor_bases"),
        }
    }

    /// Loads `stage/key`, or builds, stores and returns it.
    pub fn get_or_build<V>(
        &self,
        stage: &str,
        key: &str,
        decode: impl FnOnce(&[u8]) -> acnn::Result<V>,
        encode: impl FnOnce(&V) -> Vec<u8>,
        build: impl FnOnce() -> Result<V>,
    ) -> Result<V> {
        let idx = stage_index(stage);
        let path = self.path(stage, key);
        if let Some(payload) = self.read(&path) {
            match decode(&payload) {
                Ok(v) => {
                    self.counters.loaded[idx].fetch_add(1, Ordering::Relaxed);
                    log::debug!("{stage}: loaded {}", path.display());
                    return Ok(v);
                }
                Err(e) => {
                    self.counters.corrupt.fetch_add(1, Ordering::Relaxed);
                    log::warn!("{stage}: discarding unreadable cache file {}: {e}", path.display());
                }
            }
        }
        let value = build()?;
        self.counters.built[idx].fetch_add(1, Ordering::Relaxed);
        self.write(&path, &encode(&value))?;
        Ok(value)
    }

    /// Whether `stage/key` holds a file that passes its checksum.
    pub fn contains(&self, stage: &str, key: &str) -> bool {
        let path = self.path(stage, key);
        fs::read(&path).map(|b| verify(&b).is_some()).unwrap_or(false)
    }

    fn read(&self, path: &Path) -> Option<Vec<u8>> {
        let bytes = fs::read(path).ok()?;
        match verify(&bytes) {
            Some(payload) => Some(payload.to_vec()),
            None => {
                self.counters.corrupt.fetch_add(1, Ordering::Relaxed);
                log::warn!("checksum mismatch in cache file {}; rebuilding", path.display());
                None
            }
        }
    }

    fn write(&self, path: &Path, payload: &[u8]) -> Result<()> {
        let dir = path.parent().expect("cache paths have a stage directory");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{}.{}.tmp",
            path.file_name().unwrap().to_string_lossy(),
            std::process::id()
        ));
        let mut bytes = payload.to_vec();
        bytes.extend_from_slice(&Sha256::digest(payload));
        fs::write(&tmp, &bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, path).with_context(|| format!("moving cache file into {}", path.display()))?;
        Ok(())
    }
}

fn stage_index(stage: &str) -> usize {
    STAGES
        .iter()
        .position(|s| *s == stage)
        .unwrap_or_else(|| panic!("unknown cache stage {stage}"))
}

fn verify(bytes: &[u8]) -> Option<&[u8]> {
    let split = bytes.len().checked_sub(32)?;
    let (payload, digest) = bytes.split_at(split);
    (Sha256::digest(payload).as_slice() == digest).then_some(payload)
}

const FRAMES_MAGIC: &[u8; 8] = b"ACNNFRM\0";
const FRAMES_VERSION: u32 = 1;

pub fn encode_frames(frames: &[Frame]) -> Vec<u8> {
    let mut enc = Encoder::new(FRAMES_MAGIC, FRAMES_VERSION);
    enc.u64(frames.len() as u64);
    for f in frames {
        enc.f64s(f.u_max.iter().chain(f.u_min.iter()).chain(f.normal.iter()).copied());
        enc.f64s([f.kappa_max, f.kappa_min]);
        enc.u32(f.umbilic as u32);
    }
    enc.finish()
}

pub fn decode_frames(bytes: &[u8]) -> acnn::Result<Vec<Frame>> {
    let mut dec = Decoder::new(bytes, FRAMES_MAGIC, FRAMES_VERSION)?;
    let count = dec.usize()?;
    let mut frames = Vec::with_capacity(count.min(bytes.len() / 80));
    for _ in 0..count {
        let v = dec.f64s(11)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(acnn::Error::Format("non-finite frame".into()));
        }
        let umbilic = match dec.u32()? {
            0 => false,
            1 => true,
            other => return Err(acnn::Error::Format(format!("bad umbilic flag {other}"))),
        };
        frames.push(TriangleFrame {
            u_max: Vector3::new(v[0], v[1], v[2]),
            u_min: Vector3::new(v[3], v[4], v[5]),
            normal: Vector3::new(v[6], v[7], v[8]),
            kappa_max: v[9],
            kappa_min: v[10],
            umbilic,
        });
    }
    dec.finish()?;
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use acnn::mesh::{compute_triangle_frames, generate};

    #[test]
    fn frames_round_trip() {
        let mesh = generate::icosphere::<f64>(1);
        let frames = compute_triangle_frames(&mesh);
        assert_eq!(decode_frames(&encode_frames(&frames)).unwrap(), frames);
    }

    #[test]
    fn builds_once_then_loads_and_survives_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let key = KeyBuilder::new("frames").u64(7).finish();
        let mesh = generate::icosahedron::<f64>();
        let get = || {
            cache
                .get_or_build("frames", &key, decode_frames, |f| encode_frames(f), || Ok(compute_triangle_frames(&mesh)))
                .unwrap()
        };
        let first = get();
        assert_eq!(get(), first);
        let stats = cache.stats();
        assert_eq!(stats.built[0], ("frames".into(), 1));
        assert_eq!(stats.loaded[0], ("frames".into(), 1));

        let path = cache.path("frames", &key);
        let mut bytes = fs::read(&path).unwrap();
        bytes[20] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(!cache.contains("frames", &key));
        assert_eq!(get(), first);
        assert_eq!(cache.stats().corrupt, 1);
        assert_eq!(cache.stats().built[0].1, 2);
        assert!(cache.contains("frames", &key));
    }

    #[test]
    fn keys_separate_their_parts() {
        let a = KeyBuilder::new("x").bytes(b"ab").bytes(b"c").finish();
        let b = KeyBuilder::new("x").bytes(b"a").bytes(b"bc").finish();
        assert_ne!(a, b);
    }
}
