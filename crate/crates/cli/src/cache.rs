//! Per-country raster cache. A manifest records, for each dataset, the key
//! the raster was built under and its summary numbers. The key hashes the
//! input file contents, the region file contents, the target grid and the
//! ingest options; file hashes are reused while size and mtime are unchanged.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const MANIFEST: &str = "manifest.json";
/// Bump when the cached raster layout or the ingest semantics change.
const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub settled_cells: u64,
    pub mask_area_km2: f64,
    pub records: u64,
    pub filtered: u64,
    pub skipped: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Entry {
    key: String,
    stats: Stats,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FileStamp {
    len: u64,
    mtime_ns: u128,
    sha256: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    entries: BTreeMap<String, Entry>,
    files: BTreeMap<String, FileStamp>,
}

pub struct Cache {
    dir: PathBuf,
    manifest: Manifest,
}

fn stamp(path: &Path) -> std::io::Result<(u64, u128)> {
    let meta = std::fs::metadata(path)?;
    let mtime = meta.modified()?.duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    Ok((meta.len(), mtime))
}

fn hash_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Cache {
    pub fn open(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let manifest = match std::fs::read(dir.join(MANIFEST)) {
            Ok(bytes) => serde_json::from_slice::<Manifest>(&bytes)
                .ok()
                .filter(|m| m.version == CACHE_VERSION)
                .unwrap_or_default(),
            Err(_) => Manifest::default(),
        };
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn raster_path(&self, dataset: &str) -> PathBuf {
        self.dir.join(format!("{dataset}.sbrs"))
    }

    /// Content hash of `path`, reusing the stored one when size and mtime match.
    pub fn file_hash(&mut self, path: &Path) -> anyhow::Result<String> {
        let name = path.to_string_lossy().into_owned();
        let (len, mtime_ns) = stamp(path).map_err(|e| anyhow::Error::new(e).context(name.clone()))?;
        if let Some(s) = self.manifest.files.get(&name) {
            if s.len == len && s.mtime_ns == mtime_ns {
                return Ok(s.sha256.clone());
            }
        }
        let sha256 = hash_file(path).map_err(|e| anyhow::Error::new(e).context(name.clone()))?;
        self.manifest.files.insert(name, FileStamp { len, mtime_ns, sha256: sha256.clone() });
        Ok(sha256)
    }

    pub fn key(parts: &[&str]) -> String {
        let mut h = Sha256::new();
        h.update(CACHE_VERSION.to_le_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        hex(&h.finalize())
    }

    /// Stats of a valid entry whose raster file is still present.
    pub fn lookup(&self, dataset: &str, key: &str) -> Option<Stats> {
        let e = self.manifest.entries.get(dataset)?;
        (e.key == key && self.raster_path(dataset).is_file()).then(|| e.stats.clone())
    }

    pub fn stats(&self, dataset: &str) -> Option<&Stats> {
        self.manifest.entries.get(dataset).map(|e| &e.stats)
    }

    pub fn insert(&mut self, dataset: &str, key: String, stats: Stats) {
        self.manifest.entries.insert(dataset.to_string(), Entry { key, stats });
    }

    pub fn save(&mut self) -> anyhow::Result<()> {
        self.manifest.version = CACHE_VERSION;
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?)
            .map_err(|e| anyhow::Error::new(e).context(path.display().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_are_reused_until_the_file_changes() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        std::fs::write(&f, "one").unwrap();
        let mut c = Cache::open(&dir.path().join("c")).unwrap();
        let h1 = c.file_hash(&f).unwrap();
        assert_eq!(c.file_hash(&f).unwrap(), h1);
        std::fs::write(&f, "two!").unwrap();
        assert_ne!(c.file_hash(&f).unwrap(), h1);
    }

    #[test]
    fn entries_survive_a_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Cache::open(dir.path()).unwrap();
        std::fs::write(c.raster_path("x"), b"r").unwrap();
        let key = Cache::key(&["a", "b"]);
        c.insert("x", key.clone(), Stats { settled_cells: 5, ..Stats::default() });
        c.save().unwrap();
        let c = Cache::open(dir.path()).unwrap();
        assert_eq!(c.lookup("x", &key).unwrap().settled_cells, 5);
        assert!(c.lookup("x", &Cache::key(&["a", "c"])).is_none());
        assert_ne!(Cache::key(&["ab", "c"]), Cache::key(&["a", "bc"]));
    }
}
