use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// What a cached completion depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub model: String,
    pub input_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CacheKey {
    /// Hex SHA-256 of the key's canonical JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain data serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Entry {
    key: CacheKey,
    text: String,
}

#[derive(Debug, thiserror::Error)]
#[error("cache {path}: {source}")]
pub struct CacheError {
    pub path: String,
    pub source: std::io::Error,
}

/// Completions stored on disk under the digest of their key, two hex digits
/// of fan-out. Writes go through a temporary file and a rename, so a crash
/// never leaves a partial entry behind.
#[derive(Clone, Debug)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| CacheError { path: root.display().to_string(), source })?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, digest: &str) -> PathBuf {
        self.root.join(&digest[..2]).join(format!("{digest}.json"))
    }

    /// The stored text, if an entry exists for exactly this key. Unreadable
    /// or mismatching entries count as misses.
    pub fn get(&self, key: &CacheKey) -> Option<String> {
        let bytes = fs::read(self.path_for(&key.digest())).ok()?;
        let entry: Entry = serde_json::from_slice(&bytes).ok()?;
        (entry.key == *key).then_some(entry.text)
    }

    pub fn put(&self, key: &CacheKey, text: &str) -> Result<(), CacheError> {
        let digest = key.digest();
        let path = self.path_for(&digest);
        let dir = path.parent().expect("entry paths have a parent");
        let err = |source| CacheError { path: path.display().to_string(), source };
        fs::create_dir_all(dir).map_err(err)?;
        let entry = Entry { key: key.clone(), text: text.to_string() };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
        tmp.write_all(&serde_json::to_vec(&entry).expect("plain data serializes")).map_err(err)?;
        tmp.as_file().sync_all().map_err(err)?;
        tmp.persist(&path).map_err(|e| err(e.error))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        let Ok(dirs) = fs::read_dir(&self.root) else { return 0 };
        dirs.flatten()
            .filter_map(|d| fs::read_dir(d.path()).ok())
            .flat_map(|entries| entries.flatten())
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(text: &str) -> CacheKey {
        CacheKey { model: "m".into(), input_text: text.into(), temperature: 0.7, max_tokens: 256 }
    }

    #[test]
    fn stores_and_returns_exact_text() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        assert!(cache.get(&key("a")).is_none());
        cache.put(&key("a"), "answer A").unwrap();
        cache.put(&key("b"), "").unwrap();
        assert_eq!(cache.get(&key("a")).as_deref(), Some("answer A"));
        assert_eq!(cache.get(&key("b")).as_deref(), Some(""));
        assert_eq!(cache.len(), 2);
        let reopened = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&key("a")).as_deref(), Some("answer A"));
    }

    #[test]
    fn every_key_field_matters() {
        let base = key("x");
        let variants = [
            CacheKey { model: "n".into(), ..base.clone() },
            CacheKey { temperature: 0.0, ..base.clone() },
            CacheKey { max_tokens: 16, ..base.clone() },
            key("y"),
        ];
        for v in variants {
            assert_ne!(v.digest(), base.digest());
        }
    }
}
