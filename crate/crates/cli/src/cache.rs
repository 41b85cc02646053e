//! Content-addressed stage cache.
//!
//! A stage key is the SHA-256 of the stage name, the tool version, the
//! stage's configuration subsection and the keys of its upstream stages, so
//! editing a tolerance invalidates that stage and everything downstream of
//! it and nothing else. Entries are written atomically.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Environment variable overriding the cache root.
pub const CACHE_ENV: &str = "UNDULOID_CACHE";

#[derive(Debug)]
pub struct Cache {
    root: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

/// Hex digest identifying one stage invocation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct StageKey(pub String);

impl StageKey {
    pub fn new<P: Serialize>(stage: &str, params: &P, upstream: &[&StageKey]) -> Self {
        let doc = serde_json::json!({
            "stage": stage,
            "version": env!("CARGO_PKG_VERSION"),
            "params": params,
            "upstream": upstream.iter().map(|k| k.0.as_str()).collect::<Vec<_>>(),
        });
        let digest = Sha256::digest(doc.to_string().as_bytes());
        StageKey(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

impl Cache {
    /// Disabled cache: every lookup misses and nothing is stored.
    pub fn disabled() -> Self {
        Self {
            root: None,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn at(root: impl Into<PathBuf>) -> Self {
        Self {
            root: Some(root.into()),
            ..Self::disabled()
        }
    }

    /// Root from [`CACHE_ENV`], falling back to `default`.
    pub fn from_env(default: &Path) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(p) if !p.is_empty() => Self::at(PathBuf::from(p)),
            _ => Self::at(default),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn path(&self, stage: &str, key: &StageKey, ext: &str) -> Option<PathBuf> {
        self.root
            .as_ref()
            .map(|r| r.join(stage).join(format!("{}.{ext}", key.0)))
    }

    pub fn get_bytes(&self, stage: &str, key: &StageKey, ext: &str) -> Option<Vec<u8>> {
        let found = self.path(stage, key, ext).and_then(|p| std::fs::read(p).ok());
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    pub fn put_bytes(&self, stage: &str, key: &StageKey, ext: &str, bytes: &[u8]) -> std::io::Result<()> {
        match self.path(stage, key, ext) {
            Some(p) => write_atomic(&p, bytes),
            None => Ok(()),
        }
    }

    /// Cached JSON value; unreadable entries count as misses.
    pub fn get_json<T: DeserializeOwned>(&self, stage: &str, key: &StageKey) -> Option<T> {
        let bytes = self.get_bytes(stage, key, "json")?;
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(_) => {
                self.hits.fetch_sub(1, Ordering::Relaxed);
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn put_json<T: Serialize>(&self, stage: &str, key: &StageKey, value: &T) -> std::io::Result<()> {
        if self.root.is_none() {
            return Ok(());
        }
        let bytes = serde_json::to_vec(value).map_err(std::io::Error::other)?;
        self.put_bytes(stage, key, "json", &bytes)
    }
}

/// Write through a temporary file in the target directory and rename it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_on_params_and_upstream() {
        let a = StageKey::new("geometry", &serde_json::json!({"tau": 0.6}), &[]);
        let b = StageKey::new("geometry", &serde_json::json!({"tau": 0.6}), &[]);
        let c = StageKey::new("geometry", &serde_json::json!({"tau": 0.4}), &[]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let d1 = StageKey::new("hill", &1, &[&a]);
        let d2 = StageKey::new("hill", &1, &[&c]);
        assert_ne!(d1, d2);
        assert_eq!(a.0.len(), 64);
    }

    #[test]
    fn round_trip_and_counters() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::at(dir.path());
        let k = StageKey::new("s", &0, &[]);
        assert!(cache.get_json::<Vec<f64>>("s", &k).is_none());
        cache.put_json("s", &k, &vec![1.5, -2.0]).unwrap();
        assert_eq!(cache.get_json::<Vec<f64>>("s", &k), Some(vec![1.5, -2.0]));
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::at(dir.path());
        let k = StageKey::new("s", &0, &[]);
        cache.put_bytes("s", &k, "json", b"{not json").unwrap();
        assert!(cache.get_json::<Vec<f64>>("s", &k).is_none());
        assert_eq!((cache.hits(), cache.misses()), (0, 1));
    }

    #[test]
    fn disabled_cache_stores_nothing() {
        let cache = Cache::disabled();
        let k = StageKey::new("s", &0, &[]);
        cache.put_json("s", &k, &1).unwrap();
        assert!(cache.get_json::<i32>("s", &k).is_none());
    }
}
