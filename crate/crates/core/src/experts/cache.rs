use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Hex sha256 of `expert_id \0 image \0 normalized question`.
pub fn cache_key(expert_id: &str, image: &str, normalized_question: &str) -> String {
    let mut h = Sha256::new();
    h.update(expert_id.as_bytes());
    h.update([0u8]);
    h.update(image.as_bytes());
    h.update([0u8]);
    h.update(normalized_question.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    expert_id: String,
    image: String,
    question: String,
    answer: String,
}

/// Content-addressed answer store: one `<key>.json` file per cached answer.
///
/// Without a directory the cache lives in memory only.
#[derive(Debug, Default)]
pub struct AnswerCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, String>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl AnswerCache {
    pub fn in_memory() -> Self {
        AnswerCache::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(AnswerCache { dir: Some(dir), ..Default::default() })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("cache lock map poisoned");
        locks.entry(key.to_string()).or_default().clone()
    }

    pub fn get(&self, expert_id: &str, image: &str, question: &str) -> Option<String> {
        let key = cache_key(expert_id, image, question);
        if let Some(a) = self.memory.lock().expect("cache poisoned").get(&key) {
            return Some(a.clone());
        }
        let path = self.dir.as_ref()?.join(format!("{key}.json"));
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<Entry>(&bytes) {
            // a hash collision is astronomically unlikely, but a hand-edited file is not
            Ok(e) if e.expert_id == expert_id && e.image == image && e.question == question => {
                self.memory.lock().expect("cache poisoned").insert(key, e.answer.clone());
                Some(e.answer)
            }
            Ok(_) => None,
            Err(err) => {
                log::warn!("ignoring unreadable cache entry {}: {err}", path.display());
                None
            }
        }
    }

    /// Store an answer. Writes for the same key are serialized and atomic.
    pub fn put(&self, expert_id: &str, image: &str, question: &str, answer: &str) -> std::io::Result<()> {
        let key = cache_key(expert_id, image, question);
        let lock = self.key_lock(&key);
        let _guard = lock.lock().expect("cache key lock poisoned");
        self.memory.lock().expect("cache poisoned").insert(key.clone(), answer.to_string());
        let Some(dir) = &self.dir else { return Ok(()) };
        let entry = Entry {
            expert_id: expert_id.into(),
            image: image.into(),
            question: question.into(),
            answer: answer.into(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&serde_json::to_vec(&entry).expect("entry serializes"))?;
        tmp.persist(dir.join(format!("{key}.json"))).map_err(|e| e.error)?;
        Ok(())
    }
}
