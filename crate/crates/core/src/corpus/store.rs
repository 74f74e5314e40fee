use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::RwLock;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{CorpusError, Discourse};

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)
            .map_err(|source| CorpusError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// In-memory discourse collection keyed by discourse id.
///
/// Writers take an exclusive lock; readers share it.
#[derive(Debug, Default)]
pub struct DiscourseStore {
    inner: RwLock<BTreeMap<String, Discourse>>,
}

impl DiscourseStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let store = Self::new();
        for d in read_jsonl::<Discourse>(path)? {
            store.insert(d);
        }
        Ok(store)
    }

    /// Inserts or replaces the discourse with the same key.
    pub fn insert(&self, discourse: Discourse) -> Option<Discourse> {
        self.inner
            .write()
            .expect("discourse store poisoned")
            .insert(discourse.id(), discourse)
    }

    pub fn get(&self, id: &str) -> Option<Discourse> {
        self.inner.read().expect("discourse store poisoned").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("discourse store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All discourses in id order.
    pub fn snapshot(&self) -> Vec<Discourse> {
        self.inner
            .read()
            .expect("discourse store poisoned")
            .values()
            .cloned()
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        write_jsonl(path, &self.snapshot())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{DiscourseKey, Language, PromptId};

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let store = DiscourseStore::new();
        for (i, c) in ["chad", "mali"].iter().enumerate() {
            let key = DiscourseKey::new(*c, PromptId::P1, 0.3 * i as f64, Language::En);
            store.insert(Discourse::new(key, format!("text {i}")));
        }
        store.save(&path).unwrap();
        let back = DiscourseStore::load(&path).unwrap();
        assert_eq!(back.snapshot(), store.snapshot());
    }

    #[test]
    fn reports_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{}\n").unwrap();
        match read_jsonl::<Discourse>(&path) {
            Err(CorpusError::Json { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn concurrent_readers() {
        let store = std::sync::Arc::new(DiscourseStore::new());
        let key = DiscourseKey::new("chad", PromptId::P1, 0.0, Language::En);
        store.insert(Discourse::new(key.clone(), "x"));
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let s = store.clone();
                let id = key.id();
                std::thread::spawn(move || s.get(&id).is_some())
            })
            .collect();
        assert!(handles.into_iter().all(|h| h.join().unwrap()));
    }
}
