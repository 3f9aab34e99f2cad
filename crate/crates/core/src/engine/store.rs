use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EngineError;
use crate::evaluator::Resume;
use crate::nn::ModelState;

/// Raw evaluation result; fitness is recomputed from it on every hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedEvaluation {
    pub accuracy: f64,
    pub wall_seconds: f64,
    pub worker_id: usize,
    pub checkpoint_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub epochs: u32,
    #[serde(flatten)]
    pub value: CachedEvaluation,
}

/// Evaluation results keyed by canonical genome key and epoch budget.
#[derive(Debug, Default)]
pub struct FitnessCache {
    entries: Mutex<BTreeMap<(String, u32), CachedEvaluation>>,
}

impl FitnessCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str, epochs: u32) -> Option<CachedEvaluation> {
        self.entries.lock().unwrap().get(&(key.to_owned(), epochs)).cloned()
    }

    pub fn contains(&self, key: &str, epochs: u32) -> bool {
        self.entries.lock().unwrap().contains_key(&(key.to_owned(), epochs))
    }

    /// Returns false, leaving the stored value alone, if the pair is already cached.
    pub fn insert(&self, key: &str, epochs: u32, value: CachedEvaluation) -> bool {
        let mut map = self.entries.lock().unwrap();
        let slot = (key.to_owned(), epochs);
        if map.contains_key(&slot) {
            return false;
        }
        map.insert(slot, value);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<CacheEntry> {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .map(|((key, epochs), value)| CacheEntry {
                key: key.clone(),
                epochs: *epochs,
                value: value.clone(),
            })
            .collect()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = CacheEntry>) -> Self {
        Self {
            entries: Mutex::new(entries.into_iter().map(|e| ((e.key, e.epochs), e.value)).collect()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StoredCheckpoint {
    pub epochs: u32,
    pub model: Option<Arc<ModelState>>,
    /// File name inside the store directory, when persisted.
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointIndexEntry {
    pub key: String,
    pub epochs: u32,
    pub file: Option<String>,
}

/// Most-trained network per genome key. Stored epochs never decrease.
#[derive(Debug, Default)]
pub struct CheckpointStore {
    entries: Mutex<BTreeMap<String, StoredCheckpoint>>,
    dir: Option<PathBuf>,
}

impl CheckpointStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Store that also writes weights to `dir` in the binary checkpoint format.
    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self, EngineError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            entries: Mutex::default(),
            dir: Some(dir),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn epochs(&self, key: &str) -> Option<u32> {
        self.entries.lock().unwrap().get(key).map(|c| c.epochs)
    }

    pub fn get(&self, key: &str) -> Option<StoredCheckpoint> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    /// Checkpoint to continue from when training `key` to `target` epochs.
    pub fn resume_point(&self, key: &str, target: u32) -> Option<Resume> {
        let map = self.entries.lock().unwrap();
        let stored = map.get(key).filter(|c| c.epochs < target)?;
        Some(Resume {
            epochs: stored.epochs,
            model: stored.model.clone(),
        })
    }

    /// Records a network trained to `epochs`; ignored unless it is further
    /// trained than what is stored.
    pub fn store(&self, key: &str, epochs: u32, model: Option<ModelState>) -> Result<bool, EngineError> {
        if self.epochs(key).is_some_and(|e| e >= epochs) {
            return Ok(false);
        }
        let file = match (&self.dir, &model) {
            (Some(dir), Some(m)) => {
                let name = checkpoint_file_name(key, epochs);
                let tmp = dir.join(format!("{name}.tmp"));
                fs::write(&tmp, m.to_bytes())?;
                fs::rename(&tmp, dir.join(&name))?;
                Some(name)
            }
            _ => None,
        };
        let mut map = self.entries.lock().unwrap();
        if map.get(key).is_some_and(|c| c.epochs >= epochs) {
            return Ok(false);
        }
        map.insert(
            key.to_owned(),
            StoredCheckpoint {
                epochs,
                model: model.map(Arc::new),
                file,
            },
        );
        Ok(true)
    }

    pub fn index(&self) -> Vec<CheckpointIndexEntry> {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .map(|(key, c)| CheckpointIndexEntry {
                key: key.clone(),
                epochs: c.epochs,
                file: c.file.clone(),
            })
            .collect()
    }

    /// Rebuilds a store from its index, loading persisted weights from `dir`.
    pub fn restore(index: &[CheckpointIndexEntry], dir: Option<PathBuf>) -> Result<Self, EngineError> {
        let mut entries = BTreeMap::new();
        for entry in index {
            let model = match (&dir, &entry.file) {
                (Some(d), Some(f)) => {
                    let bytes = fs::read(d.join(f))?;
                    let m = ModelState::from_bytes(&bytes).map_err(|e| EngineError::Store(format!("{f}: {e}")))?;
                    if m.epochs_completed() != entry.epochs || m.genome().canonical_key() != entry.key {
                        return Err(EngineError::Store(format!("{f} does not match its index entry")));
                    }
                    Some(Arc::new(m))
                }
                (None, Some(f)) => return Err(EngineError::Store(format!("{f} listed but store has no directory"))),
                _ => None,
            };
            entries.insert(
                entry.key.clone(),
                StoredCheckpoint {
                    epochs: entry.epochs,
                    model,
                    file: entry.file.clone(),
                },
            );
        }
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self {
            entries: Mutex::new(entries),
            dir,
        })
    }

    /// Deletes checkpoint files in the store directory that the index no
    /// longer references.
    pub fn prune_unreferenced(&self) -> Result<usize, EngineError> {
        let Some(dir) = &self.dir else { return Ok(0) };
        let keep: std::collections::HashSet<String> = self.index().into_iter().filter_map(|e| e.file).collect();
        let mut removed = 0;
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.ends_with(".ckpt") && !keep.contains(&name) {
                fs::remove_file(entry.path())?;
                removed += 1;
            }
        }
        Ok(removed)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn checkpoint_file_name(key: &str, epochs: u32) -> String {
    let digest = Sha256::digest(key.as_bytes());
    format!("{}-e{epochs}.ckpt", hex::encode(&digest[..8]))
}
