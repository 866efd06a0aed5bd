use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{LlmError, LlmMode, Message, Prompt};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Text(String),
    Error(String),
}

impl Slot {
    pub fn into_result(self) -> Result<String, String> {
        match self {
            Slot::Text(t) => Ok(t),
            Slot::Error(e) => Err(e),
        }
    }
}

/// One recorded exchange. The prompt is stored in full so transcripts can
/// be inspected; only the digest is used for lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub tag: String,
    /// Model that produced the slots; empty for hand-written transcripts.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub model: String,
    pub n: usize,
    pub temperature: f64,
    pub system: String,
    pub messages: Vec<Message>,
    pub slots: Vec<Slot>,
}

impl TranscriptEntry {
    pub fn new(
        digest: &str,
        prompt: &Prompt,
        model: &str,
        n: usize,
        slots: &[Result<String, String>],
    ) -> Self {
        TranscriptEntry {
            digest: digest.to_string(),
            tag: prompt.tag.clone(),
            model: model.to_string(),
            n,
            temperature: prompt.temperature,
            system: prompt.system.clone(),
            messages: prompt.messages.clone(),
            slots: slots
                .iter()
                .map(|s| match s {
                    Ok(t) => Slot::Text(t.clone()),
                    Err(e) => Slot::Error(e.clone()),
                })
                .collect(),
        }
    }
}

/// Append-only JSONL transcript. Replay serves entries for a digest in
/// recorded order through a per-digest cursor.
#[derive(Debug)]
pub struct TranscriptStore {
    mode: LlmMode,
    path: Option<PathBuf>,
    entries: BTreeMap<String, Vec<TranscriptEntry>>,
    cursors: Mutex<BTreeMap<String, usize>>,
    writer: Mutex<Option<File>>,
}

impl TranscriptStore {
    pub fn live() -> Self {
        TranscriptStore {
            mode: LlmMode::Live,
            path: None,
            entries: BTreeMap::new(),
            cursors: Mutex::new(BTreeMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Appends to `path`, creating it and its parent directories.
    pub fn record(path: &Path) -> Result<Self, LlmError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| LlmError::Io(format!("{}: {e}", parent.display())))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(TranscriptStore {
            mode: LlmMode::Record,
            path: Some(path.to_path_buf()),
            entries: BTreeMap::new(),
            cursors: Mutex::new(BTreeMap::new()),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn replay(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        let mut store = Self::replay_from_str(&text)?;
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn replay_from_str(text: &str) -> Result<Self, LlmError> {
        let mut entries: BTreeMap<String, Vec<TranscriptEntry>> = BTreeMap::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let e: TranscriptEntry = serde_json::from_str(line)
                .map_err(|e| LlmError::Io(format!("transcript line {}: {e}", i + 1)))?;
            entries.entry(e.digest.clone()).or_default().push(e);
        }
        Ok(TranscriptStore {
            mode: LlmMode::Replay,
            path: None,
            entries,
            cursors: Mutex::new(BTreeMap::new()),
            writer: Mutex::new(None),
        })
    }

    /// Empty replay store; every lookup misses.
    pub fn empty_replay() -> Self {
        Self::replay_from_str("").expect("empty transcript parses")
    }

    pub fn mode(&self) -> LlmMode {
        self.mode
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn next(&self, digest: &str, tag: &str) -> Result<TranscriptEntry, LlmError> {
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let cur = cursors.entry(digest.to_string()).or_insert(0);
        let hit = self
            .entries
            .get(digest)
            .and_then(|list| list.get(*cur))
            .cloned();
        match hit {
            Some(e) => {
                *cur += 1;
                Ok(e)
            }
            None => Err(LlmError::TranscriptMiss {
                digest: digest.to_string(),
                tag: tag.to_string(),
            }),
        }
    }

    pub(crate) fn append(&self, entry: TranscriptEntry) -> Result<(), LlmError> {
        let mut line = serde_json::to_string(&entry).map_err(|e| LlmError::Io(e.to_string()))?;
        line.push('\n');
        let mut w = self.writer.lock().expect("writer lock");
        match w.as_mut() {
            Some(f) => f
                .write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| LlmError::Io(e.to_string())),
            None => Err(LlmError::Io("store is not recording".into())),
        }
    }
}
