//! Trajectory memory: per-category records kept only when they move the
//! category's tool-count statistics.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrajectoryRecord;
use crate::{Error, Result, SCHEMA_VERSION};

/// Default number of records kept per category.
pub const DEFAULT_POOL_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolStats {
    pub min: usize,
    /// Lower median.
    pub median: usize,
    pub max: usize,
    pub count: usize,
}

impl std::fmt::Display for PoolStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "min={} median={} max={} count={}",
            self.min, self.median, self.max, self.count
        )
    }
}

/// Lower median of a non-empty slice.
pub fn lower_median(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

pub fn stats_of(counts: &[usize]) -> Option<PoolStats> {
    if counts.is_empty() {
        return None;
    }
    Some(PoolStats {
        min: *counts.iter().min().unwrap(),
        median: lower_median(counts),
        max: *counts.iter().max().unwrap(),
        count: counts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPool {
    pub version: u32,
    pub cap: usize,
    pub entries: BTreeMap<String, Vec<TrajectoryRecord>>,
    /// Derived; recomputed after every change.
    pub stats: BTreeMap<String, PoolStats>,
}

impl Default for MemoryPool {
    fn default() -> Self {
        MemoryPool {
            version: SCHEMA_VERSION,
            cap: DEFAULT_POOL_CAP,
            entries: BTreeMap::new(),
            stats: BTreeMap::new(),
        }
    }
}

impl MemoryPool {
    pub fn with_cap(cap: usize) -> Result<Self> {
        if cap < 3 {
            return Err(Error::Config(format!(
                "memory pool cap must be at least 3, got {cap}"
            )));
        }
        Ok(MemoryPool {
            cap,
            ..Default::default()
        })
    }

    fn counts(&self, category: &str) -> Vec<usize> {
        self.entries
            .get(category)
            .map(|v| v.iter().map(|r| r.total_count).collect())
            .unwrap_or_default()
    }

    pub fn stats(&self, category: &str) -> Option<PoolStats> {
        stats_of(&self.counts(category))
    }

    fn refresh(&mut self, category: &str) {
        match self.stats(category) {
            Some(s) => {
                self.stats.insert(category.to_string(), s);
            }
            None => {
                self.stats.remove(category);
            }
        }
    }

    /// Indices of the first records attaining min, lower median and max,
    /// in that order and without repeats.
    fn stat_holders(&self, category: &str) -> Vec<usize> {
        let Some(s) = self.stats(category) else {
            return vec![];
        };
        let records = &self.entries[category];
        let mut out = Vec::with_capacity(3);
        for target in [s.min, s.median, s.max] {
            let i = records
                .iter()
                .position(|r| r.total_count == target)
                .expect("stat is attained");
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }

    /// Inserts `record` when it is the category's first, sets a new
    /// minimum or maximum, or moves the lower median. Over the cap, the
    /// record closest to the median that does not hold a statistic is
    /// evicted (oldest first on ties).
    pub fn insert_trajectory(&mut self, record: TrajectoryRecord) -> bool {
        let category = record.category.clone();
        let count = record.total_count;
        let accepted = match self.stats(&category) {
            None => true,
            Some(s) => {
                let mut with = self.counts(&category);
                with.push(count);
                count < s.min || count > s.max || lower_median(&with) != s.median
            }
        };
        if !accepted {
            return false;
        }
        self.entries
            .entry(category.clone())
            .or_default()
            .push(record);
        if self.entries[&category].len() > self.cap {
            let holders = self.stat_holders(&category);
            let median = self.stats(&category).expect("non-empty").median;
            let victim = self.entries[&category]
                .iter()
                .enumerate()
                .filter(|(i, _)| !holders.contains(i))
                .min_by_key(|(i, r)| (r.total_count.abs_diff(median), *i))
                .map(|(i, _)| i)
                .expect("cap of at least 3 leaves a non-holder");
            let gone = self.entries.get_mut(&category).unwrap().remove(victim);
            log::info!(
                "memory pool: evicted {} ({} steps) from {category}",
                gone.function_name,
                gone.total_count
            );
        }
        self.refresh(&category);
        true
    }

    /// Records attaining the minimum, lower median and maximum tool count.
    pub fn retrieve_reference_trajectories(&self, category: &str) -> Vec<&TrajectoryRecord> {
        self.stat_holders(category)
            .into_iter()
            .map(|i| &self.entries[category][i])
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        crate::util::to_json_pretty(self)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let mut pool: MemoryPool = serde_json::from_str(src)?;
        let cats: Vec<String> = pool.entries.keys().cloned().collect();
        for c in cats {
            pool.refresh(&c);
        }
        Ok(pool)
    }

    /// Loads a pool file; a missing file is an empty pool.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) if text.trim().is_empty() => Ok(MemoryPool::default()),
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(MemoryPool::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Read-modify-write of the pool file under an exclusive lock.
    pub fn update_file<T>(
        path: &Path,
        cap: usize,
        f: impl FnOnce(&mut MemoryPool) -> T,
    ) -> Result<T> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut file: File = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        file.lock().map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        file.read_to_string(&mut text)
            .map_err(|e| Error::io(path, e))?;
        let mut pool = if text.trim().is_empty() {
            MemoryPool::with_cap(cap)?
        } else {
            Self::from_json(&text)?
        };
        let out = f(&mut pool);
        let json = pool.to_json()?;
        file.set_len(0).map_err(|e| Error::io(path, e))?;
        file.seek(SeekFrom::Start(0))
            .map_err(|e| Error::io(path, e))?;
        file.write_all(json.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        file.sync_all().map_err(|e| Error::io(path, e))?;
        file.unlock().map_err(|e| Error::io(path, e))?;
        Ok(out)
    }
}
