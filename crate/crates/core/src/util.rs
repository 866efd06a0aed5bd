//! Small helpers shared by several modules.

use std::path::{Component, Path};

use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline. Struct field order is declaration
/// order and maps are `BTreeMap`s, so output is stable.
pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, to_json_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Digest over every regular file under `root` (relative path plus bytes),
/// ignoring nothing. Used to check that a rollback restored a tree exactly.
pub fn tree_digest(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::io(root, std::io::Error::other(e.to_string())))?;
        let rel = entry
            .path()
            .strip_prefix(root)
            .unwrap_or(entry.path())
            .to_path_buf();
        if entry.file_type().is_file() {
            let bytes = std::fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            files.push(format!("f {} {}", rel.display(), sha256_hex(&bytes)));
        } else if entry.file_type().is_dir() {
            files.push(format!("d {}", rel.display()));
        }
    }
    Ok(sha256_hex(files.join("\n").as_bytes()))
}

/// True when `rel` is relative and never climbs above its base.
pub fn is_contained_relative(rel: &str) -> bool {
    let p = Path::new(rel);
    if p.is_absolute() || rel.is_empty() {
        return false;
    }
    let mut depth: i64 = 0;
    for c in p.components() {
        match c {
            Component::Normal(_) => depth += 1,
            Component::CurDir => {}
            Component::ParentDir => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            Component::RootDir | Component::Prefix(_) => return false,
        }
    }
    depth > 0
}

/// POSIX single-quote escaping for embedding text in a `sh -c` line.
pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn containment() {
        assert!(is_contained_relative("src/a.c"));
        assert!(is_contained_relative("a/../b.c"));
        assert!(!is_contained_relative("../b.c"));
        assert!(!is_contained_relative("/etc/passwd"));
        assert!(!is_contained_relative(""));
    }

    #[test]
    fn quoting_round_trips_through_sh() {
        let s = "SELECT f('it''s');";
        let out = std::process::Command::new("sh")
            .arg("-c")
            .arg(format!("printf %s {}", shell_quote(s)))
            .output()
            .unwrap();
        assert_eq!(String::from_utf8(out.stdout).unwrap(), s);
    }
}
