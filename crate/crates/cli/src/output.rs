//! Artifact writing and content hashes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{CliError, CliResult};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &str) -> CliResult<Self> {
        let root = PathBuf::from(root);
        std::fs::create_dir_all(&root)
            .map_err(|e| CliError::runtime(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(OutDir { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        write_file(&path, contents)?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

/// Git blob-style SHA-256: `sha256("blob <len>\0" || bytes)`, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Pretty JSON with a trailing newline.
pub fn json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(format!("json: {e}")))?;
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_blob_layout() {
        // `printf 'hello\n' | git hash-object --stdin` hashes the same preimage with SHA-1.
        let a = content_hash(b"hello\n");
        assert_eq!(a.len(), 64);
        assert_eq!(a, content_hash(b"hello\n"));
        assert_ne!(a, content_hash(b"hello"));
    }
}

/// Writes to stdout; a closed pipe is not an error.
pub fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}
