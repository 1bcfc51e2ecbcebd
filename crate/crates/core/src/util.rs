//! Small shared helpers: content hashing and worker-count resolution.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 hex digest of a byte slice.
pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex(&h.finalize())
}

/// SHA-256 hex digest of one file's contents.
pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(hash_bytes(&bytes))
}

/// Content hash of a directory tree: digest over sorted relative paths and
/// file bytes. `skip` filters out volatile files (e.g. run manifests with
/// timestamps) by file name.
pub fn hash_dir(root: &Path, skip: &[&str]) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let name = Path::new(&rel)
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default();
        if skip.contains(&name.as_str()) {
            continue;
        }
        let bytes = fs::read(root.join(&rel)).map_err(|e| Error::io(rel.clone(), e))?;
        h.update(rel.as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex(&h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("child of root")
                .to_string_lossy()
                .replace('\\', "/");
            out.push(rel);
        }
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolve the worker count: explicit flag, else the `TGQ_THREADS` env var,
/// else 1.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    if let Some(n) = flag {
        return n.max(1);
    }
    std::env::var("TGQ_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .map(|n| n.max(1))
        .unwrap_or(1)
}

/// Run `f` over `0..n` with up to `threads` workers, collecting results in
/// index order. Outputs are written by index, so the result is independent
/// of the worker count.
pub fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(n: usize, threads: usize, f: F) -> Vec<T> {
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let workers = threads.min(n);
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (w, slot_chunk) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                let base = w * chunk;
                for (off, slot) in slot_chunk.iter_mut().enumerate() {
                    *slot = Some(f(base + off));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("filled slot")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_hash_ignores_skipped_files_and_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("a.txt"), "hello").unwrap();
        fs::write(dir.path().join("sub/b.bin"), [1u8, 2, 3]).unwrap();
        fs::write(dir.path().join("run_manifest.txt"), "ts=1").unwrap();
        let h1 = hash_dir(dir.path(), &["run_manifest.txt"]).unwrap();
        fs::write(dir.path().join("run_manifest.txt"), "ts=2").unwrap();
        let h2 = hash_dir(dir.path(), &["run_manifest.txt"]).unwrap();
        assert_eq!(h1, h2);
        fs::write(dir.path().join("a.txt"), "hullo").unwrap();
        let h3 = hash_dir(dir.path(), &["run_manifest.txt"]).unwrap();
        assert_ne!(h1, h3);
    }

    #[test]
    fn parallel_map_matches_serial_map() {
        let serial = parallel_map(17, 1, |i| i * i);
        let parallel = parallel_map(17, 4, |i| i * i);
        assert_eq!(serial, parallel);
    }
}
