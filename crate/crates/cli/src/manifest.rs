//! SHA-256 manifest of every file under an output directory.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{io_err, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// `<sha256>  <relative path>` per file, sorted by path; the manifest itself is excluded.
pub fn manifest(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect(dir, &mut files)?;
    let mut lines: Vec<(String, String)> = Vec::new();
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(&f).to_string_lossy().replace('\\', "/");
        if rel == MANIFEST_NAME {
            continue;
        }
        let bytes = std::fs::read(&f).map_err(io_err(&f))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        lines.push((rel, hex));
    }
    lines.sort();
    Ok(lines.into_iter().map(|(p, h)| format!("{h}  {p}\n")).collect())
}

pub fn write_manifest(dir: &Path) -> Result<()> {
    let text = manifest(dir)?;
    let path = dir.join(MANIFEST_NAME);
    std::fs::write(&path, text).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_nested_files_in_sorted_order() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("b.txt"), "abc").unwrap();
        std::fs::write(dir.path().join("sub/a.txt"), "").unwrap();
        write_manifest(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(
            text,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad  b.txt\n\
             e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855  sub/a.txt\n"
        );
        // Re-running ignores the existing manifest.
        write_manifest(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap(), text);
    }
}
