// Digest of the library sources, recorded in experiment manifests.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

fn collect(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            collect(&path, out);
        } else {
            out.push(path);
        }
    }
}

fn main() {
    let root = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    let mut files = Vec::new();
    for sub in ["src", "fixtures"] {
        collect(&root.join(sub), &mut files);
        println!("cargo:rerun-if-changed={sub}");
    }
    files.sort();
    let mut hasher = Sha256::new();
    for f in &files {
        hasher.update(f.strip_prefix(&root).unwrap().to_string_lossy().as_bytes());
        hasher.update(fs::read(f).unwrap());
    }
    println!("cargo:rustc-env=NQAC_SOURCE_DIGEST={}", hex::encode(hasher.finalize()));
}
