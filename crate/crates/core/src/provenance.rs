//! Provenance sidecars: resolved configuration plus content digests.
//!
//! Records are key-value documents written next to an output as
//! `<output>.prov`. They carry no timestamps so reruns are byte-identical.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv::KvDoc;

/// Lowercase hex SHA-256 of `bytes`.
pub fn digest_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in out.iter() {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest_hex(&bytes))
}

#[derive(Debug, Clone)]
pub struct Provenance {
    doc: KvDoc,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        let mut doc = KvDoc::new();
        doc.push("tool", "evnoise");
        doc.push("version", env!("CARGO_PKG_VERSION"));
        doc.push("command", command);
        Self { doc }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.doc.push(key, value);
        self
    }

    /// Records the path and content digest of an input file.
    pub fn input(&mut self, label: &str, path: &Path) -> Result<&mut Self> {
        let digest = digest_file(path)?;
        self.doc.push(format!("input.{label}"), path.display());
        self.doc.push(format!("input.{label}.sha256"), digest);
        Ok(self)
    }

    pub fn doc(&self) -> &KvDoc {
        &self.doc
    }

    pub fn sidecar_path(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_owned();
        s.push(".prov");
        PathBuf::from(s)
    }

    /// Writes the record beside `output` and returns the sidecar path.
    pub fn write_for(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::sidecar_path(output);
        self.doc.write(&path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            digest_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn sidecar_naming_and_content() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("curve.csv");
        let inp = dir.path().join("in.txt");
        std::fs::write(&inp, "abc").unwrap();
        let mut p = Provenance::new("eval");
        p.set("seed", 7).input("params", &inp).unwrap();
        let side = p.write_for(&out).unwrap();
        assert!(side.ends_with("curve.csv.prov"));
        let doc = KvDoc::read(&side).unwrap();
        assert_eq!(doc.get("command"), Some("eval"));
        assert_eq!(doc.get("seed"), Some("7"));
        assert!(doc.get("input.params.sha256").unwrap().starts_with("ba7816bf"));
    }
}
