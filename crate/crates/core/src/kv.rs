//! Flat `key = value` text documents.
//!
//! Used for parameter files, recording sidecars and provenance records.
//! Blank lines and `#` comments are ignored. A line of the form `[name]`
//! opens a new section; keys before the first header belong to the
//! unnamed leading section.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String, usize)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string(), 0));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _, _)| k.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries
            .iter()
            .rev()
            .find(|(k, _, _)| k == key)
            .map_or(0, |(_, _, l)| *l)
    }

    /// Parses a required value, reporting the source line on failure.
    pub fn require<T: FromStr>(&self, origin: &Path, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::parse(origin, 0, format!("missing key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::parse(origin, self.line_of(key), format!("invalid value `{raw}` for `{key}`")))
    }

    pub fn optional<T: FromStr>(&self, origin: &Path, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.require(origin, key).map(Some),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v, _) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut sections = parse_sections(&text, path)?;
        match sections.len() {
            1 => Ok(sections.remove(0).1),
            _ => Err(Error::parse(path, 0, "unexpected section header")),
        }
    }
}

/// Splits a document into `(section name, entries)` pairs. The leading
/// unnamed section is always present (possibly empty).
pub fn parse_sections(text: &str, origin: &Path) -> Result<Vec<(String, KvDoc)>> {
    let mut sections = vec![(String::new(), KvDoc::new())];
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(origin, lineno, "unterminated section header"))?;
            sections.push((name.trim().to_string(), KvDoc::new()));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, lineno, format!("expected `key = value`, got `{line}`")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::parse(origin, lineno, "empty key"));
        }
        let doc = &mut sections.last_mut().expect("leading section").1;
        doc.entries.push((key.to_string(), v.trim().to_string(), lineno));
    }
    Ok(sections)
}
