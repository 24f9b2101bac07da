//! Corpus, feature-vector and manifest file I/O.
//!
//! Corpus files carry one description per line. Feature files carry one
//! space-separated float vector per line. Manifests are flat `key=value`
//! text, one entry per line, `#` starting a comment.

use std::fs;
use std::path::Path;

use crate::error::{DlnError, Result};
use crate::vocab::tokenize;

/// Reads and tokenizes a corpus file; blank lines are skipped.
pub fn load_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(tokenize)
        .collect())
}

pub fn save_corpus(lines: &[Vec<String>], path: &Path) -> Result<()> {
    let mut out = String::new();
    for line in lines {
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Loads feature vectors, enforcing a consistent dimension across lines.
pub fn load_features(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split_whitespace() {
            let v: f64 = field.parse().map_err(|e| DlnError::Format {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad float `{field}`: {e}"),
            })?;
            row.push(v);
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(DlnError::Format {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected {d} values, found {}", row.len()),
                });
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes feature vectors with shortest-roundtrip float formatting, so a
/// write/read cycle reproduces the exact values.
pub fn save_features(rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Ordered `key=value` pairs; duplicate keys are allowed and preserved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueFile {
    pub pairs: Vec<(String, String)>,
}

impl KeyValueFile {
    pub fn new() -> Self {
        KeyValueFile { pairs: Vec::new() }
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.pairs.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all(&self, key: &str) -> Vec<&str> {
        self.pairs
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    pub fn require(&self, key: &str, origin: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| DlnError::Format {
            path: origin.to_string(),
            line: 0,
            msg: format!("missing key `{key}`"),
        })
    }

    pub fn parse_text(text: &str, origin: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| DlnError::Format {
                path: origin.to_string(),
                line: lineno + 1,
                msg: "expected key=value".to_string(),
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(KeyValueFile { pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_text(&text, &path.display().to_string())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

/// Paths and dataset-level constants produced by the synthetic generator.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub feature_dim: usize,
    pub seed: u64,
    pub source_corpus: String,
    pub source_features: String,
    pub styles: Vec<(String, String)>,
    pub test_features: String,
    pub test_references: String,
    pub test_nouns: String,
    pub nouns: String,
    pub synonyms: String,
}

impl DatasetManifest {
    pub fn to_kv(&self) -> KeyValueFile {
        let mut kv = KeyValueFile::new();
        kv.push("format", "dln-dataset-v1");
        kv.push("feature_dim", self.feature_dim);
        kv.push("seed", self.seed);
        kv.push("source_corpus", &self.source_corpus);
        kv.push("source_features", &self.source_features);
        for (name, path) in &self.styles {
            kv.push("style", name);
            kv.push(&format!("style.{name}.corpus"), path);
        }
        kv.push("test_features", &self.test_features);
        kv.push("test_references", &self.test_references);
        kv.push("test_nouns", &self.test_nouns);
        kv.push("nouns", &self.nouns);
        kv.push("synonyms", &self.synonyms);
        kv
    }

    pub fn from_kv(kv: &KeyValueFile, origin: &str) -> Result<Self> {
        let styles = kv
            .get_all("style")
            .into_iter()
            .map(|name| {
                let path = kv
                    .require(&format!("style.{name}.corpus"), origin)?
                    .to_string();
                Ok((name.to_string(), path))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetManifest {
            feature_dim: kv
                .require("feature_dim", origin)?
                .parse()
                .map_err(|e| DlnError::Format {
                    path: origin.to_string(),
                    line: 0,
                    msg: format!("feature_dim: {e}"),
                })?,
            seed: kv.require("seed", origin)?.parse().unwrap_or(0),
            source_corpus: kv.require("source_corpus", origin)?.to_string(),
            source_features: kv.require("source_features", origin)?.to_string(),
            styles,
            test_features: kv.require("test_features", origin)?.to_string(),
            test_references: kv.require("test_references", origin)?.to_string(),
            test_nouns: kv.require("test_nouns", origin)?.to_string(),
            nouns: kv.require("nouns", origin)?.to_string(),
            synonyms: kv.require("synonyms", origin)?.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValueFile::load(path)?;
        Self::from_kv(&kv, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_kv().save(path)
    }

    /// Resolves a manifest-relative path against the manifest's directory.
    pub fn resolve(&self, manifest_path: &Path, entry: &str) -> std::path::PathBuf {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        base.join(entry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        let rows = vec![
            vec![0.1, -2.5e-7, 3.0],
            vec![1.0 / 3.0, f64::MIN_POSITIVE, -0.0],
        ];
        save_features(&rows, &path).unwrap();
        let back = load_features(&path).unwrap();
        assert_eq!(rows.len(), back.len());
        for (a, b) in rows.iter().zip(back.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn empty_feature_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        fs::write(&path, "").unwrap();
        assert!(load_features(&path).unwrap().is_empty());
    }

    #[test]
    fn inconsistent_dims_report_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        fs::write(&path, "1 2 3\n1 2\n").unwrap();
        match load_features(&path) {
            Err(DlnError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn key_value_roundtrip() {
        let mut kv = KeyValueFile::new();
        kv.push("a", 1);
        kv.push("b", "two words");
        kv.push("a", 3);
        let parsed = KeyValueFile::parse_text(&kv.render(), "mem").unwrap();
        assert_eq!(parsed, kv);
        assert_eq!(parsed.get_all("a"), vec!["1", "3"]);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let kv = KeyValueFile::parse_text("# c\n\nx=1\n", "mem").unwrap();
        assert_eq!(kv.get("x"), Some("1"));
        assert_eq!(kv.pairs.len(), 1);
    }
}
