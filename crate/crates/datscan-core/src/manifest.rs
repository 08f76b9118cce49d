//! Dataset manifests: one CSV row per subject.
//!
//! The same `subject_id,relative_path,label` format indexes both volume
//! trees (paths to `.vhdr` headers) and image trees (paths to PNGs).
//! Paths are stored relative to the manifest's own directory so a
//! dataset directory can be moved wholesale.

use crate::label::ClassLabel;
use crate::volume::validate_subject_id;
use std::collections::HashSet;
use std::path::{Path, PathBuf};

pub const MANIFEST_HEADER: &str = "subject_id,relative_path,label";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub relative_path: PathBuf,
    pub label: ClassLabel,
}

/// An ordered, duplicate-free list of manifest entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest {path:?} not found")]
    MissingFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error on manifest {path:?}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path:?} is empty (expected header {MANIFEST_HEADER:?})")]
    Empty { path: PathBuf },
    #[error("manifest {path:?} line 1: expected header {MANIFEST_HEADER:?}, found {found:?}")]
    Header { path: PathBuf, found: String },
    #[error("manifest {path:?} line {line}: {reason}")]
    Row {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("duplicate subject id {subject_id:?} in manifest")]
    DuplicateSubject { subject_id: String },
    #[error("path {path:?} cannot be stored in a manifest: {reason}")]
    UnrepresentablePath { path: PathBuf, reason: String },
}

impl DatasetManifest {
    /// Build a manifest, rejecting duplicate subject ids.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, ManifestError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.subject_id.as_str()) {
                return Err(ManifestError::DuplicateSubject {
                    subject_id: e.subject_id.clone(),
                });
            }
        }
        Ok(DatasetManifest { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, subject_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.subject_id == subject_id)
    }

    /// Number of entries with the given label.
    pub fn class_count(&self, label: ClassLabel) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Subject ids of one class, in manifest order.
    pub fn class_subjects(&self, label: ClassLabel) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.subject_id.as_str())
            .collect()
    }

    /// The sub-manifest containing `ids`, in manifest order. Ids absent
    /// from the manifest are reported as an error rather than dropped.
    pub fn subset<'a, I>(&self, ids: I) -> Result<DatasetManifest, ManifestError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let wanted: HashSet<&str> = ids.into_iter().collect();
        let entries: Vec<ManifestEntry> = self
            .entries
            .iter()
            .filter(|e| wanted.contains(e.subject_id.as_str()))
            .cloned()
            .collect();
        if entries.len() != wanted.len() {
            let present: HashSet<&str> =
                entries.iter().map(|e| e.subject_id.as_str()).collect();
            let missing = wanted
                .iter()
                .find(|id| !present.contains(**id))
                .expect("some id is missing");
            return Err(ManifestError::Row {
                path: PathBuf::new(),
                line: 0,
                reason: format!("subject id {missing:?} not present in manifest"),
            });
        }
        Ok(DatasetManifest { entries })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ManifestError> {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            let rel = portable_path(&e.relative_path)?;
            out.push_str(&format!("{},{},{}\n", e.subject_id, rel, e.label));
        }
        std::fs::write(path, out).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                ManifestError::MissingFile {
                    path: path.to_path_buf(),
                    source,
                }
            } else {
                ManifestError::Io {
                    path: path.to_path_buf(),
                    source,
                }
            }
        })?;

        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| ManifestError::Empty {
            path: path.to_path_buf(),
        })?;
        if header.trim_end() != MANIFEST_HEADER {
            return Err(ManifestError::Header {
                path: path.to_path_buf(),
                found: header.to_string(),
            });
        }

        let row_err = |line: usize, reason: String| ManifestError::Row {
            path: path.to_path_buf(),
            line: line + 1,
            reason,
        };

        let mut entries = Vec::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let [subject_id, rel, label] = fields[..] else {
                return Err(row_err(
                    lineno,
                    format!("expected 3 comma-separated fields, found {}", fields.len()),
                ));
            };
            validate_subject_id(subject_id).map_err(|e| row_err(lineno, e.to_string()))?;
            if rel.is_empty() {
                return Err(row_err(lineno, "empty relative path".into()));
            }
            let label: ClassLabel = label
                .parse()
                .map_err(|e: crate::label::ParseLabelError| row_err(lineno, e.to_string()))?;
            entries.push(ManifestEntry {
                subject_id: subject_id.to_string(),
                relative_path: PathBuf::from(rel),
                label,
            });
        }

        DatasetManifest::new(entries)
    }
}

/// Render a relative path with forward slashes, refusing anything that
/// would corrupt the CSV or escape the dataset root.
fn portable_path(path: &Path) -> Result<String, ManifestError> {
    let err = |reason: &str| ManifestError::UnrepresentablePath {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if path.is_absolute() {
        return Err(err("path must be relative to the manifest directory"));
    }
    let mut parts = Vec::new();
    for comp in path.components() {
        match comp {
            std::path::Component::Normal(p) => {
                let p = p.to_str().ok_or_else(|| err("path is not valid UTF-8"))?;
                if p.contains(',') || p.contains('\n') {
                    return Err(err("path contains a CSV delimiter"));
                }
                parts.push(p);
            }
            _ => return Err(err("path may only contain plain components")),
        }
    }
    if parts.is_empty() {
        return Err(err("path is empty"));
    }
    Ok(parts.join("/"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn entry(id: &str, label: ClassLabel) -> ManifestEntry {
        ManifestEntry {
            subject_id: id.to_string(),
            relative_path: PathBuf::from(format!("{}/{}.png", label, id)),
            label,
        }
    }

    fn sample() -> DatasetManifest {
        DatasetManifest::new(vec![
            entry("c-1", ClassLabel::Control),
            entry("pd-1", ClassLabel::Pd),
            entry("pd-2", ClassLabel::Pd),
        ])
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let manifest = sample();
        manifest.write_csv(&path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "subject_id,relative_path,label\n\
             c-1,control/c-1.png,control\n\
             pd-1,pd/pd-1.png,pd\n\
             pd-2,pd/pd-2.png,pd\n"
        );
        assert_eq!(DatasetManifest::load_csv(&path).unwrap(), manifest);
    }

    #[test]
    fn class_counts_and_subjects() {
        let m = sample();
        assert_eq!(m.class_count(ClassLabel::Control), 1);
        assert_eq!(m.class_count(ClassLabel::Pd), 2);
        assert_eq!(m.class_subjects(ClassLabel::Pd), vec!["pd-1", "pd-2"]);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = DatasetManifest::new(vec![
            entry("a", ClassLabel::Control),
            entry("a", ClassLabel::Pd),
        ])
        .unwrap_err();
        assert!(matches!(err, ManifestError::DuplicateSubject { .. }));
    }

    #[test]
    fn subset_preserves_order_and_checks_membership() {
        let m = sample();
        let sub = m.subset(["pd-2", "c-1"]).unwrap();
        assert_eq!(
            sub.entries().iter().map(|e| e.subject_id.as_str()).collect::<Vec<_>>(),
            vec!["c-1", "pd-2"]
        );
        assert!(m.subset(["nope"]).is_err());
    }

    #[test]
    fn bad_rows_name_their_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");

        std::fs::write(
            &path,
            "subject_id,relative_path,label\nok,control/ok.png,control\nbad,only-two-fields\n",
        )
        .unwrap();
        match DatasetManifest::load_csv(&path).unwrap_err() {
            ManifestError::Row { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected: {other:?}"),
        }

        std::fs::write(
            &path,
            "subject_id,relative_path,label\nok,control/ok.png,sick\n",
        )
        .unwrap();
        match DatasetManifest::load_csv(&path).unwrap_err() {
            ManifestError::Row { line, reason, .. } => {
                assert_eq!(line, 2);
                assert!(reason.contains("sick"), "{reason}");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn wrong_header_and_missing_file_are_distinct() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "id,path,class\n").unwrap();
        assert!(matches!(
            DatasetManifest::load_csv(&path).unwrap_err(),
            ManifestError::Header { .. }
        ));
        assert!(matches!(
            DatasetManifest::load_csv(&dir.path().join("absent.csv")).unwrap_err(),
            ManifestError::MissingFile { .. }
        ));
    }

    #[test]
    fn absolute_and_delimiter_paths_are_unrepresentable() {
        let m = DatasetManifest::new(vec![ManifestEntry {
            subject_id: "a".into(),
            relative_path: PathBuf::from("/abs/a.png"),
            label: ClassLabel::Control,
        }])
        .unwrap();
        let dir = tempdir().unwrap();
        assert!(matches!(
            m.write_csv(&dir.path().join("m.csv")).unwrap_err(),
            ManifestError::UnrepresentablePath { .. }
        ));
    }
}
