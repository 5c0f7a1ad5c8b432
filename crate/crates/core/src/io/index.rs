//! Dataset index: `image<TAB>label<TAB>class` per line. Relative paths are
//! resolved against the index file's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::{read_text, write_atomic};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub image: PathBuf,
    pub label: PathBuf,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
    /// Directory that relative entry paths are resolved against.
    pub root: PathBuf,
}

impl DatasetIndex {
    pub fn parse(text: &str, name: &str, root: &Path, classes: usize) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let loc = format!("{name}:{}", i + 1);
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::format(loc, "expected image<TAB>label<TAB>class"));
            }
            let class: usize = f[2]
                .trim()
                .parse()
                .map_err(|_| Error::format(&loc, format!("bad class {:?}", f[2])))?;
            if class >= classes {
                return Err(Error::format(
                    loc,
                    format!("class {class} not below {classes}"),
                ));
            }
            if !seen.insert(f[0].to_string()) {
                return Err(Error::format(loc, format!("duplicate image {}", f[0])));
            }
            entries.push(IndexEntry {
                image: PathBuf::from(f[0]),
                label: PathBuf::from(f[1]),
                class,
            });
        }
        Ok(Self {
            entries,
            root: root.to_path_buf(),
        })
    }

    pub fn read(path: &Path, classes: usize) -> Result<Self> {
        let root = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(
            &read_text(path)?,
            &path.display().to_string(),
            &root,
            classes,
        )
    }

    pub fn format(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "{}\t{}\t{}\n",
                    e.image.display(),
                    e.label.display(),
                    e.class
                )
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.format().as_bytes())
    }

    pub fn image_path(&self, e: &IndexEntry) -> PathBuf {
        self.root.join(&e.image)
    }

    pub fn label_path(&self, e: &IndexEntry) -> PathBuf {
        self.root.join(&e.label)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        let text = "images/a.pgm\tlabels/a.txt\t0\nimages/b.pgm\tlabels/b.txt\t2\n";
        let idx = DatasetIndex::parse(text, "i", Path::new("/data"), 3).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(
            idx.image_path(&idx.entries[1]),
            Path::new("/data/images/b.pgm")
        );
        assert_eq!(idx.format(), text);
    }

    #[test]
    fn rejects_duplicates_and_bad_classes() {
        let dup = "a\tx\t0\na\ty\t1\n";
        assert!(DatasetIndex::parse(dup, "i", Path::new(""), 3).is_err());
        assert!(DatasetIndex::parse("a\tx\t3\n", "i", Path::new(""), 3).is_err());
        assert!(DatasetIndex::parse("a x 0\n", "i", Path::new(""), 3).is_err());
    }
}
