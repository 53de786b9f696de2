//! CSV tables and atomic file writes.

use std::io::Write;
use std::path::Path;

use crate::CliError;

/// A CSV header plus pre-formatted records.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: String,
    records: Vec<String>,
}

impl Table {
    pub fn new(header: &str) -> Self {
        Self {
            header: header.to_string(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: String) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `comment` first, then the header and one line per record.
    pub fn to_csv(&self, comment: &str) -> Vec<u8> {
        let mut out = String::new();
        for line in std::iter::once(comment)
            .chain(std::iter::once(self.header.as_str()))
            .chain(self.records.iter().map(String::as_str))
        {
            out.push_str(line);
            out.push('\n');
        }
        out.into_bytes()
    }
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new("a,b");
        t.push("1,2".into());
        assert_eq!(t.to_csv("# c"), b"# c\na,b\n1,2\n".to_vec());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
