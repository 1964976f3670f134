//! JSONL output with transactional flushes: every flush writes the full
//! file to a temporary sibling and renames it over the target, so a reader
//! never observes a partially written trace.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub struct AtomicJsonlWriter {
    path: PathBuf,
    committed: Vec<u8>,
    pending: Vec<u8>,
    pending_units: usize,
    flush_every: usize,
}

impl AtomicJsonlWriter {
    /// Starts from `retained` lines (already present content to keep) and
    /// writes them out immediately.
    pub fn create(
        path: impl AsRef<Path>,
        retained: &[String],
        flush_every: usize,
    ) -> io::Result<Self> {
        let mut w = AtomicJsonlWriter {
            path: path.as_ref().to_path_buf(),
            committed: Vec::new(),
            pending: Vec::new(),
            pending_units: 0,
            flush_every: flush_every.max(1),
        };
        for line in retained {
            w.pending.extend_from_slice(line.as_bytes());
            w.pending.push(b'\n');
        }
        w.flush()?;
        Ok(w)
    }

    /// Queues a group of lines that must land in the file together.
    pub fn append_unit<S: AsRef<str>>(&mut self, lines: &[S]) -> io::Result<()> {
        for line in lines {
            debug_assert!(!line.as_ref().contains('\n'));
            self.pending.extend_from_slice(line.as_ref().as_bytes());
            self.pending.push(b'\n');
        }
        self.pending_units += 1;
        if self.pending_units >= self.flush_every {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.committed.append(&mut self.pending);
        self.pending_units = 0;
        write_atomic(&self.path, &self.committed)
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.flush()
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp_name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Non-empty lines of a file, or nothing if it does not exist.
pub fn read_lines_if_exists(path: &Path) -> io::Result<Vec<String>> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_string)
            .collect()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}
