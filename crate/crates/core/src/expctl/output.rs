use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::trainer::{StepObserver, TraceRecord};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = with_suffix(path, ".tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Streams trace rows to `<path>.partial`, flushing after every row.
/// [`TraceWriter::finish`] renames the file to `path`.
pub struct TraceWriter {
    partial: PathBuf,
    target: PathBuf,
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let partial = with_suffix(path, ".partial");
        let mut out = BufWriter::new(File::create(&partial)?);
        writeln!(out, "{}", TraceRecord::HEADER.join(","))?;
        out.flush()?;
        Ok(TraceWriter {
            partial,
            target: path.to_path_buf(),
            out,
        })
    }

    pub fn partial_path(&self) -> &Path {
        &self.partial
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        fs::rename(&self.partial, &self.target)?;
        Ok(self.target)
    }
}

impl StepObserver for TraceWriter {
    fn on_record(&mut self, record: &TraceRecord) -> Result<()> {
        writeln!(self.out, "{}", record.csv_fields().join(","))?;
        self.out.flush()?;
        Ok(())
    }
}
