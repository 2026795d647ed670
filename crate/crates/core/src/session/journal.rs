//! Append-only JSON-lines journal of live interactions.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{HintMap, Sign};

/// Run-length encoding of the nonzero pixels of a single-sign hint.
/// `runs` holds `[start, length]` pairs over row-major indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintRle {
    pub height: usize,
    pub width: usize,
    pub runs: Vec<[usize; 2]>,
}

impl HintRle {
    pub fn encode(hint: &HintMap) -> Self {
        let mut runs: Vec<[usize; 2]> = Vec::new();
        for (i, &v) in hint.as_slice().iter().enumerate() {
            if v == 0 {
                continue;
            }
            match runs.last_mut() {
                Some([start, len]) if *start + *len == i => *len += 1,
                _ => runs.push([i, 1]),
            }
        }
        HintRle {
            height: hint.height(),
            width: hint.width(),
            runs,
        }
    }

    pub fn decode(&self, sign: Sign) -> Result<HintMap> {
        let n = self.height * self.width;
        let mut data = vec![0i8; n];
        for &[start, len] in &self.runs {
            if start + len > n {
                return Err(Error::InvalidHint(format!("run {start}+{len} exceeds {n} pixels")));
            }
            data[start..start + len].fill(sign.value());
        }
        HintMap::from_vec(self.height, self.width, data)
    }

    pub fn pixel_count(&self) -> usize {
        self.runs.iter().map(|r| r[1]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JournalOp {
    Add,
    Erase,
    Undo,
}

impl From<Sign> for JournalOp {
    fn from(s: Sign) -> Self {
        match s {
            Sign::Add => JournalOp::Add,
            Sign::Erase => JournalOp::Erase,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub step: usize,
    pub patch: usize,
    pub op: JournalOp,
    /// Absent for undo records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<HintRle>,
    pub pfm: Option<f64>,
    pub annotated_pixels: usize,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

pub fn now_timestamp() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Writer that flushes one line per record.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Journal {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &JournalRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).map_err(|e| Error::Protocol(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_journal(path: &Path) -> Result<Vec<JournalRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(out)
}
