//! Process-boundary tracker: the heavy point tracker runs as a separate
//! program and hands back a serialized track table.
//!
//! Invocation: `<program> [args..] --video DIR --queries FILE --out FILE`.
//! The queries file holds one `frame x y start end` line per query.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;

use smite_core::{TrackTable, VideoClip};

use crate::error::{Result, TrackingError};
use crate::tracker::{PointTracker, Query};

/// Environment variable naming the tracker program.
pub const TRACKER_ENV: &str = "SMITE_TRACKER_CMD";

#[derive(Debug, Clone)]
pub struct ExternalTracker {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ExternalTracker {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
        }
    }

    /// Reads the program (and any whitespace-separated arguments) from
    /// `SMITE_TRACKER_CMD`.
    pub fn from_env() -> Result<Self> {
        let raw = std::env::var(TRACKER_ENV)
            .map_err(|_| TrackingError::TrackerUnavailable(format!("{TRACKER_ENV} is not set")))?;
        let mut parts = raw.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| TrackingError::TrackerUnavailable(format!("{TRACKER_ENV} is empty")))?;
        Ok(Self {
            program: program.into(),
            args: parts.map(str::to_string).collect(),
        })
    }
}

impl PointTracker for ExternalTracker {
    fn name(&self) -> &str {
        "external"
    }

    fn track(&self, video: &VideoClip, queries: &[Query]) -> Result<TrackTable> {
        let work = std::env::temp_dir().join(format!("smite-track-{}-{}", std::process::id(), queries.len()));
        let frames_dir = work.join("frames");
        video.save_dir(&frames_dir)?;
        let query_path = work.join("queries.txt");
        let out_path = work.join("tracks.bin");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&query_path)?);
            for q in queries {
                writeln!(f, "{} {} {} {} {}", q.frame, q.x, q.y, q.start, q.end)?;
            }
        }
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg("--video")
            .arg(&frames_dir)
            .arg("--queries")
            .arg(&query_path)
            .arg("--out")
            .arg(&out_path)
            .status()
            .map_err(|e| TrackingError::TrackerUnavailable(format!("{}: {e}", self.program.display())))?;
        if !status.success() {
            let _ = std::fs::remove_dir_all(&work);
            return Err(TrackingError::TrackerUnavailable(format!(
                "{} exited with {status}",
                self.program.display()
            )));
        }
        let table = TrackTable::load(&out_path)
            .map_err(|e| TrackingError::TrackerUnavailable(format!("unreadable tracker output: {e}")));
        let _ = std::fs::remove_dir_all(&work);
        table
    }
}
