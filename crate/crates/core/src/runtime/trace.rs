//! Event trace of asynchronous runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One traced event. `time` is the simulator tick, or microseconds since
/// start for the threaded engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: u64,
    pub rank: usize,
    pub kind: String,
    pub detail: String,
}

/// Writes `time,rank,kind,detail` rows.
pub fn write_trace_csv<W: Write>(events: &[TraceEvent], mut out: W) -> Result<()> {
    writeln!(out, "time,rank,kind,detail")?;
    for e in events {
        writeln!(out, "{},{},{},{}", e.time, e.rank, e.kind, e.detail.replace(',', ";"))?;
    }
    Ok(())
}
