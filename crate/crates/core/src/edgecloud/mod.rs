//! Split deployment: an edge agent runs detection and signature extraction
//! and streams compact records; a cloud service holds the models and runs
//! the two-stage disaggregation, answering assignments. Transport is TCP
//! with one JSON object per line; see [`wire`] for the message catalogue.

mod cloud;
mod edge;
pub mod wire;

pub use cloud::{cloud_serve, CloudServer};
pub use edge::{edge_run, EdgeConfig, EdgeSession, EdgeStats, RetryQueue, DEFAULT_QUEUE_CAPACITY};

use serde::Serialize;

/// Transmitted-data accounting for one edge session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionReport {
    /// Event-only payload: three values per event against T raw samples,
    /// as a percentage (3M/T * 100).
    pub event_ratio_percent: f64,
    /// Per-window steady reporting: one value per n_w-second window,
    /// as a percentage (100 / (n_w * f)).
    pub window_ratio_percent: f64,
    /// Actually transmitted bytes against the raw stream as 8-byte samples.
    pub measured_bytes_percent: f64,
}

/// Derives the reduction percentages from session counters.
pub fn reduction_report(
    stats: &EdgeStats,
    sample_rate_hz: f64,
    window_seconds: f64,
) -> ReductionReport {
    let t = stats.raw_samples_seen as f64;
    let event_ratio_percent = if t > 0.0 {
        300.0 * stats.events_sent as f64 / t
    } else {
        0.0
    };
    let window_ratio_percent = 100.0 / (window_seconds * sample_rate_hz);
    let measured_bytes_percent = if t > 0.0 {
        100.0 * stats.bytes_sent as f64 / (8.0 * t)
    } else {
        0.0
    };
    ReductionReport {
        event_ratio_percent,
        window_ratio_percent,
        measured_bytes_percent,
    }
}

impl std::fmt::Display for ReductionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "event ratio: {:.4}%", self.event_ratio_percent)?;
        writeln!(f, "window ratio: {:.3}%", self.window_ratio_percent)?;
        write!(f, "measured bytes: {:.3}%", self.measured_bytes_percent)
    }
}
