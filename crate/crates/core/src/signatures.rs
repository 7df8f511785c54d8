//! Transient and steady-state signature extraction.
//!
//! DTS is the difference between the transient spike value and the mean of
//! the steady window immediately before the transient; DSP is the difference
//! between the steady-window means immediately after and immediately before
//! it. Power-decreasing transitions reach the next state without a spike, so
//! their DTS is zero by convention. SSP is simply a steady period's mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{DetectionOutput, DetectorConfig, EventBoundary, SteadySegment};
use crate::model::PowerSeries;

/// One detected event with its extracted transient signatures.
///
/// This is the unit payload of the edge-cloud wire protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub boundary: EventBoundary,
    /// Spike value minus pre-event steady-window mean; 0.0 for decreasing
    /// events.
    pub dts: f64,
    /// Post-event steady-window mean minus pre-event steady-window mean.
    pub dsp: f64,
    pub pre_mean: f64,
    pub post_mean: f64,
    /// Epoch seconds of `boundary.start_idx`.
    pub timestamp: f64,
    /// Set when an adjacent steady run was shorter than one full window.
    pub short_window: bool,
    /// Set when the steady-power change exceeds what the spike deviation
    /// allows for a single appliance (a second appliance likely switched
    /// inside the same transient). Still treated as a single event.
    pub compound: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Extracts the DTS/DSP record for one event.
///
/// The pre window is the last `window_samples` of the preceding steady
/// segment (all of it, flagged `short_window`, when shorter); the post window
/// is the `window_samples` immediately after `end_idx`.
pub fn extract_event_record(
    series: &PowerSeries,
    boundary: &EventBoundary,
    cfg: &DetectorConfig,
) -> Result<EventRecord> {
    let len = series.len();
    if boundary.pre_steady_start > boundary.start_idx
        || boundary.start_idx > boundary.spike_idx
        || boundary.spike_idx >= boundary.end_idx
        || boundary.end_idx > len
    {
        return Err(Error::BoundaryOutOfRange {
            msg: format!("{boundary:?} against series of {len} samples"),
        });
    }
    if boundary.end_idx == len {
        return Err(Error::BoundaryOutOfRange {
            msg: format!(
                "event at sample {} has no post-event steady samples",
                boundary.start_idx
            ),
        });
    }
    let w = cfg.window_samples(series.sample_rate_hz());
    let xs = series.samples();

    let pre_len = boundary.start_idx - boundary.pre_steady_start;
    let pre_take = pre_len.min(w).max(1);
    let pre_window = &xs[boundary.start_idx - pre_take..boundary.start_idx];

    let post_take = (len - boundary.end_idx).min(w);
    let post_window = &xs[boundary.end_idx..boundary.end_idx + post_take];

    let pre_mean = mean(pre_window);
    let post_mean = mean(post_window);
    let dsp = post_mean - pre_mean;
    if dsp == 0.0 {
        return Err(Error::DegenerateEvent {
            start_idx: boundary.start_idx,
        });
    }
    let dts = if dsp < 0.0 {
        0.0
    } else {
        xs[boundary.spike_idx] - pre_mean
    };
    let compound = dsp > 0.0 && dsp - dts > 2.0 * cfg.steady_delta_w;
    Ok(EventRecord {
        boundary: *boundary,
        dts,
        dsp,
        pre_mean,
        post_mean,
        timestamp: series.timestamp_of(boundary.start_idx),
        short_window: pre_take < w || post_take < w,
        compound,
    })
}

/// Steady-state power of a segment: its mean.
pub fn extract_ssp(segment: &SteadySegment) -> f64 {
    segment.mean
}

/// Extracts records for every event in a detection output.
///
/// A trailing truncated event with no post-event samples (stream ended inside
/// the transient) is dropped, keeping the segments-interleave-events shape.
pub fn extract_all(
    series: &PowerSeries,
    detection: &DetectionOutput,
    cfg: &DetectorConfig,
) -> Result<Vec<EventRecord>> {
    let mut records = Vec::with_capacity(detection.events.len());
    for (i, b) in detection.events.iter().enumerate() {
        if b.end_idx >= series.len() && i + 1 == detection.events.len() {
            continue;
        }
        records.push(extract_event_record(series, b, cfg)?);
    }
    Ok(records)
}

/// Steady-state observations for the per-event inference loop: entry 0 is the
/// mean of the first full window of the initial steady period, entry m+1 is
/// event m's post-window mean. This is exactly the sequence of first STEADY
/// windows a streaming edge agent reports, so in-process and over-the-wire
/// runs see identical numbers.
pub fn window_ssps(
    series: &PowerSeries,
    detection: &DetectionOutput,
    records: &[EventRecord],
    cfg: &DetectorConfig,
) -> Vec<f64> {
    let w = cfg.window_samples(series.sample_rate_hz());
    let mut ssps = Vec::with_capacity(records.len() + 1);
    let first = detection
        .segments
        .first()
        .map(|s| {
            let take = s.len().min(w);
            mean(&series.samples()[s.start_idx..s.start_idx + take])
        })
        .unwrap_or(0.0);
    ssps.push(first);
    ssps.extend(records.iter().map(|r| r.post_mean));
    ssps
}
