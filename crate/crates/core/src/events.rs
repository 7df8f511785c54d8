//! Streaming event detection: partitions a power series into steady periods
//! and transient periods, emitting start/spike/end points per event.
//!
//! The detector is a two-phase state machine processed in one pass:
//!
//! - **Steady**: samples extend the current steady segment. A sample that
//!   deviates from the running mean of the segment by more than
//!   `event_threshold_w` triggers a transient starting at that sample.
//! - **Transient**: samples are buffered until a full window of
//!   `window_seconds` is steady (window max − min <= `steady_delta_w`), at
//!   which point the transient ends at the window start and the window seeds
//!   the next steady segment. A transient that exceeds
//!   `max_transient_seconds` is force-closed and flagged truncated.
//!
//! Window max/min run on monotone deques, so the cost per sample is O(1)
//! amortized and the lookahead buffer is bounded by the transient cap plus
//! one window.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PowerSeries;

/// Detection thresholds shared by the edge and cloud halves of the pipeline
/// (part of the model document).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// A window is steady iff its max - min does not exceed this (watts).
    pub steady_delta_w: f64,
    /// Deviation from the running pre-steady mean that opens a transient (watts).
    pub event_threshold_w: f64,
    /// Steady-window length n_w (seconds).
    pub window_seconds: f64,
    /// Force-close cap for a transient (seconds).
    pub max_transient_seconds: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            steady_delta_w: 10.0,
            event_threshold_w: 15.0,
            window_seconds: 2.0,
            max_transient_seconds: 30.0,
        }
    }
}

impl DetectorConfig {
    pub fn window_samples(&self, sample_rate_hz: f64) -> usize {
        ((self.window_seconds * sample_rate_hz).round() as usize).max(1)
    }

    pub fn max_transient_samples(&self, sample_rate_hz: f64) -> usize {
        ((self.max_transient_seconds * sample_rate_hz).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.steady_delta_w > 0.0
            && self.event_threshold_w > 0.0
            && self.window_seconds > 0.0
            && self.max_transient_seconds > 0.0
            && [
                self.steady_delta_w,
                self.event_threshold_w,
                self.window_seconds,
                self.max_transient_seconds,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::validation("detector config", "all fields must be positive and finite"))
        }
    }
}

/// One detected event: transient start, spike extremum, and the first sample
/// of the post-event steady period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventBoundary {
    pub start_idx: usize,
    pub spike_idx: usize,
    /// First sample index of the post-event steady period (exclusive end of
    /// the transient).
    pub end_idx: usize,
    /// Start of the steady segment immediately preceding the transient.
    pub pre_steady_start: usize,
    /// Set when the transient was force-closed at the cap or at stream end.
    pub truncated: bool,
}

/// A maximal steady run of samples, `[start_idx, end_idx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadySegment {
    pub start_idx: usize,
    pub end_idx: usize,
    pub mean: f64,
    pub std: f64,
}

impl SteadySegment {
    pub fn len(&self) -> usize {
        self.end_idx - self.start_idx
    }

    pub fn is_empty(&self) -> bool {
        self.start_idx == self.end_idx
    }
}

/// Full detection output; steady segments and transients tile the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutput {
    pub events: Vec<EventBoundary>,
    pub segments: Vec<SteadySegment>,
}

/// Incremental output of [`StreamingDetector::push`].
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorEmit {
    /// A sample tripped the event threshold; the preceding steady segment is
    /// closed in the same call.
    TransientStarted { start_idx: usize },
    SegmentClosed(SteadySegment),
    Event(EventBoundary),
}

// Welford accumulator; population std on finalize.
#[derive(Debug, Clone, Default)]
struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }
}

#[derive(Debug)]
struct SteadyPhase {
    seg_start: usize,
    stats: RunningStats,
    /// Last <= w samples of the segment, for the pre-event window mean.
    ring: VecDeque<f64>,
}

#[derive(Debug)]
struct TransientPhase {
    start_idx: usize,
    pre_segment: SteadySegment,
    pre_window_mean: f64,
    /// Samples since start_idx inclusive.
    buf: Vec<f64>,
    /// Monotone deques of buffer offsets for window max/min.
    maxq: VecDeque<usize>,
    minq: VecDeque<usize>,
}

#[derive(Debug)]
enum Phase {
    Steady(SteadyPhase),
    Transient(TransientPhase),
}

/// One-pass event detector. One instance per stream; see [`detect_events`]
/// for the whole-series entry point.
#[derive(Debug)]
pub struct StreamingDetector {
    cfg: DetectorConfig,
    w: usize,
    cap: usize,
    next_idx: usize,
    phase: Phase,
}

impl StreamingDetector {
    pub fn new(cfg: DetectorConfig, sample_rate_hz: f64) -> Result<Self> {
        cfg.validate()?;
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidSampleRate(sample_rate_hz));
        }
        let w = cfg.window_samples(sample_rate_hz);
        let cap = cfg.max_transient_samples(sample_rate_hz);
        Ok(Self {
            cfg,
            w,
            cap,
            next_idx: 0,
            phase: Phase::Steady(SteadyPhase {
                seg_start: 0,
                stats: RunningStats::default(),
                ring: VecDeque::new(),
            }),
        })
    }

    pub fn window_samples(&self) -> usize {
        self.w
    }

    /// Index the next pushed sample will get.
    pub fn next_index(&self) -> usize {
        self.next_idx
    }

    pub fn is_steady(&self) -> bool {
        matches!(self.phase, Phase::Steady(_))
    }

    /// Feeds one sample; returns any segments/events confirmed by it.
    pub fn push(&mut self, x: f64) -> Vec<DetectorEmit> {
        let idx = self.next_idx;
        self.next_idx += 1;
        match &mut self.phase {
            Phase::Steady(steady) => {
                let triggered =
                    steady.stats.count > 0 && (x - steady.stats.mean).abs() > self.cfg.event_threshold_w;
                if !triggered {
                    steady.stats.push(x);
                    if steady.ring.len() == self.w {
                        steady.ring.pop_front();
                    }
                    steady.ring.push_back(x);
                    return Vec::new();
                }
                let pre_segment = SteadySegment {
                    start_idx: steady.seg_start,
                    end_idx: idx,
                    mean: steady.stats.mean,
                    std: steady.stats.std(),
                };
                let pre_window_mean =
                    steady.ring.iter().sum::<f64>() / steady.ring.len() as f64;
                let mut transient = TransientPhase {
                    start_idx: idx,
                    pre_segment,
                    pre_window_mean,
                    buf: Vec::with_capacity(self.w * 2),
                    maxq: VecDeque::new(),
                    minq: VecDeque::new(),
                };
                Self::push_transient_sample(&mut transient, x, self.w);
                self.phase = Phase::Transient(transient);
                vec![
                    DetectorEmit::SegmentClosed(pre_segment),
                    DetectorEmit::TransientStarted { start_idx: idx },
                ]
            }
            Phase::Transient(transient) => {
                Self::push_transient_sample(transient, x, self.w);
                // A closing window must lie strictly after the trigger sample.
                let window_ready = idx >= transient.start_idx + self.w;
                let steady_window = window_ready && {
                    let max = transient.buf[*transient.maxq.front().unwrap()];
                    let min = transient.buf[*transient.minq.front().unwrap()];
                    max - min <= self.cfg.steady_delta_w
                };
                if steady_window {
                    let end = idx + 1 - self.w;
                    return self.close_transient(end, false);
                }
                if transient.buf.len() >= self.cap + self.w {
                    let end = transient.start_idx + self.cap;
                    return self.close_transient(end, true);
                }
                Vec::new()
            }
        }
    }

    fn push_transient_sample(t: &mut TransientPhase, x: f64, w: usize) {
        t.buf.push(x);
        let off = t.buf.len() - 1;
        while let Some(&b) = t.maxq.back() {
            if t.buf[b] <= x {
                t.maxq.pop_back();
            } else {
                break;
            }
        }
        t.maxq.push_back(off);
        while let Some(&b) = t.minq.back() {
            if t.buf[b] >= x {
                t.minq.pop_back();
            } else {
                break;
            }
        }
        t.minq.push_back(off);
        // Evict entries that fell out of the trailing window.
        let window_start = (off + 1).saturating_sub(w);
        while t.maxq.front().is_some_and(|&f| f < window_start) {
            t.maxq.pop_front();
        }
        while t.minq.front().is_some_and(|&f| f < window_start) {
            t.minq.pop_front();
        }
    }

    /// Closes the current transient at `end`; the samples from `end` onward
    /// seed the next steady segment.
    fn close_transient(&mut self, end: usize, truncated: bool) -> Vec<DetectorEmit> {
        let Phase::Transient(t) = std::mem::replace(
            &mut self.phase,
            Phase::Steady(SteadyPhase {
                seg_start: end,
                stats: RunningStats::default(),
                ring: VecDeque::new(),
            }),
        ) else {
            unreachable!("close_transient outside transient phase");
        };
        let tr_len = end - t.start_idx;
        let post = &t.buf[tr_len..];
        let post_mean = post.iter().sum::<f64>() / post.len() as f64;
        let spike_idx = if post_mean >= t.pre_window_mean {
            let mut best = 0usize;
            let mut best_dev = f64::NEG_INFINITY;
            for (i, &v) in t.buf[..tr_len].iter().enumerate() {
                let dev = (v - t.pre_window_mean).abs();
                if dev > best_dev {
                    best_dev = dev;
                    best = i;
                }
            }
            t.start_idx + best
        } else {
            t.start_idx
        };
        let boundary = EventBoundary {
            start_idx: t.start_idx,
            spike_idx,
            end_idx: end,
            pre_steady_start: t.pre_segment.start_idx,
            truncated,
        };
        if let Phase::Steady(steady) = &mut self.phase {
            for &v in post {
                steady.stats.push(v);
                if steady.ring.len() == self.w {
                    steady.ring.pop_front();
                }
                steady.ring.push_back(v);
            }
        }
        vec![DetectorEmit::Event(boundary)]
    }

    /// Flushes the final open segment or transient at end of stream.
    pub fn finish(self) -> Vec<DetectorEmit> {
        let len = self.next_idx;
        match self.phase {
            Phase::Steady(steady) => {
                if steady.stats.count == 0 {
                    return Vec::new();
                }
                vec![DetectorEmit::SegmentClosed(SteadySegment {
                    start_idx: steady.seg_start,
                    end_idx: len,
                    mean: steady.stats.mean,
                    std: steady.stats.std(),
                })]
            }
            Phase::Transient(t) => {
                // Transient never settled: truncated event with no post segment.
                let mut best = 0usize;
                let mut best_dev = f64::NEG_INFINITY;
                for (i, &v) in t.buf.iter().enumerate() {
                    let dev = (v - t.pre_window_mean).abs();
                    if dev > best_dev {
                        best_dev = dev;
                        best = i;
                    }
                }
                vec![DetectorEmit::Event(EventBoundary {
                    start_idx: t.start_idx,
                    spike_idx: t.start_idx + best,
                    end_idx: len,
                    pre_steady_start: t.pre_segment.start_idx,
                    truncated: true,
                })]
            }
        }
    }
}

/// Runs the streaming detector over a whole series.
///
/// Returned boundaries are strictly ordered and non-overlapping; steady
/// segments exactly cover every sample outside the transients.
pub fn detect_events(series: &PowerSeries, cfg: &DetectorConfig) -> Result<DetectionOutput> {
    let mut detector = StreamingDetector::new(*cfg, series.sample_rate_hz())?;
    let min_len = 2 * detector.window_samples();
    if series.len() < min_len {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            min: min_len,
        });
    }
    let mut events = Vec::new();
    let mut segments = Vec::new();
    let mut sink = |emits: Vec<DetectorEmit>| {
        for e in emits {
            match e {
                DetectorEmit::Event(b) => events.push(b),
                DetectorEmit::SegmentClosed(s) => segments.push(s),
                DetectorEmit::TransientStarted { .. } => {}
            }
        }
    };
    for &x in series.samples() {
        sink(detector.push(x));
    }
    sink(detector.finish());
    Ok(DetectionOutput { events, segments })
}
