//! Edge agent: runs detection and signature extraction next to the meter and
//! streams compact signature messages to the cloud.
//!
//! Per steady window of `n_w` seconds the agent sends one STEADY; per
//! detected event one EVENT immediately followed by the STEADY covering the
//! first post-event window (the window that closed the transient). Partial
//! windows are suppressed during transients and flushed once at stream end.
//! DTS/DSP are computed from the same adjacent windows the in-process
//! extractor uses, so a wire replay sees identical numbers.
//!
//! On a write failure, outgoing messages buffer into a bounded queue
//! (drop-oldest beyond the capacity, counted) while the agent attempts to
//! reconnect; a reconnect opens a fresh session (HELLO again) and drains the
//! queue. Raw samples never leave the agent.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{DetectorConfig, DetectorEmit, StreamingDetector};
use crate::model::PowerSeries;

use super::wire::{self, WireMessage, FATAL_CODES};

/// Default bound on the retry queue.
pub const DEFAULT_QUEUE_CAPACITY: usize = 10_000;

#[derive(Debug, Clone)]
pub struct EdgeConfig {
    pub house_id: String,
    pub detector: DetectorConfig,
    /// Retry-queue bound; beyond it the oldest message is dropped and counted.
    pub queue_capacity: usize,
    pub reconnect_attempts: u32,
    pub reconnect_delay: Duration,
}

impl EdgeConfig {
    pub fn new(house_id: impl Into<String>, detector: DetectorConfig) -> Self {
        Self {
            house_id: house_id.into(),
            detector,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            reconnect_attempts: 3,
            reconnect_delay: Duration::from_millis(200),
        }
    }
}

/// Session counters for the data-reduction accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EdgeStats {
    pub raw_samples_seen: u64,
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub events_sent: u64,
    pub steady_sent: u64,
    pub dropped_messages: u64,
}

/// Everything an edge session produced.
#[derive(Debug)]
pub struct EdgeSession {
    pub stats: EdgeStats,
    /// ASSIGN answers in arrival order.
    pub assigns: Vec<WireMessage>,
    /// ERROR answers in arrival order (fatal or not).
    pub errors: Vec<(String, String)>,
}

/// Bounded drop-oldest buffer for unsent messages.
#[derive(Debug)]
pub struct RetryQueue {
    capacity: usize,
    queue: VecDeque<String>,
    dropped: u64,
}

impl RetryQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            queue: VecDeque::new(),
            dropped: 0,
        }
    }

    pub fn push(&mut self, line: String) {
        if self.queue.len() == self.capacity {
            self.queue.pop_front();
            self.dropped += 1;
        }
        self.queue.push_back(line);
    }

    pub fn pop(&mut self) -> Option<String> {
        self.queue.pop_front()
    }

    /// Puts an unsendable message back at the head without re-counting it.
    pub fn requeue_front(&mut self, line: String) {
        if self.queue.len() == self.capacity {
            self.queue.pop_back();
            self.dropped += 1;
        }
        self.queue.push_front(line);
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

struct Transmitter {
    addr: String,
    cfg: EdgeConfig,
    hello: String,
    stream: Option<TcpStream>,
    queue: RetryQueue,
    stats: EdgeStats,
    reply_rx: Option<mpsc::Receiver<WireMessage>>,
    reader_handle: Option<thread::JoinHandle<()>>,
}

impl Transmitter {
    fn connect(addr: &str, cfg: &EdgeConfig, sample_rate_hz: f64) -> Result<Self> {
        let hello = wire::encode(&WireMessage::Hello {
            house_id: cfg.house_id.clone(),
            sample_rate_hz,
            detector_config_hash: wire::detector_config_hash(&cfg.detector),
        });
        let mut t = Self {
            addr: addr.to_string(),
            cfg: cfg.clone(),
            hello,
            stream: None,
            queue: RetryQueue::new(cfg.queue_capacity),
            stats: EdgeStats::default(),
            reply_rx: None,
            reader_handle: None,
        };
        t.open()?;
        Ok(t)
    }

    fn open(&mut self) -> Result<()> {
        let stream = TcpStream::connect(&self.addr)?;
        stream.set_nodelay(true).ok();
        let (tx, rx) = mpsc::channel();
        let reader = BufReader::new(stream.try_clone()?);
        let handle = thread::spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                match wire::decode(&line) {
                    Ok(msg) => {
                        if tx.send(msg).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let mut stream_w = stream;
        stream_w.write_all(self.hello.as_bytes())?;
        stream_w.flush()?;
        self.stats.messages_sent += 1;
        self.stats.bytes_sent += self.hello.len() as u64;
        self.stream = Some(stream_w);
        self.reply_rx = Some(rx);
        self.reader_handle = Some(handle);
        Ok(())
    }

    fn reconnect(&mut self) -> bool {
        for _ in 0..self.cfg.reconnect_attempts {
            thread::sleep(self.cfg.reconnect_delay);
            if self.open().is_ok() {
                return true;
            }
        }
        false
    }

    fn send(&mut self, msg: &WireMessage) {
        self.queue.push(wire::encode(msg));
        self.drain();
    }

    fn drain(&mut self) {
        while let Some(line) = self.queue.pop() {
            let ok = match self.stream.as_mut() {
                Some(s) => s.write_all(line.as_bytes()).and_then(|_| s.flush()).is_ok(),
                None => false,
            };
            if ok {
                self.stats.messages_sent += 1;
                self.stats.bytes_sent += line.len() as u64;
                continue;
            }
            self.queue.requeue_front(line);
            self.stream = None;
            if !self.reconnect() {
                return; // leave the rest queued
            }
        }
    }

    fn finish(mut self) -> (EdgeStats, Vec<WireMessage>, Vec<(String, String)>) {
        self.drain();
        if let Some(s) = self.stream.take() {
            s.shutdown(std::net::Shutdown::Write).ok();
        }
        if let Some(h) = self.reader_handle.take() {
            h.join().ok();
        }
        let mut assigns = Vec::new();
        let mut errors = Vec::new();
        if let Some(rx) = self.reply_rx.take() {
            for msg in rx.try_iter() {
                match msg {
                    WireMessage::Assign { .. } => assigns.push(msg),
                    WireMessage::Error { code, detail } => errors.push((code, detail)),
                    _ => {}
                }
            }
        }
        self.stats.dropped_messages = self.queue.dropped();
        (self.stats, assigns, errors)
    }
}

/// Streams one recorded series through the detector to a cloud service and
/// collects the session counters and replies.
pub fn edge_run(series: &PowerSeries, cloud_addr: &str, cfg: &EdgeConfig) -> Result<EdgeSession> {
    let rate = series.sample_rate_hz();
    let mut detector = StreamingDetector::new(cfg.detector, rate)?;
    let w = detector.window_samples();
    let mut tx = Transmitter::connect(cloud_addr, cfg, rate)?;

    // Bounded ring of recent samples: one transient plus the windows on both
    // sides is the most any signature computation reaches back.
    let keep = cfg.detector.max_transient_samples(rate) + 2 * w + 4;
    let mut ring: VecDeque<f64> = VecDeque::with_capacity(keep);
    let mut ring_start = 0usize;

    let mut seq = 0u64;
    let mut anchor: Option<usize> = Some(0);
    let samples = series.samples();
    for (idx, &x) in samples.iter().enumerate() {
        if ring.len() == keep {
            ring.pop_front();
            ring_start += 1;
        }
        ring.push_back(x);
        tx.stats.raw_samples_seen += 1;

        for emit in detector.push(x) {
            match emit {
                DetectorEmit::TransientStarted { .. } => anchor = None,
                DetectorEmit::SegmentClosed(_) => {}
                DetectorEmit::Event(b) => {
                    // Same adjacent windows as the in-process extractor.
                    let pre_take = (b.start_idx - b.pre_steady_start).min(w).max(1);
                    let pre_mean = ring_mean(&ring, ring_start, b.start_idx - pre_take, b.start_idx);
                    let post_mean = ring_mean(&ring, ring_start, b.end_idx, idx + 1);
                    let dsp = post_mean - pre_mean;
                    let dts = if dsp < 0.0 {
                        0.0
                    } else {
                        ring[b.spike_idx - ring_start] - pre_mean
                    };
                    seq += 1;
                    tx.stats.events_sent += 1;
                    tx.send(&WireMessage::Event {
                        seq,
                        t_start_s: series.timestamp_of(b.start_idx),
                        t_spike_s: series.timestamp_of(b.spike_idx),
                        t_end_s: series.timestamp_of(b.end_idx),
                        dts_w: dts,
                        dsp_w: dsp,
                    });
                    anchor = Some(b.end_idx);
                }
            }
        }

        if detector.is_steady() {
            if let Some(a) = anchor {
                let n_since = idx + 1 - a;
                if n_since > 0 && n_since % w == 0 {
                    seq += 1;
                    tx.stats.steady_sent += 1;
                    tx.send(&WireMessage::Steady {
                        seq,
                        window_end_s: series.timestamp_of(idx + 1),
                        ssp_w: ring_mean(&ring, ring_start, idx + 1 - w, idx + 1),
                    });
                }
            }
        }
    }

    // A transient still open at stream end has no post window to extract
    // signatures from; like the in-process pipeline, it is dropped. A final
    // partial steady window is flushed.
    let was_steady = detector.is_steady();
    drop(detector.finish());
    if was_steady {
        if let Some(a) = anchor {
            let len = samples.len();
            let rem = (len - a) % w;
            if rem > 0 {
                seq += 1;
                tx.stats.steady_sent += 1;
                tx.send(&WireMessage::Steady {
                    seq,
                    window_end_s: series.timestamp_of(len),
                    ssp_w: ring_mean(&ring, ring_start, len - rem, len),
                });
            }
        }
    }

    let (stats, assigns, errors) = tx.finish();
    if let Some((code, detail)) = errors.iter().find(|(c, _)| FATAL_CODES.contains(&c.as_str())) {
        return Err(Error::Protocol {
            code: code.clone(),
            detail: detail.clone(),
        });
    }
    Ok(EdgeSession {
        stats,
        assigns,
        errors,
    })
}

fn ring_mean(ring: &VecDeque<f64>, ring_start: usize, from: usize, to: usize) -> f64 {
    let a = from - ring_start;
    let b = to - ring_start;
    ring.range(a..b).sum::<f64>() / (b - a) as f64
}
