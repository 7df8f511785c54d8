//! Wire protocol: one UTF-8 JSON object per newline-terminated line over a
//! reliable ordered byte stream (TCP).
//!
//! Message flow per connection:
//!
//! ```text
//! edge -> cloud   HELLO { house_id, sample_rate_hz, detector_config_hash }
//! edge -> cloud   STEADY { seq, window_end_s, ssp_w }        (one per steady window)
//! edge -> cloud   EVENT { seq, t_start_s, t_spike_s, t_end_s, dts_w, dsp_w }
//! cloud -> edge   ASSIGN { seq, appliance_id, from_state, to_state, confirmed }
//! cloud -> edge   ERROR { code, detail }
//! ```
//!
//! `seq` is strictly increasing per connection across EVENT and STEADY.
//! Every EVENT is answered by exactly one ASSIGN (or a non-fatal ERROR with
//! code `skipped`); ASSIGN echoes the EVENT's seq. The first STEADY after an
//! EVENT is the post-event window the cloud confirms against. Raw samples
//! never cross the wire.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::DetectorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum WireMessage {
    #[serde(rename = "HELLO")]
    Hello {
        house_id: String,
        sample_rate_hz: f64,
        detector_config_hash: String,
    },
    #[serde(rename = "EVENT")]
    Event {
        seq: u64,
        t_start_s: f64,
        t_spike_s: f64,
        t_end_s: f64,
        dts_w: f64,
        dsp_w: f64,
    },
    #[serde(rename = "STEADY")]
    Steady { seq: u64, window_end_s: f64, ssp_w: f64 },
    #[serde(rename = "ASSIGN")]
    Assign {
        seq: u64,
        appliance_id: String,
        from_state: usize,
        to_state: usize,
        confirmed: bool,
    },
    #[serde(rename = "ERROR")]
    Error { code: String, detail: String },
}

/// Error codes that terminate the connection.
pub const FATAL_CODES: &[&str] = &["order", "config", "unknown_house", "handshake"];

pub fn encode(msg: &WireMessage) -> String {
    let mut line = serde_json::to_string(msg).expect("wire messages always serialize");
    line.push('\n');
    line
}

pub fn decode(line: &str) -> Result<WireMessage> {
    serde_json::from_str(line.trim()).map_err(Error::WireDecode)
}

/// Stable hash of the detector configuration, exchanged in HELLO so both
/// sides segment identically. FNV-1a over the canonical JSON encoding.
pub fn detector_config_hash(cfg: &DetectorConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config always serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
