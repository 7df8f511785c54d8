//! Cloud service: holds household models and answers streamed signatures
//! with state assignments.
//!
//! One logical session per connection with its own state vector; sessions
//! are served concurrently and share nothing but the immutable model map.
//! Per EVENT the session runs stage-1 ranking; the next STEADY triggers
//! stage-2 confirmation and the commit, answered with an ASSIGN echoing the
//! EVENT's seq. An event the direction filter leaves without candidates is
//! answered with a non-fatal ERROR (code `skipped`). Out-of-order sequence
//! numbers, an unknown house id, or a detector-config hash mismatch close
//! the connection with a fatal ERROR.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use crate::error::{Error, Result};
use crate::inference::{commit_event, rank_candidates, Candidate, InferenceOptions};
use crate::model::{HouseholdModel, StateVector};
use crate::signatures::EventRecord;

use super::wire::{self, WireMessage};

/// Handle to a running cloud service; dropping it without calling
/// [`CloudServer::shutdown`] leaves the accept thread running.
pub struct CloudServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_handle: Option<thread::JoinHandle<()>>,
}

impl CloudServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and joins the accept thread. Established
    /// sessions run to client EOF.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept_handle.take() {
            h.join().ok();
        }
    }
}

/// Binds and serves a map of house id -> model until shut down. Returns as
/// soon as the listener is bound.
pub fn cloud_serve(
    models: HashMap<String, HouseholdModel>,
    bind_addr: &str,
) -> Result<CloudServer> {
    for m in models.values() {
        m.validate()?;
    }
    let listener = TcpListener::bind(bind_addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop2 = Arc::clone(&stop);
    let models = Arc::new(models);
    let accept_handle = thread::spawn(move || {
        for stream in listener.incoming() {
            if stop2.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let models = Arc::clone(&models);
            thread::spawn(move || {
                let _ = serve_session(stream, &models);
            });
        }
    });
    Ok(CloudServer {
        addr,
        stop,
        accept_handle: Some(accept_handle),
    })
}

struct PendingEvent {
    seq: u64,
    ranked: Vec<Candidate>,
}

fn serve_session(stream: TcpStream, models: &HashMap<String, HouseholdModel>) -> Result<()> {
    stream.set_nodelay(true).ok();
    let reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut send = |msg: &WireMessage| -> Result<()> {
        writer.write_all(wire::encode(msg).as_bytes())?;
        writer.flush()?;
        Ok(())
    };
    let fatal = |send: &mut dyn FnMut(&WireMessage) -> Result<()>, code: &str, detail: String| {
        let _ = send(&WireMessage::Error {
            code: code.to_string(),
            detail,
        });
        Err(Error::Protocol {
            code: code.to_string(),
            detail: String::new(),
        })
    };

    let mut lines = reader.lines();
    let household = match lines.next() {
        Some(Ok(first)) => match wire::decode(&first) {
            Ok(WireMessage::Hello {
                house_id,
                detector_config_hash,
                ..
            }) => {
                let Some(household) = models.get(&house_id) else {
                    return fatal(&mut send, "unknown_house", format!("no model for `{house_id}`"));
                };
                let expected = wire::detector_config_hash(&household.detector);
                if detector_config_hash != expected {
                    return fatal(
                        &mut send,
                        "config",
                        format!("detector config hash {detector_config_hash} != {expected}"),
                    );
                }
                household
            }
            _ => return fatal(&mut send, "handshake", "expected HELLO first".to_string()),
        },
        _ => return Ok(()),
    };

    let opts = InferenceOptions::default();
    let mut state = StateVector::all_off(household.num_appliances());
    let mut pending: VecDeque<PendingEvent> = VecDeque::new();
    let mut last_seq: Option<u64> = None;

    for line in lines {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let msg = match wire::decode(&line) {
            Ok(m) => m,
            Err(e) => return fatal(&mut send, "decode", e.to_string()),
        };
        match msg {
            WireMessage::Event {
                seq,
                t_start_s,
                t_spike_s,
                t_end_s,
                dts_w,
                dsp_w,
            } => {
                if last_seq.is_some_and(|s| seq <= s) {
                    return fatal(&mut send, "order", format!("seq {seq} after {last_seq:?}"));
                }
                last_seq = Some(seq);
                let record = wire_event_record(t_start_s, t_spike_s, t_end_s, dts_w, dsp_w);
                let ranked = rank_candidates(household, &state, &record, &opts);
                pending.push_back(PendingEvent { seq, ranked });
            }
            WireMessage::Steady { seq, ssp_w, .. } => {
                if last_seq.is_some_and(|s| seq <= s) {
                    return fatal(&mut send, "order", format!("seq {seq} after {last_seq:?}"));
                }
                last_seq = Some(seq);
                if let Some(ev) = pending.pop_front() {
                    let (candidate, conf, _) =
                        commit_event(household, &mut state, &ev.ranked, ssp_w, &opts);
                    match candidate {
                        Some(c) => send(&WireMessage::Assign {
                            seq: ev.seq,
                            appliance_id: household.appliances[c.appliance].id.clone(),
                            from_state: c.from_state,
                            to_state: c.to_state,
                            confirmed: conf.ok,
                        })?,
                        None => send(&WireMessage::Error {
                            code: "skipped".to_string(),
                            detail: format!("seq={} no direction-matching candidate", ev.seq),
                        })?,
                    }
                }
            }
            WireMessage::Hello { .. } | WireMessage::Assign { .. } => {
                return fatal(&mut send, "handshake", "unexpected message".to_string());
            }
            WireMessage::Error { .. } => {}
        }
    }
    // Events never followed by a STEADY cannot be confirmed.
    for ev in pending {
        let _ = send(&WireMessage::Error {
            code: "skipped".to_string(),
            detail: format!("seq={} stream ended before post-event window", ev.seq),
        });
    }
    Ok(())
}

/// The wire carries only times and signatures; the index fields of the
/// reconstructed record are not meaningful cloud-side (ranking reads only
/// dts/dsp).
fn wire_event_record(t_start: f64, _t_spike: f64, _t_end: f64, dts: f64, dsp: f64) -> EventRecord {
    EventRecord {
        boundary: crate::events::EventBoundary {
            start_idx: 0,
            spike_idx: 0,
            end_idx: 1,
            pre_steady_start: 0,
            truncated: false,
        },
        dts,
        dsp,
        pre_mean: 0.0,
        post_mean: dsp,
        timestamp: t_start,
        short_window: false,
        compound: false,
    }
}
