//! Two-stage event-driven disaggregation.
//!
//! Inference runs once per detected event, never per sample, so cost is
//! linear in the event count. For each event:
//!
//! - **Stage 1** enumerates, for every appliance, the outgoing edges of its
//!   current state whose direction matches the sign of the event's DSP, and
//!   scores each candidate by `ln prob + ln N(dsp; edge.dsp)` plus — on
//!   increasing edges only — `ln N(dts; edge.dts)`. Candidates are ranked
//!   best-first.
//! - **Stage 2** walks the ranking and commits the first candidate whose
//!   tentative joint state is consistent with the observed aggregate steady
//!   level: the residual between the aggregate SSP and the sum of state
//!   means must lie within `confidence_multiplier * sum(sigma)`. If no
//!   candidate passes, the one with the smallest residual is committed and
//!   flagged unconfirmed; if the direction filter leaves no candidates at
//!   all, the event is skipped and the state carries over.
//!
//! The per-event loop is sequential by nature (state carries forward);
//! scoring within an event is order-independent and resolved by a stable,
//! documented tie-break so output never depends on evaluation order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Direction, HouseholdModel, PowerSeries, StateVector};
use crate::signatures::EventRecord;

/// One scored stage-1 candidate: appliance `appliance` moving along
/// `from_state -> to_state`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub appliance: usize,
    pub from_state: usize,
    pub to_state: usize,
    /// Log-probability score (dimensionless).
    pub score: f64,
}

/// Outcome of stage 2 for one tentative joint state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confirmation {
    pub ok: bool,
    /// Aggregate SSP minus the sum of tentative state means (watts).
    pub residual: f64,
    /// `confidence_multiplier * sum(sigma)` over the tentative states (watts).
    pub bound: f64,
}

/// Committed decision for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAssignment {
    pub event: usize,
    /// `None` when the event was skipped (no direction-matching candidate).
    pub candidate: Option<Candidate>,
    pub residual: f64,
    pub bound: f64,
    pub confirmed: bool,
    /// 1-based rank of the committed candidate in the stage-1 ordering.
    pub rank_used: Option<usize>,
}

/// Ablation switches; both stages enabled by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceOptions {
    /// Include the DTS likelihood term in stage-1 scores.
    pub use_dts: bool,
    /// Run stage-2 confirmation (when off, rank 1 commits unconditionally).
    pub use_confirmation: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            use_dts: true,
            use_confirmation: true,
        }
    }
}

/// Full disaggregation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisaggregationResult {
    pub assignments: Vec<EventAssignment>,
    /// Per-appliance state index per steady period (M events give M+1
    /// periods; entry 0 is the initial state).
    pub trajectories: Vec<Vec<usize>>,
    /// Per-appliance reconstructed power; empty until
    /// [`reconstruct_power`] fills it.
    #[serde(skip)]
    pub estimated_power: Vec<PowerSeries>,
    pub unconfirmed_events: usize,
    pub skipped_events: usize,
    /// Stage-1 candidate evaluations across all events (complexity counter).
    pub candidates_evaluated: usize,
}

/// Stage 1: scored, direction-filtered candidates for one event, best first.
///
/// Ties break deterministically toward the lower appliance index, then the
/// lower target state.
pub fn rank_candidates(
    household: &HouseholdModel,
    state: &StateVector,
    event: &EventRecord,
    opts: &InferenceOptions,
) -> Vec<Candidate> {
    let wanted = if event.dsp > 0.0 {
        Direction::Increasing
    } else {
        Direction::Decreasing
    };
    let mut candidates = Vec::new();
    for (n, app) in household.appliances.iter().enumerate() {
        for edge in app.outgoing(state.0[n]) {
            if edge.direction() != wanted {
                continue;
            }
            let mut score = edge.prob.ln() + edge.dsp.log_pdf(event.dsp);
            if opts.use_dts {
                if let Some(dts) = &edge.dts {
                    score += dts.log_pdf(event.dts);
                }
            }
            candidates.push(Candidate {
                appliance: n,
                from_state: edge.from_state,
                to_state: edge.to_state,
                score,
            });
        }
    }
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.appliance.cmp(&b.appliance))
            .then(a.to_state.cmp(&b.to_state))
    });
    candidates
}

/// Stage 2: checks a tentative joint state against the aggregate steady
/// level. Two-sided: |residual| must not exceed the bound.
pub fn confirm(
    household: &HouseholdModel,
    tentative: &StateVector,
    aggregate_ssp: f64,
) -> Confirmation {
    let mut mu_sum = 0.0;
    let mut sigma_sum = 0.0;
    for (app, &s) in household.appliances.iter().zip(&tentative.0) {
        mu_sum += app.states[s].mu;
        sigma_sum += app.states[s].sigma;
    }
    let residual = aggregate_ssp - mu_sum;
    let bound = household.confidence_multiplier * sigma_sum;
    Confirmation {
        ok: residual.abs() <= bound,
        residual,
        bound,
    }
}

/// Outcome of committing one event against a ranked candidate list; shared
/// by the in-process loop and the cloud session so both make identical
/// decisions.
pub(crate) fn commit_event(
    household: &HouseholdModel,
    state: &mut StateVector,
    ranked: &[Candidate],
    post_ssp: f64,
    opts: &InferenceOptions,
) -> (Option<Candidate>, Confirmation, Option<usize>) {
    if ranked.is_empty() {
        let conf = confirm(household, state, post_ssp);
        return (None, conf, None);
    }
    let mut walked: Vec<(usize, Candidate, Confirmation)> = Vec::new();
    for (i, cand) in ranked.iter().enumerate() {
        let mut tentative = state.clone();
        tentative.0[cand.appliance] = cand.to_state;
        let conf = confirm(household, &tentative, post_ssp);
        if conf.ok || !opts.use_confirmation {
            state.0[cand.appliance] = cand.to_state;
            return (Some(*cand), conf, Some(i + 1));
        }
        walked.push((i + 1, *cand, conf));
    }
    // Nothing passed: fall back to the smallest residual, flagged unconfirmed.
    let (rank, cand, conf) = walked
        .into_iter()
        .min_by(|a, b| a.2.residual.abs().partial_cmp(&b.2.residual.abs()).unwrap())
        .expect("ranked non-empty");
    state.0[cand.appliance] = cand.to_state;
    (Some(cand), conf, Some(rank))
}

/// Runs the two-stage loop over a sequence of events.
///
/// `steady_ssps` interleaves the events: entry 0 is the initial steady
/// period's level, entry m+1 the level right after event m.
pub fn disaggregate(
    household: &HouseholdModel,
    events: &[EventRecord],
    steady_ssps: &[f64],
    initial: StateVector,
    opts: &InferenceOptions,
) -> Result<DisaggregationResult> {
    household.validate()?;
    initial.validate_for(household)?;
    if steady_ssps.len() != events.len() + 1 {
        return Err(Error::LengthMismatch {
            what: "steady_ssps must be events + 1",
            left: steady_ssps.len(),
            right: events.len() + 1,
        });
    }
    let n = household.num_appliances();
    let mut state = initial;
    let mut trajectories: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut v = Vec::with_capacity(events.len() + 1);
            v.push(state.0[i]);
            v
        })
        .collect();
    let mut assignments = Vec::with_capacity(events.len());
    let mut unconfirmed = 0usize;
    let mut skipped = 0usize;
    let mut evaluated = 0usize;

    for (m, event) in events.iter().enumerate() {
        let ranked = rank_candidates(household, &state, event, opts);
        evaluated += ranked.len();
        let (candidate, conf, rank_used) =
            commit_event(household, &mut state, &ranked, steady_ssps[m + 1], opts);
        match &candidate {
            None => skipped += 1,
            Some(_) if !conf.ok => unconfirmed += 1,
            _ => {}
        }
        assignments.push(EventAssignment {
            event: m,
            candidate,
            residual: conf.residual,
            bound: conf.bound,
            confirmed: candidate.is_some() && conf.ok,
            rank_used,
        });
        for (i, traj) in trajectories.iter_mut().enumerate() {
            traj.push(state.0[i]);
        }
    }

    Ok(DisaggregationResult {
        assignments,
        trajectories,
        estimated_power: Vec::new(),
        unconfirmed_events: unconfirmed,
        skipped_events: skipped,
        candidates_evaluated: evaluated,
    })
}

/// Rebuilds per-appliance power series from the committed trajectories: each
/// appliance holds its state mean over every steady period and holds its
/// pre-event value through each transient (the aggregate spike is not
/// attributed to anyone).
pub fn reconstruct_power(
    household: &HouseholdModel,
    result: &DisaggregationResult,
    events: &[EventRecord],
    num_samples: usize,
    sample_rate_hz: f64,
    start_time: f64,
) -> Result<Vec<PowerSeries>> {
    if result.assignments.len() != events.len() {
        return Err(Error::LengthMismatch {
            what: "assignments vs events",
            left: result.assignments.len(),
            right: events.len(),
        });
    }
    let mut out = Vec::with_capacity(household.num_appliances());
    for (n, app) in household.appliances.iter().enumerate() {
        let traj = &result.trajectories[n];
        let mut samples = vec![0.0f64; num_samples];
        for (period, &state) in traj.iter().enumerate() {
            let seg_start = if period == 0 {
                0
            } else {
                events[period - 1].boundary.end_idx
            };
            // The steady period plus the following transient both carry this
            // period's state mean.
            let seg_end = if period < events.len() {
                events[period].boundary.end_idx
            } else {
                num_samples
            };
            let mu = app.states[state].mu;
            for s in samples.iter_mut().take(seg_end.min(num_samples)).skip(seg_start) {
                *s = mu;
            }
        }
        out.push(PowerSeries::new(samples, sample_rate_hz, start_time)?);
    }
    Ok(out)
}
