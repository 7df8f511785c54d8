//! Shared fixtures for the integration suites: the four-appliance household
//! (archetypes built from published per-appliance levels), deterministic mix
//! schedules, the end-to-end pipeline runner, and an exact joint-state MAP
//! oracle that is independent of the library's inference path.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use efhmm_core::clustering::ClusterConfig;
use efhmm_core::events::{detect_events, DetectorConfig};
use efhmm_core::inference::{disaggregate, DisaggregationResult, InferenceOptions};
use efhmm_core::model::{
    ApplianceModel, GaussianSig, HouseholdModel, PowerSeries, StateVector, TransitionEdge,
};
use efhmm_core::signatures::{extract_all, window_ssps, EventRecord};
use efhmm_core::synth::{generate_trace, mix_household, ApplianceArchetype, ArchetypeKind, ScriptStep};
use efhmm_core::training::{assemble_household, train_appliance};

pub const RATE_HZ: f64 = 50.0;

// ---------------------------------------------------------------------------
// Lifted-like archetypes
// ---------------------------------------------------------------------------

pub fn kettle_archetype() -> ApplianceArchetype {
    ApplianceArchetype {
        kind: ArchetypeKind::Motor,
        state_means: vec![0.4, 1027.1],
        state_sigmas: vec![0.6, 1.2],
        spike_ratio: 1053.8 / 1026.3,
        decay_seconds: 0.03,
        fluctuation: 0.0,
        level_jitter_w: 5.2,
    }
}

pub fn vacuum_archetype() -> ApplianceArchetype {
    ApplianceArchetype {
        kind: ArchetypeKind::Motor,
        state_means: vec![0.16, 1001.8],
        state_sigmas: vec![0.1, 1.2],
        spike_ratio: 2387.3 / 1001.8,
        decay_seconds: 0.02,
        fluctuation: 0.0,
        level_jitter_w: 17.3,
    }
}

pub fn refrigerator_archetype() -> ApplianceArchetype {
    ApplianceArchetype {
        kind: ArchetypeKind::Motor,
        state_means: vec![0.52, 42.03, 121.62, 156.60],
        state_sigmas: vec![0.21, 0.1, 1.2, 1.2],
        spike_ratio: 1.3,
        decay_seconds: 0.15,
        fluctuation: 0.0,
        level_jitter_w: 2.0,
    }
}

pub fn hair_dryer_archetype() -> ApplianceArchetype {
    ApplianceArchetype {
        kind: ArchetypeKind::Motor,
        state_means: vec![0.3, 80.7, 127.9, 687.7, 1371.1],
        state_sigmas: vec![0.1, 1.0, 1.0, 1.2, 1.2],
        spike_ratio: 1246.4 / 1194.1,
        decay_seconds: 0.05,
        fluctuation: 0.0,
        level_jitter_w: 8.0,
    }
}

pub fn lifted_archetypes() -> Vec<(&'static str, &'static str, ApplianceArchetype)> {
    vec![
        ("kettle", "Kettle", kettle_archetype()),
        ("vacuum", "Vacuum", vacuum_archetype()),
        ("fridge", "Refrigerator", refrigerator_archetype()),
        ("dryer", "Hair Dryer", hair_dryer_archetype()),
    ]
}

// ---------------------------------------------------------------------------
// Scripts
// ---------------------------------------------------------------------------

fn step(time_s: f64, target_state: usize) -> ScriptStep {
    ScriptStep {
        time_s,
        target_state,
    }
}

/// Training schedule per appliance: every intended edge visited repeatedly
/// with generous steady dwells.
pub fn training_script(id: &str) -> (Vec<ScriptStep>, f64) {
    let mut steps = Vec::new();
    match id {
        "kettle" | "vacuum" => {
            // 14 on/off rounds.
            let mut t = 12.0;
            for _ in 0..14 {
                steps.push(step(t, 1));
                steps.push(step(t + 11.0, 0));
                t += 24.0;
            }
            (steps, 12.0 + 24.0 * 14.0)
        }
        "fridge" => {
            // Alternating light rounds (0->1->0) and motor rounds
            // (0->2->3->2->0), 12 of each: the six-path chain.
            let mut t = 12.0;
            for _ in 0..12 {
                steps.push(step(t, 1));
                steps.push(step(t + 8.0, 0));
                t += 18.0;
                steps.push(step(t, 2));
                steps.push(step(t + 8.0, 3));
                steps.push(step(t + 16.0, 2));
                steps.push(step(t + 24.0, 0));
                t += 34.0;
            }
            (steps, 12.0 + 52.0 * 12.0)
        }
        "dryer" => {
            // Rounds of 0->1->3->4->0 and 0->3->0.
            let mut t = 12.0;
            for _ in 0..12 {
                steps.push(step(t, 1));
                steps.push(step(t + 8.0, 3));
                steps.push(step(t + 16.0, 4));
                steps.push(step(t + 24.0, 0));
                t += 36.0;
                steps.push(step(t, 3));
                steps.push(step(t + 8.0, 0));
                t += 18.0;
            }
            (steps, 12.0 + 54.0 * 12.0)
        }
        other => panic!("no training script for {other}"),
    }
}

/// Mix schedule over `MIX_DURATION_S`; kettle and vacuum never run at the
/// same time (every signature pairing stays separable for the full
/// algorithm).
pub const MIX_DURATION_S: f64 = 8000.0;

/// Books `t`, pushing it later in 7 s hops until it clears every already
/// booked transition by 5 s. Keeps events non-compound by construction.
fn place(booked: &mut Vec<f64>, t: f64) -> f64 {
    let mut t = t;
    while booked.iter().any(|&x| (x - t).abs() < 5.0) {
        t += 7.0;
    }
    booked.push(t);
    t
}

pub fn base_mix_schedule() -> BTreeMap<&'static str, Vec<ScriptStep>> {
    let mut m = BTreeMap::new();
    let mut booked: Vec<f64> = Vec::new();
    // Fridge: 26 motor cycles.
    let mut fridge = Vec::new();
    let mut t = 41.0;
    while t + 220.0 < MIX_DURATION_S {
        for (dt, target) in [(0.0, 2), (70.0, 3), (140.0, 2), (200.0, 0)] {
            fridge.push(step(place(&mut booked, t + dt), target));
        }
        t += 307.0;
    }
    m.insert("fridge", fridge);
    // Kettle: 8 activations of ~90 s.
    let mut kettle = Vec::new();
    for k in 0..8 {
        let on = place(&mut booked, 153.0 + 977.0 * k as f64);
        kettle.push(step(on, 1));
        kettle.push(step(place(&mut booked, on + 90.0), 0));
    }
    m.insert("kettle", kettle);
    // Vacuum: 5 activations of ~120 s, placed in kettle-free stretches.
    let mut vacuum = Vec::new();
    for v in 0..5 {
        let on = place(&mut booked, 497.0 + 1511.0 * v as f64);
        vacuum.push(step(on, 1));
        vacuum.push(step(place(&mut booked, on + 120.0), 0));
    }
    m.insert("vacuum", vacuum);
    // Dryer: 4 activations 0->3->4->0.
    let mut dryer = Vec::new();
    for d in 0..4 {
        let on = place(&mut booked, 837.0 + 1811.0 * d as f64);
        dryer.push(step(on, 3));
        dryer.push(step(place(&mut booked, on + 47.0), 4));
        dryer.push(step(place(&mut booked, on + 107.0), 0));
    }
    m.insert("dryer", dryer);
    m
}

/// Mix schedule with vacuum runs nested inside kettle runs, so each
/// vacuum-off happens while the kettle is drawing a nearby level and the
/// power-decreasing events become ambiguous between the two. Used by the
/// stage-2 ablation.
pub fn overlap_mix_schedule() -> BTreeMap<&'static str, Vec<ScriptStep>> {
    let mut m = BTreeMap::new();
    let mut booked: Vec<f64> = Vec::new();
    let mut fridge = Vec::new();
    let mut t = 41.0;
    while t + 220.0 < MIX_DURATION_S {
        for (dt, target) in [(0.0, 2), (70.0, 3), (140.0, 2), (200.0, 0)] {
            fridge.push(step(place(&mut booked, t + dt), target));
        }
        t += 307.0;
    }
    m.insert("fridge", fridge);
    // kettle on .. vacuum on .. vacuum off .. kettle off, five rounds.
    let mut kettle = Vec::new();
    let mut vacuum = Vec::new();
    for k in 0..5 {
        let base = 497.0 + 1511.0 * k as f64;
        let k_on = place(&mut booked, base);
        let v_on = place(&mut booked, base + 41.0);
        let v_off = place(&mut booked, base + 161.0);
        let k_off = place(&mut booked, base + 220.0);
        kettle.push(step(k_on, 1));
        kettle.push(step(k_off, 0));
        vacuum.push(step(v_on, 1));
        vacuum.push(step(v_off, 0));
    }
    m.insert("kettle", kettle);
    m.insert("vacuum", vacuum);
    let mut dryer = Vec::new();
    for d in 0..4 {
        let on = place(&mut booked, 837.0 + 1811.0 * d as f64);
        dryer.push(step(on, 3));
        dryer.push(step(place(&mut booked, on + 47.0), 4));
        dryer.push(step(place(&mut booked, on + 107.0), 0));
    }
    m.insert("dryer", dryer);
    m
}

/// Asserts no two scheduled transitions across appliances sit closer than
/// `min_gap_s` (keeps events non-compound by construction).
pub fn assert_schedule_gaps(schedule: &BTreeMap<&'static str, Vec<ScriptStep>>, min_gap_s: f64) {
    let mut times: Vec<f64> = schedule
        .values()
        .flat_map(|s| s.iter().map(|x| x.time_s))
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in times.windows(2) {
        assert!(
            w[1] - w[0] >= min_gap_s,
            "schedule events too close: {} and {}",
            w[0],
            w[1]
        );
    }
}

// ---------------------------------------------------------------------------
// Shared end-to-end fixture
// ---------------------------------------------------------------------------

pub struct MixCase {
    pub household: HouseholdModel,
    /// Ground-truth per-appliance traces, archetype order.
    pub truths: Vec<PowerSeries>,
    pub aggregate: PowerSeries,
    pub records: Vec<EventRecord>,
    pub ssps: Vec<f64>,
}

/// Trains the household once and synthesizes one mix case per schedule.
pub struct LiftedSetup {
    pub household: HouseholdModel,
    pub base: MixCase,
    pub overlap: MixCase,
}

static SETUP: OnceLock<LiftedSetup> = OnceLock::new();

pub fn lifted_setup() -> &'static LiftedSetup {
    SETUP.get_or_init(|| {
        let det = DetectorConfig::default();
        let clu = ClusterConfig::default();
        let archetypes = lifted_archetypes();

        let mut models = Vec::new();
        for (i, (id, name, arch)) in archetypes.iter().enumerate() {
            let (script, duration) = training_script(id);
            let trace =
                generate_trace(arch, &script, RATE_HZ, duration + 20.0, 1000 + i as u64).unwrap();
            models.push(train_appliance(&trace, &det, &clu, id, name).unwrap());
        }
        let household = assemble_household(models, det, clu, 2.576).unwrap();

        let base = build_mix_case(&household, &base_mix_schedule(), 7);
        let overlap = build_mix_case(&household, &overlap_mix_schedule(), 7);
        LiftedSetup {
            household: household.clone(),
            base,
            overlap,
        }
    })
}

pub fn build_mix_case(
    household: &HouseholdModel,
    schedule: &BTreeMap<&'static str, Vec<ScriptStep>>,
    seed: u64,
) -> MixCase {
    assert_schedule_gaps(schedule, 5.0);
    let det = household.detector;
    let mut truths = Vec::new();
    for (i, (id, _, arch)) in lifted_archetypes().iter().enumerate() {
        let script = schedule.get(id).cloned().unwrap_or_default();
        let trace =
            generate_trace(arch, &script, RATE_HZ, MIX_DURATION_S, seed * 100 + i as u64).unwrap();
        truths.push(trace);
    }
    let aggregate = mix_household(&truths).unwrap();
    let detection = detect_events(&aggregate, &det).unwrap();
    let records = extract_all(&aggregate, &detection, &det).unwrap();
    let ssps = window_ssps(&aggregate, &detection, &records, &det);
    MixCase {
        household: household.clone(),
        truths,
        aggregate,
        records,
        ssps,
    }
}

pub fn run_case(case: &MixCase, opts: &InferenceOptions) -> DisaggregationResult {
    disaggregate(
        &case.household,
        &case.records,
        &case.ssps,
        StateVector::all_off(case.household.num_appliances()),
        opts,
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Exact MAP oracle over joint state sequences
// ---------------------------------------------------------------------------

/// Log-density written independently of the library.
pub fn ln_normal(x: f64, mu: f64, sigma: f64) -> f64 {
    let s = if sigma < 0.1 { 0.1 } else { sigma };
    let z = (x - mu) / s;
    -(s * (2.0 * std::f64::consts::PI).sqrt()).ln() - 0.5 * z * z
}

fn joint_count(hh: &HouseholdModel) -> usize {
    hh.appliances.iter().map(|a| a.num_states()).product()
}

fn decode_joint(hh: &HouseholdModel, mut idx: usize) -> Vec<usize> {
    let mut states = Vec::with_capacity(hh.num_appliances());
    for a in &hh.appliances {
        states.push(idx % a.num_states());
        idx /= a.num_states();
    }
    states
}

fn encode_joint(hh: &HouseholdModel, states: &[usize]) -> usize {
    let mut idx = 0usize;
    for (a, &s) in hh.appliances.iter().zip(states).rev() {
        idx = idx * a.num_states() + s;
    }
    idx
}

/// Exhaustive maximizer of the summed event log-likelihood over all joint
/// state sequences in which exactly one appliance transitions per event
/// along an existing edge. Dynamic programming over the joint state space is
/// exhaustive here because the objective decomposes per event.
///
/// Returns the joint state after each event.
pub fn oracle_map_sequence(
    hh: &HouseholdModel,
    events: &[(f64, f64)], // (dts, dsp)
    ssps: &[f64],          // ssps[m+1] observed after event m
    initial: &[usize],
) -> Vec<Vec<usize>> {
    let total = joint_count(hh);
    let neg = f64::NEG_INFINITY;
    let mut dp = vec![neg; total];
    dp[encode_joint(hh, initial)] = 0.0;
    let mut parents: Vec<Vec<usize>> = Vec::new();

    for (m, &(dts, dsp)) in events.iter().enumerate() {
        let mut next = vec![neg; total];
        let mut parent = vec![usize::MAX; total];
        for (js, &score) in dp.iter().enumerate() {
            if score == neg {
                continue;
            }
            let states = decode_joint(hh, js);
            for (n, app) in hh.appliances.iter().enumerate() {
                for e in app.edges.iter().filter(|e| e.from_state == states[n]) {
                    let mut trans = e.prob.ln() + ln_normal(dsp, e.dsp.mu, e.dsp.sigma);
                    if let Some(b) = &e.dts {
                        trans += ln_normal(dts, b.mu, b.sigma);
                    }
                    let mut to_states = states.clone();
                    to_states[n] = e.to_state;
                    // Aggregate steady term: sum of independent Gaussians.
                    let mu: f64 = hh
                        .appliances
                        .iter()
                        .zip(&to_states)
                        .map(|(a, &s)| a.states[s].mu)
                        .sum();
                    let var: f64 = hh
                        .appliances
                        .iter()
                        .zip(&to_states)
                        .map(|(a, &s)| a.states[s].sigma * a.states[s].sigma)
                        .sum();
                    let emit = ln_normal(ssps[m + 1], mu, var.sqrt());
                    let js2 = encode_joint(hh, &to_states);
                    let cand = score + trans + emit;
                    if cand > next[js2] {
                        next[js2] = cand;
                        parent[js2] = js;
                    }
                }
            }
        }
        dp = next;
        parents.push(parent);
    }

    // Backtrack from the best final joint state.
    let mut best = 0usize;
    for (js, &s) in dp.iter().enumerate() {
        if s > dp[best] {
            best = js;
        }
    }
    let mut path = vec![best];
    for parent in parents.iter().rev() {
        best = parent[best];
        path.push(best);
    }
    path.reverse();
    path[1..].iter().map(|&js| decode_joint(hh, js)).collect()
}

// ---------------------------------------------------------------------------
// Random well-separated desk-scale households (for the oracle comparison)
// ---------------------------------------------------------------------------

pub struct DeskCase {
    pub household: HouseholdModel,
    pub events: Vec<(f64, f64)>,
    pub ssps: Vec<f64>,
    pub script: Vec<Vec<usize>>, // true joint state after each event
}

/// Builds a random household of chain appliances whose transition-signature
/// means are pairwise at least 6 sigma apart, plus a random event script
/// sampled from it.
pub fn random_desk_case(seed: u64) -> DeskCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let household = loop {
        let n = rng.gen_range(1..=3usize);
        let mut apps = Vec::new();
        for a in 0..n {
            let k = rng.gen_range(2..=3usize);
            let mut mus = vec![rng.gen_range(0.0..20.0)];
            for _ in 1..k {
                let gap = rng.gen_range(150.0..500.0);
                mus.push(mus.last().unwrap() + gap);
            }
            let states: Vec<GaussianSig> = mus
                .iter()
                .map(|&m| GaussianSig::new(m, rng.gen_range(1.0..4.0), 100))
                .collect();
            let mut edges = Vec::new();
            for i in 0..k - 1 {
                let up_prob = if i == 0 { 1.0 } else { rng.gen_range(0.3..0.7) };
                let dsp_up = mus[i + 1] - mus[i];
                let sig_dsp = rng.gen_range(1.5..4.0);
                let ratio = rng.gen_range(1.05..1.9);
                edges.push(TransitionEdge {
                    from_state: i,
                    to_state: i + 1,
                    prob: up_prob,
                    raw_prob: None,
                    dts: Some(GaussianSig::new(dsp_up * ratio, rng.gen_range(2.0..6.0), 50)),
                    dsp: GaussianSig::new(dsp_up, sig_dsp, 50),
                });
                let down_prob = if i + 1 == k - 1 { 1.0 } else { 1.0 - rng.gen_range(0.3..0.7) };
                edges.push(TransitionEdge {
                    from_state: i + 1,
                    to_state: i,
                    prob: down_prob,
                    raw_prob: None,
                    dts: None,
                    dsp: GaussianSig::new(-(dsp_up), rng.gen_range(1.5..4.0), 50),
                });
            }
            // Fix middle-state outgoing rows to sum to one.
            for s in 1..k.saturating_sub(1) {
                let outgoing: Vec<usize> = edges
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.from_state == s)
                    .map(|(i, _)| i)
                    .collect();
                let total: f64 = outgoing.iter().map(|&i| edges[i].prob).sum();
                for &i in &outgoing {
                    edges[i].prob /= total;
                }
            }
            apps.push(ApplianceModel {
                id: format!("a{a}"),
                name: format!("Appliance {a}"),
                states,
                edges,
            });
        }
        let hh = HouseholdModel {
            confidence_multiplier: 2.576,
            detector: DetectorConfig::default(),
            cluster: ClusterConfig::default(),
            appliances: apps,
        };
        hh.validate().expect("generator produces valid households");
        if signatures_separated(&hh, 6.0) {
            break hh;
        }
    };

    // Random walk script.
    let m_events = rng.gen_range(3..=8usize);
    let mut state: Vec<usize> = vec![0; household.num_appliances()];
    let mut events = Vec::new();
    let mut ssps = Vec::new();
    let mut script = Vec::new();
    let agg_mu = |hh: &HouseholdModel, st: &[usize]| -> (f64, f64) {
        let mu = hh
            .appliances
            .iter()
            .zip(st)
            .map(|(a, &s)| a.states[s].mu)
            .sum();
        let var: f64 = hh
            .appliances
            .iter()
            .zip(st)
            .map(|(a, &s)| a.states[s].sigma * a.states[s].sigma)
            .sum();
        (mu, var.sqrt())
    };
    let (mu0, sd0) = agg_mu(&household, &state);
    ssps.push(mu0 + rng.gen_range(-0.5..0.5) * sd0);
    for _ in 0..m_events {
        let state_now = state.clone();
        let choices: Vec<(usize, TransitionEdge)> = household
            .appliances
            .iter()
            .enumerate()
            .flat_map(|(n, a)| {
                let from = state_now[n];
                a.edges
                    .iter()
                    .filter(move |e| e.from_state == from)
                    .map(move |e| (n, e.clone()))
            })
            .collect();
        let (n, edge) = choices[rng.gen_range(0..choices.len())].clone();
        let dsp = edge.dsp.mu + rng.gen_range(-1.0..1.0) * edge.dsp.sigma;
        let dts = match &edge.dts {
            Some(b) => b.mu + rng.gen_range(-1.0..1.0) * b.sigma,
            None => 0.0,
        };
        state[n] = edge.to_state;
        let (mu, sd) = agg_mu(&household, &state);
        ssps.push(mu + rng.gen_range(-0.5..0.5) * sd);
        events.push((dts, dsp));
        script.push(state.clone());
    }
    DeskCase {
        household,
        events,
        ssps,
        script,
    }
}

/// All same-direction transition signature means pairwise at least
/// `factor` * (max sigma of the pair) apart, across the whole household.
fn signatures_separated(hh: &HouseholdModel, factor: f64) -> bool {
    let mut inc: Vec<(f64, f64, f64)> = Vec::new(); // (dts_mu, dsp_mu, max_sigma)
    let mut dec: Vec<(f64, f64)> = Vec::new(); // (dsp_mu, sigma)
    for a in &hh.appliances {
        for e in &a.edges {
            match &e.dts {
                Some(b) => inc.push((b.mu, e.dsp.mu, b.sigma.max(e.dsp.sigma))),
                None => dec.push((e.dsp.mu, e.dsp.sigma)),
            }
        }
    }
    for i in 0..inc.len() {
        for j in i + 1..inc.len() {
            let d = (inc[i].0 - inc[j].0)
                .abs()
                .max((inc[i].1 - inc[j].1).abs());
            if d < factor * inc[i].2.max(inc[j].2) {
                return false;
            }
        }
    }
    for i in 0..dec.len() {
        for j in i + 1..dec.len() {
            if (dec[i].0 - dec[j].0).abs() < factor * dec[i].1.max(dec[j].1) {
                return false;
            }
        }
    }
    true
}
