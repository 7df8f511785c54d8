//! Supervised training of sparse appliance HMMs from per-appliance traces.
//!
//! The pipeline is detect -> extract -> cluster segment means into states ->
//! count transitions -> fit Gaussians. Only observed transitions become
//! edges. Transition probabilities are per-row normalized so every state's
//! outgoing probabilities sum to 1; the unnormalized count over the whole
//! trace (count / total transitions) is retained on each edge as a
//! diagnostic. All Gaussian fits use population formulas (divide by n) with
//! the sigma floor.

use std::collections::BTreeMap;

use crate::clustering::{mean_shift_states, ClusterConfig};
use crate::error::{Error, Result};
use crate::events::{detect_events, DetectorConfig};
use crate::model::{
    ApplianceModel, GaussianSig, HouseholdModel, PowerSeries, TransitionEdge,
};
use crate::signatures::{extract_all, EventRecord};

/// Segments farther than this many bandwidths from every centroid are
/// excluded from transition counts and SSP fits.
const OUTLIER_BANDWIDTHS: f64 = 3.0;

/// Learns one appliance's sparse HMM from a labeled (single-appliance) trace.
pub fn train_appliance(
    series: &PowerSeries,
    detector: &DetectorConfig,
    cluster: &ClusterConfig,
    id: &str,
    name: &str,
) -> Result<ApplianceModel> {
    let detection = detect_events(series, detector)?;
    let records = extract_all(series, &detection, detector)?;
    if records.is_empty() {
        return Err(Error::NoStateChange(id.to_string()));
    }

    let seg_means: Vec<f64> = detection.segments.iter().map(|s| s.mean.max(0.0)).collect();
    let clusters = mean_shift_states(&seg_means, cluster)?;
    if clusters.len() < 2 {
        return Err(Error::NoStateChange(id.to_string()));
    }

    // Nearest-centroid state per segment; distant outliers excluded.
    let assignment: Vec<Option<usize>> = seg_means
        .iter()
        .map(|&m| {
            let (mut best, mut best_d) = (0usize, f64::INFINITY);
            for (k, c) in clusters.iter().enumerate() {
                let d = (m - c.centroid_w).abs();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            let limit = OUTLIER_BANDWIDTHS * cluster.bandwidth(clusters[best].centroid_w);
            (best_d <= limit).then_some(best)
        })
        .collect();

    // Transition counts and per-edge signature samples, keyed (from, to).
    let mut edge_obs: BTreeMap<(usize, usize), Vec<&EventRecord>> = BTreeMap::new();
    let mut total_transitions = 0usize;
    for (m, record) in records.iter().enumerate() {
        let (Some(from), Some(to)) = (assignment[m], assignment[m + 1]) else {
            continue;
        };
        if from == to {
            // An event whose surrounding segments land in the same cluster
            // carries no chain information; the chain has no self-edges.
            continue;
        }
        edge_obs.entry((from, to)).or_default().push(record);
        total_transitions += 1;
    }
    if total_transitions == 0 {
        return Err(Error::NoStateChange(id.to_string()));
    }

    let k = clusters.len();
    let mut row_counts = vec![0usize; k];
    for (&(from, _), obs) in &edge_obs {
        row_counts[from] += obs.len();
    }

    let mut edges = Vec::with_capacity(edge_obs.len());
    for (&(from, to), obs) in &edge_obs {
        let dsps: Vec<f64> = obs.iter().map(|r| r.dsp).collect();
        let dsp = GaussianSig::fit(&dsps)?;
        let dts = if dsp.mu > 0.0 {
            let dtss: Vec<f64> = obs.iter().map(|r| r.dts).collect();
            Some(GaussianSig::fit(&dtss)?)
        } else {
            None
        };
        edges.push(TransitionEdge {
            from_state: from,
            to_state: to,
            prob: obs.len() as f64 / row_counts[from] as f64,
            raw_prob: Some(obs.len() as f64 / total_transitions as f64),
            dts,
            dsp,
        });
    }

    // SSP emission per state from raw in-segment samples (steady only;
    // transient samples never enter these fits).
    let mut states = Vec::with_capacity(k);
    for (state, c) in clusters.iter().enumerate() {
        let mut samples: Vec<f64> = Vec::new();
        for &seg_idx in &c.members {
            if assignment[seg_idx] == Some(state) {
                let seg = &detection.segments[seg_idx];
                samples.extend_from_slice(&series.samples()[seg.start_idx..seg.end_idx]);
            }
        }
        if samples.is_empty() {
            // Every member was an outlier; fall back to the members anyway.
            for &seg_idx in &c.members {
                let seg = &detection.segments[seg_idx];
                samples.extend_from_slice(&series.samples()[seg.start_idx..seg.end_idx]);
            }
        }
        states.push(GaussianSig::fit(&samples)?);
    }

    // States must be ascending by fitted mean; remap edges if the raw-sample
    // fits reordered anything relative to the centroids.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| states[a].mu.partial_cmp(&states[b].mu).unwrap());
    let mut rank = vec![0usize; k];
    for (new_idx, &old_idx) in order.iter().enumerate() {
        rank[old_idx] = new_idx;
    }
    let states: Vec<GaussianSig> = order.iter().map(|&i| states[i]).collect();
    for e in &mut edges {
        e.from_state = rank[e.from_state];
        e.to_state = rank[e.to_state];
    }
    edges.sort_by_key(|e| (e.from_state, e.to_state));

    let model = ApplianceModel {
        id: id.to_string(),
        name: name.to_string(),
        states,
        edges,
    };
    model.validate()?;
    Ok(model)
}

/// Combines per-appliance models into a household model.
pub fn assemble_household(
    models: Vec<ApplianceModel>,
    detector: DetectorConfig,
    cluster: ClusterConfig,
    confidence_multiplier: f64,
) -> Result<HouseholdModel> {
    let household = HouseholdModel {
        confidence_multiplier,
        detector,
        cluster,
        appliances: models,
    };
    household.validate()?;
    Ok(household)
}
