//! Modified 1-D mean shift over steady-segment means.
//!
//! Two departures from textbook mean shift, both exploiting how appliance
//! state powers behave: the bandwidth grows with the power level
//! (higher-power states spread wider), and near-duplicate centroids are
//! merged every iteration instead of only at the end. The kernel is flat, so
//! one shift step moves a centroid to the mean of the points inside its
//! bandwidth. No randomness anywhere: fixed input and config give
//! bit-identical output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Bandwidth floor (watts).
    pub h_min_w: f64,
    /// Bandwidth slope: bandwidth(p) = max(h_min_w, beta * p).
    pub beta: f64,
    /// Centroids closer than merge_factor * min(bandwidth) are merged.
    pub merge_factor: f64,
    /// Convergence threshold on centroid movement (watts).
    pub tol_w: f64,
    pub max_iter: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            h_min_w: 5.0,
            beta: 0.05,
            merge_factor: 0.5,
            tol_w: 0.01,
            max_iter: 500,
        }
    }
}

impl ClusterConfig {
    pub fn bandwidth(&self, p: f64) -> f64 {
        (self.beta * p).max(self.h_min_w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.h_min_w > 0.0
            && self.beta >= 0.0
            && self.merge_factor > 0.0
            && self.tol_w > 0.0
            && self.max_iter > 0
            && [self.h_min_w, self.beta, self.merge_factor, self.tol_w]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::validation("cluster config", "all fields must be positive and finite"))
        }
    }
}

/// One discovered state cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub centroid_w: f64,
    /// Indices into the original input, ascending.
    pub members: Vec<usize>,
}

#[derive(Clone, Copy)]
struct Centroid {
    pos: f64,
    weight: f64,
}

/// Clusters steady-segment means into appliance states.
///
/// Returns clusters sorted ascending by centroid; every input point is
/// assigned to exactly one cluster (nearest centroid, ties to the lower one).
/// The state count K is the number of returned clusters.
pub fn mean_shift_states(segment_means: &[f64], cfg: &ClusterConfig) -> Result<Vec<Cluster>> {
    cfg.validate()?;
    if segment_means.is_empty() {
        return Err(Error::EmptyInput("mean shift"));
    }
    for (index, &value) in segment_means.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteSample { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeInput { index, value });
        }
    }

    // All work happens on the sorted copy so that input order never affects
    // floating-point summation order.
    let mut sorted: Vec<f64> = segment_means.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Seed one centroid per distinct value, weighted by multiplicity.
    let mut centroids: Vec<Centroid> = Vec::new();
    for &v in &sorted {
        match centroids.last_mut() {
            Some(c) if c.pos == v => c.weight += 1.0,
            _ => centroids.push(Centroid { pos: v, weight: 1.0 }),
        }
    }

    for _ in 0..cfg.max_iter {
        let mut movement = 0.0f64;
        for c in &mut centroids {
            let h = cfg.bandwidth(c.pos);
            let lo = sorted.partition_point(|&v| v < c.pos - h);
            let hi = sorted.partition_point(|&v| v <= c.pos + h);
            if hi > lo {
                let new_pos = sorted[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                movement = movement.max((new_pos - c.pos).abs());
                c.pos = new_pos;
            }
        }
        merge_close(&mut centroids, cfg);
        if movement < cfg.tol_w {
            break;
        }
    }
    merge_close(&mut centroids, cfg);

    // Assign every original point to its nearest centroid.
    let mut clusters: Vec<Cluster> = centroids
        .iter()
        .map(|c| Cluster {
            centroid_w: c.pos,
            members: Vec::new(),
        })
        .collect();
    for (i, &v) in segment_means.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, c) in clusters.iter().enumerate() {
            let d = (v - c.centroid_w).abs();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        clusters[best].members.push(i);
    }
    clusters.retain(|c| !c.members.is_empty());
    Ok(clusters)
}

/// Single left-to-right sweep merging centroids closer than
/// merge_factor * min(bandwidth); merged position is the weight-averaged mean.
fn merge_close(centroids: &mut Vec<Centroid>, cfg: &ClusterConfig) {
    centroids.sort_by(|a, b| a.pos.partial_cmp(&b.pos).unwrap());
    let mut merged: Vec<Centroid> = Vec::with_capacity(centroids.len());
    for &c in centroids.iter() {
        match merged.last_mut() {
            Some(prev)
                if c.pos - prev.pos
                    < cfg.merge_factor * cfg.bandwidth(prev.pos).min(cfg.bandwidth(c.pos)) =>
            {
                let w = prev.weight + c.weight;
                prev.pos = (prev.pos * prev.weight + c.pos * c.weight) / w;
                prev.weight = w;
            }
            _ => merged.push(c),
        }
    }
    *centroids = merged;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Normal;

    fn planted(means: &[f64], per_cluster: usize, noise: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, noise).unwrap();
        let mut out = Vec::new();
        for &m in means {
            for _ in 0..per_cluster {
                out.push((m + dist.sample(&mut rng)).max(0.0));
            }
        }
        out.shuffle(&mut rng);
        out
    }

    #[test]
    fn refrigerator_levels_recovered() {
        let truth = [0.52, 42.0, 121.0, 156.0];
        let data = planted(&truth, 25, 2.0, 7);
        let clusters = mean_shift_states(&data, &ClusterConfig::default()).unwrap();
        assert_eq!(clusters.len(), 4, "{clusters:?}");
        for (c, t) in clusters.iter().zip(truth) {
            assert!((c.centroid_w - t).abs() < 5.0, "{} vs {}", c.centroid_w, t);
        }
    }

    #[test]
    fn hair_dryer_levels_recovered() {
        let truth = [0.23, 178.0, 680.0, 1230.0];
        let data = planted(&truth, 25, 2.0, 11);
        let clusters = mean_shift_states(&data, &ClusterConfig::default()).unwrap();
        assert_eq!(clusters.len(), 4);
        for (c, t) in clusters.iter().zip(truth) {
            assert!((c.centroid_w - t).abs() < 5.0);
        }
    }

    #[test]
    fn degenerate_repeated_value() {
        let clusters = mean_shift_states(&[100.0, 100.0, 100.0], &ClusterConfig::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].centroid_w, 100.0);
        assert_eq!(clusters[0].members, vec![0, 1, 2]);
    }

    #[test]
    fn empty_and_negative_inputs_rejected() {
        assert!(mean_shift_states(&[], &ClusterConfig::default()).is_err());
        assert!(mean_shift_states(&[5.0, -1.0], &ClusterConfig::default()).is_err());
    }

    #[test]
    fn permutation_invariance_is_bitwise() {
        let cfg = ClusterConfig::default();
        let data = planted(&[1.0, 90.0, 400.0], 20, 2.0, 3);
        let a = mean_shift_states(&data, &cfg).unwrap();
        let mut shuffled: Vec<(usize, f64)> = data.iter().cloned().enumerate().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        shuffled.shuffle(&mut rng);
        let permuted: Vec<f64> = shuffled.iter().map(|&(_, v)| v).collect();
        let b = mean_shift_states(&permuted, &cfg).unwrap();
        let ca: Vec<f64> = a.iter().map(|c| c.centroid_w).collect();
        let cb: Vec<f64> = b.iter().map(|c| c.centroid_w).collect();
        assert_eq!(ca, cb); // exact, not approximate
    }

    #[test]
    fn centroids_respect_merge_distance() {
        let cfg = ClusterConfig::default();
        let data = planted(&[0.5, 40.0, 120.0, 900.0], 30, 1.5, 5);
        let clusters = mean_shift_states(&data, &cfg).unwrap();
        for pair in clusters.windows(2) {
            let min_h = cfg.bandwidth(pair[0].centroid_w).min(cfg.bandwidth(pair[1].centroid_w));
            assert!(pair[1].centroid_w - pair[0].centroid_w >= cfg.merge_factor * min_h);
        }
    }

    proptest::proptest! {
        /// Planted clusters separated by more than 3x the larger bandwidth
        /// are never merged.
        #[test]
        fn separation_soundness(seed in 0u64..500) {
            let cfg = ClusterConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(2..=4usize);
            let mut means = Vec::new();
            let mut p = rng.gen_range(0.0..30.0f64);
            for _ in 0..k {
                means.push(p);
                let h = cfg.bandwidth(p);
                p += 3.0 * h.max(cfg.bandwidth(p + 3.0 * h)) + rng.gen_range(5.0..200.0);
            }
            let mut data = Vec::new();
            for &m in &means {
                let spread = cfg.bandwidth(m) * 0.4;
                for _ in 0..15 {
                    data.push((m + rng.gen_range(-spread..spread)).max(0.0));
                }
            }
            data.shuffle(&mut rng);
            let clusters = mean_shift_states(&data, &cfg).unwrap();
            proptest::prop_assert_eq!(clusters.len(), k);
        }
    }
}
