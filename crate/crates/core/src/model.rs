//! Domain types: power series, Gaussian signatures, sparse per-appliance
//! HMMs, and the household-level model, plus JSON (de)serialization.
//!
//! A household model is an ordered collection of appliance models. Each
//! appliance model is a sparse chain: `states` holds one steady-state-power
//! Gaussian per state (sorted ascending by mean, state 0 = OFF), `edges`
//! holds only the transitions observed in training, each carrying a
//! transition probability, a DSP Gaussian, and — for power-increasing edges
//! only — a DTS Gaussian. Power-decreasing transitions have no transient
//! spike, so their DTS is represented by an absent field rather than a
//! zero-width Gaussian.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterConfig;
use crate::error::{Error, Result};
use crate::events::DetectorConfig;

/// Version tag written into every model document.
pub const MODEL_SCHEMA: &str = "efhmm-model/1";

/// Lower bound applied to every fitted standard deviation (watts).
/// Prevents zero-variance likelihood singularities.
pub const SIGMA_FLOOR_W: f64 = 0.1;

/// Tolerance for the row-stochasticity check on outgoing edge probabilities.
pub const ROW_SUM_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// PowerSeries
// ---------------------------------------------------------------------------

/// Uniformly sampled active-power measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    start_time: f64,
}

impl PowerSeries {
    /// Builds a series, rejecting non-finite samples and non-positive rates.
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, start_time: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidSampleRate(sample_rate_hz));
        }
        if samples.is_empty() {
            return Err(Error::EmptyInput("power series"));
        }
        if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            start_time,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Epoch timestamp of sample `idx`.
    pub fn timestamp_of(&self, idx: usize) -> f64 {
        self.start_time + idx as f64 / self.sample_rate_hz
    }
}

// ---------------------------------------------------------------------------
// Gaussian signature
// ---------------------------------------------------------------------------

/// A fitted Gaussian over watts, with the sample count the fit used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSig {
    pub mu: f64,
    pub sigma: f64,
    pub count: u64,
}

impl GaussianSig {
    pub fn new(mu: f64, sigma: f64, count: u64) -> Self {
        Self { mu, sigma, count }
    }

    /// Population fit (divide by n, not n-1), with the sigma floor applied.
    /// A single-sample fit degenerates to sigma = floor.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("gaussian fit"));
        }
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let sigma = var.sqrt().max(SIGMA_FLOOR_W);
        Ok(Self {
            mu,
            sigma,
            count: values.len() as u64,
        })
    }

    /// Natural log of the Gaussian density at `x`.
    pub fn log_pdf(&self, x: f64) -> f64 {
        let sigma = self.sigma.max(SIGMA_FLOOR_W);
        let z = (x - self.mu) / sigma;
        -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * z * z
    }

    fn validate(&self, context: &str) -> Result<()> {
        if !self.mu.is_finite() || !self.sigma.is_finite() {
            return Err(Error::validation(context, "non-finite Gaussian parameter"));
        }
        if self.sigma < SIGMA_FLOOR_W {
            return Err(Error::validation(
                context,
                format!("sigma {} below floor {}", self.sigma, SIGMA_FLOOR_W),
            ));
        }
        if self.count < 1 {
            return Err(Error::validation(context, "count must be >= 1"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Transition edges
// ---------------------------------------------------------------------------

/// Direction of a transition, derived from the sign of its DSP mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// One observed transition in an appliance chain.
///
/// `dts` is present exactly when the edge is power-increasing; a
/// power-decreasing transition reaches the next state without a transient
/// spike, so it carries no DTS distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEdge {
    pub from_state: usize,
    pub to_state: usize,
    /// Row-normalized transition probability, in (0, 1].
    pub prob: f64,
    /// Diagnostic only: count divided by the total transition count of the
    /// whole training trace (not row-stochastic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dts: Option<GaussianSig>,
    pub dsp: GaussianSig,
}

impl TransitionEdge {
    pub fn direction(&self) -> Direction {
        if self.dsp.mu > 0.0 {
            Direction::Increasing
        } else {
            Direction::Decreasing
        }
    }

    /// True when the edge was fitted from a single observation.
    pub fn low_support(&self) -> bool {
        self.dsp.count <= 1
    }
}

// ---------------------------------------------------------------------------
// Appliance model
// ---------------------------------------------------------------------------

/// Sparse HMM for one appliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceModel {
    pub id: String,
    pub name: String,
    /// SSP emission Gaussians, one per state, ascending by mean.
    /// State 0 is the OFF/lowest-power state.
    pub states: Vec<GaussianSig>,
    pub edges: Vec<TransitionEdge>,
}

impl ApplianceModel {
    /// Number of states K.
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Ratio of existing edges to the K*K fully connected chain, in (0, 1].
    pub fn sparsity_level(&self) -> f64 {
        let k = self.states.len() as f64;
        self.edges.len() as f64 / (k * k)
    }

    /// Outgoing edges of `state`.
    pub fn outgoing(&self, state: usize) -> impl Iterator<Item = &TransitionEdge> {
        self.edges.iter().filter(move |e| e.from_state == state)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = format!("appliance {}", self.id);
        if self.id.is_empty() {
            return Err(Error::validation(&ctx, "empty id"));
        }
        if self.states.is_empty() {
            return Err(Error::validation(&ctx, "no states"));
        }
        for (i, s) in self.states.iter().enumerate() {
            s.validate(&format!("{ctx} state {i}"))?;
        }
        for w in self.states.windows(2) {
            if w[0].mu > w[1].mu {
                return Err(Error::validation(&ctx, "states not sorted ascending by mu"));
            }
        }
        if self.edges.is_empty() {
            return Err(Error::validation(&ctx, "no transition edges (sparsity level must be positive)"));
        }
        let k = self.states.len();
        let mut row_sums = vec![0.0f64; k];
        let mut seen = HashSet::new();
        for e in &self.edges {
            let ectx = format!("{ctx} edge {}->{}", e.from_state, e.to_state);
            if e.from_state == e.to_state {
                return Err(Error::validation(&ectx, "self-transition not allowed"));
            }
            if e.from_state >= k || e.to_state >= k {
                return Err(Error::validation(&ectx, format!("state index out of range (K={k})")));
            }
            if !seen.insert((e.from_state, e.to_state)) {
                return Err(Error::validation(&ectx, "duplicate edge"));
            }
            if !(e.prob > 0.0 && e.prob <= 1.0) {
                return Err(Error::validation(&ectx, format!("prob {} not in (0, 1]", e.prob)));
            }
            e.dsp.validate(&format!("{ectx} dsp"))?;
            if e.dsp.mu == 0.0 {
                return Err(Error::validation(&ectx, "dsp mean must be nonzero"));
            }
            match (e.direction(), &e.dts) {
                (Direction::Increasing, None) => {
                    return Err(Error::validation(&ectx, "increasing edge missing dts"));
                }
                (Direction::Decreasing, Some(_)) => {
                    return Err(Error::validation(&ectx, "decreasing edge must not carry dts"));
                }
                (Direction::Increasing, Some(dts)) => dts.validate(&format!("{ectx} dts"))?,
                (Direction::Decreasing, None) => {}
            }
            row_sums[e.from_state] += e.prob;
        }
        for (i, sum) in row_sums.iter().enumerate() {
            if *sum > 0.0 && (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::validation(
                    &ctx,
                    format!("outgoing probabilities of state {i} sum to {sum}, expected 1"),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Household model
// ---------------------------------------------------------------------------

/// The household-level model: an ordered collection of appliance models plus
/// the configuration both pipeline halves must agree on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdModel {
    /// Quantile factor for the stage-2 steady-state confirmation bound
    /// (2.576 covers 99% of a Gaussian).
    pub confidence_multiplier: f64,
    pub detector: DetectorConfig,
    pub cluster: ClusterConfig,
    pub appliances: Vec<ApplianceModel>,
}

impl HouseholdModel {
    /// Household with default detector/cluster configuration.
    pub fn new(appliances: Vec<ApplianceModel>) -> Result<Self> {
        let model = Self {
            confidence_multiplier: 2.576,
            detector: DetectorConfig::default(),
            cluster: ClusterConfig::default(),
            appliances,
        };
        model.validate()?;
        Ok(model)
    }

    /// Steady-window length n_w in seconds (shared with the detector).
    pub fn window_seconds(&self) -> f64 {
        self.detector.window_seconds
    }

    pub fn num_appliances(&self) -> usize {
        self.appliances.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.appliances.is_empty() {
            return Err(Error::validation("household", "appliance list is empty"));
        }
        if !(self.confidence_multiplier.is_finite() && self.confidence_multiplier > 0.0) {
            return Err(Error::validation("household", "confidence_multiplier must be positive"));
        }
        self.detector.validate()?;
        self.cluster.validate()?;
        let mut ids = HashSet::new();
        for a in &self.appliances {
            a.validate()?;
            if !ids.insert(a.id.as_str()) {
                return Err(Error::DuplicateApplianceId(a.id.clone()));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// State vector
// ---------------------------------------------------------------------------

/// Per-appliance current state indices, aligned with
/// `HouseholdModel::appliances`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<usize>);

impl StateVector {
    /// All appliances at state 0 (OFF).
    pub fn all_off(num_appliances: usize) -> Self {
        Self(vec![0; num_appliances])
    }

    pub fn validate_for(&self, household: &HouseholdModel) -> Result<()> {
        if self.0.len() != household.appliances.len() {
            return Err(Error::LengthMismatch {
                what: "state vector vs appliances",
                left: self.0.len(),
                right: household.appliances.len(),
            });
        }
        for (n, (&idx, app)) in self.0.iter().zip(&household.appliances).enumerate() {
            if idx >= app.num_states() {
                return Err(Error::InvalidState {
                    appliance: n,
                    states: app.num_states(),
                    index: idx,
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema: String,
    #[serde(flatten)]
    model: HouseholdModel,
}

/// Writes a validated household model as a UTF-8 JSON document.
pub fn save_model(model: &HouseholdModel, path: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    let doc = ModelDocument {
        schema: MODEL_SCHEMA.to_string(),
        model: model.clone(),
    };
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &doc).map_err(Error::ModelParse)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Loads and validates a household model document.
pub fn load_model(path: impl AsRef<Path>) -> Result<HouseholdModel> {
    let file = File::open(path)?;
    let doc: ModelDocument =
        serde_json::from_reader(BufReader::new(file)).map_err(Error::ModelParse)?;
    if doc.schema != MODEL_SCHEMA {
        return Err(Error::UnsupportedSchema {
            found: doc.schema,
            expected: MODEL_SCHEMA.to_string(),
        });
    }
    doc.model.validate()?;
    Ok(doc.model)
}
