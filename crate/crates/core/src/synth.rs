//! Synthetic appliance/household trace generation and CSV ingestion.
//!
//! Appliances are generated from three component archetypes: heating
//! resistors step instantly to the new level, motors overshoot to a spike and
//! decay exponentially to the new level, and electronic circuits sit at the
//! level with uniform fluctuation. States carry Gaussian per-sample noise; an
//! optional per-activation level jitter draws a fresh offset for the target
//! level each time a state is entered, which is what spreads the DSP/SSP
//! distributions across activations the way real appliances do.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PowerSeries;

/// Levels at or below this never receive activation jitter (an OFF state
/// draws the same near-zero power every time).
pub const JITTER_MIN_LEVEL_W: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchetypeKind {
    HeatingResistor,
    Motor,
    ElectronicCircuit,
}

/// Parameters of one synthetic appliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceArchetype {
    pub kind: ArchetypeKind,
    /// Steady level per state, strictly ascending (state 0 = OFF).
    pub state_means: Vec<f64>,
    /// Per-sample Gaussian noise per state.
    pub state_sigmas: Vec<f64>,
    /// Motor spike peak as a multiple of the steady change; 1 = no spike.
    pub spike_ratio: f64,
    /// Time constant of the motor spike decay.
    pub decay_seconds: f64,
    /// Uniform fluctuation amplitude for electronic circuits (watts).
    pub fluctuation: f64,
    /// Std-dev of the per-activation offset added to a state's level each
    /// time it is entered; 0 disables.
    #[serde(default)]
    pub level_jitter_w: f64,
}

impl ApplianceArchetype {
    pub fn num_states(&self) -> usize {
        self.state_means.len()
    }

    pub fn validate(&self, id: &str) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidArchetype {
            id: id.to_string(),
            msg: msg.to_string(),
        });
        if self.state_means.is_empty() {
            return fail("no states");
        }
        if self.state_means.len() != self.state_sigmas.len() {
            return fail("state_means and state_sigmas lengths differ");
        }
        if self.state_means.iter().any(|m| !m.is_finite() || *m < 0.0)
            || self.state_sigmas.iter().any(|s| !s.is_finite() || *s < 0.0)
        {
            return fail("state parameters must be finite and non-negative");
        }
        if self.state_means.windows(2).any(|w| w[0] >= w[1]) {
            return fail("state_means must be strictly ascending");
        }
        match self.kind {
            ArchetypeKind::HeatingResistor if self.spike_ratio != 1.0 => {
                return fail("heating_resistor requires spike_ratio = 1");
            }
            ArchetypeKind::Motor if !(self.spike_ratio > 1.0) => {
                return fail("motor requires spike_ratio > 1");
            }
            ArchetypeKind::Motor if !(self.decay_seconds > 0.0) => {
                return fail("motor requires decay_seconds > 0");
            }
            _ => {}
        }
        if self.fluctuation < 0.0 || self.level_jitter_w < 0.0 {
            return fail("fluctuation and level_jitter_w must be non-negative");
        }
        Ok(())
    }
}

/// One scripted state change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub time_s: f64,
    pub target_state: usize,
}

/// Generates one appliance trace from an archetype and a script of state
/// changes. Deterministic given the seed.
pub fn generate_trace(
    archetype: &ApplianceArchetype,
    script: &[ScriptStep],
    sample_rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<PowerSeries> {
    archetype.validate("archetype")?;
    if !(1.0..=1000.0).contains(&sample_rate_hz) {
        return Err(Error::InvalidSampleRate(sample_rate_hz));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    if n == 0 {
        return Err(Error::EmptyInput("trace duration"));
    }

    // Map steps to sample indices, validating order and reachability.
    let mut steps: Vec<(usize, usize)> = Vec::with_capacity(script.len());
    let mut prev_state = 0usize;
    for (i, step) in script.iter().enumerate() {
        let idx = (step.time_s * sample_rate_hz).round() as usize;
        if step.time_s < 0.0 || steps.last().is_some_and(|&(last, _)| idx <= last) {
            return Err(Error::NonIncreasingScript {
                step: i,
                t: step.time_s,
            });
        }
        if step.target_state >= archetype.num_states() || step.target_state == prev_state {
            return Err(Error::UnreachableState {
                step: i,
                from: prev_state,
                to: step.target_state,
            });
        }
        steps.push((idx, step.target_state));
        prev_state = step.target_state;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw_level = |state: usize, rng: &mut ChaCha8Rng| -> f64 {
        let mean = archetype.state_means[state];
        if archetype.level_jitter_w > 0.0 && mean > JITTER_MIN_LEVEL_W {
            let d = Normal::new(0.0, archetype.level_jitter_w).expect("validated jitter");
            (mean + d.sample(rng)).max(0.0)
        } else {
            mean
        }
    };

    let mut state = 0usize;
    let mut level = draw_level(0, &mut rng);
    let mut spike_excess = 0.0f64;
    let mut spike_idx = 0usize;
    let mut next_step = 0usize;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        if next_step < steps.len() && steps[next_step].0 == i {
            let (_, target) = steps[next_step];
            next_step += 1;
            let old_level = level;
            state = target;
            level = draw_level(state, &mut rng);
            spike_excess = 0.0;
            if archetype.kind == ArchetypeKind::Motor && level > old_level {
                // Peak at old + spike_ratio * delta, then exponential decay.
                spike_excess = (archetype.spike_ratio - 1.0) * (level - old_level);
                spike_idx = i;
            }
        }
        let mut x = level;
        if spike_excess > 0.0 {
            let dt = (i - spike_idx) as f64 / sample_rate_hz;
            x += spike_excess * (-dt / archetype.decay_seconds).exp();
        }
        x += match archetype.kind {
            ArchetypeKind::ElectronicCircuit => {
                if archetype.fluctuation > 0.0 {
                    rng.gen_range(-archetype.fluctuation..archetype.fluctuation)
                } else {
                    0.0
                }
            }
            _ => {
                let sigma = archetype.state_sigmas[state];
                if sigma > 0.0 {
                    Normal::new(0.0, sigma).expect("validated sigma").sample(&mut rng)
                } else {
                    0.0
                }
            }
        };
        samples.push(x.max(0.0));
    }
    PowerSeries::new(samples, sample_rate_hz, 0.0)
}

/// Pointwise sum of per-appliance traces; callers keep the inputs as ground
/// truth for evaluation.
pub fn mix_household(traces: &[PowerSeries]) -> Result<PowerSeries> {
    let first = traces.first().ok_or(Error::EmptyInput("mix"))?;
    let mut sum = first.samples().to_vec();
    for t in &traces[1..] {
        if t.len() != first.len() {
            return Err(Error::LengthMismatch {
                what: "mix_household lengths",
                left: first.len(),
                right: t.len(),
            });
        }
        if t.sample_rate_hz() != first.sample_rate_hz() {
            return Err(Error::InvalidSampleRate(t.sample_rate_hz()));
        }
        for (acc, &x) in sum.iter_mut().zip(t.samples()) {
            *acc += x;
        }
    }
    PowerSeries::new(sum, first.sample_rate_hz(), first.start_time())
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

const CSV_HEADER: &str = "timestamp_s,power_w";

/// Writes `timestamp_s,power_w` rows at 1e-6 precision.
pub fn save_csv(series: &PowerSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for (i, &x) in series.samples().iter().enumerate() {
        writeln!(w, "{:.6},{:.6}", series.timestamp_of(i), x)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a two-column CSV, validating monotone uniform sampling (max jitter
/// 10% of the period) and finite power values.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PowerSeries> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or(Error::EmptyInput("csv file"))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::CsvHeader(header.trim().to_string()));
    }
    let mut timestamps: Vec<f64> = Vec::new();
    let mut samples: Vec<f64> = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1; // 1-based data row
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let (t_str, p_str) = match (parts.next(), parts.next()) {
            (Some(t), Some(p)) => (t, p),
            _ => {
                return Err(Error::CsvField {
                    row,
                    msg: format!("expected two comma-separated fields, got `{line}`"),
                })
            }
        };
        let t: f64 = t_str.trim().parse().map_err(|e| Error::CsvField {
            row,
            msg: format!("timestamp `{t_str}`: {e}"),
        })?;
        let p: f64 = p_str.trim().parse().map_err(|e| Error::CsvField {
            row,
            msg: format!("power `{p_str}`: {e}"),
        })?;
        if !p.is_finite() || !t.is_finite() {
            return Err(Error::CsvField {
                row,
                msg: "non-finite value".to_string(),
            });
        }
        timestamps.push(t);
        samples.push(p);
    }
    if samples.len() < 2 {
        return Err(Error::CsvField {
            row: samples.len(),
            msg: "need at least 2 rows to establish the sampling period".to_string(),
        });
    }

    let mut dts: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    for (i, &dt) in dts.iter().enumerate() {
        if dt <= 0.0 {
            return Err(Error::NonMonotoneTimestamp {
                row: i + 2,
                t: timestamps[i + 1],
                prev: timestamps[i],
            });
        }
    }
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let period = dts[dts.len() / 2];
    for (i, w) in timestamps.windows(2).enumerate() {
        let dt = w[1] - w[0];
        if dt > 1.1 * period {
            return Err(Error::SamplingGap {
                row: i + 2,
                dt,
                period,
            });
        }
        if dt < 0.9 * period {
            return Err(Error::SamplingJitter {
                row: i + 2,
                dt,
                period,
            });
        }
    }
    PowerSeries::new(samples, 1.0 / period, timestamps[0])
}

// ---------------------------------------------------------------------------
// Config files for the simulator
// ---------------------------------------------------------------------------

/// One appliance entry of an archetypes config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub id: String,
    pub name: String,
    pub archetype: ApplianceArchetype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypesFile {
    pub appliances: Vec<ArchetypeSpec>,
}

/// Household simulation script: per-appliance state-change schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScript {
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    /// Appliance id -> ordered state changes.
    pub schedule: BTreeMap<String, Vec<ScriptStep>>,
}

fn default_rate() -> f64 {
    50.0
}

pub fn load_archetypes(path: impl AsRef<Path>) -> Result<ArchetypesFile> {
    let file: ArchetypesFile =
        serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(Error::ModelParse)?;
    for a in &file.appliances {
        a.archetype.validate(&a.id)?;
    }
    Ok(file)
}

pub fn load_script(path: impl AsRef<Path>) -> Result<SimulationScript> {
    serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(Error::ModelParse)
}
