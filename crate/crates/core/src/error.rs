use thiserror::Error;

/// Crate-wide error type.
///
/// Every fallible operation in this crate returns `Result<T, Error>`; the
/// variants group by pipeline stage so callers can match on the failure class
/// without string inspection.
#[derive(Debug, Error)]
pub enum Error {
    // --- ingestion -------------------------------------------------------
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite power value at sample {index}")]
    NonFiniteSample { index: usize },

    #[error("invalid sample rate {0} Hz (must be positive and finite)")]
    InvalidSampleRate(f64),

    #[error("series too short: {len} samples, detection needs at least {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("length mismatch in {what}: {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    // --- CSV ingestion ---------------------------------------------------
    #[error("csv header mismatch: expected `timestamp_s,power_w`, found `{0}`")]
    CsvHeader(String),

    #[error("csv row {row}: {msg}")]
    CsvField { row: usize, msg: String },

    #[error("csv row {row}: non-monotone timestamp {t} after {prev}")]
    NonMonotoneTimestamp { row: usize, t: f64, prev: f64 },

    #[error("csv row {row}: sampling gap of {dt}s exceeds expected period {period}s")]
    SamplingGap { row: usize, dt: f64, period: f64 },

    #[error("csv row {row}: sampling jitter {dt}s deviates more than 10% from period {period}s")]
    SamplingJitter { row: usize, dt: f64, period: f64 },

    // --- model validation ------------------------------------------------
    #[error("model validation failed for `{context}`: {msg}")]
    Validation { context: String, msg: String },

    #[error("duplicate appliance id `{0}`")]
    DuplicateApplianceId(String),

    #[error("unsupported model schema `{found}`, expected `{expected}`")]
    UnsupportedSchema { found: String, expected: String },

    #[error("model parse error: {0}")]
    ModelParse(#[source] serde_json::Error),

    // --- detection / signatures -------------------------------------------
    #[error("event boundary out of range: {msg}")]
    BoundaryOutOfRange { msg: String },

    #[error("event at sample {start_idx} has zero steady-power change")]
    DegenerateEvent { start_idx: usize },

    // --- clustering --------------------------------------------------------
    #[error("negative power value {value} at index {index} rejected by clustering")]
    NegativeInput { index: usize, value: f64 },

    // --- training ----------------------------------------------------------
    #[error("appliance `{0}` never changes state (no events and fewer than 2 states)")]
    NoStateChange(String),

    // --- inference -----------------------------------------------------------
    #[error("state vector invalid: appliance {appliance} has {states} states, index {index} given")]
    InvalidState {
        appliance: usize,
        states: usize,
        index: usize,
    },

    // --- synthesis -----------------------------------------------------------
    #[error("script step {step}: target state {to} unreachable from state {from}")]
    UnreachableState { step: usize, from: usize, to: usize },

    #[error("script step {step}: time {t}s does not increase over previous step")]
    NonIncreasingScript { step: usize, t: f64 },

    #[error("archetype `{id}` invalid: {msg}")]
    InvalidArchetype { id: String, msg: String },

    // --- metrics ---------------------------------------------------------------
    #[error("confusion counts are all zero")]
    EmptyConfusion,

    // --- edge/cloud ----------------------------------------------------------
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("wire decode error: {0}")]
    WireDecode(#[source] serde_json::Error),

    #[error("protocol error [{code}]: {detail}")]
    Protocol { code: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(context: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            context: context.into(),
            msg: msg.into(),
        }
    }
}
