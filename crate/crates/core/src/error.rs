use thiserror::Error;

/// Failures raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no second localized state in the reference well (V1 = {v1}, F = {f})")]
    NoBoundExcitedState { v1: f64, f: f64 },

    #[error("gap {delta} lies within {tolerance} of {multiple} Bloch quanta")]
    DegenerateLadder { delta: f64, multiple: i64, tolerance: f64 },

    #[error("site {site} is outside the supported range of +/-{limit}")]
    OutOfDomain { site: i64, limit: i64 },

    #[error("grid with {points_per_well} points per well cannot sample cos(pi x) on well boundaries")]
    GridMisaligned { points_per_well: usize },

    #[error("gap {delta} is within {tolerance} of {order} x omega_B; rotating-wave selection is ambiguous")]
    ResonanceCollision { delta: f64, order: i64, tolerance: f64 },

    #[error("amplitude tuning needs a nonzero overlap `{which}`")]
    ZeroOverlap { which: &'static str },

    #[error("packet width sigma = {sigma} is too wide for {sites} sites")]
    PacketTooWide { sigma: f64, sites: usize },

    #[error("amplitude {amplitude:e} reached the lattice edge at t = {t}")]
    EdgeLeak { t: f64, amplitude: f64 },

    #[error("norm changed by {change:e} in one step at t = {t}")]
    UnstableStep { t: f64, change: f64 },

    #[error("no oscillation above the noise floor (peak {peak:e}, floor {floor:e})")]
    NoOscillation { peak: f64, floor: f64 },

    #[error("density is not bimodal")]
    NotBimodal,

    #[error("modulation amplitudes violate the reality condition at (alpha={alpha}, j={j}, q={q})")]
    RealityViolation { alpha: u8, j: i32, q: i32 },

    #[error("least-squares fit did not converge: {0}")]
    FitFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
