use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong while building fields or evaluating diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Grid dimensions or spacings violate the lattice invariants.
    InvalidGrid(String),
    /// A generator produced a non-finite sample.
    NonFinite {
        time_index: usize,
        space_index: usize,
        component: usize,
        t: f64,
        x: [f64; 2],
    },
    /// Two fields do not live on the same lattice or have incompatible ranks.
    ShapeMismatch(String),
    /// A time shift reaches outside the lattice.
    ShiftOutOfRange { time_offset: isize, n_t: usize },
    /// Increment ratios are undefined for the zero shift.
    ZeroShift,
    /// Integrability exponent outside `[1, inf]`.
    InvalidExponent(f64),
    /// A smoothing radius below the admissible resolution floor.
    BelowResolution { radius: f64, floor: f64 },
    /// The valid time window left after regularization is empty or too small.
    EmptyWindow(String),
    /// A named parameter outside its admissible range.
    InvalidParameter { name: &'static str, reason: String },
    /// A test function whose time support leaves the admissible interior.
    SupportViolation { support: (f64, f64), allowed: (f64, f64) },
    /// Negative density handed to a pressure law.
    NegativeDensity { value: f64 },
    /// Density below the declared floor of a law with `gamma < 2`.
    BelowDensityFloor { value: f64, floor: f64 },
    /// Shock states that do not describe an admissible compressive shock.
    NonAdmissibleShock(String),
    /// A regression could not be performed on the supplied data.
    DegenerateFit(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            Error::NonFinite {
                time_index,
                space_index,
                component,
                t,
                x,
            } => write!(
                f,
                "non-finite sample at t[{time_index}] = {t}, x[{space_index}] = ({}, {}), component {component}",
                x[0], x[1]
            ),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::ShiftOutOfRange { time_offset, n_t } => {
                write!(f, "time offset {time_offset} out of range for {n_t} time samples")
            }
            Error::ZeroShift => write!(f, "zero shift has no increment ratio"),
            Error::InvalidExponent(p) => write!(f, "integrability exponent {p} is not in [1, inf]"),
            Error::BelowResolution { radius, floor } => {
                write!(f, "radius {radius} is below the resolution floor {floor}")
            }
            Error::EmptyWindow(msg) => write!(f, "empty valid window: {msg}"),
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::SupportViolation { support, allowed } => write!(
                f,
                "test function time support ({}, {}) leaves the admissible interval ({}, {})",
                support.0, support.1, allowed.0, allowed.1
            ),
            Error::NegativeDensity { value } => write!(f, "negative density {value}"),
            Error::BelowDensityFloor { value, floor } => {
                write!(f, "density {value} below the declared floor {floor}")
            }
            Error::NonAdmissibleShock(msg) => write!(f, "non-admissible shock: {msg}"),
            Error::DegenerateFit(msg) => write!(f, "degenerate fit: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
