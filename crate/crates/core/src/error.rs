use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("non-finite value at t = {time}")]
    NonFinite { time: f64 },

    #[error("t = {t} outside grid [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("regime index {index} out of range for {regimes} regimes")]
    RegimeOutOfRange { index: usize, regimes: usize },

    #[error("G denominator vanishes at t = {time} (|den| = {magnitude:e})")]
    SingularDenominator { time: f64, magnitude: f64 },

    #[error("bond factor {value} is not positive for regime {regime} at t = {time}")]
    NonPositiveBondFactor { time: f64, regime: usize, value: f64 },

    #[error("characteristic function has imaginary part {imag:e} at real argument {phi}")]
    ImaginaryPart { phi: f64, imag: f64 },

    #[error("interval {interval} expectation {value:e} is negative")]
    NegativeExpectation { interval: usize, value: f64 },

    #[error("discount factor mean is zero")]
    DegenerateDiscount,

    #[error("negative realized variance {0}")]
    NegativeVariance(f64),

    #[error("{0}")]
    Config(String),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid_input",
            Error::NonFinite { .. } => "non_finite",
            Error::OutOfRange { .. } => "out_of_range",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::RegimeOutOfRange { .. } => "regime_out_of_range",
            Error::SingularDenominator { .. } => "singular_denominator",
            Error::NonPositiveBondFactor { .. } => "non_positive_bond_factor",
            Error::ImaginaryPart { .. } => "imaginary_part",
            Error::NegativeExpectation { .. } => "negative_expectation",
            Error::DegenerateDiscount => "degenerate_discount",
            Error::NegativeVariance(_) => "negative_variance",
            Error::Config(_) => "config",
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("[{}] {}", x.code.as_str(), x.message))
        .collect::<Vec<_>>()
        .join("; ")
}
