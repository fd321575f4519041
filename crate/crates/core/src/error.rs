use thiserror::Error;

/// Errors raised by the modelling, estimation and experiment routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid prospect: {0}")]
    InvalidProspect(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("tariff-linked reference needs a tariff context (b, gamma)")]
    UnresolvedReference,

    #[error(
        "quadrature did not converge on [{lower}, {upper}]: estimated error {estimated_error:.3e} \
         exceeds tolerance {tolerance:.3e} after {subdivisions} subdivisions"
    )]
    Quadrature {
        lower: f64,
        upper: f64,
        estimated_error: f64,
        tolerance: f64,
        subdivisions: usize,
    },

    #[error("root not bracketed on [{lower}, {upper}]: f(lower) = {f_lower}, f(upper) = {f_upper}")]
    NoBracket {
        lower: f64,
        upper: f64,
        f_lower: f64,
        f_upper: f64,
    },

    #[error("empty admissible tariff range: {0}")]
    EmptyTariffRange(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("separation detected: {0}")]
    Separation(String),

    #[error("parameters not identifiable: {0}")]
    Unidentifiable(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}
