//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by exact p-adic and series computations.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("polynomial stage is not Eisenstein: {0}")]
    NotEisenstein(String),
    #[error("stage polynomial has a root in the current field at working precision: {0}")]
    NotIrreducibleDetected(String),
    #[error("value is indistinguishable from zero at working precision: {0}")]
    PrecisionExhausted(String),
    #[error("argument outside the convergence domain: {0}")]
    OutOfConvergenceDomain(String),
    #[error("series composition does not converge at this truncation: {0}")]
    NonConvergentComposition(String),
    #[error("truncation cannot certify the requested valuation: {0}")]
    TailNotDominated(String),
    #[error("coefficient fails the integrality check: {0}")]
    IntegralityViolation(String),
    #[error("torsion level not supported: {0}")]
    LevelUnsupported(String),
    #[error("element is not in the eta span")]
    NotInEtaSpan,
    #[error("characters do not match the required relation: {0}")]
    CharacterMismatch(String),
    #[error("character conductor exceeds the available level: {0}")]
    ConductorExceedsLevel(String),
    #[error("measure is not supported on the units")]
    NonUnitSupport,
    #[error("truncation order too short: {0}")]
    TruncationTooShort(String),
    #[error("character is not locally constant on the units")]
    NotLocallyConstantOnUnits,
    #[error("character is not de Rham")]
    NotDeRham,
    #[error("exceptional pole: {0}")]
    ExceptionalPole(String),
    #[error("character is ramified where an unramified one is required")]
    RamifiedCharacter,
    #[error("variant does not match the weight sign: {0}")]
    WrongVariant(String),
    #[error("pole of order greater than one at the origin")]
    HigherOrderPole,
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
