//! Error type shared by all core modules.

use alloc::string::String;
use core::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the core engine.
///
/// Variants are grouped by class so callers (the CLI in particular) can map
/// them onto exit codes: input/data problems, numerical failures, and
/// integrity failures.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A category index was outside `[0, num_categories)`.
    CategoryOutOfRange { index: usize, num_categories: usize },
    /// A vector had the wrong dimensionality.
    DimensionMismatch { context: &'static str, expected: usize, actual: usize },
    /// An operation received an empty collection it cannot work with.
    EmptyInput(&'static str),
    /// A structural precondition was violated (message names the offender).
    InvalidInput(String),
    /// An outfit references an item that does not exist.
    DanglingItem { outfit: u64, item: u64 },
    /// Disjoint mode: an item appears in both train-side and held-out outfits.
    SplitOverlap { item: u64 },
    /// A non-finite value appeared where finite math was required.
    NonFinite { context: &'static str },
    /// Stored data failed a checksum or structural integrity check.
    Integrity(String),
}

impl Error {
    /// True for the numerical-failure class.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }

    /// True for the integrity-failure class.
    pub fn is_integrity(&self) -> bool {
        matches!(self, Error::Integrity(_))
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::CategoryOutOfRange { index, num_categories } => {
                write!(f, "category index {index} out of range (num_categories = {num_categories})")
            }
            Error::DimensionMismatch { context, expected, actual } => {
                write!(f, "{context}: expected dimension {expected}, got {actual}")
            }
            Error::EmptyInput(what) => write!(f, "{what} must not be empty"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::DanglingItem { outfit, item } => {
                write!(f, "outfit {outfit} references unknown item {item}")
            }
            Error::SplitOverlap { item } => {
                write!(f, "disjoint violation: item {item} appears in both train and held-out outfits")
            }
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::Integrity(msg) => write!(f, "integrity error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
