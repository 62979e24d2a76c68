use thiserror::Error;

/// Failure to parse a fixed-width hex value (digests, chromosomes, nonces).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("expected {expected} hex characters, found {found}")]
    Length { expected: usize, found: usize },
    #[error("invalid hex character")]
    NotHex,
}
