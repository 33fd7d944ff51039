use thiserror::Error;

/// Errors raised by the modulator, encoder, channel and receiver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid CPM parameters: {0}")]
    InvalidParams(String),
    #[error("symbol {symbol} is not in the {alphabet_size}-ary alphabet")]
    SymbolOutOfAlphabet { symbol: i32, alphabet_size: u32 },
    #[error("expected {expected} bits per symbol, got {got}")]
    BitCount { expected: usize, got: usize },
    #[error("unsupported correction scheme: {0}")]
    UnsupportedScheme(String),
    #[error("expected {expected} symbols per code block, got {got}")]
    BlockLength { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("received stream is not aligned to code blocks: {samples} samples, block is {block} samples")]
    NotBlockAligned { samples: usize, block: usize },
    #[error("exhaustive search over {size} hypotheses exceeds budget {budget}")]
    SearchBudget { size: u128, budget: u128 },
    #[error("identical symbol sequences have no error event")]
    IdenticalSequences,
    #[error("need at least {min} symbols, got {got}")]
    TooFewSymbols { min: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
