//! Two-party interactive-proof engine for verifying the trace of the
//! top-row matrix of a quantum circuit.
//!
//! The verifier does polynomial work per round; an exact desk-scale
//! simulator plays the honest prover, and adversarial prover strategies plus
//! a Monte Carlo harness probe the protocol's completeness and soundness.

pub mod circuit;
pub mod experiment;
pub mod fixed;
pub mod linalg;
pub mod protocol;
pub mod sampling;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("parameter refusal: required precision {required_p} bits exceeds cap {max_p}")]
    ParamRefusal { required_p: u32, max_p: u32 },
    #[error("protocol failure: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
