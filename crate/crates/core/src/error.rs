// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the simulator, the response pipeline and the authenticator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("duplicate challenge id {0}")]
    DuplicateId(u64),

    #[error("incompatible device: {0}")]
    IncompatibleDevice(String),

    #[error("reconfiguration changes nothing")]
    NoOpReconfiguration,

    #[error("invalid match policy: {0}")]
    InvalidPolicy(String),

    #[error("malformed record: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, Error>;
