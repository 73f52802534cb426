// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::model::BlockId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Model(String),
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("invalid cache configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("reference with age >= associativity passed to the miss counter")]
    AgedOut,
    #[error("instance exceeds oracle limits: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
