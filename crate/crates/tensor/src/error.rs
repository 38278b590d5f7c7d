use thiserror::Error;

use crate::Dims;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected} but got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: Dims,
        got: Dims,
    },
    #[error("{op}: {what}")]
    InvalidArgument { op: &'static str, what: String },
    #[error("conv: groups={groups} does not divide in_channels={in_channels} and out_channels={out_channels}")]
    GroupsNotDividing {
        groups: usize,
        in_channels: usize,
        out_channels: usize,
    },
    #[error("down2: spatial dims {h}x{w} are not even")]
    OddSpatial { h: usize, w: usize },
    #[error("backward: loss must be a scalar (1x1x1x1), got {0}")]
    NotScalar(Dims),
    #[error("data length {len} does not match dims {dims}")]
    DataLength { len: usize, dims: Dims },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
