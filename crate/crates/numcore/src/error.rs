use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: extents must be positive and rank >= 1")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("cannot reshape {from:?} into {to:?}")]
    Reshape { from: Vec<usize>, to: Vec<usize> },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Dimension { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },
}

impl TensorError {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        TensorError::Dimension { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
    }

    pub(crate) fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Contract { op, msg: msg.into() }
    }
}
