use thiserror::Error;

/// Errors reported by the clustering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("entry at row {row}, column {col} is not binary (got {value})")]
    NonBinaryEntry { row: usize, col: usize, value: f64 },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("partition is not consistent with the tree")]
    InconsistentPartition,

    #[error("partition enumeration would produce {count} partitions, above the limit {limit}")]
    PartitionBound { count: String, limit: u64 },

    #[error("exhaustive tree search supports at most {max} leaves, got {n}")]
    LeafBound { n: usize, max: usize },

    #[error("cluster likelihood returned a non-finite log value")]
    NonFiniteLikelihood,

    #[error("invalid merge: {0}")]
    InvalidMerge(String),

    #[error("subtrees share data points")]
    OverlappingLeaves,

    #[error("gram matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("GP model refuses {n} points (guard limit {max})")]
    GpSizeGuard { n: usize, max: usize },

    #[error("mismatched lengths: {0}")]
    LengthMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
