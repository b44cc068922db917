use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported mesh request: {0}")]
    Mesh(String),

    #[error("boundary facet {facet} at ({x}, {y}) matches no rule of the boundary partition")]
    UntaggableFacet { facet: usize, x: f64, y: f64 },

    #[error("invalid material: {0}")]
    Material(String),

    #[error("unknown test case `{0}`")]
    UnknownCase(String),

    #[error("boundary tag `{0}` has no boundary condition assigned")]
    MissingCondition(String),

    #[error("unsupported discretization: {0}")]
    Discretization(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is numerically singular at pivot {pivot} (|pivot| = {value:e})")]
    Singular { pivot: usize, value: f64 },

    #[error("local matrix of subdomain {subdomain} is singular: {source}")]
    SingularLocal {
        subdomain: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("coarse operator is rank deficient: {0}")]
    Coarse(String),

    #[error("inconsistent preconditioner: {0}")]
    Preconditioner(String),

    #[error("partition: {0}")]
    Partition(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
