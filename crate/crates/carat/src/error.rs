use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("treatment or control arm is empty")]
    EmptyArm,

    #[error("stratum {stratum} has an empty arm")]
    EmptyArmInStratum { stratum: usize },

    #[error("stratum {stratum} needs at least {needed} units per arm")]
    InsufficientStratumOccupancy { stratum: usize, needed: usize },

    #[error("all stratum weights are zero (no stratum has both arms)")]
    AllWeightsZero,

    #[error("design matrix is rank deficient (column {column} is collinear)")]
    RankDeficient { column: usize },

    #[error("design has {rows} rows but {cols} columns; need rows > cols")]
    TooFewRows { rows: usize, cols: usize },

    #[error("centered covariate Gram matrix is singular")]
    SingularGram,

    #[error("no covariates available for a covariate-adjusted estimator")]
    NoCovariates,

    #[error(
        "per-stratum balance parameter q is unknown for this scheme/estimator pair; \
         supply estimated q values or use an interaction-type estimator"
    )]
    MissingQ,

    #[error("unit profile does not match the scheme: {0}")]
    ProfileMismatch(String),

    #[error("scheme is incompatible with the generated unit profiles: {0}")]
    IncompatibleSchemeProfile(String),

    #[error("report and reference tables do not share the same keys: {0}")]
    KeyMismatch(String),

    #[error("invalid trial data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
