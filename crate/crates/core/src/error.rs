use thiserror::Error;

/// Errors surfaced by estimation, simulation, and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("total case weight is zero")]
    ZeroTotalWeight,
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error(
        "extrapolation required: follow-up ends at {follow_up} days with survival {survival} \
         before t* = {t_star}"
    )]
    ExtrapolationRequired {
        follow_up: f64,
        survival: f64,
        t_star: f64,
    },
    #[error("tail extension requires a fitted Weibull model")]
    MissingTailFit,
    #[error("model is not identifiable: {0}")]
    NonIdentifiable(&'static str),
    #[error("design matrix is rank deficient on positively weighted rows")]
    SingularDesign,
    #[error("complete separation detected in logistic fit (|coefficient| > {bound})")]
    Separation { bound: f64 },
    #[error("optimizer did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        last_point: Vec<f64>,
    },
    #[error("non-finite {what} encountered during optimization")]
    NonFinite { what: &'static str },
    #[error("survival inversion bracket exhausted (draw {draw})")]
    BracketExhausted { draw: f64 },
    #[error("quadrature did not reach the requested tolerance {tol}")]
    QuadratureNonConvergence { tol: f64 },
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("csv schema error: {0}")]
    CsvSchema(String),
    #[error("bootstrap failure rate above 10%: {failures} of {replicates} replicates failed")]
    ExcessiveBootstrapFailures { failures: usize, replicates: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
