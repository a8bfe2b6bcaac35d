use thiserror::Error;

/// Errors raised across the library.
///
/// Variants split into two families: input/contract violations (bad
/// expressions, dimension mismatches, unsupported configurations) and
/// numerical-contract violations (ambiguous kernels, ill-conditioned fits,
/// t below the reliability window). The CLI maps the first family to exit
/// code 2 and the second to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is singular or not positive definite at the evaluation point")]
    SingularMetric,
    #[error("missing jet: need order {needed}, have {available}")]
    MissingJet { needed: usize, available: usize },
    #[error("jet order {0} exceeds the supported maximum of 4")]
    OrderTooHigh(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("twist is not closed: |dΘ| coefficient {0:.3e}")]
    NotClosed(f64),
    #[error("truncation N = {n} is below the twist bandwidth {bandwidth} (aliasing)")]
    Aliasing { n: usize, bandwidth: usize },
    #[error("product size {size} exceeds the cap {cap}")]
    SizeCap { size: usize, cap: usize },
    #[error("combinatorial budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("matrix is not Hermitian (symmetry residual {0:.3e})")]
    NonHermitian(f64),
    #[error("t = {t} is below the reliability window; use t >= {t_min:.6}")]
    BelowReliability { t: f64, t_min: f64 },
    #[error("ill-conditioned fit design (condition number {cond:.3e} after column scaling)")]
    IllConditioned { cond: f64 },
    #[error("ambiguous kernel in degree {degree}: gap ratio {ratio:.3e} < {required}")]
    AmbiguousKernel { degree: usize, ratio: f64, required: f64 },
    #[error("non-finite density value at quadrature node {0}")]
    NonFinite(usize),
    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    Indefinite(f64),
    #[error("fit residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    FitResidual { residual: f64, tolerance: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical contract rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonHermitian(_)
                | Error::BelowReliability { .. }
                | Error::IllConditioned { .. }
                | Error::AmbiguousKernel { .. }
                | Error::NonFinite(_)
                | Error::FitResidual { .. }
                | Error::Indefinite(_)
                | Error::SingularMetric
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
