use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value that violates a documented precondition. `field` is a dotted
    /// path such as `buses[3].inertia_cap`.
    #[error("invalid input at `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// The retained network falls apart. `component` lists the bus ids of
    /// one component that is not attached to the first bus.
    #[error("network is disconnected; buses {component:?} are not reachable")]
    Disconnected { component: Vec<usize> },

    #[error("non-positive inertia {value} at bus {bus}: the swing model is ill-posed")]
    IllPosed { bus: usize, value: f64 },

    #[error("Kron reduction failed: {0}")]
    Reduction(String),

    #[error("Lyapunov solve failed (relative residual {residual:.3e})")]
    Lyapunov { residual: f64 },

    #[error("Lyapunov solve for gradient coordinate {coordinate} failed: {source}")]
    GradientCoordinate {
        coordinate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("real Schur decomposition did not converge")]
    Schur,

    #[error("infeasible allocation constraints: {0}")]
    Infeasible(String),

    /// Uniform disturbance-damping ratio violated; the pair with the largest
    /// relative ratio gap is reported (bus ids).
    #[error(
        "w/d ratio is not uniform: bus {first} has {first_ratio}, bus {second} has {second_ratio}"
    )]
    RatioNotUniform {
        first: usize,
        first_ratio: f64,
        second: usize,
        second_ratio: f64,
    },

    #[error("time step {dt} is too coarse for the fastest mode; use dt <= {suggested}")]
    StepTooCoarse { dt: f64, suggested: f64 },

    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A computed norm fell outside its analytic bounds.
    #[error("bounds violated for `{allocation}`: {lower} <= {norm_sq} <= {upper} does not hold")]
    BoundViolation {
        allocation: String,
        norm_sq: f64,
        lower: f64,
        upper: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used in CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput { .. } => "invalid_input",
            Error::Dimension { .. } => "dimension",
            Error::Disconnected { .. } => "disconnected",
            Error::IllPosed { .. } => "ill_posed",
            Error::Reduction(_) => "reduction",
            Error::Lyapunov { .. } => "lyapunov",
            Error::GradientCoordinate { .. } => "gradient",
            Error::Schur => "schur",
            Error::Infeasible(_) => "infeasible",
            Error::RatioNotUniform { .. } => "ratio_not_uniform",
            Error::StepTooCoarse { .. } => "step_too_coarse",
            Error::Parse { .. } => "parse",
            Error::BoundViolation { .. } => "bound_violation",
            Error::Io(_) => "io",
        }
    }
}
