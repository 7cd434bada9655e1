use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The lateral model divides by the vehicle speed.
    #[error(
        "speed {v} m/s is below the floor {floor} m/s: the yaw damping term \
         (C_f l_f^2 + C_r l_r^2)/(I_z v) and the sideslip terms (C_f + C_r)/(m v), \
         (C_r l_r - C_f l_f)/(m v^2) and C_f/(m v) are undefined"
    )]
    SpeedBelowFloor { v: f64, floor: f64 },

    #[error("linearising law is singular: cos(beta - delta) = {cos:.3e} with beta - delta = {angle} rad")]
    Singularity { angle: f64, cos: f64 },

    #[error("velocity-direction law is singular: commanded speed {v} m/s is below {floor} m/s")]
    ZeroVelocity { v: f64, floor: f64 },

    #[error("law mismatch: expected {expected}, configuration selects {found}")]
    LawMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("trajectory diverged at t = {t} s (non-finite state)")]
    Diverged { t: f64 },

    #[error("steering angle {delta} rad exceeds the range ±{limit} rad")]
    SteeringRange { delta: f64, limit: f64 },

    #[error("stiffness requires {required} substeps per step (limit {limit})")]
    TooStiff { required: usize, limit: usize },

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    EigenNonConvergence { iterations: usize },

    #[error("eigenvalue {re}{im:+}i fails verification: |det(M - lambda I)| = {residual:.3e} > {bound:.3e}")]
    EigenResidual {
        re: f64,
        im: f64,
        residual: f64,
        bound: f64,
    },

    #[error("requested point is not an equilibrium: residual {residual:.3e} > {tolerance:.1e}")]
    EquilibriumResidual { residual: f64, tolerance: f64 },

    #[error("bracket [{lo}, {hi}] m has the same verdict ({verdict}) at both ends")]
    SameVerdictBracket {
        lo: f64,
        hi: f64,
        verdict: &'static str,
    },

    #[error(
        "boundary at dl = {dl} m is not a Hopf point: the crossing eigenvalue {re}{im:+}i is real"
    )]
    NonHopfBoundary { dl: f64, re: f64, im: f64 },

    #[error("Hopf bisection stalled at dl = {dl} m with max Re = {max_re:.3e} 1/s")]
    HopfNonConvergence { dl: f64, max_re: f64 },

    #[error("at t = {t} s: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("csv output: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn at(self, t: f64) -> Self {
        match self {
            Error::AtTime { .. } => self,
            other => Error::AtTime {
                t,
                source: Box::new(other),
            },
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Strips any timestamp wrapper.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
