use thiserror::Error;

/// Errors surfaced by the numerical layers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// The background sampler returned NaN or infinity.
    #[error("non-finite potential value near x = {x}")]
    NonFinitePotential { x: f64 },

    /// Step halving hit its recursion limit without satisfying the angle cap.
    #[error("angle cap {cap} not reached after {limit} halvings near x = {x}")]
    StepCapExceeded { x: f64, cap: f64, limit: u32 },

    /// A matrix that should be symplectic drifted too far from det = 1.
    #[error("determinant drift: |det - 1| = {drift:e} exceeds {tol:e}")]
    DeterminantDrift { drift: f64, tol: f64 },

    /// Two point sets are too far apart for the index-wise comparison to be valid.
    #[error(
        "point sets are {dist} apart; index-wise comparison needs dist < m/2 = {half_min_gap}"
    )]
    SetsTooFar { dist: f64, half_min_gap: f64 },

    /// A tabulated circle-map lift failed to be strictly increasing.
    #[error("circle-map tabulation not monotone at grid index {index}")]
    NonMonotoneLift { index: usize },

    /// Branch tracking of the angle lift could not certify sub-quarter-turn steps.
    #[error("branch tracking failed near x = {x}: angle step stayed above pi/2 at max refinement")]
    BranchTracking { x: f64 },

    /// The requested oracle does not apply to this potential.
    #[error("oracle unsupported for this potential: {reason}")]
    OracleUnsupported { reason: String },

    /// A claimed periodic structure failed verification.
    #[error("potential is not periodic with lattice period {period}: {reason}")]
    NotPeriodic { period: i64, reason: String },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An error while evolving the angle, tagged with the failing lattice step.
    #[error("evolution failed at lattice step {step}: {source}")]
    EvolutionStep {
        step: i64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: i64) -> Error {
        Error::EvolutionStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
