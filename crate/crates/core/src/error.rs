use thiserror::Error;

use crate::linalg::C64;

pub type Result<T> = std::result::Result<T, MorError>;

#[derive(Debug, Error)]
pub enum MorError {
    #[error("singular matrix ({context}): pivot {pivot:e} below threshold {threshold:e}")]
    SingularMatrix {
        context: String,
        pivot: f64,
        threshold: f64,
    },

    #[error("Sylvester/Lyapunov equation has no unique solution: spectra overlap (gap {gap:e})")]
    NonUniqueSolution { gap: f64 },

    #[error("matrix pencil is singular: det(A + λE) vanishes identically")]
    SingularPencil,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("system is not semi-explicit index-1: {0}")]
    NotSemiExplicit(String),

    #[error("complex shift {shift} has no conjugate partner with conjugate direction")]
    UnpairedComplexShift { shift: C64 },

    #[error("tangential direction {index} is zero")]
    ZeroDirection { index: usize },

    #[error("shift {shift} lies on the spectrum of the pencil")]
    ShiftOnSpectrum { shift: C64 },

    #[error("projected descriptor matrix WᵀEV is singular")]
    SingularProjection,

    #[error("orthogonal projection guard violated: {0}")]
    StructuralGuard(String),

    #[error("shift {shift} is not in the open right half-plane")]
    ShiftInClosedLeftHalfPlane { shift: C64 },

    #[error("Lyapunov solution is singular or indefinite (interpolation data not observable)")]
    LyapunovSingular,

    #[error("model is not asymptotically stable (max real part {max_real:e})")]
    UnstableModel { max_real: f64 },

    #[error("system has a finite eigenvalue with nonnegative real part ({max_real:e})")]
    UnstableSystem { max_real: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("optimizer failed: {0}")]
    OptimizerFailed(String),

    #[error("stop criterion not met after {steps} steps (last relative contribution {last:e})")]
    StagnationDetected { steps: usize, last: f64 },

    #[error("pseudo-optimality violated: ‖G‖² − ‖G_r‖² = {difference:e}")]
    PseudoOptimalityViolated { difference: f64 },

    #[error("feedthrough mismatch between full and reduced model: {difference:e}")]
    FeedthroughMismatch { difference: f64 },

    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MorError {
    pub(crate) fn singular(context: impl Into<String>, pivot: f64, threshold: f64) -> Self {
        MorError::SingularMatrix {
            context: context.into(),
            pivot,
            threshold,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        MorError::DimensionMismatch(msg.into())
    }
}
