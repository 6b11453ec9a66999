use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("ill-posed stable/unstable split: eigenvalue with modulus {modulus} lies within {tol} of the unit circle")]
    IllPosedSplit { modulus: f64, tol: f64 },

    #[error("rank-deficient regressor: smallest/largest singular value ratio {ratio:e}{context}")]
    RankDeficient { ratio: f64, context: String },

    #[error("degenerate Hankel matrix: largest singular value {0:e} is below 1e-12")]
    DegenerateHankel(f64),

    #[error("singular {what} estimate: smallest/largest singular value ratio {ratio:e}")]
    ExtractionSingular { what: &'static str, ratio: f64 },

    #[error("synthesis infeasible: {0}")]
    SynthesisInfeasible(String),

    #[error("state blow-up at step {step}{}", rollout.map(|r| format!(" of rollout {r}")).unwrap_or_default())]
    BlowUp { step: usize, rollout: Option<usize> },

    #[error("z = {z} is within {distance:e} of a pole")]
    PoleProximity { z: num_complex::Complex64, distance: f64 },

    #[error("feedback interconnection is not well-posed (I - D_K D singular)")]
    WellPosedness,

    #[error("system is not stable (spectral radius {0}); H-infinity norm is infinite")]
    UnstableSystem(f64),

    #[error("system generation failed: {0}")]
    Generation(String),

    #[error("malformed document: {0}")]
    Format(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error with any stage tags peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True when the error comes from bad user input rather than from the numerics.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self.root(),
            Error::Dimension(_) | Error::Parameter(_) | Error::NonFinite(_) | Error::Format(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
