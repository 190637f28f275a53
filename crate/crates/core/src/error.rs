use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("desired point coincides with the crank tip at theta2 = {theta2} rad")]
    DegenerateTarget { theta2: f64 },
    #[error("closing dyad is degenerate: effector on the servo pivot with r = s")]
    DegenerateDyad,
    #[error("profile has {len} samples, at least {min} are required")]
    ProfileTooShort { len: usize, min: usize },
    #[error("requested {requested} harmonics but only {max} fit in {samples} samples")]
    HarmonicOverflow {
        requested: usize,
        max: usize,
        samples: usize,
    },
    #[error("trace has {immobile} immobile samples; inverse dynamics needs a fully mobile trace")]
    ImmobileTrace { immobile: usize },
    #[error("every individual in every generation was degenerate")]
    InfeasiblePopulation,
    #[error("simulation diverged at sample {sample} ({axis} axis error {error} counts)")]
    UnstableSimulation {
        sample: usize,
        axis: &'static str,
        error: i64,
    },
    #[error("linkage jammed at sample {sample}: the plant state cannot be assembled")]
    LinkageJammed { sample: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
