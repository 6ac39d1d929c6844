use thiserror::Error;

use crate::identity::IdentityError;
use crate::pos::PosError;
use crate::synth::SynthError;
use crate::trace::TraceError;
use crate::vitals::VitalsError;

/// Any error raised by the library, tagged with the module that owns it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Pos(#[from] PosError),
    #[error(transparent)]
    Vitals(#[from] VitalsError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl Error {
    /// The variant name of the underlying module error, e.g. `NoPulse`.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Trace(e) => e.name(),
            Error::Pos(e) => e.name(),
            Error::Vitals(e) => e.name(),
            Error::Identity(e) => e.name(),
            Error::Synth(e) => e.name(),
        }
    }

    /// True when the input document could not be read at all, as opposed to a
    /// well-formed input the computation rejected.
    pub fn is_malformed_input(&self) -> bool {
        match self {
            Error::Trace(e) => e.is_parse_error(),
            _ => false,
        }
    }
}
