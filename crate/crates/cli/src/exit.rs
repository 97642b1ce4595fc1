//! Process exit codes.

use std::process::ExitCode;

use pnest::{Error, Termination};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Code {
    Ok = 0,
    Failure = 1,
    Usage = 2,
    Io = 3,
    NonRecurrent = 4,
    Renormalizable = 5,
    PrecisionExhausted = 6,
    NotRealized = 7,
    NotReproduced = 9,
}

impl Code {
    /// A nest that stops at `max_levels` exits 0; any other termination is reported.
    pub fn from_termination(t: Option<Termination>) -> Code {
        match t {
            None => Code::Ok,
            Some(Termination::NonRecurrent) => Code::NonRecurrent,
            Some(Termination::Renormalizable) => Code::Renormalizable,
            Some(Termination::PrecisionExhausted) => Code::PrecisionExhausted,
        }
    }

    pub fn from_error(e: &Error) -> Code {
        match e {
            Error::ParameterOutOfRange(_)
            | Error::Parse(_)
            | Error::InvalidPrecision(_)
            | Error::InvalidInterval(_)
            | Error::Config(_)
            | Error::Json(_)
            | Error::Csv(_) => Code::Usage,
            Error::Io(_) => Code::Io,
            Error::PrecisionExhausted { .. } => Code::PrecisionExhausted,
            Error::NotRealized { .. } => Code::NotRealized,
            _ => Code::Failure,
        }
    }
}

impl From<Code> for ExitCode {
    fn from(c: Code) -> ExitCode {
        ExitCode::from(c as u8)
    }
}
