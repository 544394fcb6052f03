use std::fmt;
use std::path::Path;

/// Process exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Validation = 1,
    Instability = 2,
    Io = 3,
}

/// A failed command: what to print and how to exit.
#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Validation,
            message: message.into(),
        }
    }

    pub fn instability(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Instability,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Io,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<rcdlms::Error> for Failure {
    fn from(e: rcdlms::Error) -> Self {
        match e {
            rcdlms::Error::MeanSquareUnstable { .. } | rcdlms::Error::UnexpectedDivergence { .. } => {
                Failure::instability(e.to_string())
            }
            other => Failure::validation(other.to_string()),
        }
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;
