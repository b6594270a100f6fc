//! Exit classes and the one-line diagnostic printed on failure.

use std::fmt;

use npprov_core::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitClass {
    Usage,
    Data,
    Numeric,
}

impl ExitClass {
    pub fn code(self) -> u8 {
        match self {
            ExitClass::Usage => 1,
            ExitClass::Data => 2,
            ExitClass::Numeric => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExitClass::Usage => "usage",
            ExitClass::Data => "data",
            ExitClass::Numeric => "numeric",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub class: ExitClass,
    pub reason: String,
}

impl Failure {
    pub fn usage(reason: impl Into<String>) -> Self {
        Failure {
            class: ExitClass::Usage,
            reason: reason.into(),
        }
    }

    pub fn data(reason: impl Into<String>) -> Self {
        Failure {
            class: ExitClass::Data,
            reason: reason.into(),
        }
    }

    /// Treat any error as a data error, whatever its kind. Used for inputs
    /// read from disk, where even a config or contract error means the file
    /// is bad.
    pub fn from_input(e: Error) -> Self {
        match e {
            Error::NumericFault { .. } | Error::NonFiniteGradient { .. } => e.into(),
            other => Failure::data(other.to_string()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::NumericFault { .. } | Error::NonFiniteGradient { .. } => ExitClass::Numeric,
            Error::Contract(_) | Error::Config(_) => ExitClass::Usage,
            Error::Degenerate(_)
            | Error::Parse { .. }
            | Error::Format { .. }
            | Error::EmptyData(_)
            | Error::BadMagic { .. }
            | Error::UnknownVersion(_)
            | Error::Truncated { .. }
            | Error::Io { .. } => ExitClass::Data,
        };
        Failure {
            class,
            reason: e.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    /// `error kind=<class> code=<n> reason=<text>` on a single line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let reason = self.reason.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(
            f,
            "error kind={} code={} reason={reason}",
            self.class.name(),
            self.class.code()
        )
    }
}

pub type CliResult<T> = Result<T, Failure>;
