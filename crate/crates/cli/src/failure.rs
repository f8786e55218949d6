use std::fmt;

use segopt::Error;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const ENCODER: u8 = 3;

/// A message paired with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: DATA,
            message: message.into(),
        }
    }

    pub fn encoder(message: impl Into<String>) -> Self {
        Failure {
            code: ENCODER,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConstraints(_)
        | Error::UnknownCodec(_)
        | Error::UnknownGop { .. }
        | Error::QpOutOfRange { .. }
        | Error::SegmentOutOfRange { .. }
        | Error::FractionalFps(_) => USAGE,
        Error::EncoderFailed { .. } | Error::MissingTemplate(_) => ENCODER,
        _ => DATA,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}
