//! Exit-code classification. User and input errors exit with 2, numerical
//! and internal failures with 1.

use std::fmt;

/// A problem with the command line, the config or an input file.
#[derive(Debug)]
pub struct UserError(pub String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

pub fn user(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USER: i32 = 2;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UserError>() {
            return EXIT_USER;
        }
        if let Some(e) = cause.downcast_ref::<acnn::Error>() {
            return match e {
                acnn::Error::Parse { .. }
                | acnn::Error::NonManifold(_)
                | acnn::Error::Orientation(_)
                | acnn::Error::DegenerateFace { .. }
                | acnn::Error::IsolatedVertex(_)
                | acnn::Error::InvalidArgument(_)
                | acnn::Error::Architecture(_)
                | acnn::Error::Dimension(_)
                | acnn::Error::Format(_)
                | acnn::Error::Io(_) => EXIT_USER,
                _ => EXIT_INTERNAL,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_USER;
        }
    }
    EXIT_INTERNAL
}
