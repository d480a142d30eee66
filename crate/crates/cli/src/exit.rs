use std::fmt;

pub const OK: i32 = 0;
pub const INVARIANT: i32 = 1;
pub const USAGE: i32 = 2;
pub const IO: i32 = 3;

/// Bad flags, config values or combinations of them.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A run finished but a post-run check failed.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit status for an error, from the first cause that identifies one.
pub fn code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if cause.is::<CheckFailed>() {
            return INVARIANT;
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return IO;
        }
        if let Some(e) = cause.downcast_ref::<draftlat::Error>() {
            use draftlat::Error as E;
            return match e {
                E::Io(_) | E::Parse { .. } | E::Protocol(_) => IO,
                E::InvalidInput(_) | E::Config(_) => USAGE,
                E::Invariant(_) | E::Rescore(_) | E::TooLarge { .. } => INVARIANT,
            };
        }
    }
    INVARIANT
}
