use std::fmt;
use std::path::PathBuf;

/// Exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Exit status 3: an input produced by an earlier stage is absent.
#[derive(Debug)]
pub struct MissingArtifact {
    pub path: PathBuf,
    pub stage: &'static str,
}

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "missing artifact {}; run `instyle {}` first",
            self.path.display(),
            self.stage
        )
    }
}

impl std::error::Error for MissingArtifact {}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        EXIT_CONFIG
    } else if err.downcast_ref::<MissingArtifact>().is_some() {
        EXIT_MISSING
    } else {
        EXIT_RUNTIME
    }
}
