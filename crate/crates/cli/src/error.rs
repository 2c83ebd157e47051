use std::fmt;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Failure = 1,
    Config = 2,
    Numerical = 3,
}

/// Error raised for a bad config file or flag.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn classify(err: &anyhow::Error) -> ExitKind {
    use transporter_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return ExitKind::Config;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonFiniteLoss { .. } => ExitKind::Numerical,
                E::InvalidConfig(_) | E::Format(_) | E::Parse { .. } | E::Shape { .. } => ExitKind::Config,
                _ => ExitKind::Failure,
            };
        }
    }
    ExitKind::Failure
}
