use std::fmt;

/// Failures raised by the driver itself, tagged with their exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    use mambasl::Error as E;
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => 1,
                Failure::Data(_) => 2,
                Failure::Numeric(_) => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) | E::Json(_) => 1,
                E::Io { .. } | E::Parse { .. } | E::Data(_) | E::Shape(_) | E::Checkpoint(_) => 2,
                E::NonFinite { .. } => 3,
            };
        }
    }
    1
}
