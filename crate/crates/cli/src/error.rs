//! Error classification and exit codes.

use std::fmt;

use sqv_core::ingest::IngestError;
use sqv_core::montecarlo::McError;
use sqv_core::ou::OuError;
use sqv_core::summary::SummaryError;
use sqv_core::unitroot::UnitRootError;
use sqv_core::variation::VariationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numeric,
    Network,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
            Kind::Network => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    /// Pipeline stage that failed, if any.
    pub stage: Option<&'static str>,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            stage: None,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Kind::Data, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(stage) => write!(f, "stage {stage}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CliError {}

/// Attaches a stage label to any error convertible into [`CliError`].
pub trait AtStage<T> {
    fn at(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<CliError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| {
            let mut e = e.into();
            e.stage.get_or_insert(stage);
            e
        })
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        let kind = match e {
            IngestError::Network { .. } => Kind::Network,
            IngestError::EmptyRange { .. } | IngestError::UnsupportedInterval(_) => Kind::Usage,
            _ => Kind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<VariationError> for CliError {
    fn from(e: VariationError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<SummaryError> for CliError {
    fn from(e: SummaryError) -> Self {
        let kind = match e {
            SummaryError::RankOutOfRange(_) | SummaryError::NoYears => Kind::Usage,
            _ => Kind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<UnitRootError> for CliError {
    fn from(e: UnitRootError) -> Self {
        let kind = match e {
            UnitRootError::RankDeficient(_) => Kind::Numeric,
            UnitRootError::UnsupportedLevel(_) => Kind::Usage,
            _ => Kind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<OuError> for CliError {
    fn from(e: OuError) -> Self {
        let kind = match e {
            OuError::InvalidParams(_) => Kind::Usage,
            OuError::SeriesTooShort(..) => Kind::Data,
            _ => Kind::Numeric,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::Ou(inner) => inner.into(),
            McError::InvalidConfig(_) => Self::usage(e.to_string()),
            _ => Self::new(Kind::Numeric, e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}
