use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what} at line {line}: {msg}")]
    Parse {
        what: String,
        line: usize,
        msg: String,
    },

    #[error("schema invariant violated: {0}")]
    SchemaInvariantViolation(String),

    #[error("invalid date at line {0}")]
    BadDate(usize),

    #[error("duplicate report id {0}")]
    DuplicateReportId(String),

    #[error("missing table {0}.csv")]
    MissingTable(String),

    #[error("orphan row in {table}.csv row {row}: patient {patient_id} not in demographics")]
    OrphanRow {
        table: String,
        row: usize,
        patient_id: String,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("patient mismatch: {0} vs {1}")]
    PatientMismatch(String, String),

    #[error("reports from more than one patient: {0} and {1}")]
    MixedPatients(String, String),

    #[error("unknown patient {0}")]
    UnknownPatient(String),

    #[error("birth date {birth} is after index date {index}")]
    FutureBirthDate { birth: crate::Date, index: crate::Date },

    #[error("age is unknown; {0} is undefined")]
    MissingAge(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("prediction and gold lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("excluded (-1) label present")]
    ExcludedLabelPresent,

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("no shared non-excluded patients")]
    EmptyIntersection,

    #[error("patient sets differ: {0}")]
    PatientSetMismatch(String),

    #[error("training set has a single class")]
    SingleClassTrainingSet,

    #[error("patient {patient_id}: {source}")]
    Patient {
        patient_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(what: impl Into<String>, line: usize, msg: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            line,
            msg: msg.to_string(),
        }
    }

    pub fn for_patient(self, patient_id: &str) -> Self {
        match self {
            e @ (Error::Patient { .. } | Error::Stage { .. }) => e,
            e => Error::Patient {
                patient_id: patient_id.to_string(),
                source: Box::new(e),
            },
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::MissingFile(_) | Error::MissingTable(_) => 2,
            Error::Stage { source, .. } | Error::Patient { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
