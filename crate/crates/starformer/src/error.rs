use std::path::{Path, PathBuf};

use starformer_core::ErrorKind;

/// Errors from file handling and the pipeline. Each variant has a stable
/// short code for machine consumers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] starformer_core::Error),

    #[error("{}: file not found", path.display())]
    MissingFile { path: PathBuf },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}:{line}: {detail}", path.display())]
    Parse { path: PathBuf, line: u64, detail: String },

    #[error("{}:{line}: subject {subject} has non-finite value {value:?} at time point {time}, ROI {roi}", path.display())]
    NonFiniteCell {
        path: PathBuf,
        subject: String,
        line: u64,
        time: usize,
        roi: String,
        value: String,
    },

    #[error("{}: subject {subject} has {found} ROIs, expected {expected}", path.display())]
    RoiCountMismatch {
        path: PathBuf,
        subject: String,
        expected: usize,
        found: usize,
    },

    #[error("{}: subject {subject} column {column} is ROI {found}, atlas has {expected}", path.display())]
    RoiIdMismatch {
        path: PathBuf,
        subject: String,
        column: usize,
        expected: String,
        found: String,
    },

    #[error("{}: subject {subject} has label {label}, expected 0 or 1", path.display())]
    BadLabel { path: PathBuf, subject: String, label: i64 },

    #[error("{}:{line}: unknown network label {label:?}; accepted: {accepted}", path.display())]
    BadNetwork {
        path: PathBuf,
        line: u64,
        label: String,
        accepted: String,
    },

    #[error("{}: invalid configuration: {detail}", path.display())]
    ConfigFile { path: PathBuf, detail: String },

    #[error("{0}")]
    Usage(String),

    #[error("{}: integrity check failed: {detail}", path.display())]
    Integrity { path: PathBuf, detail: String },

    #[error("{}: checkpoint config hash {found} does not match the requested config {expected}", path.display())]
    ConfigMismatch { path: PathBuf, expected: String, found: String },

    #[error("{}: output directory is not empty", path.display())]
    OutputExists { path: PathBuf },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path: path.to_path_buf() }
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub fn parse(path: &Path, line: u64, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            detail: detail.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Core(e) => e.kind(),
            Error::ConfigFile { .. } | Error::Usage(_) | Error::ConfigMismatch { .. } | Error::OutputExists { .. } => {
                ErrorKind::Config
            }
            Error::BadNetwork { .. } => ErrorKind::Config,
            Error::MissingFile { .. }
            | Error::Io { .. }
            | Error::Parse { .. }
            | Error::NonFiniteCell { .. }
            | Error::RoiCountMismatch { .. }
            | Error::RoiIdMismatch { .. }
            | Error::BadLabel { .. }
            | Error::Integrity { .. } => ErrorKind::Data,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Core(e) => match e {
                starformer_core::Error::Dimension { .. } => "dimension",
                starformer_core::Error::Config(_) => "config",
                starformer_core::Error::Contract(_) => "contract",
                starformer_core::Error::NonFinite { .. } => "non_finite",
                starformer_core::Error::SingularFit => "singular_fit",
                starformer_core::Error::Convergence { .. } => "no_convergence",
                starformer_core::Error::Atlas(_) => "atlas",
                starformer_core::Error::Data(_) => "data",
                starformer_core::Error::Divergence { .. } => "divergence",
            },
            Error::MissingFile { .. } => "missing_file",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::NonFiniteCell { .. } => "non_finite_cell",
            Error::RoiCountMismatch { .. } => "roi_count_mismatch",
            Error::RoiIdMismatch { .. } => "roi_id_mismatch",
            Error::BadLabel { .. } => "bad_label",
            Error::BadNetwork { .. } => "bad_network_label",
            Error::ConfigFile { .. } => "config_file",
            Error::Usage(_) => "usage",
            Error::Integrity { .. } => "integrity",
            Error::ConfigMismatch { .. } => "config_mismatch",
            Error::OutputExists { .. } => "output_exists",
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }
}
