use crate::synth::PoseLabel;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("point maps to infinity (w = {0:e})")]
    PointAtInfinity(f64),
    #[error("view has no perspective effect (board is fronto-parallel)")]
    DegenerateView,
    #[error("principal line direction is undefined")]
    AmbiguousDirection,
    #[error("principal lines are (nearly) parallel, normal matrix condition {0:e}")]
    ParallelLines(f64),
    #[error("too few lines: need {needed}, got {got}")]
    TooFewLines { needed: usize, got: usize },
    #[error("screening would flag {flagged} of {total} lines; refusing")]
    AllFlagged { flagged: usize, total: usize },
    #[error("board lies in the camera plane (t_z = {0:e})")]
    BehindCamera(f64),
    #[error("insufficient views: need {needed}, got {got}")]
    InsufficientViews { needed: usize, got: usize },
    #[error("no valid focal length constraint in any view")]
    NoFocalEstimate,
    #[error("degenerate constraint system: {0}")]
    DegenerateSystem(String),
    #[error("board does not fit in the image after {retries} retries (view {view})")]
    BoardOutOfView { view: String, retries: usize },
    #[error("view {0} has no correspondences")]
    EmptyView(String),
    #[error("missing cell: pose {pose}, focal setting {setting}")]
    MissingCell { pose: PoseLabel, setting: usize },
    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("all points coincide; trajectory direction undefined")]
    DegenerateSpread,
    #[error("pose {pose} missing at focal setting {setting}")]
    MissingPose { pose: PoseLabel, setting: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Variant name, stable for use in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateConfiguration(_) => "DegenerateConfiguration",
            Error::PointAtInfinity(_) => "PointAtInfinity",
            Error::DegenerateView => "DegenerateView",
            Error::AmbiguousDirection => "AmbiguousDirection",
            Error::ParallelLines(_) => "ParallelLines",
            Error::TooFewLines { .. } => "TooFewLines",
            Error::AllFlagged { .. } => "AllFlagged",
            Error::BehindCamera(_) => "BehindCamera",
            Error::InsufficientViews { .. } => "InsufficientViews",
            Error::NoFocalEstimate => "NoFocalEstimate",
            Error::DegenerateSystem(_) => "DegenerateSystem",
            Error::BoardOutOfView { .. } => "BoardOutOfView",
            Error::EmptyView(_) => "EmptyView",
            Error::MissingCell { .. } => "MissingCell",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::DegenerateSpread => "DegenerateSpread",
            Error::MissingPose { .. } => "MissingPose",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Parse(_) => "Parse",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
