use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A video must contain at least one frame.
    EmptyVideo { video_id: String },
    /// Frame indices must run 0, 1, 2, ... in order.
    FrameOrder { position: usize, index: usize },
    /// Two buffers that must share dimensions do not.
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A buffer's length does not match its declared dimensions.
    BufferLength { expected: usize, found: usize },
    /// A soft score outside `[0, 1]` (or NaN).
    ScoreOutOfRange { position: usize },
    /// Binarization threshold outside `(0, 1]`.
    TauOutOfRange,
    /// A masklet has the wrong number of frames.
    FrameCount { expected: usize, found: usize },
    InvalidExpression(&'static str),
    InvalidSchedule(String),
    /// Lookup of a frame beyond the end of the video.
    FrameOutOfRange { index: usize, len: usize },
    /// A clip handed to key frame compression has the wrong length.
    ClipLength { expected: usize, found: usize },
    /// A mosaic tile index beyond `g * g`.
    TileOutOfRange { index: usize, tiles: usize },
    /// Frames are too small to be split into a `g x g` grid.
    FrameTooSmall { width: usize, height: usize, grid: usize },
    NoVerdicts,
    /// A plan token without a segmentation response.
    MissingToken(usize),
    DuplicateToken(usize),
    UnknownToken(usize),
    /// A governed frame without a soft mask in its token's response.
    MissingFrameMask { token: usize, frame: usize },
    /// Run lengths that do not add up to `width * height`.
    RunSum { expected: usize, found: usize },
    EmptyScores,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyVideo { video_id } => write!(f, "video '{video_id}' has no frames"),
            Error::FrameOrder { position, index } => {
                write!(f, "frame at position {position} has index {index}")
            }
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::BufferLength { expected, found } => {
                write!(f, "buffer holds {found} entries, expected {expected}")
            }
            Error::ScoreOutOfRange { position } => {
                write!(f, "soft mask value at {position} is outside [0, 1]")
            }
            Error::TauOutOfRange => write!(f, "threshold must lie in (0, 1]"),
            Error::FrameCount { expected, found } => {
                write!(f, "masklet has {found} masks, video has {expected} frames")
            }
            Error::InvalidExpression(why) => write!(f, "invalid expression: {why}"),
            Error::InvalidSchedule(why) => write!(f, "invalid schedule: {why}"),
            Error::FrameOutOfRange { index, len } => {
                write!(f, "frame {index} out of range for video of {len} frames")
            }
            Error::ClipLength { expected, found } => {
                write!(f, "clip has {found} frames, expected {expected}")
            }
            Error::TileOutOfRange { index, tiles } => {
                write!(f, "tile {index} out of range for {tiles} tiles")
            }
            Error::FrameTooSmall {
                width,
                height,
                grid,
            } => write!(f, "{width}x{height} frame cannot hold a {grid}x{grid} grid"),
            Error::NoVerdicts => write!(f, "no judge verdicts to decide on"),
            Error::MissingToken(t) => write!(f, "no segmentation response for token {t}"),
            Error::DuplicateToken(t) => write!(f, "more than one response for token {t}"),
            Error::UnknownToken(t) => write!(f, "response for token {t} which the plan does not have"),
            Error::MissingFrameMask { token, frame } => {
                write!(f, "token {token} response lacks a mask for frame {frame}")
            }
            Error::RunSum { expected, found } => {
                write!(f, "runs sum to {found}, expected {expected}")
            }
            Error::EmptyScores => write!(f, "no expression scores to aggregate"),
        }
    }
}

impl core::error::Error for Error {}
