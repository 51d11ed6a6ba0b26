//! Online segmented beamforming.
//!
//! An MVDR/MPDR adaptive beamformer whose covariance-integration window is
//! chosen causally by change-point detection: a bank of candidate recursive
//! MVDR states (one per hypothesized segment start) is advanced in parallel,
//! and the active segment switches whenever a later start explains the data
//! at lower penalized output power. The crate also ships the offline
//! dynamic-programming segmentation oracle, fixed-window MPDR baselines, an
//! STFT filterbank, a free-field piecewise-stationary scene simulator,
//! covariance-whitening RTF estimation, and evaluation metrics.

pub mod error;
pub mod io;
pub mod metrics;
pub mod mvdr;
pub mod rtf;
pub mod scene;
pub mod segmenter;
pub mod stft;

pub use error::{Error, Result};
pub use mvdr::{
    batch_mvdr_weights, default_delta, CovarianceState, Maintenance, Snapshot, SteeringVector,
};
pub use segmenter::{
    fixed_window_mpdr, offline_dp_segment, run_online, SegmenterConfig, SegmenterState, StepOutput,
};
