//! Strength calibration and disentanglement metrics.
//!
//! Subject detection, identity embedding and attribute classification are
//! plugins. Calibration finds the strength interval where a detector still
//! accepts the edited image; the metrics then compare the six evenly spaced
//! edits in that interval against the unedited reference.

mod calibrate;
mod metrics;
pub mod plugin;
mod report;
pub mod toy;

pub use calibrate::{calibrate_strength, calibrate_with, CalibrationConfig, CalibrationResult};
pub use metrics::{
    attribute_delta, attribute_delta_from, evaluate_direction, identity_similarity, track_iterations, AttributeCounts,
    AttributeDelta, EvalContext, IdentityScore, IterationDelta, MeanStd, MetricsReport, SeedReport, SkippedSeed,
    SuccessRule, TrialRecord,
};
pub use report::{render_delta_table, render_report_table, write_delta_csv, write_report_csv};

use crate::error::Result;
use crate::generator::GeneratedImage;
use crate::scalar::Scalar;

/// Says whether the subject is still recognisable in an image.
pub trait Detector<S: Scalar>: Send + Sync {
    fn plugin_id(&self) -> &str;
    fn detect(&self, image: &GeneratedImage<S>) -> Result<bool>;
}

/// Identity embedding with a fixed dimensionality.
pub trait Embedder<S: Scalar>: Send + Sync {
    fn plugin_id(&self) -> &str;
    fn embed(&self, image: &GeneratedImage<S>) -> Result<Vec<S>>;
}

/// Multi-label binary attribute classifier.
pub trait AttributeClassifier<S: Scalar>: Send + Sync {
    fn plugin_id(&self) -> &str;
    fn attribute_names(&self) -> &[String];
    fn classify(&self, image: &GeneratedImage<S>) -> Result<Vec<bool>>;
}
