use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{calibrate_strength, AttributeClassifier, CalibrationConfig, Detector, Embedder};
use crate::direction::DirectionVector;
use crate::error::{Error, Result};
use crate::generator::{GeneratedImage, GeneratorAdapter};
use crate::scalar::{cosine, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityScore {
    pub mean: f64,
    pub std: f64,
    pub per_image: Vec<f64>,
}

/// Mean cosine similarity between the reference embedding and each edited image's.
///
/// Values are raw cosines in `[-1, 1]`.
pub fn identity_similarity<S: Scalar>(
    reference: &GeneratedImage<S>,
    edited: &[GeneratedImage<S>],
    embedder: &dyn Embedder<S>,
) -> Result<IdentityScore> {
    if edited.is_empty() {
        return Err(Error::Argument("identity similarity needs at least one edited image".into()));
    }
    let base = embedder.embed(reference)?;
    let mut per_image = Vec::with_capacity(edited.len());
    for (i, img) in edited.iter().enumerate() {
        let e = embedder.embed(img)?;
        if e.len() != base.len() {
            return Err(Error::Plugin(format!(
                "embedder `{}` returned {} dims for edited image {i}, {} for the reference",
                embedder.plugin_id(),
                e.len(),
                base.len()
            )));
        }
        let c = cosine(&base, &e).ok_or_else(|| {
            let which = if base.iter().all(|v| *v == S::zero()) {
                format!("reference image (seed {})", reference.source_seed)
            } else {
                format!("edited image {i} (seed {})", img.source_seed)
            };
            Error::Numeric(format!("zero-norm embedding for the {which}"))
        })?;
        per_image.push(c.as_f64());
    }
    let stats = MeanStd::of(&per_image);
    Ok(IdentityScore {
        mean: stats.mean,
        std: stats.std,
        per_image,
    })
}

/// Whether success requires the target to be absent from the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SuccessRule {
    /// Target attribute detected in the edited image.
    #[default]
    Present,
    /// Target detected in the edited image and absent from the reference.
    NewlyIntroduced,
}

/// Non-target attributes by before/after state; the four counts sum to `A − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeCounts {
    pub lost: usize,
    pub found: usize,
    pub retained: usize,
    pub absent: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeDelta {
    pub success: bool,
    /// Lost non-target attributes as a percentage of all `A` attributes.
    pub lost_pct: f64,
    pub found_pct: f64,
    pub counts: AttributeCounts,
}

pub fn attribute_delta_from(reference: &[bool], edited: &[bool], target: usize, rule: SuccessRule) -> Result<AttributeDelta> {
    let a = reference.len();
    if edited.len() != a {
        return Err(Error::Plugin(format!(
            "classifier returned {} attributes for the edited image, {a} for the reference",
            edited.len()
        )));
    }
    if target >= a {
        return Err(Error::Argument(format!("target attribute {target} outside 0..{a}")));
    }
    let mut counts = AttributeCounts {
        lost: 0,
        found: 0,
        retained: 0,
        absent: 0,
    };
    for (i, (&r, &e)) in reference.iter().zip(edited).enumerate() {
        if i == target {
            continue;
        }
        match (r, e) {
            (true, false) => counts.lost += 1,
            (false, true) => counts.found += 1,
            (true, true) => counts.retained += 1,
            (false, false) => counts.absent += 1,
        }
    }
    let success = match rule {
        SuccessRule::Present => edited[target],
        SuccessRule::NewlyIntroduced => edited[target] && !reference[target],
    };
    Ok(AttributeDelta {
        success,
        lost_pct: counts.lost as f64 / a as f64 * 100.0,
        found_pct: counts.found as f64 / a as f64 * 100.0,
        counts,
    })
}

pub fn attribute_delta<S: Scalar>(
    reference: &GeneratedImage<S>,
    edited: &GeneratedImage<S>,
    classifier: &dyn AttributeClassifier<S>,
    target: usize,
    rule: SuccessRule,
) -> Result<AttributeDelta> {
    let a = classifier.attribute_names().len();
    if target >= a {
        return Err(Error::Argument(format!("target attribute {target} outside 0..{a}")));
    }
    attribute_delta_from(&classifier.classify(reference)?, &classifier.classify(edited)?, target, rule)
}

/// Plugins and settings shared by every evaluation of one study.
pub struct EvalContext<'a, S: Scalar> {
    pub adapter: &'a dyn GeneratorAdapter<S>,
    pub detector: &'a dyn Detector<S>,
    pub embedder: &'a dyn Embedder<S>,
    pub classifier: &'a dyn AttributeClassifier<S>,
    pub target_index: usize,
    pub calibration: CalibrationConfig,
    pub success_rule: SuccessRule,
    /// Permits the detector and embedder to be the same plugin.
    pub allow_shared_model: bool,
}

impl<'a, S: Scalar> EvalContext<'a, S> {
    pub fn new(
        adapter: &'a dyn GeneratorAdapter<S>,
        detector: &'a dyn Detector<S>,
        embedder: &'a dyn Embedder<S>,
        classifier: &'a dyn AttributeClassifier<S>,
        target_index: usize,
    ) -> Self {
        Self {
            adapter,
            detector,
            embedder,
            classifier,
            target_index,
            calibration: CalibrationConfig::default(),
            success_rule: SuccessRule::default(),
            allow_shared_model: false,
        }
    }

    fn check(&self) -> Result<()> {
        if !self.allow_shared_model && self.detector.plugin_id() == self.embedder.plugin_id() {
            return Err(Error::Argument(format!(
                "detector and embedder are the same model (`{}`); calibration would bias identity similarity",
                self.detector.plugin_id()
            )));
        }
        let a = self.classifier.attribute_names().len();
        if self.target_index >= a {
            return Err(Error::Argument(format!(
                "target attribute {} outside 0..{a}",
                self.target_index
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub strength: f64,
    pub identity: f64,
    pub success: bool,
    pub lost_pct: f64,
    pub found_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub clamped: bool,
    pub identity: MeanStd,
    /// Percentage of the six edits where the target was detected.
    pub success_pct: f64,
    pub lost_pct: f64,
    pub found_pct: f64,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSeed {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub direction: String,
    pub target_index: usize,
    pub target_attribute: String,
    pub attribute_count: usize,
    pub identity_similarity: MeanStd,
    pub success_rate: MeanStd,
    pub lost_pct: MeanStd,
    pub found_pct: MeanStd,
    pub per_seed: Vec<SeedReport>,
    pub skipped: Vec<SkippedSeed>,
    pub snapshot_index: Option<usize>,
}

impl MetricsReport {
    pub fn skip_count(&self) -> usize {
        self.skipped.len()
    }
}

fn evaluate_seed<S: Scalar>(d: &DirectionVector<S>, seed: u64, ctx: &EvalContext<'_, S>) -> Result<SeedReport> {
    let sample = ctx.adapter.sample(seed)?;
    let cal = calibrate_strength(ctx.adapter, &sample.latent, d, ctx.detector, &ctx.calibration)?;
    let edited = cal
        .strengths
        .iter()
        .map(|&s| ctx.adapter.render_with_direction(&sample.latent, d, S::of(s)))
        .collect::<Result<Vec<_>>>()?;
    let identity = identity_similarity(&sample.image, &edited, ctx.embedder)?;
    let reference_attrs = ctx.classifier.classify(&sample.image)?;
    let mut trials = Vec::with_capacity(edited.len());
    for ((img, &strength), &sim) in edited.iter().zip(&cal.strengths).zip(&identity.per_image) {
        let delta = attribute_delta_from(
            &reference_attrs,
            &ctx.classifier.classify(img)?,
            ctx.target_index,
            ctx.success_rule,
        )?;
        trials.push(TrialRecord {
            strength,
            identity: sim,
            success: delta.success,
            lost_pct: delta.lost_pct,
            found_pct: delta.found_pct,
        });
    }
    let n = trials.len() as f64;
    Ok(SeedReport {
        seed,
        lambda_min: cal.lambda_min,
        lambda_max: cal.lambda_max,
        clamped: cal.clamped(),
        identity: MeanStd {
            mean: identity.mean,
            std: identity.std,
        },
        success_pct: trials.iter().filter(|t| t.success).count() as f64 / n * 100.0,
        lost_pct: trials.iter().map(|t| t.lost_pct).sum::<f64>() / n,
        found_pct: trials.iter().map(|t| t.found_pct).sum::<f64>() / n,
        trials,
    })
}

/// Calibrates, edits and scores `d` on every seed, then aggregates across seeds.
///
/// Seeds are evaluated in parallel and reduced in ascending seed order, so the
/// report is identical to a serial run. Seeds that fail are listed in
/// `skipped`; if none succeed the call fails.
pub fn evaluate_direction<S: Scalar>(d: &DirectionVector<S>, seeds: &[u64], ctx: &EvalContext<'_, S>) -> Result<MetricsReport> {
    if seeds.is_empty() {
        return Err(Error::Argument("evaluation needs at least one seed".into()));
    }
    ctx.check()?;
    d.check_layout(ctx.adapter.layout())?;
    let mut ordered = seeds.to_vec();
    ordered.sort_unstable();
    let results: Vec<(u64, Result<SeedReport>)> = ordered.par_iter().map(|&s| (s, evaluate_seed(d, s, ctx))).collect();

    let mut per_seed = Vec::new();
    let mut skipped = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(rep) => per_seed.push(rep),
            Err(e) => {
                tracing::warn!("seed {seed} skipped: {e}");
                skipped.push(SkippedSeed {
                    seed,
                    reason: e.to_string(),
                })
            }
        }
    }
    if per_seed.is_empty() {
        return Err(Error::State(format!(
            "every seed failed; first error: {}",
            skipped.first().map(|s| s.reason.as_str()).unwrap_or("none")
        )));
    }
    let column = |f: fn(&SeedReport) -> f64| MeanStd::of(&per_seed.iter().map(f).collect::<Vec<_>>());
    let names = ctx.classifier.attribute_names();
    Ok(MetricsReport {
        direction: d.name.clone(),
        target_index: ctx.target_index,
        target_attribute: names[ctx.target_index].clone(),
        attribute_count: names.len(),
        identity_similarity: column(|s| s.identity.mean),
        success_rate: column(|s| s.success_pct),
        lost_pct: column(|s| s.lost_pct),
        found_pct: column(|s| s.found_pct),
        per_seed,
        skipped,
        snapshot_index: None,
    })
}

/// Metric change of each snapshot relative to snapshot 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDelta {
    pub index: usize,
    pub direction: String,
    pub identity_delta: f64,
    pub success_delta: f64,
    pub lost_delta: f64,
    pub found_delta: f64,
    pub report: MetricsReport,
}

/// Evaluates every snapshot with the same seeds and plugins and reports
/// `snapshot_i − snapshot_0`. Row 0 is all zeros.
pub fn track_iterations<S: Scalar>(
    snapshots: &[DirectionVector<S>],
    seeds: &[u64],
    ctx: &EvalContext<'_, S>,
) -> Result<Vec<IterationDelta>> {
    if snapshots.len() < 2 {
        return Err(Error::Argument(format!(
            "tracking needs at least 2 snapshots, got {}",
            snapshots.len()
        )));
    }
    let mut reports = Vec::with_capacity(snapshots.len());
    for (i, d) in snapshots.iter().enumerate() {
        let mut r = evaluate_direction(d, seeds, ctx)?;
        r.snapshot_index = Some(i);
        reports.push(r);
    }
    let base = reports[0].clone();
    Ok(reports
        .into_iter()
        .enumerate()
        .map(|(index, r)| IterationDelta {
            index,
            direction: r.direction.clone(),
            identity_delta: r.identity_similarity.mean - base.identity_similarity.mean,
            success_delta: r.success_rate.mean - base.success_rate.mean,
            lost_delta: r.lost_pct.mean - base.lost_pct.mean,
            found_delta: r.found_pct.mean - base.found_pct.mean,
            report: r,
        })
        .collect())
}
