//! Interactive editing sessions.
//!
//! Every change to a session goes through [`Session::apply`], which validates
//! the action against a scratch copy of the state and only commits (and logs)
//! it when it succeeds. Replaying the log on a fresh session therefore rebuilds
//! the same direction.

mod log;
mod store;

pub use log::{LogEntry, LogHeader, LogWriter, SessionLog, LOG_FORMAT_VERSION};
pub use store::DirectionStore;

use std::collections::HashSet;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{ComposeTerm, DisentangleAction, MaskRef};
use crate::direction::{
    adjust_weight, compose_direction, extract_filter_vector, normalize, DirectionRecord, DirectionVector, Exemplar,
    ExemplarSet, FilterVector, WeightConfig,
};
use crate::error::{Error, Result};
use crate::generator::{GeneratedImage, GeneratorAdapter};
use crate::mask::{apply_mask_modes, filter_importance, Mask, MaskImportance, MaskMode};
use crate::scalar::Scalar;

pub const ENTANGLED_LABEL: &str = "entangled";
const MAX_GALLERY_PAGE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub weights: WeightConfig,
    /// Seeds of the live-testing images a new session starts with.
    pub test_seeds: Vec<u64>,
    pub default_strength: f64,
    pub thumbnail_factor: usize,
    pub epsilon: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            weights: WeightConfig::default(),
            test_seeds: vec![0, 1, 2, 3],
            default_strength: 1.0,
            thumbnail_factor: 2,
            epsilon: crate::mask::DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestImage {
    pub seed: u64,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryItem<S: Scalar> {
    pub exemplar_id: String,
    pub seed: u64,
    pub thumbnail: GeneratedImage<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestRender<S: Scalar> {
    pub seed: u64,
    pub strength: f64,
    pub reference: GeneratedImage<S>,
    pub edited: GeneratedImage<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub id: String,
    pub mode: MaskMode,
    pub created_from: u64,
}

/// What an accepted action produced, beyond its log entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<S: Scalar> {
    Selected { exemplar_id: String, weight: f64 },
    Deselected { exemplar_id: String },
    Weight { exemplar_id: String, weight: f64, clamped: bool },
    Composed,
    MaskCreated { mask_id: String },
    MaskMode { mask_id: String, mode: MaskMode },
    MasksApplied { masks: Vec<MaskRef> },
    Saved { record: DirectionRecord },
    Tested { renders: Vec<TestRender<S>> },
    TestImages,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applied<S: Scalar> {
    pub entry: LogEntry,
    pub outcome: Outcome<S>,
}

#[derive(Debug, Clone)]
struct SessionMask<S: Scalar> {
    mask: Mask,
    importance: MaskImportance<S>,
}

#[derive(Debug, Clone)]
struct State<S: Scalar> {
    exemplars: ExemplarSet<S>,
    test_images: Vec<TestImage>,
    masks: Vec<SessionMask<S>>,
    /// Mask groups already folded in by `mask_apply`, oldest first.
    committed: Vec<Vec<(MaskImportance<S>, MaskMode)>>,
    tested: bool,
}

impl<S: Scalar> State<S> {
    fn mask_mut(&mut self, id: &str) -> Result<&mut SessionMask<S>> {
        self.masks
            .iter_mut()
            .find(|m| m.mask.id == id)
            .ok_or_else(|| Error::NotFound(format!("no mask `{id}`")))
    }

    fn test_image_mut(&mut self, seed: u64) -> Result<&mut TestImage> {
        self.test_images
            .iter_mut()
            .find(|t| t.seed == seed)
            .ok_or_else(|| Error::NotFound(format!("no test image with seed {seed}")))
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn check_strength(strength: f64) -> Result<()> {
    if strength.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("strength {strength} is not finite")))
    }
}

pub struct Session<S: Scalar> {
    id: String,
    adapter: Arc<dyn GeneratorAdapter<S>>,
    config: SessionConfig,
    average: Option<Arc<FilterVector<S>>>,
    store: Option<Arc<DirectionStore>>,
    state: State<S>,
    current: Option<DirectionVector<S>>,
    log: Vec<LogEntry>,
    served: HashSet<u64>,
    writer: Option<LogWriter>,
}

impl<S: Scalar> Session<S> {
    pub fn new(id: impl Into<String>, adapter: Arc<dyn GeneratorAdapter<S>>, config: SessionConfig) -> Result<Self> {
        config.weights.validate()?;
        if config.thumbnail_factor == 0 || config.epsilon.is_nan() || config.epsilon <= 0.0 {
            return Err(Error::Argument("thumbnail_factor and epsilon must be positive".into()));
        }
        check_strength(config.default_strength)?;
        let mut test_images: Vec<TestImage> = Vec::new();
        for &seed in &config.test_seeds {
            if test_images.iter().any(|t| t.seed == seed) {
                return Err(Error::Argument(format!("test seed {seed} listed twice")));
            }
            test_images.push(TestImage {
                seed,
                strength: config.default_strength,
            });
        }
        Ok(Self {
            id: id.into(),
            adapter,
            config,
            average: None,
            store: None,
            state: State {
                exemplars: ExemplarSet::new(),
                test_images,
                masks: Vec::new(),
                committed: Vec::new(),
                tested: false,
            },
            current: None,
            log: Vec::new(),
            served: HashSet::new(),
            writer: None,
        })
    }

    /// Baseline used when no negatives are selected.
    pub fn with_average(mut self, average: Arc<FilterVector<S>>) -> Self {
        self.average = Some(average);
        self
    }

    /// Where `save` actions write their records.
    pub fn with_store(mut self, store: Arc<DirectionStore>) -> Self {
        self.store = Some(store);
        self
    }

    /// Persists every accepted entry from now on.
    pub fn attach_writer(&mut self, writer: LogWriter) {
        self.writer = Some(writer);
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn adapter(&self) -> &Arc<dyn GeneratorAdapter<S>> {
        &self.adapter
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn exemplars(&self) -> &ExemplarSet<S> {
        &self.state.exemplars
    }

    pub fn test_images(&self) -> &[TestImage] {
        &self.state.test_images
    }

    pub fn masks(&self) -> Vec<MaskSummary> {
        self.state
            .masks
            .iter()
            .map(|m| MaskSummary {
                id: m.mask.id.clone(),
                mode: m.mask.mode,
                created_from: m.mask.created_from,
            })
            .collect()
    }

    /// Direction as of the last entry that recorded one.
    pub fn current_direction(&self) -> Option<&DirectionVector<S>> {
        self.current.as_ref()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn header(&self) -> LogHeader {
        LogHeader {
            format_version: LOG_FORMAT_VERSION,
            session_id: self.id.clone(),
            model_hash: self.adapter.model_hash().to_string(),
            config: self.config.clone(),
        }
    }

    pub fn export_log(&self) -> SessionLog {
        SessionLog {
            header: self.header(),
            entries: self.log.clone(),
        }
    }

    /// A page of seeds this session has not shown before, with thumbnails.
    ///
    /// The page depends only on `page_seed` and the seeds already served, so a
    /// fresh session always gets the same first page for the same `page_seed`.
    pub fn gallery(&mut self, count: usize, page_seed: u64) -> Result<Vec<GalleryItem<S>>> {
        if count == 0 || count > MAX_GALLERY_PAGE {
            return Err(Error::Argument(format!("gallery count must be in 1..={MAX_GALLERY_PAGE}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(page_seed);
        let mut seeds = Vec::with_capacity(count);
        while seeds.len() < count {
            let seed = u64::from(rng.random::<u32>());
            if self.served.insert(seed) {
                seeds.push(seed);
            }
        }
        let factor = self.config.thumbnail_factor;
        let adapter = &self.adapter;
        seeds
            .par_iter()
            .map(|&seed| {
                Ok(GalleryItem {
                    exemplar_id: format!("ex-{seed}"),
                    seed,
                    thumbnail: adapter.sample(seed)?.image.thumbnail(factor),
                })
            })
            .collect()
    }

    /// Composes, normalizes and folds in committed, then active, masks.
    fn derive(&self, state: &State<S>) -> Result<DirectionVector<S>> {
        let composed = compose_direction(&state.exemplars, self.average.as_deref())?;
        let mut d = if composed.norm() > S::zero() { normalize(&composed)? } else { composed };
        for group in &state.committed {
            let refs: Vec<_> = group.iter().map(|(imp, mode)| (imp, *mode)).collect();
            d = apply_mask_modes(&d, &refs)?;
        }
        let active: Vec<_> = state
            .masks
            .iter()
            .filter(|m| m.mask.mode != MaskMode::Off)
            .map(|m| (&m.importance, m.mask.mode))
            .collect();
        d = apply_mask_modes(&d, &active)?;
        Ok(d.with_name("current"))
    }

    /// Like `derive`, but a missing selection or baseline, or masks that
    /// suppress every component, just mean there is no direction right now.
    fn derive_if_ready(&self, state: &State<S>) -> Result<Option<DirectionVector<S>>> {
        match self.derive(state) {
            Ok(d) => Ok(Some(d)),
            Err(Error::State(_)) => Ok(None),
            Err(Error::Numeric(msg)) => {
                tracing::debug!(session = %self.id, "no direction: {msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn render_tests(&self, state: &State<S>, d: &DirectionVector<S>) -> Result<Vec<TestRender<S>>> {
        let adapter = &self.adapter;
        state
            .test_images
            .par_iter()
            .map(|t| {
                let z = adapter.latent(t.seed);
                Ok(TestRender {
                    seed: t.seed,
                    strength: t.strength,
                    reference: adapter.forward(&z, None)?.image,
                    edited: adapter.render_with_direction(&z, d, S::of(t.strength))?,
                })
            })
            .collect()
    }

    pub fn apply(&mut self, action: DisentangleAction) -> Result<Applied<S>> {
        self.apply_at(action, now_ms())
    }

    /// Applies an action with an explicit timestamp.
    pub fn apply_at(&mut self, action: DisentangleAction, timestamp_ms: u64) -> Result<Applied<S>> {
        let mut next = self.state.clone();
        let mut logged = action.clone();
        let mut label = None;
        let mut tested = false;
        let mut direction = None;
        let mut keep_direction = false;

        let outcome = match action {
            DisentangleAction::Select {
                exemplar_id,
                seed,
                polarity,
            } => {
                if next.exemplars.get(&exemplar_id).is_some() {
                    return Err(Error::Conflict(format!("exemplar `{exemplar_id}` is already selected")));
                }
                let bundle = self.adapter.sample(seed)?.bundle;
                let fv = extract_filter_vector(self.adapter.layout(), &bundle)?;
                let e = Exemplar::new(exemplar_id.clone(), seed, fv, polarity);
                let weight = e.weight();
                next.exemplars.insert(e)?;
                keep_direction = true;
                Outcome::Selected { exemplar_id, weight }
            }
            DisentangleAction::Deselect { exemplar_id } => {
                next.exemplars
                    .remove(&exemplar_id)
                    .ok_or_else(|| Error::NotFound(format!("exemplar `{exemplar_id}` is not selected")))?;
                keep_direction = true;
                Outcome::Deselected { exemplar_id }
            }
            DisentangleAction::WeightAdjust { exemplar_id, steps } => {
                let e = next
                    .exemplars
                    .get_mut(&exemplar_id)
                    .ok_or_else(|| Error::NotFound(format!("exemplar `{exemplar_id}` is not selected")))?;
                let adj = adjust_weight(e, steps, &self.config.weights);
                *e = adj.exemplar;
                direction = self.derive_if_ready(&next)?;
                Outcome::Weight {
                    weight: e_weight(&next, &exemplar_id),
                    exemplar_id,
                    clamped: adj.clamped,
                }
            }
            DisentangleAction::Compose { .. } => {
                let d = self.derive(&next)?;
                logged = d
                    .provenance
                    .iter()
                    .find(|a| matches!(a, DisentangleAction::Compose { .. }))
                    .cloned()
                    .unwrap_or(logged);
                direction = Some(d);
                Outcome::Composed
            }
            DisentangleAction::MaskCreate { mask } => {
                let mask = Mask::from_wire(&mask)?;
                if mask.resolution() != self.adapter.resolution() {
                    return Err(Error::Structural(format!(
                        "mask `{}` is {:?} but images are {:?}",
                        mask.id,
                        mask.resolution(),
                        self.adapter.resolution()
                    )));
                }
                if next.masks.iter().any(|m| m.mask.id == mask.id) {
                    return Err(Error::Conflict(format!("mask `{}` already exists", mask.id)));
                }
                let bundle = self.adapter.sample(mask.created_from)?.bundle;
                let importance = filter_importance(&mask, &bundle, S::of(self.config.epsilon))?;
                let mask_id = mask.id.clone();
                next.masks.push(SessionMask { mask, importance });
                direction = self.derive_if_ready(&next)?;
                Outcome::MaskCreated { mask_id }
            }
            DisentangleAction::MaskCycle { mask_id } => {
                let m = next.mask_mut(&mask_id)?;
                m.mask.mode = m.mask.mode.next();
                let mode = m.mask.mode;
                direction = self.derive_if_ready(&next)?;
                Outcome::MaskMode { mask_id, mode }
            }
            DisentangleAction::MaskApply { masks } => {
                let refs: Vec<MaskRef> = if masks.is_empty() {
                    let mut active: Vec<MaskRef> = next
                        .masks
                        .iter()
                        .filter(|m| m.mask.mode != MaskMode::Off)
                        .map(|m| MaskRef {
                            mask_id: m.mask.id.clone(),
                            mode: m.mask.mode,
                        })
                        .collect();
                    active.sort_by(|a, b| a.mask_id.cmp(&b.mask_id));
                    active
                } else {
                    masks
                };
                if refs.iter().all(|r| r.mode == MaskMode::Off) {
                    return Err(Error::State("no active masks to apply".into()));
                }
                let mut group = Vec::new();
                for r in &refs {
                    let m = next.mask_mut(&r.mask_id)?;
                    group.push((m.importance.clone(), r.mode));
                    m.mask.mode = MaskMode::Off;
                }
                next.committed.push(group);
                direction = Some(self.derive(&next)?);
                logged = DisentangleAction::MaskApply { masks: refs.clone() };
                Outcome::MasksApplied { masks: refs }
            }
            DisentangleAction::Save { name } => {
                let d = self.derive(&next)?;
                let record = DirectionRecord::from_direction(&d.clone().with_name(name.clone()), self.adapter.model_hash());
                if let Some(store) = &self.store {
                    store.save(&record)?;
                }
                direction = Some(d);
                label = Some(name);
                Outcome::Saved { record }
            }
            DisentangleAction::Test => {
                let d = self.derive(&next)?;
                let renders = self.render_tests(&next, &d)?;
                if !next.tested {
                    label = Some(ENTANGLED_LABEL.to_string());
                    next.tested = true;
                }
                tested = true;
                direction = Some(d);
                Outcome::Tested { renders }
            }
            DisentangleAction::TestImageAdd { seed, strength } => {
                check_strength(strength)?;
                if next.test_images.iter().any(|t| t.seed == seed) {
                    return Err(Error::Conflict(format!("seed {seed} is already a test image")));
                }
                next.test_images.push(TestImage { seed, strength });
                keep_direction = true;
                Outcome::TestImages
            }
            DisentangleAction::TestImageRemove { seed } => {
                next.test_image_mut(seed)?;
                next.test_images.retain(|t| t.seed != seed);
                keep_direction = true;
                Outcome::TestImages
            }
            DisentangleAction::SetStrength { seed, strength } => {
                check_strength(strength)?;
                next.test_image_mut(seed)?.strength = strength;
                keep_direction = true;
                Outcome::TestImages
            }
        };

        let entry = LogEntry {
            seq: self.log.len() as u64,
            timestamp_ms,
            action: logged,
            direction: direction
                .as_ref()
                .map(|d| DirectionRecord::from_direction(d, self.adapter.model_hash())),
            tested,
            label,
        };
        self.state = next;
        if !keep_direction {
            self.current = direction;
        }
        if let Some(w) = &mut self.writer {
            if let Err(e) = w.append(&entry) {
                tracing::warn!(session = %self.id, "could not persist log entry {}: {e}", entry.seq);
            }
        }
        self.log.push(entry.clone());
        Ok(Applied { entry, outcome })
    }

    /// Rebuilds a session by applying `log` to a fresh one, checking every recorded direction.
    pub fn replay(
        adapter: Arc<dyn GeneratorAdapter<S>>,
        log: &SessionLog,
        average: Option<Arc<FilterVector<S>>>,
    ) -> Result<Self> {
        if log.header.model_hash != adapter.model_hash() {
            return Err(Error::Structural(format!(
                "log was recorded with model {} but the loaded model is {}",
                log.header.model_hash,
                adapter.model_hash()
            )));
        }
        let mut s = Session::new(log.header.session_id.clone(), adapter, log.header.config.clone())?;
        s.average = average;
        for e in &log.entries {
            let applied = s
                .apply_at(e.action.clone(), e.timestamp_ms)
                .map_err(|err| Error::State(format!("replaying entry {}: {err}", e.seq)))?;
            if applied.entry.direction != e.direction {
                return Err(Error::State(format!("replay diverged at entry {}", e.seq)));
            }
        }
        Ok(s)
    }

    /// Compose terms of the current selection, as a `compose` action would log them.
    pub fn compose_terms(&self) -> Vec<ComposeTerm> {
        self.state
            .exemplars
            .iter()
            .map(|e| ComposeTerm {
                exemplar_id: e.id.clone(),
                seed: e.seed,
                weight: e.weight(),
            })
            .collect()
    }
}

fn e_weight<S: Scalar>(state: &State<S>, id: &str) -> f64 {
    state.exemplars.get(id).map(|e| e.weight()).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Baseline;
    use crate::direction::Polarity;
    use crate::generator::MaskedTreeGenerator;

    fn session() -> Session<f64> {
        Session::new("s", Arc::new(MaskedTreeGenerator::toy()), SessionConfig::default()).unwrap()
    }

    fn select(id: &str, seed: u64, polarity: Polarity) -> DisentangleAction {
        DisentangleAction::Select {
            exemplar_id: id.into(),
            seed,
            polarity,
        }
    }

    #[test]
    fn gallery_pages_are_deterministic_and_fresh() {
        let mut a = session();
        let mut b = session();
        let pa = a.gallery(24, 9).unwrap();
        let pb = b.gallery(24, 9).unwrap();
        assert_eq!(pa.len(), 24);
        assert_eq!(pa, pb);
        let again = a.gallery(24, 9).unwrap();
        let first: HashSet<u64> = pa.iter().map(|g| g.seed).collect();
        assert!(again.iter().all(|g| !first.contains(&g.seed)));
        assert_eq!((pa[0].thumbnail.height, pa[0].thumbnail.width), (8, 8));
        assert!(a.log().is_empty());
    }

    #[test]
    fn test_without_positives_is_a_state_error() {
        let mut s = session();
        assert!(matches!(s.apply(DisentangleAction::Test), Err(Error::State(_))));
        assert!(s.log().is_empty());
    }

    #[test]
    fn first_test_is_labelled_entangled_once() {
        let mut s = session();
        s.apply(select("p", 5, Polarity::Positive)).unwrap();
        s.apply(select("n", 6, Polarity::Negative)).unwrap();
        let first = s.apply(DisentangleAction::Test).unwrap();
        assert_eq!(first.entry.label.as_deref(), Some(ENTANGLED_LABEL));
        let second = s.apply(DisentangleAction::Test).unwrap();
        assert_eq!(second.entry.label, None);
        let labelled = s.log().iter().filter(|e| e.label.as_deref() == Some(ENTANGLED_LABEL)).count();
        assert_eq!(labelled, 1);
        match first.outcome {
            Outcome::Tested { renders } => assert_eq!(renders.len(), 4),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn zero_strength_tests_return_references() {
        let mut s = session();
        s.apply(select("p", 5, Polarity::Positive)).unwrap();
        s.apply(select("n", 6, Polarity::Negative)).unwrap();
        for seed in 0..4 {
            s.apply(DisentangleAction::SetStrength { seed, strength: 0.0 }).unwrap();
        }
        let Outcome::Tested { renders } = s.apply(DisentangleAction::Test).unwrap().outcome else {
            panic!()
        };
        assert!(renders.iter().all(|r| r.edited.same_pixels(&r.reference)));
    }

    #[test]
    fn failed_actions_leave_no_trace() {
        let mut s = session();
        s.apply(select("p", 5, Polarity::Positive)).unwrap();
        assert!(matches!(s.apply(select("p", 7, Polarity::Negative)), Err(Error::Conflict(_))));
        assert!(matches!(
            s.apply(DisentangleAction::MaskCycle { mask_id: "none".into() }),
            Err(Error::NotFound(_))
        ));
        assert_eq!(s.log().len(), 1);
        assert_eq!(s.exemplars().len(), 1);
    }

    #[test]
    fn compose_logs_the_terms_it_used() {
        let mut s = session();
        s.apply(select("p", 5, Polarity::Positive)).unwrap();
        s.apply(select("n", 6, Polarity::Negative)).unwrap();
        s.apply(DisentangleAction::WeightAdjust {
            exemplar_id: "p".into(),
            steps: 3,
        })
        .unwrap();
        let e = s
            .apply(DisentangleAction::Compose {
                terms: vec![],
                baseline: Baseline::Average,
            })
            .unwrap()
            .entry;
        let DisentangleAction::Compose { terms, baseline } = e.action else {
            panic!()
        };
        assert_eq!(baseline, Baseline::Negatives);
        assert_eq!(terms, s.compose_terms());
        assert_eq!(terms[0].weight, 2.5);
    }

    #[test]
    fn weight_adjust_reports_clamping() {
        let mut s = session();
        s.apply(select("n", 6, Polarity::Negative)).unwrap();
        let out = s
            .apply(DisentangleAction::WeightAdjust {
                exemplar_id: "n".into(),
                steps: -5,
            })
            .unwrap();
        assert_eq!(
            out.outcome,
            Outcome::Weight {
                exemplar_id: "n".into(),
                weight: -0.5,
                clamped: true
            }
        );
        // no positives yet, so no direction
        assert!(out.entry.direction.is_none());
    }
}
