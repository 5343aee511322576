//! Request and response bodies.

use disentangle_core::action::MaskRef;
use disentangle_core::eval::plugin::ImageRequest;
use disentangle_core::mask::{MaskWire, Stroke};
use disentangle_core::session::{LogEntry, MaskSummary, Outcome, TestImage, TestRender};
use disentangle_core::{DirectionRecord, GeneratedImage, MaskMode, Polarity, Scalar, Session};
use serde::{Deserialize, Serialize};

/// Image as `height × width × 3` bytes, base64-encoded.
pub type ImageView = ImageRequest;

pub fn image<S: Scalar>(img: &GeneratedImage<S>) -> ImageView {
    ImageRequest::encode(img)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExemplarView {
    pub exemplar_id: String,
    pub seed: u64,
    pub polarity: Polarity,
    pub weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub model_hash: String,
    pub exemplars: Vec<ExemplarView>,
    pub test_images: Vec<TestImage>,
    pub masks: Vec<MaskSummary>,
    pub direction: Option<DirectionRecord>,
    pub log_len: usize,
}

impl SessionView {
    pub fn of<S: Scalar>(s: &Session<S>) -> Self {
        let hash = s.adapter().model_hash().to_string();
        Self {
            id: s.id().to_string(),
            exemplars: s
                .exemplars()
                .iter()
                .map(|e| ExemplarView {
                    exemplar_id: e.id.clone(),
                    seed: e.seed,
                    polarity: e.polarity(),
                    weight: e.weight(),
                })
                .collect(),
            test_images: s.test_images().to_vec(),
            masks: s.masks(),
            direction: s.current_direction().map(|d| DirectionRecord::from_direction(d, &hash)),
            log_len: s.log().len(),
            model_hash: hash,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RenderView {
    pub seed: u64,
    pub strength: f64,
    pub reference: ImageView,
    pub edited: ImageView,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeView {
    Selected { exemplar_id: String, weight: f64 },
    Deselected { exemplar_id: String },
    Weight { exemplar_id: String, weight: f64, clamped: bool },
    Composed,
    MaskCreated { mask_id: String },
    MaskMode { mask_id: String, mode: MaskMode },
    MasksApplied { masks: Vec<MaskRef> },
    Saved { record: DirectionRecord },
    Tested { renders: Vec<RenderView> },
    TestImages,
}

fn render<S: Scalar>(r: &TestRender<S>) -> RenderView {
    RenderView {
        seed: r.seed,
        strength: r.strength,
        reference: image(&r.reference),
        edited: image(&r.edited),
        warnings: r.edited.warnings.clone(),
    }
}

impl<S: Scalar> From<Outcome<S>> for OutcomeView {
    fn from(o: Outcome<S>) -> Self {
        match o {
            Outcome::Selected { exemplar_id, weight } => OutcomeView::Selected { exemplar_id, weight },
            Outcome::Deselected { exemplar_id } => OutcomeView::Deselected { exemplar_id },
            Outcome::Weight {
                exemplar_id,
                weight,
                clamped,
            } => OutcomeView::Weight {
                exemplar_id,
                weight,
                clamped,
            },
            Outcome::Composed => OutcomeView::Composed,
            Outcome::MaskCreated { mask_id } => OutcomeView::MaskCreated { mask_id },
            Outcome::MaskMode { mask_id, mode } => OutcomeView::MaskMode { mask_id, mode },
            Outcome::MasksApplied { masks } => OutcomeView::MasksApplied { masks },
            Outcome::Saved { record } => OutcomeView::Saved { record },
            Outcome::Tested { renders } => OutcomeView::Tested {
                renders: renders.iter().map(render).collect(),
            },
            Outcome::TestImages => OutcomeView::TestImages,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionResponse {
    pub entry: LogEntry,
    pub outcome: OutcomeView,
    pub session: SessionView,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GalleryRequest {
    pub count: usize,
    pub page_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub exemplar_id: String,
    pub seed: u64,
    pub thumbnail: ImageView,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectRequest {
    pub seed: u64,
    pub polarity: Polarity,
    /// Defaults to `ex-<seed>`, the gallery's id.
    #[serde(default)]
    pub exemplar_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WeightRequest {
    pub steps: i32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TestImageRequest {
    pub seed: u64,
    #[serde(default)]
    pub strength: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StrengthRequest {
    pub strength: f64,
}

/// A brushed stroke rasterized server-side, or an already rasterized mask.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskRequest {
    Stroke {
        mask_id: String,
        created_from: u64,
        stroke: Stroke,
    },
    Wire {
        mask: MaskWire,
    },
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct ApplyRequest {
    #[serde(default)]
    pub masks: Vec<MaskRef>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SaveRequest {
    pub name: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LayerView {
    pub id: String,
    pub filters: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelView {
    pub model_hash: String,
    pub latent_dim: usize,
    pub resolution: [usize; 2],
    pub layers: Vec<LayerView>,
    pub has_average: bool,
    pub plugins: PluginView,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct PluginView {
    pub detector: Option<String>,
    pub embedder: Option<String>,
    pub classifier: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
pub struct LogQuery {
    #[serde(default)]
    pub format: Option<String>,
}
