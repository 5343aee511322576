//! User and engine actions that shape a direction.
//!
//! The same records serve as a direction's provenance and as the entries of a
//! session's replayable log.

use serde::{Deserialize, Serialize};

use crate::direction::Polarity;
use crate::mask::{MaskMode, MaskWire};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeTerm {
    pub exemplar_id: String,
    pub seed: u64,
    pub weight: f64,
}

/// What the positives were measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Negatives,
    Average,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRef {
    pub mask_id: String,
    pub mode: MaskMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisentangleAction {
    Select {
        exemplar_id: String,
        seed: u64,
        polarity: Polarity,
    },
    Deselect {
        exemplar_id: String,
    },
    WeightAdjust {
        exemplar_id: String,
        steps: i32,
    },
    Compose {
        terms: Vec<ComposeTerm>,
        baseline: Baseline,
    },
    MaskCreate {
        mask: MaskWire,
    },
    MaskCycle {
        mask_id: String,
    },
    /// Masks folded into the direction, in application order.
    MaskApply {
        masks: Vec<MaskRef>,
    },
    Save {
        name: String,
    },
    Test,
    TestImageAdd {
        seed: u64,
        strength: f64,
    },
    TestImageRemove {
        seed: u64,
    },
    SetStrength {
        seed: u64,
        strength: f64,
    },
}

impl DisentangleAction {
    pub fn kind(&self) -> &'static str {
        match self {
            DisentangleAction::Select { .. } => "select",
            DisentangleAction::Deselect { .. } => "deselect",
            DisentangleAction::WeightAdjust { .. } => "weight_adjust",
            DisentangleAction::Compose { .. } => "compose",
            DisentangleAction::MaskCreate { .. } => "mask_create",
            DisentangleAction::MaskCycle { .. } => "mask_cycle",
            DisentangleAction::MaskApply { .. } => "mask_apply",
            DisentangleAction::Save { .. } => "save",
            DisentangleAction::Test => "test",
            DisentangleAction::TestImageAdd { .. } => "test_image_add",
            DisentangleAction::TestImageRemove { .. } => "test_image_remove",
            DisentangleAction::SetStrength { .. } => "set_strength",
        }
    }
}
