use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DirectionVector, FilterLayout};
use crate::action::DisentangleAction;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DIRECTION_FORMAT_VERSION: u32 = 1;

/// Persisted form of a direction, tied to one model and layout.
///
/// Values are written as shortest round-trip decimals, so a save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRecord {
    pub format_version: u32,
    pub model_hash: String,
    pub layout_digest: String,
    pub name: String,
    pub normalized: bool,
    pub values: Vec<f64>,
    #[serde(default)]
    pub provenance: Vec<DisentangleAction>,
}

impl DirectionRecord {
    pub fn from_direction<S: Scalar>(d: &DirectionVector<S>, model_hash: &str) -> Self {
        Self {
            format_version: DIRECTION_FORMAT_VERSION,
            model_hash: model_hash.to_string(),
            layout_digest: d.layout().digest(),
            name: d.name.clone(),
            normalized: d.is_normalized(),
            values: d.values().iter().map(|v| v.as_f64()).collect(),
            provenance: d.provenance.clone(),
        }
    }

    /// Rebuilds the direction, refusing records from another model or layout.
    pub fn into_direction<S: Scalar>(self, layout: &Arc<FilterLayout>, model_hash: &str) -> Result<DirectionVector<S>> {
        if self.format_version != DIRECTION_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.format_version,
                supported: DIRECTION_FORMAT_VERSION,
            });
        }
        if self.model_hash != model_hash {
            return Err(Error::Structural(format!(
                "direction `{}` was made for model {} but the loaded model is {}",
                self.name, self.model_hash, model_hash
            )));
        }
        if self.layout_digest != layout.digest() {
            return Err(Error::Structural(format!(
                "direction `{}` has layout digest {} but the model layout is {}",
                self.name,
                self.layout_digest,
                layout.digest()
            )));
        }
        DirectionVector::from_parts(
            layout.clone(),
            self.values.into_iter().map(S::of).collect(),
            self.name,
            self.normalized,
            self.provenance,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::LayerSpec;
    use proptest::prelude::*;

    fn layout(n: usize) -> Arc<FilterLayout> {
        Arc::new(FilterLayout::new(vec![LayerSpec::new("l", n, 2, 2)]).unwrap())
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let l = layout(values.len());
            let mut d = DirectionVector::new(l.clone(), values.clone(), "x").unwrap();
            d.provenance.push(DisentangleAction::Save { name: "x".into() });
            let text = DirectionRecord::from_direction(&d, "h").to_json().unwrap();
            let back: DirectionVector<f64> = DirectionRecord::from_json(&text).unwrap().into_direction(&l, "h").unwrap();
            prop_assert_eq!(
                back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(back, d);
        }
    }

    #[test]
    fn other_model_refused() {
        let l = layout(2);
        let d = DirectionVector::new(l.clone(), vec![1.0_f64, 2.0], "x").unwrap();
        let rec = DirectionRecord::from_direction(&d, "model-a");
        assert!(matches!(rec.clone().into_direction::<f64>(&l, "model-b"), Err(Error::Structural(_))));
        assert!(matches!(rec.into_direction::<f64>(&layout(3), "model-a"), Err(Error::Structural(_))));
    }

    #[test]
    fn unknown_version_refused() {
        let l = layout(1);
        let d = DirectionVector::new(l.clone(), vec![1.0_f64], "x").unwrap();
        let mut rec = DirectionRecord::from_direction(&d, "m");
        rec.format_version = 7;
        assert!(matches!(
            rec.into_direction::<f64>(&l, "m"),
            Err(Error::UnsupportedVersion { found: 7, .. })
        ));
    }

    #[test]
    fn f32_survives_the_f64_record() {
        let l = layout(3);
        let d = DirectionVector::new(l.clone(), vec![0.1_f32, -3.3, 7.0e-8], "x").unwrap();
        let text = DirectionRecord::from_direction(&d, "m").to_json().unwrap();
        let back: DirectionVector<f32> = DirectionRecord::from_json(&text).unwrap().into_direction(&l, "m").unwrap();
        assert_eq!(back.values(), d.values());
    }
}
