use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One hooked convolutional layer: `filters` activation maps of `height × width`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    pub filters: usize,
    pub height: usize,
    pub width: usize,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, filters: usize, height: usize, width: usize) -> Self {
        Self {
            id: id.into(),
            filters,
            height,
            width,
        }
    }

    pub fn map_len(&self) -> usize {
        self.height * self.width
    }
}

/// The per-filter coordinate system of a generator.
///
/// Every direction and filter vector has one component per filter, laid out
/// layer by layer in the order given here.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct FilterLayout {
    layers: Vec<LayerSpec>,
    #[serde(skip)]
    offsets: Vec<usize>,
    total_dims: usize,
}

impl FilterLayout {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("a layout needs at least one layer".into()));
        }
        let mut seen = HashSet::new();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for layer in &layers {
            if !seen.insert(layer.id.as_str()) {
                return Err(Error::Structural(format!("duplicate layer id `{}`", layer.id)));
            }
            if layer.filters == 0 || layer.height == 0 || layer.width == 0 {
                return Err(Error::Argument(format!(
                    "layer `{}` has a zero dimension ({}×{}×{})",
                    layer.id, layer.filters, layer.height, layer.width
                )));
            }
            offsets.push(total);
            total += layer.filters;
        }
        Ok(Self {
            layers,
            offsets,
            total_dims: total,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn total_dims(&self) -> usize {
        self.total_dims
    }

    /// Component range of layer `index` inside a flat filter vector.
    pub fn layer_range(&self, index: usize) -> Range<usize> {
        let start = self.offsets[index];
        start..start + self.layers[index].filters
    }

    pub fn layer_index(&self, id: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.id == id)
    }

    /// Maps a flat component index back to `(layer index, filter index)`.
    pub fn locate(&self, component: usize) -> Option<(usize, usize)> {
        if component >= self.total_dims {
            return None;
        }
        let layer = self.offsets.partition_point(|&o| o <= component) - 1;
        Some((layer, component - self.offsets[layer]))
    }

    /// Hex SHA-256 over the canonical layer table.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for l in &self.layers {
            hasher.update(format!("{}:{}:{}:{};", l.id, l.filters, l.height, l.width).as_bytes());
        }
        hex(&hasher.finalize())
    }
}

impl<'de> Deserialize<'de> for FilterLayout {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            layers: Vec<LayerSpec>,
        }
        let raw = Raw::deserialize(d)?;
        FilterLayout::new(raw.layers).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FilterLayout {
        FilterLayout::new(vec![
            LayerSpec::new("a", 4, 4, 4),
            LayerSpec::new("b", 8, 8, 8),
            LayerSpec::new("c", 8, 16, 16),
        ])
        .unwrap()
    }

    #[test]
    fn total_dims_is_sum_of_filters() {
        let l = toy();
        assert_eq!(l.total_dims(), 20);
        assert_eq!(l.layer_range(1), 4..12);
        assert_eq!(l.locate(0), Some((0, 0)));
        assert_eq!(l.locate(4), Some((1, 0)));
        assert_eq!(l.locate(19), Some((2, 7)));
        assert_eq!(l.locate(20), None);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = FilterLayout::new(vec![LayerSpec::new("a", 1, 1, 1), LayerSpec::new("a", 1, 1, 1)]);
        assert!(matches!(err, Err(Error::Structural(_))));
    }

    #[test]
    fn digest_depends_on_shape() {
        let a = toy();
        let b = FilterLayout::new(vec![LayerSpec::new("a", 4, 4, 4)]).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), toy().digest());
    }

    #[test]
    fn serde_revalidates() {
        let json = serde_json::to_string(&toy()).unwrap();
        let back: FilterLayout = serde_json::from_str(&json).unwrap();
        assert_eq!(back, toy());
        let bad = r#"{"layers":[{"id":"x","filters":0,"height":1,"width":1}]}"#;
        assert!(serde_json::from_str::<FilterLayout>(bad).is_err());
    }
}
