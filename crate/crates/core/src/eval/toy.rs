//! Analytic plugins for the toy generator.
//!
//! The image is split into a 2×4 grid of blocks; on the 16×16 toy these are
//! exactly the supports of the last layer's eight filters, numbered the same
//! way (quadrant-major, then left/right half).

use super::{AttributeClassifier, Detector, Embedder};
use crate::error::Result;
use crate::generator::GeneratedImage;
use crate::scalar::Scalar;

pub const TOY_REGIONS: usize = 8;

/// Block `[y0, y1) × [x0, x1)` of region `r`.
pub fn toy_region(r: usize, height: usize, width: usize) -> (usize, usize, usize, usize) {
    let (quadrant, half) = (r / 2, r % 2);
    let (by, bx) = (quadrant / 2, (quadrant % 2) * 2 + half);
    (by * height / 2, bx * width / 4, (by + 1) * height / 2, (bx + 1) * width / 4)
}

/// Colour channel the toy generator's region `r` is driven through.
pub fn toy_channel(r: usize) -> usize {
    r % 3
}

fn region_mean<S: Scalar>(img: &GeneratedImage<S>, r: usize, c: usize) -> S {
    let (y0, x0, y1, x1) = toy_region(r, img.height, img.width);
    let mut acc = S::zero();
    for y in y0..y1 {
        for x in x0..x1 {
            acc = acc + img.pixel(y, x, c);
        }
    }
    acc / S::of_usize((y1 - y0) * (x1 - x0))
}

/// Subject present while no channel saturates outside `[low, high]`.
#[derive(Debug, Clone)]
pub struct ToyDetector {
    pub low: f64,
    pub high: f64,
}

impl Default for ToyDetector {
    fn default() -> Self {
        Self { low: 0.01, high: 0.99 }
    }
}

impl<S: Scalar> Detector<S> for ToyDetector {
    fn plugin_id(&self) -> &str {
        "toy-detector"
    }

    fn detect(&self, image: &GeneratedImage<S>) -> Result<bool> {
        let (lo, hi) = (S::of(self.low), S::of(self.high));
        Ok(image.pixels.iter().all(|&p| p >= lo && p <= hi))
    }
}

/// Per-region, per-channel means (24 dims).
#[derive(Debug, Clone, Default)]
pub struct ToyEmbedder;

impl<S: Scalar> Embedder<S> for ToyEmbedder {
    fn plugin_id(&self) -> &str {
        "toy-embedder"
    }

    fn embed(&self, image: &GeneratedImage<S>) -> Result<Vec<S>> {
        Ok((0..TOY_REGIONS)
            .flat_map(|r| (0..3).map(move |c| (r, c)))
            .map(|(r, c)| region_mean(image, r, c))
            .collect())
    }
}

/// Attribute `r` is "region `r` is vivid": its driven channel averages above `threshold`.
#[derive(Debug, Clone)]
pub struct ToyClassifier {
    pub threshold: f64,
    names: Vec<String>,
}

impl Default for ToyClassifier {
    fn default() -> Self {
        Self {
            threshold: 0.75,
            names: (0..TOY_REGIONS).map(|r| format!("region{r}_vivid")).collect(),
        }
    }
}

impl<S: Scalar> AttributeClassifier<S> for ToyClassifier {
    fn plugin_id(&self) -> &str {
        "toy-classifier"
    }

    fn attribute_names(&self) -> &[String] {
        &self.names
    }

    fn classify(&self, image: &GeneratedImage<S>) -> Result<Vec<bool>> {
        let t = S::of(self.threshold);
        Ok((0..TOY_REGIONS).map(|r| region_mean(image, r, toy_channel(r)) > t).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_tile_the_toy_image() {
        let mut hits = vec![0; 256];
        for r in 0..TOY_REGIONS {
            let (y0, x0, y1, x1) = toy_region(r, 16, 16);
            assert_eq!((y1 - y0, x1 - x0), (8, 4));
            for y in y0..y1 {
                for x in x0..x1 {
                    hits[y * 16 + x] += 1;
                }
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
        // region 3 is the right half of the top-right quadrant
        assert_eq!(toy_region(3, 16, 16), (0, 12, 8, 16));
    }
}
