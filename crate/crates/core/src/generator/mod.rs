//! Generator adapters: seeded sampling, feature-map capture and re-rendering
//! with a direction applied as per-filter activation offsets.

mod package;
mod tree;

use std::sync::Arc;

pub use package::{export_model_package, load_masked_tree, load_model_package, read_manifest, ModelManifest, PACKAGE_FORMAT_VERSION};
pub use tree::{MaskedTreeGenerator, MaskedTreeWeights, Rect, TreeLayer, TOY_WEIGHT_SEED};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::direction::{normalize, BundleSampler, DirectionVector, FilterLayout};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Point in the generator's input space together with the seed that drew it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode<S: Scalar> {
    pub values: Vec<S>,
    pub seed: u64,
}

impl<S: Scalar> LatentCode<S> {
    /// Standard normal draw from a ChaCha8 stream seeded with `seed`.
    pub fn sample(seed: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..dim)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                S::of(v)
            })
            .collect();
        Self { values, seed }
    }
}

/// Direction name and strength an image was rendered with.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedEdit {
    pub direction: String,
    pub strength: f64,
}

/// `H×W×3` image, channels in `[0, 1]`, stored row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedImage<S: Scalar> {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<S>,
    pub source_seed: u64,
    pub applied: Option<AppliedEdit>,
    pub warnings: Vec<String>,
}

impl<S: Scalar> GeneratedImage<S> {
    pub fn pixel(&self, y: usize, x: usize, c: usize) -> S {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    /// Pixel equality, ignoring metadata.
    pub fn same_pixels(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.pixels == other.pixels
    }

    /// 8-bit RGB bytes, rounding to nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Area-average downsample by an integer factor, for gallery thumbnails.
    pub fn thumbnail(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let h = (self.height / factor).max(1);
        let w = (self.width / factor).max(1);
        let mut pixels = Vec::with_capacity(h * w * 3);
        for ty in 0..h {
            for tx in 0..w {
                for c in 0..3 {
                    let mut acc = S::zero();
                    let mut n = 0;
                    for y in ty * factor..((ty + 1) * factor).min(self.height) {
                        for x in tx * factor..((tx + 1) * factor).min(self.width) {
                            acc = acc + self.pixel(y, x, c);
                            n += 1;
                        }
                    }
                    pixels.push(acc / S::of_usize(n));
                }
            }
        }
        Self {
            height: h,
            width: w,
            pixels,
            source_seed: self.source_seed,
            applied: self.applied.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Activations of every hooked layer for one forward pass.
///
/// Layer `i` is stored as `filters × height × width`, row-major per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapBundle<S: Scalar> {
    layout: Arc<FilterLayout>,
    maps: Vec<Vec<S>>,
}

impl<S: Scalar> FeatureMapBundle<S> {
    pub fn new(layout: Arc<FilterLayout>, maps: Vec<Vec<S>>) -> Result<Self> {
        if maps.len() != layout.layers().len() {
            return Err(Error::Structural(format!(
                "bundle has {} layers, layout has {}",
                maps.len(),
                layout.layers().len()
            )));
        }
        for (spec, m) in layout.layers().iter().zip(&maps) {
            if m.len() != spec.filters * spec.map_len() {
                return Err(Error::Structural(format!(
                    "layer `{}` expects {} activations, got {}",
                    spec.id,
                    spec.filters * spec.map_len(),
                    m.len()
                )));
            }
        }
        Ok(Self { layout, maps })
    }

    pub fn layout(&self) -> &Arc<FilterLayout> {
        &self.layout
    }

    pub fn layer(&self, index: usize) -> &[S] {
        &self.maps[index]
    }

    pub fn filter_map(&self, layer: usize, filter: usize) -> &[S] {
        let len = self.layout.layers()[layer].map_len();
        &self.maps[layer][filter * len..(filter + 1) * len]
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass<S: Scalar> {
    pub image: GeneratedImage<S>,
    pub bundle: FeatureMapBundle<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S: Scalar> {
    pub latent: LatentCode<S>,
    pub image: GeneratedImage<S>,
    pub bundle: FeatureMapBundle<S>,
}

/// Uniform view of a convolutional generator with hookable layers.
///
/// `forward` must be deterministic and must add `offsets[f]` uniformly to the
/// map of filter `f` before any downstream layer reads it. Implementations
/// backed by stateful runtimes serialize concurrent calls internally.
pub trait GeneratorAdapter<S: Scalar>: Send + Sync {
    fn layout(&self) -> &Arc<FilterLayout>;
    fn latent_dim(&self) -> usize;
    /// `(height, width)` of generated images.
    fn resolution(&self) -> (usize, usize);
    fn model_hash(&self) -> &str;

    fn forward(&self, z: &LatentCode<S>, offsets: Option<&[S]>) -> Result<ForwardPass<S>>;

    /// Per-layer hook switches; offsets on unhooked layers are dropped.
    fn hooked_layers(&self) -> Vec<bool> {
        vec![true; self.layout().layers().len()]
    }

    fn latent(&self, seed: u64) -> LatentCode<S> {
        LatentCode::sample(seed, self.latent_dim())
    }

    fn sample(&self, seed: u64) -> Result<Sample<S>> {
        let latent = self.latent(seed);
        let pass = self.forward(&latent, None)?;
        Ok(Sample {
            latent,
            image: pass.image,
            bundle: pass.bundle,
        })
    }

    /// Forward pass with `strength · d̂` added to the hooked filters, where `d̂` is `d` at unit norm.
    fn edit_pass(&self, z: &LatentCode<S>, d: &DirectionVector<S>, strength: S) -> Result<ForwardPass<S>> {
        d.check_layout(self.layout())?;
        let mut warnings = Vec::new();
        let offsets = if strength == S::zero() {
            None
        } else if d.is_normalized() {
            Some(d.values().iter().map(|&v| v * strength).collect::<Vec<_>>())
        } else if d.norm() == S::zero() {
            warnings.push(format!("direction `{}` is zero; rendered without an edit", d.name));
            None
        } else {
            warnings.push(format!("direction `{}` was not normalized; normalized before rendering", d.name));
            let unit = normalize(d)?;
            Some(unit.values().iter().map(|&v| v * strength).collect())
        };
        let offsets = offsets.map(|mut o| {
            let hooks = self.hooked_layers();
            for (i, on) in hooks.iter().enumerate() {
                if !on {
                    o[self.layout().layer_range(i)].iter_mut().for_each(|v| *v = S::zero());
                }
            }
            o
        });
        let mut pass = self.forward(z, offsets.as_deref())?;
        pass.image.applied = Some(AppliedEdit {
            direction: d.name.clone(),
            strength: strength.as_f64(),
        });
        pass.image.warnings = warnings;
        Ok(pass)
    }

    fn render_with_direction(&self, z: &LatentCode<S>, d: &DirectionVector<S>, strength: S) -> Result<GeneratedImage<S>> {
        Ok(self.edit_pass(z, d, strength)?.image)
    }
}

impl<S: Scalar, G: GeneratorAdapter<S> + ?Sized> BundleSampler<S> for G {
    fn sampler_layout(&self) -> &Arc<FilterLayout> {
        self.layout()
    }

    fn sample_bundle(&self, seed: u64) -> Result<FeatureMapBundle<S>> {
        Ok(self.sample(seed)?.bundle)
    }
}

pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}
