//! A small convolutional generator whose filters own rectangular supports.
//!
//! Each layer applies, per filter, `tanh(latent·z + bias + gain·parent)` inside
//! the filter's support rectangle (zero outside), reading its parent filter in
//! the previous layer through nearest-neighbour upsampling. The last layer is
//! mixed into RGB by a fixed matrix followed by a sigmoid. Because every child
//! support lies inside its parent's, editing a filter only touches pixels in
//! that filter's image-space support.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{sigmoid, FeatureMapBundle, ForwardPass, GeneratedImage, GeneratorAdapter, LatentCode};
use crate::direction::{hex, FilterLayout, LayerSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Seed of the built-in toy weights.
pub const TOY_WEIGHT_SEED: u64 = 0x7a3e_0f11;

pub(crate) const ARCHITECTURE: &str = "masked-tree";

/// Half-open rectangle `[y0, y1) × [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
}

impl Rect {
    pub fn new(y0: usize, x0: usize, y1: usize, x1: usize) -> Self {
        Self { y0, x0, y1, x1 }
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.y0 && y < self.y1 && x >= self.x0 && x < self.x1
    }

    pub fn area(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }
}

/// Weights of one layer. `latent` is `filters × latent_dim`, `bias` is `filters × h × w`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeLayer<S> {
    pub spec: LayerSpec,
    pub latent: Vec<S>,
    pub bias: Vec<S>,
    /// Empty on the first layer.
    pub gain: Vec<S>,
    /// Parent filter index in the previous layer; empty on the first layer.
    pub parent: Vec<usize>,
    pub support: Vec<Rect>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTreeWeights<S> {
    pub latent_dim: usize,
    pub layers: Vec<TreeLayer<S>>,
    /// `3 × filters(last layer)`.
    pub mix: Vec<S>,
    pub background: [S; 3],
}

fn scale_coord(v: usize, from: usize, to: usize) -> usize {
    v * to / from
}

impl MaskedTreeWeights<f64> {
    /// The built-in toy: 4 filters @4×4, 8 @8×8, 8 @16×16, 16×16 RGB output.
    ///
    /// Layer 0 filters own the four quadrants. Each quadrant splits into a
    /// left and right half for layer 1; layer 2 filter `r` has layer 1 filter
    /// `r` as parent and covers the same region at full resolution, so the
    /// eight layer 2 supports tile the image. Filter `r` of the last layer
    /// drives colour channel `r % 3`.
    pub fn toy() -> Self {
        let latent_dim = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(TOY_WEIGHT_SEED);
        let specs = [
            LayerSpec::new("block0", 4, 4, 4),
            LayerSpec::new("block1", 8, 8, 8),
            LayerSpec::new("block2", 8, 16, 16),
        ];
        let mut layers = Vec::new();
        for (li, spec) in specs.into_iter().enumerate() {
            let unit = spec.height / 4;
            let support: Vec<Rect> = (0..spec.filters)
                .map(|f| {
                    let quadrant = if li == 0 { f } else { f / 2 };
                    let (qy, qx) = (quadrant / 2, quadrant % 2);
                    if li == 0 {
                        Rect::new(qy * 2 * unit, qx * 2 * unit, (qy + 1) * 2 * unit, (qx + 1) * 2 * unit)
                    } else {
                        let half = f % 2;
                        let y0 = qy * 2 * unit;
                        let x0 = qx * 2 * unit + half * unit;
                        Rect::new(y0, x0, y0 + 2 * unit, x0 + unit)
                    }
                })
                .collect();
            let parent = match li {
                0 => vec![],
                1 => (0..spec.filters).map(|f| f / 2).collect(),
                _ => (0..spec.filters).collect(),
            };
            let latent = (0..spec.filters * latent_dim).map(|_| rng.random_range(-0.6..0.6)).collect();
            let bias = (0..spec.filters * spec.map_len()).map(|_| rng.random_range(-0.4..0.4)).collect();
            let gain = if li == 0 {
                vec![]
            } else {
                (0..spec.filters).map(|_| rng.random_range(0.8..1.4)).collect()
            };
            layers.push(TreeLayer {
                spec,
                latent,
                bias,
                gain,
                parent,
                support,
            });
        }
        let last = layers.last().unwrap().spec.filters;
        let mut mix = vec![0.0; 3 * last];
        for r in 0..last {
            mix[(r % 3) * last + r] = 2.0;
            mix[((r + 1) % 3) * last + r] = 0.25;
        }
        Self {
            latent_dim,
            layers,
            mix,
            background: [0.0; 3],
        }
    }
}

impl<S: Scalar> MaskedTreeWeights<S> {
    pub fn cast<T: Scalar>(&self) -> MaskedTreeWeights<T> {
        let c = |v: &Vec<S>| v.iter().map(|x| T::of(x.as_f64())).collect::<Vec<T>>();
        MaskedTreeWeights {
            latent_dim: self.latent_dim,
            layers: self
                .layers
                .iter()
                .map(|l| TreeLayer {
                    spec: l.spec.clone(),
                    latent: c(&l.latent),
                    bias: c(&l.bias),
                    gain: c(&l.gain),
                    parent: l.parent.clone(),
                    support: l.support.clone(),
                })
                .collect(),
            mix: c(&self.mix),
            background: self.background.map(|b| T::of(b.as_f64())),
        }
    }

    pub fn resolution(&self) -> (usize, usize) {
        let last = &self.layers.last().expect("validated").spec;
        (last.height, last.width)
    }

    /// Checks shapes and that every child only reads inside its parent's support.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::load("layers", "no layers"));
        }
        if self.latent_dim == 0 {
            return Err(Error::load("latent_dim", "must be positive"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let s = &l.spec;
            let field = |name: &str| format!("layer{i}.{name}");
            let check = |name: &str, got: usize, want: usize| {
                if got != want {
                    Err(Error::load(field(name), format!("expected {want} values, found {got}")))
                } else {
                    Ok(())
                }
            };
            check("latent", l.latent.len(), s.filters * self.latent_dim)?;
            check("bias", l.bias.len(), s.filters * s.map_len())?;
            check("support", l.support.len(), s.filters)?;
            let parents = if i == 0 { 0 } else { s.filters };
            check("gain", l.gain.len(), parents)?;
            check("parent", l.parent.len(), parents)?;
            for (f, r) in l.support.iter().enumerate() {
                if r.y0 >= r.y1 || r.x0 >= r.x1 || r.y1 > s.height || r.x1 > s.width {
                    return Err(Error::load(field("support"), format!("filter {f} has an invalid rectangle {r:?}")));
                }
            }
            if i > 0 {
                let prev = &self.layers[i - 1];
                for (f, (&p, r)) in l.parent.iter().zip(&l.support).enumerate() {
                    if p >= prev.spec.filters {
                        return Err(Error::load(field("parent"), format!("filter {f} points at missing parent {p}")));
                    }
                    for y in r.y0..r.y1 {
                        for x in r.x0..r.x1 {
                            let (py, px) = (
                                scale_coord(y, s.height, prev.spec.height),
                                scale_coord(x, s.width, prev.spec.width),
                            );
                            if !prev.support[p].contains(py, px) {
                                return Err(Error::load(
                                    field("support"),
                                    format!("filter {f} reads outside the support of parent {p}"),
                                ));
                            }
                        }
                    }
                }
            }
        }
        let last = &self.layers.last().unwrap().spec;
        if self.mix.len() != 3 * last.filters {
            return Err(Error::load("readout.mix", format!("expected {} values", 3 * last.filters)));
        }
        Ok(())
    }

    /// Hex SHA-256 over the architecture, shapes and every weight as little-endian `f64`.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(ARCHITECTURE.as_bytes());
        h.update((self.latent_dim as u64).to_le_bytes());
        let f = |h: &mut Sha256, v: &[S]| v.iter().for_each(|x| h.update(x.as_f64().to_le_bytes()));
        for l in &self.layers {
            h.update(format!("{}:{}:{}:{};", l.spec.id, l.spec.filters, l.spec.height, l.spec.width).as_bytes());
            f(&mut h, &l.latent);
            f(&mut h, &l.bias);
            f(&mut h, &l.gain);
            l.parent.iter().for_each(|p| h.update((*p as u64).to_le_bytes()));
            for r in &l.support {
                for v in [r.y0, r.x0, r.y1, r.x1] {
                    h.update((v as u64).to_le_bytes());
                }
            }
        }
        f(&mut h, &self.mix);
        f(&mut h, &self.background);
        hex(&h.finalize())
    }
}

/// Generator running a [`MaskedTreeWeights`] network in scalar type `S`.
#[derive(Debug, Clone)]
pub struct MaskedTreeGenerator<S: Scalar> {
    master: MaskedTreeWeights<f64>,
    weights: MaskedTreeWeights<S>,
    layout: Arc<FilterLayout>,
    hash: String,
    hooks: Vec<bool>,
}

impl<S: Scalar> MaskedTreeGenerator<S> {
    pub fn new(master: MaskedTreeWeights<f64>) -> Result<Self> {
        master.validate()?;
        let layout = Arc::new(FilterLayout::new(master.layers.iter().map(|l| l.spec.clone()).collect())?);
        let hash = master.hash();
        let hooks = vec![true; master.layers.len()];
        Ok(Self {
            weights: master.cast(),
            master,
            layout,
            hash,
            hooks,
        })
    }

    /// The built-in toy generator.
    pub fn toy() -> Self {
        Self::new(MaskedTreeWeights::toy()).expect("toy weights are valid")
    }

    /// Disables direction offsets on the layers marked `false`.
    pub fn with_hooks(mut self, hooks: Vec<bool>) -> Result<Self> {
        if hooks.len() != self.layout.layers().len() {
            return Err(Error::Argument(format!(
                "{} hook flags for {} layers",
                hooks.len(),
                self.layout.layers().len()
            )));
        }
        self.hooks = hooks;
        Ok(self)
    }

    pub fn weights(&self) -> &MaskedTreeWeights<f64> {
        &self.master
    }

    /// Image pixels a filter can influence: its support traced down to image resolution.
    pub fn image_support(&self, layer: usize, filter: usize) -> Vec<bool> {
        let (h, w) = self.weights.resolution();
        let rect = self.weights.layers[layer].support[filter];
        let mut out = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                let (mut ly, mut lx) = (y, x);
                for l in (layer..self.weights.layers.len() - 1).rev() {
                    let (cur, prev) = (&self.weights.layers[l + 1].spec, &self.weights.layers[l].spec);
                    ly = scale_coord(ly, cur.height, prev.height);
                    lx = scale_coord(lx, cur.width, prev.width);
                }
                out[y * w + x] = rect.contains(ly, lx);
            }
        }
        out
    }
}

impl<S: Scalar> GeneratorAdapter<S> for MaskedTreeGenerator<S> {
    fn layout(&self) -> &Arc<FilterLayout> {
        &self.layout
    }

    fn latent_dim(&self) -> usize {
        self.weights.latent_dim
    }

    fn resolution(&self) -> (usize, usize) {
        self.weights.resolution()
    }

    fn model_hash(&self) -> &str {
        &self.hash
    }

    fn hooked_layers(&self) -> Vec<bool> {
        self.hooks.clone()
    }

    fn forward(&self, z: &LatentCode<S>, offsets: Option<&[S]>) -> Result<ForwardPass<S>> {
        let wts = &self.weights;
        if z.values.len() != wts.latent_dim {
            return Err(Error::Structural(format!(
                "latent has {} entries, model expects {}",
                z.values.len(),
                wts.latent_dim
            )));
        }
        if let Some(o) = offsets {
            if o.len() != self.layout.total_dims() {
                return Err(Error::Structural(format!(
                    "{} offsets for {} filters",
                    o.len(),
                    self.layout.total_dims()
                )));
            }
        }
        let n = wts.latent_dim;
        let mut maps: Vec<Vec<S>> = Vec::with_capacity(wts.layers.len());
        for (li, layer) in wts.layers.iter().enumerate() {
            let spec = &layer.spec;
            let range = self.layout.layer_range(li);
            let mut out = vec![S::zero(); spec.filters * spec.map_len()];
            for f in 0..spec.filters {
                let drive: S = layer.latent[f * n..(f + 1) * n]
                    .iter()
                    .zip(&z.values)
                    .map(|(&w, &v)| w * v)
                    .sum();
                let rect = layer.support[f];
                let base = f * spec.map_len();
                for y in rect.y0..rect.y1 {
                    for x in rect.x0..rect.x1 {
                        let mut pre = drive + layer.bias[base + y * spec.width + x];
                        if li > 0 {
                            let prev = &wts.layers[li - 1].spec;
                            let p = layer.parent[f];
                            let (py, px) = (
                                scale_coord(y, spec.height, prev.height),
                                scale_coord(x, spec.width, prev.width),
                            );
                            pre = pre + layer.gain[f] * maps[li - 1][p * prev.map_len() + py * prev.width + px];
                        }
                        out[base + y * spec.width + x] = pre.tanh();
                    }
                }
                if let Some(o) = offsets {
                    let shift = o[range.start + f];
                    out[base..base + spec.map_len()].iter_mut().for_each(|a| *a = *a + shift);
                }
            }
            maps.push(out);
        }

        let last = wts.layers.last().unwrap();
        let act = maps.last().unwrap();
        let (h, w) = (last.spec.height, last.spec.width);
        let filters = last.spec.filters;
        let mut pixels = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut pre = wts.background[c];
                    for f in 0..filters {
                        if last.support[f].contains(y, x) {
                            pre = pre + wts.mix[c * filters + f] * act[f * h * w + y * w + x];
                        }
                    }
                    pixels.push(sigmoid(pre).max(S::zero()).min(S::one()));
                }
            }
        }
        Ok(ForwardPass {
            image: GeneratedImage {
                height: h,
                width: w,
                pixels,
                source_seed: z.seed,
                applied: None,
                warnings: Vec::new(),
            },
            bundle: FeatureMapBundle::new(self.layout.clone(), maps)?,
        })
    }
}
