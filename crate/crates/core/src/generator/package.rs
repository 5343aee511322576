//! Model packages: a directory holding `manifest.json`, a safetensors weights
//! file and, for masked-tree models, the support-region table.

use std::fs;
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use super::tree::{MaskedTreeGenerator, MaskedTreeWeights, Rect, TreeLayer, ARCHITECTURE};
use super::GeneratorAdapter;
use crate::direction::LayerSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PACKAGE_FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const SUPPORTS: &str = "supports.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub architecture: String,
    pub model_hash: String,
    pub latent_dim: usize,
    /// `[height, width]`.
    pub resolution: [usize; 2],
    pub layers: Vec<LayerSpec>,
    pub weights: String,
}

#[derive(Serialize)]
struct SupportEntry {
    layer: String,
    filter: usize,
    /// Rectangle in the layer's own coordinates.
    rect: Rect,
    /// Image pixels (row-major indices) the filter can change.
    image_pixels: Vec<usize>,
}

fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn i64_bytes(v: impl Iterator<Item = usize>) -> Vec<u8> {
    v.flat_map(|x| (x as i64).to_le_bytes()).collect()
}

/// Writes `generator` as a package into `dir` (created if needed).
pub fn export_model_package<S: Scalar>(generator: &MaskedTreeGenerator<S>, dir: &Path) -> Result<ModelManifest> {
    fs::create_dir_all(dir)?;
    let w = generator.weights();
    let mut buffers: Vec<(String, Dtype, Vec<usize>, Vec<u8>)> = Vec::new();
    for (i, l) in w.layers.iter().enumerate() {
        let s = &l.spec;
        buffers.push((format!("layer{i}.latent"), Dtype::F64, vec![s.filters, w.latent_dim], f64_bytes(&l.latent)));
        buffers.push((format!("layer{i}.bias"), Dtype::F64, vec![s.filters, s.height, s.width], f64_bytes(&l.bias)));
        buffers.push((
            format!("layer{i}.support"),
            Dtype::I64,
            vec![s.filters, 4],
            i64_bytes(l.support.iter().flat_map(|r| [r.y0, r.x0, r.y1, r.x1])),
        ));
        if i > 0 {
            buffers.push((format!("layer{i}.gain"), Dtype::F64, vec![s.filters], f64_bytes(&l.gain)));
            buffers.push((format!("layer{i}.parent"), Dtype::I64, vec![s.filters], i64_bytes(l.parent.iter().copied())));
        }
    }
    let last = w.layers.last().unwrap().spec.filters;
    buffers.push(("readout.mix".into(), Dtype::F64, vec![3, last], f64_bytes(&w.mix)));
    buffers.push(("readout.background".into(), Dtype::F64, vec![3], f64_bytes(&w.background)));

    let views = buffers
        .iter()
        .map(|(name, dtype, shape, bytes)| {
            TensorView::new(*dtype, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::load(name.clone(), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes = safetensors::serialize(views, None).map_err(|e| Error::load("weights", e.to_string()))?;
    let weights_file = "weights.safetensors".to_string();
    fs::write(dir.join(&weights_file), bytes)?;

    let (h, wd) = generator.resolution();
    let manifest = ModelManifest {
        format_version: PACKAGE_FORMAT_VERSION,
        architecture: ARCHITECTURE.to_string(),
        model_hash: generator.model_hash().to_string(),
        latent_dim: w.latent_dim,
        resolution: [h, wd],
        layers: generator.layout().layers().to_vec(),
        weights: weights_file,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;

    let mut supports = Vec::new();
    for (li, l) in w.layers.iter().enumerate() {
        for (f, rect) in l.support.iter().enumerate() {
            let mask = generator.image_support(li, f);
            supports.push(SupportEntry {
                layer: l.spec.id.clone(),
                filter: f,
                rect: *rect,
                image_pixels: mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect(),
            });
        }
    }
    fs::write(dir.join(SUPPORTS), serde_json::to_string(&supports)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<ModelManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::load(MANIFEST, format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::load(MANIFEST, e.to_string()))?;
    // Version first, so future manifests fail with the precise error.
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::load("format_version", "missing or not an integer"))?;
    if version != u64::from(PACKAGE_FORMAT_VERSION) {
        return Err(Error::UnsupportedVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: PACKAGE_FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| MANIFEST.to_string());
        Error::load(field, msg)
    })
}

fn tensor<'a>(st: &'a SafeTensors<'a>, name: &str, dtype: Dtype, shape: &[usize]) -> Result<TensorView<'a>> {
    let t = st.tensor(name).map_err(|_| Error::load(name, "tensor missing from weights"))?;
    if t.dtype() != dtype {
        return Err(Error::load(name, format!("dtype {:?}, expected {dtype:?}", t.dtype())));
    }
    if t.shape() != shape {
        return Err(Error::load(name, format!("shape {:?}, manifest implies {shape:?}", t.shape())));
    }
    Ok(t)
}

fn read_f64(t: &TensorView<'_>) -> Vec<f64> {
    t.data()
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn read_usize(t: &TensorView<'_>, name: &str) -> Result<Vec<usize>> {
    t.data()
        .chunks_exact(8)
        .map(|c| {
            let v = i64::from_le_bytes(c.try_into().unwrap());
            usize::try_from(v).map_err(|_| Error::load(name, format!("negative index {v}")))
        })
        .collect()
}

/// Loads a masked-tree package as a concrete generator.
pub fn load_masked_tree<S: Scalar>(dir: &Path) -> Result<MaskedTreeGenerator<S>> {
    let manifest = read_manifest(dir)?;
    if manifest.architecture != ARCHITECTURE {
        return Err(Error::load(
            "architecture",
            format!("unsupported architecture `{}`", manifest.architecture),
        ));
    }
    let bytes = fs::read(dir.join(&manifest.weights))
        .map_err(|e| Error::load("weights", format!("{}: {e}", manifest.weights)))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::load("weights", e.to_string()))?;

    let weight_layers = st.names().iter().filter(|n| n.ends_with(".latent")).count();
    if weight_layers != manifest.layers.len() {
        return Err(Error::load(
            "layers",
            format!(
                "manifest lists {} layers but the weights contain {weight_layers}",
                manifest.layers.len()
            ),
        ));
    }

    let n = manifest.latent_dim;
    let mut layers = Vec::new();
    for (i, spec) in manifest.layers.iter().enumerate() {
        let f = spec.filters;
        let latent = read_f64(&tensor(&st, &format!("layer{i}.latent"), Dtype::F64, &[f, n])?);
        let bias = read_f64(&tensor(&st, &format!("layer{i}.bias"), Dtype::F64, &[f, spec.height, spec.width])?);
        let name = format!("layer{i}.support");
        let raw = read_usize(&tensor(&st, &name, Dtype::I64, &[f, 4])?, &name)?;
        let support = raw.chunks_exact(4).map(|c| Rect::new(c[0], c[1], c[2], c[3])).collect();
        let (gain, parent) = if i == 0 {
            (vec![], vec![])
        } else {
            let name = format!("layer{i}.parent");
            (
                read_f64(&tensor(&st, &format!("layer{i}.gain"), Dtype::F64, &[f])?),
                read_usize(&tensor(&st, &name, Dtype::I64, &[f])?, &name)?,
            )
        };
        layers.push(TreeLayer {
            spec: spec.clone(),
            latent,
            bias,
            gain,
            parent,
            support,
        });
    }
    let last = manifest.layers.last().ok_or_else(|| Error::load("layers", "empty layer table"))?;
    if [last.height, last.width] != manifest.resolution {
        return Err(Error::load(
            "resolution",
            format!("{:?} differs from the last layer's {}×{}", manifest.resolution, last.height, last.width),
        ));
    }
    let mix = read_f64(&tensor(&st, "readout.mix", Dtype::F64, &[3, last.filters])?);
    let bg = read_f64(&tensor(&st, "readout.background", Dtype::F64, &[3])?);
    let weights = MaskedTreeWeights {
        latent_dim: n,
        layers,
        mix,
        background: [bg[0], bg[1], bg[2]],
    };
    let generator = MaskedTreeGenerator::new(weights)?;
    if generator.model_hash() != manifest.model_hash {
        return Err(Error::load(
            "model_hash",
            format!(
                "manifest says {} but the weights hash to {}",
                manifest.model_hash,
                generator.model_hash()
            ),
        ));
    }
    Ok(generator)
}

/// Loads any supported package behind the adapter interface.
pub fn load_model_package<S: Scalar>(dir: &Path) -> Result<Box<dyn GeneratorAdapter<S>>> {
    Ok(Box::new(load_masked_tree::<S>(dir)?))
}
