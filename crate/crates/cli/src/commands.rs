use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use disentangle_core::direction::{normalize, AverageCache, WeightConfig};
use disentangle_core::eval::plugin::{serve_plugin, PluginHandler};
use disentangle_core::eval::toy::{ToyClassifier, ToyDetector, ToyEmbedder, TOY_REGIONS};
use disentangle_core::eval::{
    calibrate_strength, evaluate_direction, render_delta_table, render_report_table, track_iterations,
    write_delta_csv, write_report_csv, CalibrationConfig, EvalContext,
};
use disentangle_core::generator::export_model_package;
use disentangle_core::mask::{apply_mask_modes, filter_importance, MaskWire};
use disentangle_core::session::SessionLog;
use disentangle_core::{
    compose_direction, extract_filter_vector, DirectionRecord, DirectionVector, Exemplar, ExemplarSet,
    GeneratedImage, GeneratorAdapter, Mask, MaskedTreeGenerator,
};
use disentangle_server::ServerConfig;

use crate::args::{parse_mode, BuiltinPlugin, CalibrationArgs, ComposeArgs, EvalArgs, MaskApplyArgs};
use crate::exemplars;
use crate::output::{Output, MANIFEST};
use crate::plugins;

type Adapter = Arc<dyn GeneratorAdapter<f64>>;

pub fn load_direction(adapter: &Adapter, path: &Path) -> Result<DirectionVector<f64>> {
    let record = DirectionRecord::read(path).with_context(|| format!("cannot read direction {}", path.display()))?;
    Ok(record.into_direction(adapter.layout(), adapter.model_hash())?)
}

fn direction_json(adapter: &Adapter, d: &DirectionVector<f64>) -> Result<Vec<u8>> {
    let mut text = DirectionRecord::from_direction(d, adapter.model_hash()).to_json()?;
    text.push('\n');
    Ok(text.into_bytes())
}

pub fn encode_png(image: &GeneratedImage<f64>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, image.width as u32, image.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(&image.to_rgb8())?;
    }
    Ok(buf)
}

fn calibration_config(a: &CalibrationArgs) -> CalibrationConfig {
    CalibrationConfig {
        initial: a.initial,
        cap: a.cap,
        tolerance: a.tolerance,
        ..CalibrationConfig::default()
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    Ok(text.into_bytes())
}

pub fn avg_vector(adapter: &Adapter, n: usize, seed: u64, out: &Path) -> Result<()> {
    let mut o = Output::create(out, "avg-vector", adapter.model_hash())?;
    let cache = AverageCache::new(out);
    cache.get_or_compute(adapter.model_hash(), adapter.as_ref(), n, seed)?;
    o.record(&cache.path_for(adapter.model_hash(), n, seed), "average_vector")?;
    o.finish()
}

pub fn compose(adapter: &Adapter, a: &ComposeArgs) -> Result<()> {
    let text = fs::read_to_string(&a.manifest).with_context(|| format!("cannot read {}", a.manifest.display()))?;
    let m = exemplars::parse(&text)?;
    if m.model_hash != adapter.model_hash() {
        bail!(
            "manifest was written for model {} but the loaded model is {}",
            m.model_hash,
            adapter.model_hash()
        );
    }
    let weights = WeightConfig::default();
    let mut set = ExemplarSet::new();
    for row in &m.rows {
        let fv = extract_filter_vector(adapter.layout(), &adapter.sample(row.seed)?.bundle)?;
        let id = format!("{}-{}", if row.weight > 0.0 { "pos" } else { "neg" }, row.seed);
        set.insert(Exemplar::with_weight(id, row.seed, fv, row.polarity, row.weight, &weights)?)?;
    }
    let mut o = Output::create(&a.out, "compose", adapter.model_hash())?;
    let average = if set.negatives.is_empty() {
        let dir = a.cache_dir.clone().unwrap_or_else(|| a.out.clone());
        let cache = AverageCache::new(&dir);
        let v = cache.get_or_compute(adapter.model_hash(), adapter.as_ref(), a.n, a.seed)?;
        if a.cache_dir.is_none() {
            o.record(&cache.path_for(adapter.model_hash(), a.n, a.seed), "average_vector")?;
        }
        Some(v)
    } else {
        None
    };
    let mut d = compose_direction(&set, average.as_ref())?;
    if a.normalize {
        d = normalize(&d)?;
    }
    o.write("direction.json", "direction", &direction_json(adapter, &d.with_name(&a.name))?)?;
    o.finish()
}

pub fn sample(adapter: &Adapter, seed: u64, n: u64, out: &Path) -> Result<()> {
    let mut o = Output::create(out, "sample", adapter.model_hash())?;
    for s in seed..seed + n {
        let image = adapter.sample(s)?.image;
        o.write(&format!("sample_{s}.png"), "image", &encode_png(&image)?)?;
    }
    o.finish()
}

pub fn edit(adapter: &Adapter, direction: &Path, seed: u64, n: u64, strength: f64, out: &Path) -> Result<()> {
    let d = load_direction(adapter, direction)?;
    let mut o = Output::create(out, "edit", adapter.model_hash())?;
    for s in seed..seed + n {
        let image = adapter.render_with_direction(&adapter.latent(s), &d, strength)?;
        for w in &image.warnings {
            eprintln!("warning: seed {s}: {w}");
        }
        o.write(&format!("edit_{s}.png"), "image", &encode_png(&image)?)?;
    }
    o.finish()
}

fn split_mask_spec(spec: &str) -> (&str, Option<disentangle_core::MaskMode>) {
    if let Some((path, mode)) = spec.rsplit_once(':') {
        if let Some(m) = parse_mode(mode) {
            return (path, Some(m));
        }
    }
    (spec, None)
}

pub fn mask_apply(adapter: &Adapter, a: &MaskApplyArgs) -> Result<()> {
    let d = load_direction(adapter, &a.direction)?;
    let mut importances = Vec::new();
    for spec in &a.masks {
        let (path, mode) = split_mask_spec(spec);
        let text = fs::read_to_string(path).with_context(|| format!("cannot read mask {path}"))?;
        let wire: MaskWire = serde_json::from_str(&text).with_context(|| format!("bad mask file {path}"))?;
        let mut mask = Mask::from_wire(&wire)?;
        if let Some(m) = mode {
            mask = mask.with_mode(m);
        }
        if mask.resolution() != adapter.resolution() {
            bail!(
                "mask `{}` is {:?} but the model renders {:?}",
                mask.id,
                mask.resolution(),
                adapter.resolution()
            );
        }
        let bundle = adapter.sample(a.seed.unwrap_or(mask.created_from))?.bundle;
        importances.push((filter_importance(&mask, &bundle, a.epsilon)?, mask.mode));
    }
    let refs: Vec<_> = importances.iter().map(|(imp, mode)| (imp, *mode)).collect();
    let masked = apply_mask_modes(&d, &refs)?.with_name(&a.name);
    let mut o = Output::create(&a.out, "mask-apply", adapter.model_hash())?;
    o.write("direction.json", "direction", &direction_json(adapter, &masked)?)?;
    o.finish()
}

pub fn calibrate(
    adapter: &Adapter,
    model: &str,
    direction: &Path,
    seed: u64,
    detector: &Option<String>,
    cal: &CalibrationArgs,
    out: &Path,
) -> Result<()> {
    let d = load_direction(adapter, direction)?;
    let det = plugins::detector(detector, model)?;
    let r = calibrate_strength(adapter.as_ref(), &adapter.latent(seed), &d, det.as_ref(), &calibration_config(cal))?;
    let mut o = Output::create(out, "calibrate", adapter.model_hash())?;
    o.write("calibration.json", "calibration", &pretty(&r)?)?;
    o.finish()
}

/// Plugins resolved once and borrowed by every evaluation.
struct Study {
    detector: Box<dyn disentangle_core::eval::Detector<f64>>,
    embedder: Box<dyn disentangle_core::eval::Embedder<f64>>,
    classifier: Box<dyn disentangle_core::eval::AttributeClassifier<f64>>,
    target: usize,
}

impl Study {
    fn new(e: &EvalArgs, model: &str) -> Result<Self> {
        let classifier = plugins::classifier(&e.plugin_classifier, model)?;
        let target = plugins::target_index(classifier.as_ref(), &e.target_attr)?;
        Ok(Self {
            detector: plugins::detector(&e.plugin_detector, model)?,
            embedder: plugins::embedder(&e.plugin_embedder, model)?,
            classifier,
            target,
        })
    }

    fn context<'a>(&'a self, adapter: &'a Adapter, e: &EvalArgs) -> EvalContext<'a, f64> {
        let mut ctx = EvalContext::new(
            adapter.as_ref(),
            self.detector.as_ref(),
            self.embedder.as_ref(),
            self.classifier.as_ref(),
            self.target,
        );
        ctx.calibration = calibration_config(&e.calibration);
        ctx.success_rule = e.success_rule.into();
        ctx.allow_shared_model = e.allow_shared_model;
        ctx
    }
}

fn seeds(e: &EvalArgs) -> Result<Vec<u64>> {
    let end = e.seed.checked_add(e.n).context("seed range overflows")?;
    Ok((e.seed..end).collect())
}

pub fn evaluate(adapter: &Adapter, model: &str, direction: &Path, e: &EvalArgs, out: &Path) -> Result<()> {
    let d = load_direction(adapter, direction)?;
    let study = Study::new(e, model)?;
    let report = evaluate_direction(&d, &seeds(e)?, &study.context(adapter, e))?;
    for s in &report.skipped {
        eprintln!("warning: seed {} skipped: {}", s.seed, s.reason);
    }
    let mut csv = Vec::new();
    write_report_csv(&report, &mut csv)?;
    let mut o = Output::create(out, "evaluate", adapter.model_hash())?;
    o.write("report.csv", "report_csv", &csv)?;
    o.write("report.txt", "report_table", render_report_table(&report).as_bytes())?;
    o.write("report.json", "report_json", &pretty(&report)?)?;
    o.finish()
}

fn read_snapshots(adapter: &Adapter, path: &Path) -> Result<Vec<DirectionVector<f64>>> {
    let records: Vec<DirectionRecord> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != MANIFEST));
        files.sort();
        files
            .iter()
            .map(|p| DirectionRecord::read(p).with_context(|| format!("cannot read {}", p.display())))
            .collect::<Result<_>>()?
    } else {
        SessionLog::read(path)?
            .snapshots()
            .filter_map(|e| e.direction.clone())
            .collect()
    };
    records
        .into_iter()
        .map(|r| Ok(r.into_direction(adapter.layout(), adapter.model_hash())?))
        .collect()
}

pub fn track(adapter: &Adapter, model: &str, snapshots: &Path, e: &EvalArgs, out: &Path) -> Result<()> {
    let dirs = read_snapshots(adapter, snapshots)?;
    let study = Study::new(e, model)?;
    let series = track_iterations(&dirs, &seeds(e)?, &study.context(adapter, e))?;
    let mut csv = Vec::new();
    write_delta_csv(&series, &mut csv)?;
    let mut o = Output::create(out, "track", adapter.model_hash())?;
    o.write("deltas.csv", "delta_csv", &csv)?;
    o.write("deltas.txt", "delta_table", render_delta_table(&series).as_bytes())?;
    o.write("deltas.json", "delta_json", &pretty(&series)?)?;
    o.finish()
}

pub fn serve(model: Option<&str>, config: Option<&Path>, bind: Option<std::net::SocketAddr>) -> Result<()> {
    let mut cfg = ServerConfig::load(config)?.with_env(std::env::vars())?;
    if let Some(m) = model {
        cfg.model = m.to_string();
    }
    if let Some(b) = bind {
        cfg.bind = b;
    }
    tokio::runtime::Runtime::new()?.block_on(disentangle_server::serve(cfg))?;
    Ok(())
}

pub fn plugin(kind: BuiltinPlugin) -> Result<()> {
    let (det, emb, cls) = (ToyDetector::default(), ToyEmbedder, ToyClassifier::default());
    let handler = match kind {
        BuiltinPlugin::ToyDetector => PluginHandler::Detect(&det),
        BuiltinPlugin::ToyEmbedder => PluginHandler::Embed(&emb, TOY_REGIONS * 3),
        BuiltinPlugin::ToyClassifier => PluginHandler::Classify(&cls),
    };
    serve_plugin(&handler, io::stdin().lock(), io::stdout().lock())?;
    Ok(())
}

pub fn export_toy(out: &Path) -> Result<()> {
    let g = MaskedTreeGenerator::<f64>::toy();
    let manifest = export_model_package(&g, &out.join("toy"))?;
    let mut o = Output::create(out, "export-toy", &manifest.model_hash)?;
    let mut files: Vec<PathBuf> = fs::read_dir(out.join("toy"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<_>>()?;
    files.sort();
    for f in files {
        o.record(&f, "model_package")?;
    }
    o.finish()
}
