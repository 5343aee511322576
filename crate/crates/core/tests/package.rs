use std::fs;
use std::path::Path;

use disentangle_core::generator::{export_model_package, load_masked_tree, load_model_package, read_manifest, GeneratorAdapter};
use disentangle_core::{Error, MaskedTreeGenerator};
use serde_json::Value;

fn exported() -> (tempfile::TempDir, MaskedTreeGenerator<f64>) {
    let dir = tempfile::tempdir().unwrap();
    let g = MaskedTreeGenerator::<f64>::toy();
    export_model_package(&g, dir.path()).unwrap();
    (dir, g)
}

fn edit_manifest(dir: &Path, f: impl FnOnce(&mut Value)) {
    let path = dir.join("manifest.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    f(&mut v);
    fs::write(path, serde_json::to_string(&v).unwrap()).unwrap();
}

fn load_field(dir: &Path) -> String {
    match load_masked_tree::<f64>(dir) {
        Err(Error::Load { field, .. }) => field,
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("package loaded"),
    }
}

#[test]
fn round_trip_reproduces_the_toy() {
    let (dir, g) = exported();
    let loaded = load_model_package::<f64>(dir.path()).unwrap();
    assert_eq!(loaded.model_hash(), g.model_hash());
    assert_eq!(loaded.layout(), g.layout());
    for seed in 0..5 {
        assert_eq!(loaded.sample(seed).unwrap(), g.sample(seed).unwrap());
    }
    let m = read_manifest(dir.path()).unwrap();
    assert_eq!(m.architecture, "masked-tree");
    assert_eq!(m.resolution, [16, 16]);
    assert!(dir.path().join("supports.json").exists());
}

#[test]
fn layer_count_mismatch() {
    let (dir, _) = exported();
    edit_manifest(dir.path(), |v| {
        v["layers"].as_array_mut().unwrap().pop();
    });
    assert_eq!(load_field(dir.path()), "layers");
}

#[test]
fn unknown_version() {
    let (dir, _) = exported();
    edit_manifest(dir.path(), |v| v["format_version"] = 7.into());
    match load_masked_tree::<f64>(dir.path()) {
        Err(Error::UnsupportedVersion { found: 7, supported: 1 }) => {}
        other => panic!("{:?}", other.err()),
    }
}

#[test]
fn shape_mismatch_names_the_tensor() {
    let (dir, _) = exported();
    edit_manifest(dir.path(), |v| v["layers"][1]["filters"] = 9.into());
    assert_eq!(load_field(dir.path()), "layer1.latent");
}

#[test]
fn garbled_and_missing_manifests() {
    let (dir, _) = exported();
    fs::write(dir.path().join("manifest.json"), "{ not json").unwrap();
    assert_eq!(load_field(dir.path()), "manifest.json");
    fs::remove_file(dir.path().join("manifest.json")).unwrap();
    assert_eq!(load_field(dir.path()), "manifest.json");
}

#[test]
fn missing_field_is_named() {
    let (dir, _) = exported();
    edit_manifest(dir.path(), |v| {
        v.as_object_mut().unwrap().remove("latent_dim");
    });
    assert_eq!(load_field(dir.path()), "latent_dim");
}

#[test]
fn tampered_hash_is_refused() {
    let (dir, _) = exported();
    edit_manifest(dir.path(), |v| v["model_hash"] = "00".into());
    assert_eq!(load_field(dir.path()), "model_hash");
}

#[test]
fn resolution_must_match_the_last_layer() {
    let (dir, _) = exported();
    edit_manifest(dir.path(), |v| v["resolution"] = serde_json::json!([8, 8]));
    assert_eq!(load_field(dir.path()), "resolution");
}

#[test]
fn corrupt_weights() {
    let (dir, _) = exported();
    fs::write(dir.path().join("weights.safetensors"), b"garbage").unwrap();
    assert_eq!(load_field(dir.path()), "weights");
}
