//! Plugin specs: `builtin:toy-detector`, `builtin:toy-embedder`,
//! `builtin:toy-classifier`, or `exec:<program> [args...]` for a process
//! speaking the line protocol.

use anyhow::{anyhow, bail, Result};
use disentangle_core::eval::plugin::{CapabilityKind, ProcessPlugin};
use disentangle_core::eval::toy::{ToyClassifier, ToyDetector, ToyEmbedder};
use disentangle_core::eval::{AttributeClassifier, Detector, Embedder};
use disentangle_server::config::BUILTIN_TOY;

enum Spec<'a> {
    Builtin(&'a str),
    Exec(&'a str, Vec<String>),
}

fn parse(spec: &str) -> Result<Spec<'_>> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Ok(Spec::Builtin(name));
    }
    if let Some(cmd) = spec.strip_prefix("exec:") {
        let mut parts = cmd.split_whitespace();
        let program = parts.next().ok_or_else(|| anyhow!("`{spec}` names no program"))?;
        return Ok(Spec::Exec(program, parts.map(str::to_string).collect()));
    }
    bail!("plugin `{spec}` must start with `builtin:` or `exec:`")
}

/// The toy plugins stand in only for the toy model.
fn resolve<'a>(given: &'a Option<String>, model: &str, flag: &str, toy: &'static str) -> Result<&'a str> {
    match given {
        Some(s) => Ok(s),
        None if model == BUILTIN_TOY => Ok(toy),
        None => bail!("--{flag} is required for model `{model}`"),
    }
}

pub fn detector(given: &Option<String>, model: &str) -> Result<Box<dyn Detector<f64>>> {
    match parse(resolve(given, model, "plugin-detector", "builtin:toy-detector")?)? {
        Spec::Builtin("toy-detector") => Ok(Box::new(ToyDetector::default())),
        Spec::Builtin(other) => bail!("no built-in detector `{other}`"),
        Spec::Exec(p, a) => Ok(Box::new(ProcessPlugin::spawn_as(p, &a, CapabilityKind::Detect)?)),
    }
}

pub fn embedder(given: &Option<String>, model: &str) -> Result<Box<dyn Embedder<f64>>> {
    match parse(resolve(given, model, "plugin-embedder", "builtin:toy-embedder")?)? {
        Spec::Builtin("toy-embedder") => Ok(Box::new(ToyEmbedder)),
        Spec::Builtin(other) => bail!("no built-in embedder `{other}`"),
        Spec::Exec(p, a) => Ok(Box::new(ProcessPlugin::spawn_as(p, &a, CapabilityKind::Embed)?)),
    }
}

pub fn classifier(given: &Option<String>, model: &str) -> Result<Box<dyn AttributeClassifier<f64>>> {
    match parse(resolve(given, model, "plugin-classifier", "builtin:toy-classifier")?)? {
        Spec::Builtin("toy-classifier") => Ok(Box::new(ToyClassifier::default())),
        Spec::Builtin(other) => bail!("no built-in classifier `{other}`"),
        Spec::Exec(p, a) => Ok(Box::new(ProcessPlugin::spawn_as(p, &a, CapabilityKind::Classify)?)),
    }
}

/// Index of `target` among the classifier's attributes, by name or number.
pub fn target_index(classifier: &dyn AttributeClassifier<f64>, target: &str) -> Result<usize> {
    let names = classifier.attribute_names();
    if let Some(i) = names.iter().position(|n| n == target) {
        return Ok(i);
    }
    match target.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => bail!("unknown target attribute `{target}`; the classifier knows {}", names.join(", ")),
    }
}
