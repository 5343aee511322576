//! Out-of-process plugins speaking a line-delimited JSON protocol.
//!
//! On start the plugin writes one [`Capability`] line. Each request is one
//! [`ImageRequest`] line (8-bit RGB, base64); the plugin answers with one
//! [`PluginResponse`] line carrying the field matching its capability, or
//! `error`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{AttributeClassifier, Detector, Embedder};
use crate::error::{Error, Result};
use crate::generator::GeneratedImage;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapabilityKind {
    Detect,
    Embed,
    Classify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capability {
    pub capability: CapabilityKind,
    pub id: String,
    /// Attribute names, for classifiers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<String>,
    /// Embedding size, for embedders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub height: usize,
    pub width: usize,
    pub rgb8: String,
}

impl ImageRequest {
    pub fn encode<S: Scalar>(image: &GeneratedImage<S>) -> Self {
        Self {
            height: image.height,
            width: image.width,
            rgb8: STANDARD.encode(image.to_rgb8()),
        }
    }

    pub fn decode(&self) -> Result<GeneratedImage<f64>> {
        let bytes = STANDARD
            .decode(&self.rgb8)
            .map_err(|e| Error::Plugin(format!("bad image payload: {e}")))?;
        if bytes.len() != self.height * self.width * 3 {
            return Err(Error::Plugin(format!(
                "image payload has {} bytes, expected {}×{}×3",
                bytes.len(),
                self.height,
                self.width
            )));
        }
        Ok(GeneratedImage {
            height: self.height,
            width: self.width,
            pixels: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
            source_seed: 0,
            applied: None,
            warnings: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PluginResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A plugin running as a child process. Requests are serialized.
pub struct ProcessPlugin {
    capability: Capability,
    pipe: Mutex<Pipe>,
    child: Mutex<Child>,
}

impl ProcessPlugin {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Plugin(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        stdout.read_line(&mut line)?;
        let capability: Capability = serde_json::from_str(line.trim())
            .map_err(|e| Error::Plugin(format!("`{program}` sent an invalid capability line: {e}")))?;
        Ok(Self {
            capability,
            pipe: Mutex::new(Pipe { stdin, stdout }),
            child: Mutex::new(child),
        })
    }

    /// Spawns and checks the declared capability.
    pub fn spawn_as(program: &str, args: &[String], kind: CapabilityKind) -> Result<Self> {
        let p = Self::spawn(program, args)?;
        if p.capability.capability != kind {
            return Err(Error::Plugin(format!(
                "plugin `{}` declares {:?}, expected {kind:?}",
                p.capability.id, p.capability.capability
            )));
        }
        Ok(p)
    }

    pub fn capability(&self) -> &Capability {
        &self.capability
    }

    fn call<S: Scalar>(&self, image: &GeneratedImage<S>) -> Result<PluginResponse> {
        let mut pipe = self.pipe.lock().expect("plugin pipe poisoned");
        let mut line = serde_json::to_string(&ImageRequest::encode(image))?;
        line.push('\n');
        pipe.stdin.write_all(line.as_bytes())?;
        pipe.stdin.flush()?;
        let mut reply = String::new();
        if pipe.stdout.read_line(&mut reply)? == 0 {
            return Err(Error::Plugin(format!("plugin `{}` closed its output", self.capability.id)));
        }
        let resp: PluginResponse = serde_json::from_str(reply.trim())?;
        if let Some(e) = resp.error {
            return Err(Error::Plugin(format!("plugin `{}`: {e}", self.capability.id)));
        }
        Ok(resp)
    }

    fn missing(&self, field: &str) -> Error {
        Error::Plugin(format!("plugin `{}` response lacks `{field}`", self.capability.id))
    }
}

impl Drop for ProcessPlugin {
    fn drop(&mut self) {
        if let Ok(mut c) = self.child.lock() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

impl<S: Scalar> Detector<S> for ProcessPlugin {
    fn plugin_id(&self) -> &str {
        &self.capability.id
    }

    fn detect(&self, image: &GeneratedImage<S>) -> Result<bool> {
        self.call(image)?.detected.ok_or_else(|| self.missing("detected"))
    }
}

impl<S: Scalar> Embedder<S> for ProcessPlugin {
    fn plugin_id(&self) -> &str {
        &self.capability.id
    }

    fn embed(&self, image: &GeneratedImage<S>) -> Result<Vec<S>> {
        let e = self.call(image)?.embedding.ok_or_else(|| self.missing("embedding"))?;
        Ok(e.into_iter().map(S::of).collect())
    }
}

impl<S: Scalar> AttributeClassifier<S> for ProcessPlugin {
    fn plugin_id(&self) -> &str {
        &self.capability.id
    }

    fn attribute_names(&self) -> &[String] {
        &self.capability.attributes
    }

    fn classify(&self, image: &GeneratedImage<S>) -> Result<Vec<bool>> {
        let a = self.call(image)?.attributes.ok_or_else(|| self.missing("attributes"))?;
        if a.len() != self.capability.attributes.len() {
            return Err(Error::Plugin(format!(
                "plugin `{}` returned {} attributes, declared {}",
                self.capability.id,
                a.len(),
                self.capability.attributes.len()
            )));
        }
        Ok(a)
    }
}

/// In-process model exposed through [`serve_plugin`].
pub enum PluginHandler<'a> {
    Detect(&'a dyn Detector<f64>),
    Embed(&'a dyn Embedder<f64>, usize),
    Classify(&'a dyn AttributeClassifier<f64>),
}

impl PluginHandler<'_> {
    pub fn capability(&self) -> Capability {
        match self {
            PluginHandler::Detect(d) => Capability {
                capability: CapabilityKind::Detect,
                id: d.plugin_id().to_string(),
                attributes: vec![],
                dim: None,
            },
            PluginHandler::Embed(e, dim) => Capability {
                capability: CapabilityKind::Embed,
                id: e.plugin_id().to_string(),
                attributes: vec![],
                dim: Some(*dim),
            },
            PluginHandler::Classify(c) => Capability {
                capability: CapabilityKind::Classify,
                id: c.plugin_id().to_string(),
                attributes: c.attribute_names().to_vec(),
                dim: None,
            },
        }
    }

    fn answer(&self, request: &ImageRequest) -> Result<PluginResponse> {
        let image = request.decode()?;
        let mut resp = PluginResponse::default();
        match self {
            PluginHandler::Detect(d) => resp.detected = Some(d.detect(&image)?),
            PluginHandler::Embed(e, _) => resp.embedding = Some(e.embed(&image)?),
            PluginHandler::Classify(c) => resp.attributes = Some(c.classify(&image)?),
        }
        Ok(resp)
    }
}

/// Plugin side of the protocol: announce, then answer one line per request until EOF.
pub fn serve_plugin<R: BufRead, W: Write>(handler: &PluginHandler<'_>, input: R, mut output: W) -> Result<()> {
    writeln!(output, "{}", serde_json::to_string(&handler.capability())?)?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = serde_json::from_str::<ImageRequest>(&line)
            .map_err(Error::from)
            .and_then(|req| handler.answer(&req))
            .unwrap_or_else(|e| PluginResponse {
                error: Some(e.to_string()),
                ..Default::default()
            });
        writeln!(output, "{}", serde_json::to_string(&resp)?)?;
        output.flush()?;
    }
    Ok(())
}
