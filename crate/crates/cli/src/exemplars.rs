//! Exemplar manifests: plain text, one exemplar per row.
//!
//! ```text
//! # glasses, round 2
//! model 3f1c...
//! 11 positive 2
//! 12 positive
//! 40 negative 1.5
//! ```
//!
//! Weights are magnitudes (the sign comes from the polarity) and default to 1.

use anyhow::{anyhow, bail, Result};
use disentangle_core::Polarity;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub seed: u64,
    pub polarity: Polarity,
    /// Signed.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarManifest {
    pub model_hash: String,
    pub rows: Vec<Row>,
}

pub fn parse(text: &str) -> Result<ExemplarManifest> {
    let mut model_hash = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| anyhow!("manifest line {}: {msg}", i + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "model" {
            if fields.len() != 2 {
                return Err(at("expected `model <hash>`".into()));
            }
            if model_hash.replace(fields[1].to_string()).is_some() {
                return Err(at("model given twice".into()));
            }
            continue;
        }
        if !(2..=3).contains(&fields.len()) {
            return Err(at(format!("expected `<seed> <polarity> [weight]`, got `{line}`")));
        }
        let seed: u64 = fields[0].parse().map_err(|_| at(format!("bad seed `{}`", fields[0])))?;
        let polarity = match fields[1] {
            "positive" | "+" => Polarity::Positive,
            "negative" | "-" => Polarity::Negative,
            other => return Err(at(format!("polarity must be positive or negative, got `{other}`"))),
        };
        let magnitude: f64 = match fields.get(2) {
            Some(w) => w.parse().map_err(|_| at(format!("bad weight `{w}`")))?,
            None => 1.0,
        };
        if !(magnitude.is_finite() && magnitude > 0.0) {
            return Err(at(format!("weight must be a positive magnitude, got {magnitude}")));
        }
        rows.push(Row {
            seed,
            polarity,
            weight: polarity.sign() * magnitude,
        });
    }
    let Some(model_hash) = model_hash else {
        bail!("manifest has no `model <hash>` line");
    };
    Ok(ExemplarManifest { model_hash, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_and_comments() {
        let m = parse("# test\nmodel abc\n11 positive 2\n12 +\n\n40 negative 1.5 # strong\n").unwrap();
        assert_eq!(m.model_hash, "abc");
        assert_eq!(
            m.rows,
            vec![
                Row {
                    seed: 11,
                    polarity: Polarity::Positive,
                    weight: 2.0
                },
                Row {
                    seed: 12,
                    polarity: Polarity::Positive,
                    weight: 1.0
                },
                Row {
                    seed: 40,
                    polarity: Polarity::Negative,
                    weight: -1.5
                },
            ]
        );
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "11 positive",
            "model a\nmodel b\n",
            "model a\n11 sideways\n",
            "model a\nx positive\n",
            "model a\n11 positive -2\n",
            "model a\n11 positive 1 2\n",
        ] {
            assert!(parse(text).is_err(), "{text:?}");
        }
    }
}
