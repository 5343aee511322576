use serde::{Deserialize, Serialize};

use super::FilterVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

/// Step and bounds for exemplar weight magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub step: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            min: 0.5,
            max: 10.0,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.min > 0.0 && self.min <= self.max && self.max.is_finite()) {
            return Err(Error::Argument(format!("invalid weight config {self:?}")));
        }
        Ok(())
    }
}

/// A gallery image picked as a positive or negative example.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar<S: Scalar> {
    pub id: String,
    pub seed: u64,
    pub filter_vector: FilterVector<S>,
    polarity: Polarity,
    weight: f64,
}

impl<S: Scalar> Exemplar<S> {
    /// New exemplar at the default weight of ±1.
    pub fn new(id: impl Into<String>, seed: u64, filter_vector: FilterVector<S>, polarity: Polarity) -> Self {
        Self {
            id: id.into(),
            seed,
            filter_vector,
            polarity,
            weight: polarity.sign(),
        }
    }

    /// Builds an exemplar with an explicit signed weight; the sign must agree with the polarity.
    pub fn with_weight(
        id: impl Into<String>,
        seed: u64,
        filter_vector: FilterVector<S>,
        polarity: Polarity,
        weight: f64,
        config: &WeightConfig,
    ) -> Result<Self> {
        let id = id.into();
        if !weight.is_finite() || weight.signum() != polarity.sign() || weight == 0.0 {
            return Err(Error::Argument(format!(
                "exemplar `{id}`: weight {weight} does not match {polarity:?} polarity"
            )));
        }
        if weight.abs() < config.min || weight.abs() > config.max {
            return Err(Error::Argument(format!(
                "exemplar `{id}`: |weight| {} outside [{}, {}]",
                weight.abs(),
                config.min,
                config.max
            )));
        }
        Ok(Self {
            id,
            seed,
            filter_vector,
            polarity,
            weight,
        })
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// Signed weight: positive exemplars are > 0, negative ones < 0.
    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// Result of a weight nudge; `clamped` is set when the bounds absorbed part of the step.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAdjustment<S: Scalar> {
    pub exemplar: Exemplar<S>,
    pub clamped: bool,
}

/// Moves |weight| by `delta_steps × step`, clamped to `[min, max]`. The sign never flips.
pub fn adjust_weight<S: Scalar>(exemplar: &Exemplar<S>, delta_steps: i32, config: &WeightConfig) -> WeightAdjustment<S> {
    let target = exemplar.weight.abs() + f64::from(delta_steps) * config.step;
    let magnitude = target.clamp(config.min, config.max);
    let mut updated = exemplar.clone();
    updated.weight = exemplar.polarity.sign() * magnitude;
    WeightAdjustment {
        exemplar: updated,
        clamped: magnitude != target,
    }
}

/// Selected exemplars, split by polarity.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarSet<S: Scalar> {
    pub positives: Vec<Exemplar<S>>,
    pub negatives: Vec<Exemplar<S>>,
}

impl<S: Scalar> Default for ExemplarSet<S> {
    fn default() -> Self {
        Self {
            positives: Vec::new(),
            negatives: Vec::new(),
        }
    }
}

impl<S: Scalar> ExemplarSet<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts into the group matching the exemplar's polarity.
    pub fn insert(&mut self, exemplar: Exemplar<S>) -> Result<()> {
        if self.get(&exemplar.id).is_some() {
            return Err(Error::Conflict(format!("exemplar `{}` already selected", exemplar.id)));
        }
        if let Some(first) = self.iter().next() {
            if !first.filter_vector.same_layout(&exemplar.filter_vector) {
                return Err(Error::Structural(format!(
                    "exemplar `{}` has a different filter layout",
                    exemplar.id
                )));
            }
        }
        match exemplar.polarity {
            Polarity::Positive => self.positives.push(exemplar),
            Polarity::Negative => self.negatives.push(exemplar),
        }
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Option<Exemplar<S>> {
        for group in [&mut self.positives, &mut self.negatives] {
            if let Some(i) = group.iter().position(|e| e.id == id) {
                return Some(group.remove(i));
            }
        }
        None
    }

    pub fn get(&self, id: &str) -> Option<&Exemplar<S>> {
        self.iter().find(|e| e.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Exemplar<S>> {
        self.positives
            .iter_mut()
            .chain(self.negatives.iter_mut())
            .find(|e| e.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exemplar<S>> {
        self.positives.iter().chain(self.negatives.iter())
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
