//! Filter-space directions: extraction from feature maps, weighted exemplar
//! composition and the small vector algebra the rest of the engine builds on.

mod average;
mod exemplar;
mod layout;
mod record;

use std::sync::Arc;

pub use average::{compute_average_vector, AverageCache, BundleSampler};
pub use exemplar::{adjust_weight, Exemplar, ExemplarSet, Polarity, WeightAdjustment, WeightConfig};
pub use layout::{FilterLayout, LayerSpec};
pub(crate) use layout::hex;
pub use record::{DirectionRecord, DIRECTION_FORMAT_VERSION};

use crate::action::{Baseline, ComposeTerm, DisentangleAction};
use crate::error::{Error, Result};
use crate::generator::FeatureMapBundle;
use crate::scalar::{l2_norm, Scalar};

fn check_values<S: Scalar>(layout: &FilterLayout, values: &[S]) -> Result<()> {
    if values.len() != layout.total_dims() {
        return Err(Error::Structural(format!(
            "expected {} components, got {}",
            layout.total_dims(),
            values.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("component {i} is not finite")));
    }
    Ok(())
}

pub(crate) fn same_layout(a: &Arc<FilterLayout>, b: &Arc<FilterLayout>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Spatial means of every filter's activation map for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterVector<S: Scalar> {
    layout: Arc<FilterLayout>,
    values: Vec<S>,
}

impl<S: Scalar> FilterVector<S> {
    pub fn new(layout: Arc<FilterLayout>, values: Vec<S>) -> Result<Self> {
        check_values(&layout, &values)?;
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Arc<FilterLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        same_layout(&self.layout, &other.layout)
    }
}

/// An editing direction: one scalar per filter plus the actions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionVector<S: Scalar> {
    layout: Arc<FilterLayout>,
    values: Vec<S>,
    pub name: String,
    normalized: bool,
    pub provenance: Vec<DisentangleAction>,
}

impl<S: Scalar> DirectionVector<S> {
    pub fn new(layout: Arc<FilterLayout>, values: Vec<S>, name: impl Into<String>) -> Result<Self> {
        check_values(&layout, &values)?;
        Ok(Self {
            layout,
            values,
            name: name.into(),
            normalized: false,
            provenance: Vec::new(),
        })
    }

    pub fn zeros(layout: Arc<FilterLayout>, name: impl Into<String>) -> Self {
        let values = vec![S::zero(); layout.total_dims()];
        Self {
            layout,
            values,
            name: name.into(),
            normalized: false,
            provenance: Vec::new(),
        }
    }

    /// Unit vector on one component.
    pub fn basis(layout: Arc<FilterLayout>, component: usize, name: impl Into<String>) -> Result<Self> {
        if component >= layout.total_dims() {
            return Err(Error::Argument(format!(
                "component {component} outside layout of {} filters",
                layout.total_dims()
            )));
        }
        let mut d = Self::zeros(layout, name);
        d.values[component] = S::one();
        d.normalized = true;
        Ok(d)
    }

    pub fn layout(&self) -> &Arc<FilterLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> S {
        l2_norm(&self.values)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub(crate) fn from_parts(
        layout: Arc<FilterLayout>,
        values: Vec<S>,
        name: String,
        normalized: bool,
        provenance: Vec<DisentangleAction>,
    ) -> Result<Self> {
        check_values(&layout, &values)?;
        Ok(Self {
            layout,
            values,
            name,
            normalized,
            provenance,
        })
    }

    pub(crate) fn map_values(&self, values: Vec<S>, normalized: bool) -> Self {
        Self {
            layout: self.layout.clone(),
            values,
            name: self.name.clone(),
            normalized,
            provenance: self.provenance.clone(),
        }
    }

    fn require_layout(&self, other: &Arc<FilterLayout>) -> Result<()> {
        if !same_layout(&self.layout, other) {
            return Err(Error::Structural(format!(
                "direction `{}` uses layout {} but {} was expected",
                self.name,
                self.layout.digest(),
                other.digest()
            )));
        }
        Ok(())
    }
}

/// Spatial mean of every filter map, concatenated in layout order.
pub fn extract_filter_vector<S: Scalar>(layout: &Arc<FilterLayout>, bundle: &FeatureMapBundle<S>) -> Result<FilterVector<S>> {
    let found = bundle.layout();
    for (i, expected) in layout.layers().iter().enumerate() {
        match found.layers().get(i) {
            Some(l) if l == expected => {}
            Some(l) => {
                return Err(Error::Structural(format!(
                    "layer {i}: expected `{}` ({}×{}×{}), bundle has `{}` ({}×{}×{})",
                    expected.id, expected.filters, expected.height, expected.width, l.id, l.filters, l.height, l.width
                )))
            }
            None => return Err(Error::Structural(format!("bundle is missing layer `{}`", expected.id))),
        }
    }
    if found.layers().len() != layout.layers().len() {
        let extra = &found.layers()[layout.layers().len()];
        return Err(Error::Structural(format!("bundle has unexpected layer `{}`", extra.id)));
    }

    let mut values = Vec::with_capacity(layout.total_dims());
    for (i, spec) in layout.layers().iter().enumerate() {
        let area = S::of_usize(spec.map_len());
        for f in 0..spec.filters {
            let sum: S = bundle.filter_map(i, f).iter().copied().sum();
            values.push(sum / area);
        }
    }
    FilterVector::new(layout.clone(), values)
}

/// `Σ|wᵢ|·vᵢ / Σ|wᵢ|` over one polarity group.
fn weighted_mean<S: Scalar>(group: &[Exemplar<S>], dims: usize) -> Vec<S> {
    let mut acc = vec![S::zero(); dims];
    let mut total = S::zero();
    for e in group {
        let w = S::of(e.weight().abs());
        total = total + w;
        for (a, &v) in acc.iter_mut().zip(e.filter_vector.values()) {
            *a = *a + w * v;
        }
    }
    acc.iter_mut().for_each(|a| *a = *a / total);
    acc
}

/// Direction pointing from the negatives (or the average vector) toward the positives.
///
/// Each group is reduced to its weighted mean first, so uniformly rescaling the
/// weights of a group has no effect. The result is not normalized.
pub fn compose_direction<S: Scalar>(set: &ExemplarSet<S>, average: Option<&FilterVector<S>>) -> Result<DirectionVector<S>> {
    let first = set
        .positives
        .first()
        .ok_or_else(|| Error::State("select at least one positive example".into()))?;
    let layout = first.filter_vector.layout().clone();
    for e in set.iter() {
        if !same_layout(e.filter_vector.layout(), &layout) {
            return Err(Error::Structural(format!("exemplar `{}` has a different filter layout", e.id)));
        }
    }
    let dims = layout.total_dims();
    let positive = weighted_mean(&set.positives, dims);
    let (baseline_values, baseline) = if set.negatives.is_empty() {
        let avg = average.ok_or_else(|| {
            Error::State("no negative examples selected and no average vector available".into())
        })?;
        if !same_layout(avg.layout(), &layout) {
            return Err(Error::Structural("average vector has a different filter layout".into()));
        }
        (avg.values().to_vec(), Baseline::Average)
    } else {
        (weighted_mean(&set.negatives, dims), Baseline::Negatives)
    };

    let values = positive.iter().zip(&baseline_values).map(|(&p, &b)| p - b).collect();
    let mut d = DirectionVector::new(layout, values, "composed")?;
    d.provenance.push(DisentangleAction::Compose {
        terms: set
            .iter()
            .map(|e| ComposeTerm {
                exemplar_id: e.id.clone(),
                seed: e.seed,
                weight: e.weight(),
            })
            .collect(),
        baseline,
    });
    Ok(d)
}

/// Scales to unit L2 norm.
pub fn normalize<S: Scalar>(d: &DirectionVector<S>) -> Result<DirectionVector<S>> {
    let n = d.norm();
    if n == S::zero() || !n.is_finite() {
        return Err(Error::Numeric(format!("cannot normalize direction `{}` with norm {n}", d.name)));
    }
    Ok(d.map_values(d.values.iter().map(|&v| v / n).collect(), true))
}

pub fn scale<S: Scalar>(d: &DirectionVector<S>, s: S) -> DirectionVector<S> {
    d.map_values(d.values.iter().map(|&v| v * s).collect(), false)
}

/// Componentwise sum; provenance of `b` is appended to that of `a`.
pub fn add<S: Scalar>(a: &DirectionVector<S>, b: &DirectionVector<S>) -> Result<DirectionVector<S>> {
    b.require_layout(&a.layout)?;
    let mut out = a.map_values(a.values.iter().zip(&b.values).map(|(&x, &y)| x + y).collect(), false);
    out.provenance.extend(b.provenance.iter().cloned());
    Ok(out)
}

impl<S: Scalar> DirectionVector<S> {
    pub(crate) fn check_layout(&self, layout: &Arc<FilterLayout>) -> Result<()> {
        self.require_layout(layout)
    }
}
