use std::sync::Arc;

use super::{downscale_mask, Mask, MaskMode};
use crate::action::{DisentangleAction, MaskRef};
use crate::direction::{same_layout, DirectionVector, FilterLayout};
use crate::error::{Error, Result};
use crate::generator::FeatureMapBundle;
use crate::scalar::{l2_norm, Scalar};

/// How responsible each filter is for a masked region, in `[0, 1]`.
///
/// Scores are normalized per layer so the most responsible filter of every
/// layer scores exactly 1 (all 0 when the layer carries no activation mass).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImportance<S: Scalar> {
    pub mask_id: String,
    layout: Arc<FilterLayout>,
    pub scores: Vec<S>,
    pub epsilon: S,
}

impl<S: Scalar> MaskImportance<S> {
    pub fn new(mask_id: impl Into<String>, layout: Arc<FilterLayout>, scores: Vec<S>, epsilon: S) -> Result<Self> {
        if scores.len() != layout.total_dims() {
            return Err(Error::Structural(format!(
                "{} scores for {} filters",
                scores.len(),
                layout.total_dims()
            )));
        }
        if scores.iter().any(|s| !(*s >= S::zero() && *s <= S::one())) {
            return Err(Error::Argument("importance scores must lie in [0, 1]".into()));
        }
        Ok(Self {
            mask_id: mask_id.into(),
            layout,
            scores,
            epsilon,
        })
    }

    pub fn layout(&self) -> &Arc<FilterLayout> {
        &self.layout
    }
}

/// Fraction of each filter's absolute activation mass that falls inside the mask,
/// `Σ|A|·m / (Σ|A| + ε)` with the mask pooled to the layer's resolution.
pub fn raw_overlap<S: Scalar>(mask: &Mask, bundle: &FeatureMapBundle<S>, epsilon: S) -> Result<Vec<S>> {
    let layout = bundle.layout();
    let mut raw = Vec::with_capacity(layout.total_dims());
    for (li, spec) in layout.layers().iter().enumerate() {
        let soft: Vec<S> = downscale_mask(mask, spec.height, spec.width)?;
        for f in 0..spec.filters {
            let map = bundle.filter_map(li, f);
            let (mut inside, mut total) = (S::zero(), S::zero());
            for (&a, &m) in map.iter().zip(&soft) {
                let mass = a.abs();
                inside = inside + mass * m;
                total = total + mass;
            }
            raw.push(inside / (total + epsilon));
        }
    }
    Ok(raw)
}

fn normalize_per_layer<S: Scalar>(layout: &FilterLayout, raw: &mut [S]) {
    for li in 0..layout.layers().len() {
        let part = &mut raw[layout.layer_range(li)];
        let max = part.iter().copied().fold(S::zero(), S::max);
        if max > S::zero() {
            part.iter_mut().for_each(|v| *v = *v / max);
        } else {
            part.iter_mut().for_each(|v| *v = S::zero());
        }
    }
}

pub fn filter_importance<S: Scalar>(mask: &Mask, bundle: &FeatureMapBundle<S>, epsilon: S) -> Result<MaskImportance<S>> {
    filter_importance_mean(mask, std::slice::from_ref(bundle), epsilon)
}

/// Importance from the raw overlaps averaged over several images' bundles.
pub fn filter_importance_mean<S: Scalar>(mask: &Mask, bundles: &[FeatureMapBundle<S>], epsilon: S) -> Result<MaskImportance<S>> {
    let first = bundles
        .first()
        .ok_or_else(|| Error::Argument("importance needs at least one feature-map bundle".into()))?;
    let layout = first.layout().clone();
    let mut acc = vec![S::zero(); layout.total_dims()];
    for b in bundles {
        if !same_layout(b.layout(), &layout) {
            return Err(Error::Structural("bundles come from different layouts".into()));
        }
        for (a, r) in acc.iter_mut().zip(raw_overlap(mask, b, epsilon)?) {
            *a = *a + r;
        }
    }
    let n = S::of_usize(bundles.len());
    acc.iter_mut().for_each(|a| *a = *a / n);
    normalize_per_layer(&layout, &mut acc);
    MaskImportance::new(mask.id.clone(), layout, acc, epsilon)
}

/// Rescales `d` per filter by `s` for preserve masks and `1 − s` for discard
/// masks, then renormalizes.
///
/// Masks are combined in mask-id order so the result does not depend on the
/// order they are passed in. `Off` entries are ignored; with no active mask
/// the direction is returned unchanged.
pub fn apply_mask_modes<S: Scalar>(
    d: &DirectionVector<S>,
    importances: &[(&MaskImportance<S>, MaskMode)],
) -> Result<DirectionVector<S>> {
    let mut active: Vec<_> = importances.iter().filter(|(_, m)| *m != MaskMode::Off).collect();
    if active.is_empty() {
        return Ok(d.clone());
    }
    active.sort_by(|a, b| (&a.0.mask_id, a.1).cmp(&(&b.0.mask_id, b.1)));

    let mut factor = vec![S::one(); d.layout().total_dims()];
    for (imp, mode) in &active {
        if !same_layout(imp.layout(), d.layout()) {
            return Err(Error::Structural(format!(
                "mask `{}` importance does not match the direction layout",
                imp.mask_id
            )));
        }
        for (f, &s) in factor.iter_mut().zip(&imp.scores) {
            *f = *f * if *mode == MaskMode::Preserve { s } else { S::one() - s };
        }
    }
    let scaled: Vec<S> = d.values().iter().zip(&factor).map(|(&v, &f)| v * f).collect();
    let norm = l2_norm(&scaled);
    if norm == S::zero() {
        return Err(Error::Numeric("the active masks suppress every component of the direction".into()));
    }
    let mut out = d.map_values(scaled.into_iter().map(|v| v / norm).collect(), true);
    for (imp, mode) in active {
        out.provenance.push(DisentangleAction::MaskApply {
            masks: vec![MaskRef {
                mask_id: imp.mask_id.clone(),
                mode: *mode,
            }],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::{normalize, LayerSpec};

    fn layout() -> Arc<FilterLayout> {
        Arc::new(FilterLayout::new(vec![LayerSpec::new("l", 2, 4, 4)]).unwrap())
    }

    #[test]
    fn full_overlap_layer_max_scores_one() {
        let l = layout();
        // filter 0 lives in the top-left 2×2, filter 1 everywhere
        let mut f0 = vec![0.0; 16];
        for i in [0, 1, 4, 5] {
            f0[i] = 2.0;
        }
        let f1 = vec![0.5; 16];
        let bundle = FeatureMapBundle::new(l.clone(), vec![[f0, f1].concat()]).unwrap();
        let mask = Mask::rect("m", 4, 4, 0, 0, 2, 2).unwrap();
        let imp = filter_importance(&mask, &bundle, 1e-8).unwrap();
        assert_eq!(imp.scores[0], 1.0);
        assert!((imp.scores[1] - 0.25_f64).abs() < 1e-7);
    }

    #[test]
    fn zero_activation_scores_zero() {
        let l = layout();
        let bundle = FeatureMapBundle::new(l, vec![[vec![0.0; 16], vec![1.0; 16]].concat()]).unwrap();
        let mask = Mask::rect("m", 4, 4, 0, 0, 4, 4).unwrap();
        let imp = filter_importance(&mask, &bundle, 1e-8).unwrap();
        assert_eq!(imp.scores, vec![0.0, 1.0]);
    }

    #[test]
    fn dead_layer_is_all_zero() {
        let l = layout();
        let bundle = FeatureMapBundle::new(l, vec![vec![0.0; 32]]).unwrap();
        let mask = Mask::rect("m", 4, 4, 0, 0, 4, 4).unwrap();
        assert_eq!(filter_importance(&mask, &bundle, 1e-8).unwrap().scores, vec![0.0, 0.0]);
    }

    fn dir(values: Vec<f64>) -> DirectionVector<f64> {
        DirectionVector::new(Arc::new(FilterLayout::new(vec![LayerSpec::new("l", values.len(), 1, 1)]).unwrap()), values, "d")
            .unwrap()
    }

    #[test]
    fn preserve_all_ones_is_identity_after_normalization() {
        let d = normalize(&dir(vec![3.0, -4.0, 1.0])).unwrap();
        let imp = MaskImportance::new("p", d.layout().clone(), vec![1.0; 3], 1e-8).unwrap();
        let out = apply_mask_modes(&d, &[(&imp, MaskMode::Preserve)]).unwrap();
        assert_eq!(out.values(), d.values());
        assert_eq!(out.provenance.len(), 1);
    }

    #[test]
    fn discard_zeroes_responsible_filter() {
        let d = dir(vec![1.0, 2.0, 2.0]);
        let imp = MaskImportance::new("q", d.layout().clone(), vec![0.0, 1.0, 0.0], 1e-8).unwrap();
        let out = apply_mask_modes(&d, &[(&imp, MaskMode::Discard)]).unwrap();
        let n = 5.0_f64.sqrt();
        assert_eq!(out.values()[1], 0.0);
        assert!((out.values()[0] - 1.0 / n).abs() < 1e-15);
        assert!((out.values()[2] - 2.0 / n).abs() < 1e-15);
        assert!(out.is_normalized());
    }

    #[test]
    fn no_active_masks_is_identity() {
        let d = dir(vec![1.0, 2.0]);
        assert_eq!(apply_mask_modes(&d, &[]).unwrap(), d);
        let imp = MaskImportance::new("o", d.layout().clone(), vec![0.3, 0.3], 1e-8).unwrap();
        assert_eq!(apply_mask_modes(&d, &[(&imp, MaskMode::Off)]).unwrap(), d);
    }

    #[test]
    fn full_suppression_is_a_numeric_error() {
        let d = dir(vec![1.0, 2.0]);
        let imp = MaskImportance::new("q", d.layout().clone(), vec![1.0, 1.0], 1e-8).unwrap();
        assert!(matches!(apply_mask_modes(&d, &[(&imp, MaskMode::Discard)]), Err(Error::Numeric(_))));
    }

    #[test]
    fn same_mask_both_modes_peaks_at_half() {
        let d = dir(vec![1.0, 1.0, 1.0, 1.0, 1.0]);
        let s = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let a = MaskImportance::new("a", d.layout().clone(), s.clone(), 1e-8).unwrap();
        let b = MaskImportance::new("b", d.layout().clone(), s.clone(), 1e-8).unwrap();
        let out = apply_mask_modes(&d, &[(&a, MaskMode::Preserve), (&b, MaskMode::Discard)]).unwrap();
        let expect: Vec<f64> = s.iter().map(|v| v * (1.0 - v)).collect();
        let n = expect.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (o, e) in out.values().iter().zip(&expect) {
            assert!((o - e / n).abs() < 1e-15);
        }
        let peak = out.values().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(peak, out.values()[2]);
    }

    #[test]
    fn layout_mismatch() {
        let d = dir(vec![1.0, 2.0]);
        let imp = MaskImportance::new("q", layout(), vec![0.0, 1.0], 1e-8).unwrap();
        assert!(matches!(apply_mask_modes(&d, &[(&imp, MaskMode::Discard)]), Err(Error::Structural(_))));
    }
}
