use std::sync::Arc;

use disentangle_core::direction::{add, adjust_weight, normalize, scale, WeightConfig};
use disentangle_core::eval::{
    attribute_delta_from, calibrate_with, identity_similarity, CalibrationConfig, Embedder, SuccessRule,
};
use disentangle_core::generator::FeatureMapBundle;
use disentangle_core::mask::{apply_mask_modes, filter_importance, raw_overlap, MaskImportance};
use disentangle_core::scalar::cosine;
use disentangle_core::{
    compose_direction, DirectionVector, Exemplar, ExemplarSet, FilterLayout, FilterVector, GeneratedImage, LayerSpec, Mask,
    MaskMode, Polarity,
};
use proptest::prelude::*;

fn flat(dims: usize) -> Arc<FilterLayout> {
    Arc::new(FilterLayout::new(vec![LayerSpec::new("l", dims, 1, 1)]).unwrap())
}

fn fv(layout: &Arc<FilterLayout>, v: &[f64]) -> FilterVector<f64> {
    FilterVector::new(layout.clone(), v.to_vec()).unwrap()
}

/// Signed weights given as step counts so they always land on the weight grid.
fn set_from(layout: &Arc<FilterLayout>, pos: &[(Vec<f64>, u8)], neg: &[(Vec<f64>, u8)], factor: f64) -> ExemplarSet<f64> {
    let cfg = WeightConfig::default();
    let mut set = ExemplarSet::new();
    for (i, (v, k)) in pos.iter().enumerate() {
        let w = f64::from(*k) * 0.5 * factor;
        set.insert(Exemplar::with_weight(format!("p{i}"), i as u64, fv(layout, v), Polarity::Positive, w, &cfg).unwrap())
            .unwrap();
    }
    for (i, (v, k)) in neg.iter().enumerate() {
        let w = -f64::from(*k) * 0.5 * factor;
        set.insert(Exemplar::with_weight(format!("n{i}"), 1000 + i as u64, fv(layout, v), Polarity::Negative, w, &cfg).unwrap())
            .unwrap();
    }
    set
}

fn vectors(dims: usize, n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<(Vec<f64>, u8)>> {
    prop::collection::vec((prop::collection::vec(-5.0..5.0f64, dims), 1u8..=10), n)
}

fn instance() -> impl Strategy<Value = (usize, Vec<(Vec<f64>, u8)>, Vec<(Vec<f64>, u8)>)> {
    (2usize..12).prop_flat_map(|dims| (Just(dims), vectors(dims, 1..=4), vectors(dims, 1..=4)))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #[test]
    fn doubling_every_weight_changes_nothing((dims, pos, neg) in instance()) {
        let layout = flat(dims);
        let a = compose_direction(&set_from(&layout, &pos, &neg, 1.0), None).unwrap();
        let b = compose_direction(&set_from(&layout, &pos, &neg, 2.0), None).unwrap();
        prop_assert!(close(a.values(), b.values(), 1e-12));
    }

    #[test]
    fn compose_is_affine_in_each_exemplar(
        (dims, pos, neg) in instance(),
        x in prop::collection::vec(-5.0..5.0f64, 11),
        y in prop::collection::vec(-5.0..5.0f64, 11),
        alpha in -3.0..3.0f64,
        beta in -3.0..3.0f64,
    ) {
        let layout = flat(dims);
        let with = |v: Vec<f64>| {
            let mut p = pos.clone();
            p[0].0 = v;
            compose_direction(&set_from(&layout, &p, &neg, 1.0), None).unwrap().values().to_vec()
        };
        let (x, y) = (x[..dims].to_vec(), y[..dims].to_vec());
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let d0 = with(vec![0.0; dims]);
        let (dx, dy, dm) = (with(x), with(y), with(mix));
        for k in 0..dims {
            let expect = alpha * (dx[k] - d0[k]) + beta * (dy[k] - d0[k]);
            prop_assert!((dm[k] - d0[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_groups_cancel((dims, pos, _neg) in instance(), rotate in 0usize..4) {
        let layout = flat(dims);
        let ones: Vec<(Vec<f64>, u8)> = pos.iter().map(|(v, _)| (v.clone(), 2)).collect();
        let mut shuffled = ones.clone();
        let r = rotate % shuffled.len();
        shuffled.rotate_left(r);
        let d = compose_direction(&set_from(&layout, &ones, &shuffled, 1.0), None).unwrap();
        prop_assert!(d.norm() < 1e-9);
    }

    #[test]
    fn raising_a_positive_weight_turns_d_toward_it(
        (dims, pos, neg) in (3usize..12).prop_flat_map(|d| (Just(d), vectors(d, 2..=4), vectors(d, 1..=3))),
        steps in 1i32..4,
    ) {
        let layout = flat(dims);
        let cfg = WeightConfig::default();
        let set = set_from(&layout, &pos, &neg, 1.0);
        let e = set.positives[0].clone();
        prop_assume!(e.weight() + f64::from(steps) * cfg.step <= cfg.max);
        let mut raised = set.clone();
        *raised.get_mut(&e.id).unwrap() = adjust_weight(&e, steps, &cfg).exemplar;

        // v_e minus the negatives' weighted mean
        let nw: f64 = neg.iter().map(|(_, k)| f64::from(*k)).sum();
        let base: Vec<f64> = (0..dims).map(|j| neg.iter().map(|(v, k)| f64::from(*k) * v[j]).sum::<f64>() / nw).collect();
        let target: Vec<f64> = pos[0].0.iter().zip(&base).map(|(a, b)| a - b).collect();
        let others: Vec<f64> = {
            let w: f64 = pos[1..].iter().map(|(_, k)| f64::from(*k)).sum();
            (0..dims).map(|j| pos[1..].iter().map(|(v, k)| f64::from(*k) * v[j]).sum::<f64>() / w - base[j]).collect()
        };
        // skip the collinear case where the direction cannot rotate
        let c = cosine(&target, &others).unwrap_or(1.0);
        prop_assume!(c.abs() < 1.0 - 1e-6);

        let before = cosine(compose_direction(&set, None).unwrap().values(), &target).unwrap();
        let after = cosine(compose_direction(&raised, None).unwrap().values(), &target).unwrap();
        prop_assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn weights_never_flip_and_stay_in_bounds(start in 1u8..=20, steps in -40i32..40, negative in any::<bool>()) {
        let cfg = WeightConfig::default();
        let layout = flat(2);
        let polarity = if negative { Polarity::Negative } else { Polarity::Positive };
        let w = polarity.sign() * f64::from(start) * 0.5;
        let e = Exemplar::with_weight("e", 0, fv(&layout, &[1.0, 0.0]), polarity, w, &cfg).unwrap();
        let out = adjust_weight(&e, steps, &cfg).exemplar;
        prop_assert_eq!(out.weight().signum(), polarity.sign());
        prop_assert!((cfg.min..=cfg.max).contains(&out.weight().abs()));
    }
}

fn bundle_strategy() -> impl Strategy<Value = FeatureMapBundle<f64>> {
    prop::collection::vec((1usize..4, 1usize..7, 1usize..7), 1..4).prop_flat_map(|shape| {
        let layers: Vec<LayerSpec> = shape
            .iter()
            .enumerate()
            .map(|(i, &(f, h, w))| LayerSpec::new(format!("l{i}"), f, h, w))
            .collect();
        let maps = layers
            .iter()
            .map(|l| prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => -3.0..3.0f64], l.filters * l.map_len()))
            .collect::<Vec<_>>();
        let layout = Arc::new(FilterLayout::new(layers).unwrap());
        maps.prop_map(move |m| FeatureMapBundle::new(layout.clone(), m).unwrap())
    })
}

fn nested_masks() -> impl Strategy<Value = (Mask, Mask)> {
    (3usize..14, 3usize..14).prop_flat_map(|(h, w)| {
        (prop::collection::vec(any::<bool>(), h * w), prop::collection::vec(any::<bool>(), h * w), 0..h * w).prop_map(
            move |(a, extra, forced)| {
                let mut inner = a;
                inner[forced] = true;
                let outer: Vec<bool> = inner.iter().zip(&extra).map(|(x, y)| *x || *y).collect();
                (Mask::new("in", h, w, inner, 0).unwrap(), Mask::new("out", h, w, outer, 0).unwrap())
            },
        )
    })
}

fn importance(layout: &Arc<FilterLayout>, id: &str, scores: Vec<f64>) -> MaskImportance<f64> {
    MaskImportance::new(id, layout.clone(), scores, 1e-8).unwrap()
}

proptest! {
    #[test]
    fn bigger_masks_never_lower_raw_overlap(bundle in bundle_strategy(), (inner, outer) in nested_masks()) {
        let a = raw_overlap(&inner, &bundle, 1e-8).unwrap();
        let b = raw_overlap(&outer, &bundle, 1e-8).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(y >= x, "{x} > {y}");
        }
    }

    #[test]
    fn scores_are_bounded_and_layer_max_is_one(bundle in bundle_strategy(), (mask, _) in nested_masks()) {
        let imp = filter_importance(&mask, &bundle, 1e-8).unwrap();
        let layout = bundle.layout().clone();
        prop_assert!(imp.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        for i in 0..layout.layers().len() {
            let layer = &imp.scores[layout.layer_range(i)];
            let max = layer.iter().cloned().fold(0.0, f64::max);
            prop_assert!(max == 1.0 || layer.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn mask_order_does_not_matter(
        d in prop::collection::vec(-1.0..1.0f64, 6),
        scores in prop::collection::vec(prop::collection::vec(0.0..0.9f64, 6), 1..5),
        modes in prop::collection::vec(any::<bool>(), 5),
        seed in any::<u64>(),
    ) {
        let layout = flat(6);
        prop_assume!(d.iter().any(|v| v.abs() > 1e-3));
        let d = DirectionVector::new(layout.clone(), d, "d").unwrap();
        let imps: Vec<_> = scores.iter().enumerate().map(|(i, s)| importance(&layout, &format!("m{i}"), s.clone())).collect();
        let mut pairs: Vec<_> = imps
            .iter()
            .zip(&modes)
            .map(|(imp, &p)| (imp, if p { MaskMode::Preserve } else { MaskMode::Discard }))
            .collect();
        let Ok(a) = apply_mask_modes(&d, &pairs) else { return Ok(()); };
        let n = pairs.len();
        pairs.rotate_left((seed as usize) % n);
        pairs.reverse();
        let b = apply_mask_modes(&d, &pairs).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn same_mask_both_ways_scales_by_s_times_one_minus_s(
        d in prop::collection::vec(0.1..2.0f64, 2..10),
        s_seed in prop::collection::vec(0.05..0.95f64, 10),
    ) {
        let layout = flat(d.len());
        let s = s_seed[..d.len()].to_vec();
        let dv = DirectionVector::new(layout.clone(), d.clone(), "d").unwrap();
        let a = importance(&layout, "a", s.clone());
        let b = importance(&layout, "b", s.clone());
        let out = apply_mask_modes(&dv, &[(&a, MaskMode::Preserve), (&b, MaskMode::Discard)]).unwrap();
        let raw: Vec<f64> = d.iter().zip(&s).map(|(v, s)| v * s * (1.0 - s)).collect();
        let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (o, r) in out.values().iter().zip(&raw) {
            prop_assert!((o - r / n).abs() < 1e-12);
        }
    }

    #[test]
    fn operations_keep_the_layout((dims, pos, neg) in instance(), s in prop::collection::vec(0.0..0.9f64, 11)) {
        let layout = flat(dims);
        let d = compose_direction(&set_from(&layout, &pos, &neg, 1.0), None).unwrap();
        prop_assume!(d.norm() > 1e-9);
        let n = normalize(&d).unwrap();
        let imp = importance(&layout, "m", s[..dims].to_vec());
        let outs = [
            d.clone(),
            n.clone(),
            scale(&d, 3.0),
            add(&d, &n).unwrap(),
            apply_mask_modes(&n, &[(&imp, MaskMode::Preserve)]).unwrap(),
        ];
        for o in &outs {
            prop_assert!(Arc::ptr_eq(o.layout(), &layout));
            prop_assert_eq!(o.values().len(), dims);
        }
    }
}

/// Fixed vectors, rescaled by a positive factor.
struct Scaled {
    factor: f64,
}

impl Embedder<f64> for Scaled {
    fn plugin_id(&self) -> &str {
        "scaled"
    }

    fn embed(&self, image: &GeneratedImage<f64>) -> disentangle_core::Result<Vec<f64>> {
        Ok(image.pixels.iter().take(12).map(|p| p * self.factor).collect())
    }
}

fn image(pixels: Vec<f64>) -> GeneratedImage<f64> {
    GeneratedImage {
        height: 2,
        width: 2,
        pixels,
        source_seed: 0,
        applied: None,
        warnings: Vec::new(),
    }
}

proptest! {
    #[test]
    fn identity_ignores_embedding_scale(
        reference in prop::collection::vec(0.05..1.0f64, 12),
        edited in prop::collection::vec(prop::collection::vec(0.05..1.0f64, 12), 1..6),
        factor in 1e-3..1e3f64,
    ) {
        let r = image(reference);
        let e: Vec<_> = edited.into_iter().map(image).collect();
        let a = identity_similarity(&r, &e, &Scaled { factor: 1.0 }).unwrap();
        let b = identity_similarity(&r, &e, &Scaled { factor }).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-12);
        prop_assert!(a.per_image.iter().all(|c| (-1.0..=1.0 + 1e-12).contains(c)));
    }

    #[test]
    fn attribute_counts_cover_every_non_target(
        (reference, edited, target) in (2usize..45).prop_flat_map(|a| (
            prop::collection::vec(any::<bool>(), a),
            prop::collection::vec(any::<bool>(), a),
            0..a,
        )),
    ) {
        let a = reference.len();
        let d = attribute_delta_from(&reference, &edited, target, SuccessRule::Present).unwrap();
        let c = d.counts;
        prop_assert_eq!(c.lost + c.found + c.retained + c.absent, a - 1);
        prop_assert!((0.0..=100.0).contains(&d.lost_pct) && (0.0..=100.0).contains(&d.found_pct));
        // flipping the target alone never moves lost or found
        let mut flipped = edited.clone();
        flipped[target] = !flipped[target];
        let f = attribute_delta_from(&reference, &flipped, target, SuccessRule::Present).unwrap();
        prop_assert_eq!(f.counts, c);
        prop_assert_eq!(f.success, !d.success);
    }

    #[test]
    fn calibration_spacing_and_call_budget(lo in 0.05..50.0f64, hi in 0.05..50.0f64) {
        let cfg = CalibrationConfig::default();
        let mut calls = 0usize;
        let r = calibrate_with(|l| { calls += 1; Ok(l >= -lo && l <= hi) }, &cfg).unwrap();
        prop_assert!(r.lambda_min < r.lambda_max);
        prop_assert!((r.lambda_min + lo).abs() <= cfg.tolerance + 1e-12);
        prop_assert!((r.lambda_max - hi).abs() <= cfg.tolerance + 1e-12);
        let step = (r.lambda_max - r.lambda_min) / 5.0;
        for (i, s) in r.strengths.iter().enumerate() {
            prop_assert!((s - (r.lambda_min + i as f64 * step)).abs() < 1e-9);
            prop_assert!(*s >= -lo && *s <= hi);
        }
        // expansion steps plus ceil(log2(bracket / tolerance)) per side
        for (bound, used) in [(lo, r.detector_calls[0]), (hi, r.detector_calls[1])] {
            // first failing probe is initial·2^k
            let k = if bound < cfg.initial { 0 } else { (bound / cfg.initial).log2().floor() as i32 + 1 };
            let bracket = if k == 0 { cfg.initial } else { cfg.initial * 2f64.powi(k - 1) };
            let bisect = (bracket / cfg.tolerance).log2().ceil().max(0.0) as usize;
            prop_assert!(used <= k as usize + 1 + bisect, "bound {bound}: {used} calls");
        }
        prop_assert_eq!(calls, 1 + r.detector_calls[0] + r.detector_calls[1]);
    }
}
