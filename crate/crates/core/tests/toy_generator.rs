use std::collections::HashSet;

use disentangle_core::direction::{normalize, scale};
use disentangle_core::generator::{GeneratorAdapter, LatentCode, MaskedTreeWeights};
use disentangle_core::{DirectionVector, MaskedTreeGenerator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Activation of filter `f` of layer `l` at `(y, x)` in that layer's grid, by recursion down the tree.
fn activation(w: &MaskedTreeWeights<f64>, z: &[f64], l: usize, f: usize, y: usize, x: usize) -> f64 {
    let layer = &w.layers[l];
    let r = layer.support[f];
    if !(y >= r.y0 && y < r.y1 && x >= r.x0 && x < r.x1) {
        return 0.0;
    }
    let mut pre = 0.0;
    for k in 0..w.latent_dim {
        pre += layer.latent[f * w.latent_dim + k] * z[k];
    }
    pre += layer.bias[f * layer.spec.height * layer.spec.width + y * layer.spec.width + x];
    if l > 0 {
        let prev = &w.layers[l - 1].spec;
        let py = y * prev.height / layer.spec.height;
        let px = x * prev.width / layer.spec.width;
        pre += layer.gain[f] * activation(w, z, l - 1, layer.parent[f], py, px);
    }
    pre.tanh()
}

fn oracle_image(w: &MaskedTreeWeights<f64>, z: &[f64]) -> Vec<f64> {
    let last = w.layers.len() - 1;
    let spec = &w.layers[last].spec;
    let mut out = Vec::new();
    for y in 0..spec.height {
        for x in 0..spec.width {
            for c in 0..3 {
                let mut pre = w.background[c];
                for f in 0..spec.filters {
                    pre += w.mix[c * spec.filters + f] * activation(w, z, last, f, y, x);
                }
                out.push(1.0 / (1.0 + (-pre).exp()));
            }
        }
    }
    out
}

#[test]
fn seed_zero_matches_closed_form() {
    let g = MaskedTreeGenerator::<f64>::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
    let s = g.sample(0).unwrap();
    assert_eq!(s.latent.values, z);
    let expect = oracle_image(g.weights(), &z);
    for (a, b) in s.image.pixels.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn sampling_is_deterministic() {
    let g = MaskedTreeGenerator::<f64>::toy();
    assert_eq!(g.sample(17).unwrap(), g.sample(17).unwrap());
}

#[test]
fn hundred_seeds_are_pairwise_distinct() {
    let g = MaskedTreeGenerator::<f64>::toy();
    let images: HashSet<Vec<u64>> = (0..100)
        .map(|s| g.sample(s).unwrap().image.pixels.iter().map(|p| p.to_bits()).collect())
        .collect();
    assert_eq!(images.len(), 100);
}

#[test]
fn zero_strength_is_pixel_identical() {
    let g = MaskedTreeGenerator::<f64>::toy();
    let d = DirectionVector::basis(g.layout().clone(), 5, "d").unwrap();
    for seed in 0..10 {
        let z = g.latent(seed);
        let edited = g.render_with_direction(&z, &d, 0.0).unwrap();
        assert!(edited.same_pixels(&g.sample(seed).unwrap().image));
    }
}

#[test]
fn unnormalized_directions_are_normalized_with_a_warning() {
    let g = MaskedTreeGenerator::<f64>::toy();
    let values: Vec<f64> = (0..g.layout().total_dims()).map(|i| (i as f64 * 0.37).sin()).collect();
    let d = DirectionVector::new(g.layout().clone(), values, "raw").unwrap();
    let z = g.latent(3);
    let raw = g.render_with_direction(&z, &d, 1.3).unwrap();
    let unit = g.render_with_direction(&z, &normalize(&d).unwrap(), 1.3).unwrap();
    assert!(raw.same_pixels(&unit));
    assert_eq!(raw.warnings.len(), 1);
    assert!(unit.warnings.is_empty());
    // rescaling the input changes nothing beyond rounding in the norm
    let big = g.render_with_direction(&z, &scale(&d, 7.0), 1.3).unwrap();
    for (a, b) in big.pixels.iter().zip(&raw.pixels) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_direction_renders_unedited_with_a_warning() {
    let g = MaskedTreeGenerator::<f64>::toy();
    let d = DirectionVector::zeros(g.layout().clone(), "zero");
    let img = g.render_with_direction(&g.latent(2), &d, 2.0).unwrap();
    assert!(img.same_pixels(&g.sample(2).unwrap().image));
    assert_eq!(img.warnings.len(), 1);
}

/// Image pixels covered by a filter's rectangle, scaled up from its layer's grid.
fn support_pixels(g: &MaskedTreeGenerator<f64>, layer: usize, filter: usize) -> Vec<bool> {
    let spec = &g.weights().layers[layer].spec;
    let r = g.weights().layers[layer].support[filter];
    let k = 16 / spec.height;
    (0..256)
        .map(|i| {
            let (y, x) = (i / 16, i % 16);
            y >= r.y0 * k && y < r.y1 * k && x >= r.x0 * k && x < r.x1 * k
        })
        .collect()
}

#[test]
fn editing_one_filter_only_touches_its_support() {
    let g = MaskedTreeGenerator::<f64>::toy();
    for seed in [0, 1, 2] {
        let base = g.sample(seed).unwrap().image;
        for c in 0..g.layout().total_dims() {
            let (layer, filter) = g.layout().locate(c).unwrap();
            let support = support_pixels(&g, layer, filter);
            assert_eq!(support, g.image_support(layer, filter));
            let d = DirectionVector::basis(g.layout().clone(), c, "unit").unwrap();
            let edited = g.render_with_direction(&g.latent(seed), &d, 0.8).unwrap();
            let mut changed_inside = false;
            for (p, &inside) in support.iter().enumerate() {
                let diff: f64 = (0..3).map(|ch| (edited.pixels[p * 3 + ch] - base.pixels[p * 3 + ch]).abs()).sum();
                if inside {
                    changed_inside |= diff > 0.0;
                } else {
                    assert_eq!(diff, 0.0, "component {c} changed pixel {p}");
                }
            }
            assert!(changed_inside, "component {c} had no effect");
        }
    }
}

#[test]
fn red_filter_is_local() {
    let g = MaskedTreeGenerator::<f64>::toy();
    let last = g.layout().layer_range(2);
    // block2 filter 0 drives the red channel on the left half of the top-left quadrant
    let k = last.start;
    let d = DirectionVector::basis(g.layout().clone(), k, "red").unwrap();
    let support = support_pixels(&g, 2, 0);
    let z = g.latent(0);
    let base = g.forward(&z, None).unwrap().image;
    let edited = g.render_with_direction(&z, &d, 0.8).unwrap();
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0, 0.0, 0);
    for (p, &s) in support.iter().enumerate() {
        if s {
            inside += edited.pixels[p * 3] - base.pixels[p * 3];
            n_in += 1;
        } else {
            outside += (0..3).map(|c| (edited.pixels[p * 3 + c] - base.pixels[p * 3 + c]).abs()).sum::<f64>() / 3.0;
            n_out += 1;
        }
    }
    let (inside, outside) = (inside / n_in as f64, outside / n_out as f64);
    assert!(inside > 0.0);
    assert!(inside > 10.0 * outside, "inside {inside}, outside {outside}");
}

#[test]
fn first_layer_activations_shift_by_exactly_the_offset() {
    let g = MaskedTreeGenerator::<f64>::toy();
    let values: Vec<f64> = (0..g.layout().total_dims()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
    let d = normalize(&DirectionVector::new(g.layout().clone(), values, "d").unwrap()).unwrap();
    let z = g.latent(4);
    let base = g.forward(&z, None).unwrap().bundle;
    for lambda in [0.3, -1.7, 4.0] {
        let edited = g.edit_pass(&z, &d, lambda).unwrap().bundle;
        let spec = &g.layout().layers()[0];
        for f in 0..spec.filters {
            let shift = d.values()[f] * lambda;
            for (e, b) in edited.filter_map(0, f).iter().zip(base.filter_map(0, f)) {
                assert_eq!(*e, b + shift);
            }
        }
    }
}

#[test]
fn disabled_hooks_drop_offsets() {
    let g = MaskedTreeGenerator::<f64>::toy().with_hooks(vec![false, false, true]).unwrap();
    let d = DirectionVector::basis(g.layout().clone(), 0, "block0").unwrap();
    let z = g.latent(1);
    assert!(g.render_with_direction(&z, &d, 3.0).unwrap().same_pixels(&g.forward(&z, None).unwrap().image));
}

#[test]
fn f32_tracks_f64() {
    let g64 = MaskedTreeGenerator::<f64>::toy();
    let g32 = MaskedTreeGenerator::<f32>::toy();
    assert_eq!(g64.model_hash(), g32.model_hash());
    for seed in 0..5 {
        let a = g64.sample(seed).unwrap().image;
        let b = g32.sample(seed).unwrap().image;
        for (x, y) in a.pixels.iter().zip(&b.pixels) {
            assert!((x - f64::from(*y)).abs() < 1e-5);
        }
    }
}

#[test]
fn latent_dimension_is_checked() {
    let g = MaskedTreeGenerator::<f64>::toy();
    let z = LatentCode::<f64>::sample(0, 3);
    assert!(matches!(g.forward(&z, None), Err(disentangle_core::Error::Structural(_))));
}
