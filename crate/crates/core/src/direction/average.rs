use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_filter_vector, FilterLayout, FilterVector};
use crate::error::{Error, Result};
use crate::generator::FeatureMapBundle;
use crate::scalar::Scalar;

/// Anything that can produce the feature maps of a seeded random sample.
pub trait BundleSampler<S: Scalar>: Sync {
    fn sampler_layout(&self) -> &Arc<FilterLayout>;
    fn sample_bundle(&self, seed: u64) -> Result<FeatureMapBundle<S>>;
}

const CHUNK: usize = 256;

/// Mean filter vector over `n` samples drawn at seeds `seed, seed+1, …`.
///
/// Samples are extracted in parallel but summed in seed order, so the result
/// does not depend on the thread count.
pub fn compute_average_vector<S: Scalar>(
    sampler: &(impl BundleSampler<S> + ?Sized),
    n: usize,
    seed: u64,
) -> Result<FilterVector<S>> {
    if n == 0 {
        return Err(Error::Argument("average vector needs n ≥ 1 samples".into()));
    }
    let layout = sampler.sampler_layout().clone();
    let mut sum = vec![S::zero(); layout.total_dims()];
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let chunk: Vec<FilterVector<S>> = (start..end)
            .into_par_iter()
            .map(|i| {
                sampler
                    .sample_bundle(seed.wrapping_add(i as u64))
                    .and_then(|b| extract_filter_vector(&layout, &b))
                    .map_err(|e| Error::Sample {
                        index: i,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<_>>()?;
        for v in &chunk {
            for (a, &x) in sum.iter_mut().zip(v.values()) {
                *a = *a + x;
            }
        }
        start = end;
    }
    let count = S::of_usize(n);
    FilterVector::new(layout, sum.into_iter().map(|s| s / count).collect())
}

#[derive(Serialize, Deserialize)]
struct CachedAverage {
    model_hash: String,
    layout_digest: String,
    n: usize,
    seed: u64,
    values: Vec<f64>,
}

/// On-disk cache of average vectors keyed by model hash, sample count and seed.
#[derive(Debug, Clone)]
pub struct AverageCache {
    dir: PathBuf,
}

impl AverageCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, model_hash: &str, n: usize, seed: u64) -> PathBuf {
        self.dir.join(format!("average-{model_hash}-n{n}-s{seed}.json"))
    }

    /// Returns the cached vector, computing and storing it on a miss.
    pub fn get_or_compute<S: Scalar>(
        &self,
        model_hash: &str,
        sampler: &(impl BundleSampler<S> + ?Sized),
        n: usize,
        seed: u64,
    ) -> Result<FilterVector<S>> {
        let path = self.path_for(model_hash, n, seed);
        let layout = sampler.sampler_layout().clone();
        if path.exists() {
            match read_cached(&path, &layout, model_hash) {
                Ok(v) => return Ok(v),
                Err(e) => tracing::warn!("ignoring unusable average cache {}: {e}", path.display()),
            }
        }
        let v = compute_average_vector(sampler, n, seed)?;
        fs::create_dir_all(&self.dir)?;
        let record = CachedAverage {
            model_hash: model_hash.to_string(),
            layout_digest: layout.digest(),
            n,
            seed,
            values: v.values().iter().map(|x| x.as_f64()).collect(),
        };
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&record)?)?;
        fs::rename(&tmp, &path)?;
        Ok(v)
    }
}

fn read_cached<S: Scalar>(path: &Path, layout: &Arc<FilterLayout>, model_hash: &str) -> Result<FilterVector<S>> {
    let record: CachedAverage = serde_json::from_slice(&fs::read(path)?)?;
    if record.model_hash != model_hash || record.layout_digest != layout.digest() {
        return Err(Error::Structural("cached average belongs to another model".into()));
    }
    FilterVector::new(layout.clone(), record.values.into_iter().map(S::of).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::LayerSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Noise {
        layout: Arc<FilterLayout>,
        calls: AtomicUsize,
        fail_at: Option<u64>,
    }

    impl Noise {
        fn new() -> Self {
            Self {
                layout: Arc::new(
                    FilterLayout::new(vec![LayerSpec::new("a", 3, 2, 2), LayerSpec::new("b", 2, 3, 3)]).unwrap(),
                ),
                calls: AtomicUsize::new(0),
                fail_at: None,
            }
        }
    }

    impl BundleSampler<f64> for Noise {
        fn sampler_layout(&self) -> &Arc<FilterLayout> {
            &self.layout
        }
        fn sample_bundle(&self, seed: u64) -> Result<FeatureMapBundle<f64>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if Some(seed) == self.fail_at {
                return Err(Error::Plugin("boom".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let maps = self
                .layout
                .layers()
                .iter()
                .map(|l| (0..l.filters * l.map_len()).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            FeatureMapBundle::new(self.layout.clone(), maps)
        }
    }

    #[test]
    fn mean_of_one_is_the_sample() {
        let s = Noise::new();
        let avg = compute_average_vector(&s, 1, 9).unwrap();
        let single = extract_filter_vector(&s.layout, &s.sample_bundle(9).unwrap()).unwrap();
        assert_eq!(avg, single);
    }

    #[test]
    fn matches_batch_mean() {
        let s = Noise::new();
        let n = 600;
        let avg = compute_average_vector(&s, n, 3).unwrap();
        let all: Vec<_> = (0..n)
            .map(|i| extract_filter_vector(&s.layout, &s.sample_bundle(3 + i as u64).unwrap()).unwrap())
            .collect();
        for k in 0..s.layout.total_dims() {
            let oracle = all.iter().map(|v| v.values()[k]).sum::<f64>() / n as f64;
            assert!((avg.values()[k] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(matches!(compute_average_vector(&Noise::new(), 0, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn failure_reports_index() {
        let mut s = Noise::new();
        s.fail_at = Some(105);
        match compute_average_vector(&s, 10, 100) {
            Err(Error::Sample { index, .. }) => assert_eq!(index, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cache_hits_skip_sampling() {
        let dir = tempfile::tempdir().unwrap();
        let cache = AverageCache::new(dir.path());
        let s = Noise::new();
        let a = cache.get_or_compute("abc", &s, 20, 1).unwrap();
        assert_eq!(s.calls.load(Ordering::SeqCst), 20);
        let b = cache.get_or_compute("abc", &s, 20, 1).unwrap();
        assert_eq!(s.calls.load(Ordering::SeqCst), 20);
        assert_eq!(a, b);
        cache.get_or_compute("abc", &s, 20, 2).unwrap();
        assert_eq!(s.calls.load(Ordering::SeqCst), 40);
    }
}
