//! Gaussian-mixture benchmark: fit a diagonal-covariance GMM to inliers with
//! EM, then draw a labeled dataset where outliers come from a copy of the
//! mixture whose randomly chosen 10% of features (one draw per dataset) have
//! their variances inflated by a constant factor. The untouched 90% of
//! features carry no outlierness signal, which is what makes the task hard.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const VAR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GmmSpec {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GmmSpec {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<GmmSpec> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::Data("mixture component arrays disagree".into()));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d) || variances.iter().any(|v| v.len() != d) {
            return Err(Error::Data("mixture dimensions disagree".into()));
        }
        if weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::Data("mixture weights must be positive".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Data("mixture weights must sum to 1".into()));
        }
        if variances.iter().flatten().any(|v| *v <= 0.0) {
            return Err(Error::Data("mixture variances must be positive".into()));
        }
        Ok(GmmSpec { weights, means, variances })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    fn sample_row(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut u = rng.random::<f64>();
        let mut comp = self.weights.len() - 1;
        for (c, w) in self.weights.iter().enumerate() {
            if u < *w {
                comp = c;
                break;
            }
            u -= w;
        }
        self.means[comp]
            .iter()
            .zip(&self.variances[comp])
            .map(|(m, v)| Normal::new(*m, v.sqrt()).unwrap().sample(rng))
            .collect()
    }

    /// Copy with the given features' variances multiplied by `factor` in
    /// every component.
    fn inflate(&self, features: &[usize], factor: f64) -> GmmSpec {
        let mut variances = self.variances.clone();
        for comp in &mut variances {
            for &f in features {
                comp[f] *= factor;
            }
        }
        GmmSpec { weights: self.weights.clone(), means: self.means.clone(), variances }
    }
}

/// Fit a k-component diagonal-covariance GMM with EM, k-means++ style
/// initialization and a fixed iteration cap.
pub fn fit_diag_gmm(inliers: &[Vec<f64>], k: usize, iters: usize, seed: u64) -> Result<GmmSpec> {
    let n = inliers.len();
    if k < 1 {
        return Err(Error::Config("component count must be >= 1".into()));
    }
    if k > n {
        return Err(Error::Data(format!("{k} components but only {n} inliers")));
    }
    let d = inliers[0].len();
    if d == 0 || inliers.iter().any(|r| r.len() != d) {
        return Err(Error::Data("inlier rows disagree on dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding for the means.
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(k);
    means.push(inliers[rng.random_range(0..n)].clone());
    let mut dist2 = vec![f64::INFINITY; n];
    while means.len() < k {
        let last = means.last().unwrap();
        let mut total = 0.0;
        for (i, row) in inliers.iter().enumerate() {
            let d2: f64 = row.iter().zip(last).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < dist2[i] {
                dist2[i] = d2;
            }
            total += dist2[i];
        }
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d2) in dist2.iter().enumerate() {
                if target < *d2 {
                    chosen = i;
                    break;
                }
                target -= d2;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        means.push(inliers[next].clone());
    }

    // Global per-feature variance as the initial spread of every component.
    let global_mean: Vec<f64> = (0..d)
        .map(|j| inliers.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let global_var: Vec<f64> = (0..d)
        .map(|j| {
            let v = inliers.iter().map(|r| (r[j] - global_mean[j]).powi(2)).sum::<f64>() / n as f64;
            v.max(VAR_FLOOR)
        })
        .collect();
    let mut variances = vec![global_var; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut resp = vec![0.0f64; k];
    let mut resp_sums = vec![0.0f64; k];
    let mut new_means = vec![vec![0.0f64; d]; k];
    let mut new_vars = vec![vec![0.0f64; d]; k];
    for _ in 0..iters {
        for c in 0..k {
            resp_sums[c] = 0.0;
            new_means[c].fill(0.0);
            new_vars[c].fill(0.0);
        }
        for row in inliers {
            // log responsibilities, normalized with log-sum-exp
            for c in 0..k {
                let mut lp = weights[c].ln();
                for j in 0..d {
                    let v = variances[c][j];
                    let diff = row[j] - means[c][j];
                    lp += -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + diff * diff / v);
                }
                resp[c] = lp;
            }
            let max = resp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for r in resp.iter_mut() {
                *r = (*r - max).exp();
                z += *r;
            }
            for c in 0..k {
                let r = resp[c] / z;
                resp_sums[c] += r;
                for j in 0..d {
                    new_means[c][j] += r * row[j];
                    new_vars[c][j] += r * row[j] * row[j];
                }
            }
        }
        for c in 0..k {
            let s = resp_sums[c].max(1e-12);
            for j in 0..d {
                means[c][j] = new_means[c][j] / s;
                variances[c][j] = (new_vars[c][j] / s - means[c][j] * means[c][j]).max(VAR_FLOOR);
            }
            weights[c] = s / n as f64;
        }
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }
    }
    GmmSpec::new(weights, means, variances)
}

/// A synthetic source mixture for regenerated benchmarks: component means
/// spread mildly per feature relative to the within-component variance, so
/// variance inflation on a feature dominates the between-component spread.
pub fn synth_source_spec(dims: usize, components: usize, seed: u64) -> GmmSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_spread = Normal::new(0.0, 0.45).unwrap();
    let means: Vec<Vec<f64>> = (0..components)
        .map(|_| (0..dims).map(|_| mean_spread.sample(&mut rng)).collect())
        .collect();
    let variances: Vec<Vec<f64>> = (0..components)
        .map(|_| (0..dims).map(|_| 0.7 + 0.6 * rng.random::<f64>()).collect())
        .collect();
    let weights = vec![1.0 / components as f64; components];
    GmmSpec::new(weights, means, variances).expect("synthetic spec is valid")
}

/// Draw a labeled benchmark: ceil((1-outlier_frac)*n) inliers from `spec` and
/// the remainder from a copy with ceil(feature_frac*d) feature variances
/// (chosen once per dataset) inflated by `variance_factor`. Rows are shuffled
/// deterministically; returns (rows, inflated feature indices).
pub fn sample_gmm_benchmark(
    spec: &GmmSpec,
    n: usize,
    outlier_frac: f64,
    feature_frac: f64,
    variance_factor: f64,
    seed: u64,
) -> Result<(Vec<(Vec<f64>, bool)>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Config("n must be > 0".into()));
    }
    if !(0.0..1.0).contains(&outlier_frac) {
        return Err(Error::Config("outlier fraction must be in [0, 1)".into()));
    }
    if !(feature_frac > 0.0 && feature_frac <= 1.0) {
        return Err(Error::Config("feature fraction must be in (0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dims();
    let inflate_count = (feature_frac * d as f64).ceil() as usize;
    let mut feature_pool: Vec<usize> = (0..d).collect();
    feature_pool.shuffle(&mut rng);
    let mut inflated: Vec<usize> = feature_pool.into_iter().take(inflate_count).collect();
    inflated.sort_unstable();

    let inlier_count = ((1.0 - outlier_frac) * n as f64).ceil() as usize;
    let outlier_count = n - inlier_count;
    let outlier_spec = spec.inflate(&inflated, variance_factor);

    let mut rows: Vec<(Vec<f64>, bool)> = Vec::with_capacity(n);
    for _ in 0..inlier_count {
        rows.push((spec.sample_row(&mut rng), false));
    }
    for _ in 0..outlier_count {
        rows.push((outlier_spec.sample_row(&mut rng), true));
    }
    rows.shuffle(&mut rng);
    Ok((rows, inflated))
}
