//! Distributed discrete noise for histogram release.
//!
//! Each client perturbs every stored bin with the difference of two Polya
//! draws; summed over `m` clients the aggregate noise per bin is a two-sided
//! geometric (discrete Laplace) variable with parameter `alpha = exp(-eps/h)`,
//! which makes the released histogram satisfy eps-differential privacy under
//! the add/remove-one-record neighboring relation. A single record lands in
//! exactly one bin per level of exactly one class histogram, so the per-layer
//! sensitivity is 1 and the per-layer budget is `eps / h`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{Error, Result};
use crate::histogram::HierHistogram;

/// Privacy budget and the derived per-layer noise parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    /// Total budget eps > 0 spent on one histogram.
    pub epsilon: f64,
    /// Number of participating clients.
    pub clients: usize,
    /// Tree height: the number of mechanism layers sharing the budget.
    pub height: usize,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, clients: usize, height: usize) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "privacy budget must be positive, got {epsilon}"
            )));
        }
        if clients < 1 || height < 1 {
            return Err(Error::InvalidInput(
                "privacy params need clients >= 1 and height >= 1".into(),
            ));
        }
        Ok(Self {
            epsilon,
            clients,
            height,
        })
    }

    /// Budget per tree layer: `eps / h`.
    pub fn per_layer_epsilon(&self) -> f64 {
        self.epsilon / self.height as f64
    }

    /// Geometric parameter `alpha = exp(-eps/h)` of the aggregate per-bin noise.
    pub fn alpha(&self) -> f64 {
        (-self.per_layer_epsilon()).exp()
    }

    /// Variance of the aggregate per-bin noise: `2a / (1-a)^2`.
    pub fn aggregate_variance(&self) -> f64 {
        let a = self.alpha();
        2.0 * a / ((1.0 - a) * (1.0 - a))
    }
}

/// One draw from Polya(r, p): a negative binomial with real-valued shape `r`,
/// sampled as Poisson mixed over Gamma(r, p / (1 - p)). Mean `r p / (1 - p)`.
pub fn sample_polya<R: Rng + ?Sized>(r: f64, p: f64, rng: &mut R) -> u64 {
    debug_assert!(r > 0.0 && (0.0..1.0).contains(&p));
    if p == 0.0 {
        return 0;
    }
    let gamma = Gamma::new(r, p / (1.0 - p)).expect("valid Gamma parameters");
    let lambda: f64 = gamma.sample(rng);
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive Poisson rate").sample(rng) as u64
}

/// The noise share one client adds to one bin: `X - Y` with `X`, `Y`
/// independent Polya(1/m, alpha) draws. Summing the shares of all `m`
/// clients yields a two-sided geometric(alpha) variable.
pub fn client_bin_noise<R: Rng + ?Sized>(params: &PrivacyParams, rng: &mut R) -> i64 {
    let r = 1.0 / params.clients as f64;
    let alpha = params.alpha();
    sample_polya(r, alpha, rng) as i64 - sample_polya(r, alpha, rng) as i64
}

/// Stable seed derivation for per-bin noise substreams.
///
/// SplitMix64 finalizer chained over the identifying tuple; any change to
/// (master seed, client, histogram tag, bin) yields an unrelated stream.
pub fn derive_seed(master: u64, client: u64, tag: u64, bin: u64) -> u64 {
    let mut state = master;
    for word in [client, tag, bin] {
        state = splitmix64(state ^ splitmix64(word));
    }
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Add an independent client noise share to every stored bin of the tree.
///
/// The substream for each bin is derived from (master seed, client index,
/// histogram tag, level-major bin index), so a rerun with the same master
/// seed reproduces the noisy tree bit for bit.
pub fn add_noise(
    tree: &HierHistogram,
    params: &PrivacyParams,
    master_seed: u64,
    client: u64,
    tag: u64,
) -> HierHistogram {
    let mut noisy = tree.clone();
    let config = tree.config();
    let mut flat_bin = 0u64;
    for level in 1..=config.height {
        for bin in 0..config.bins_at(level) {
            let seed = derive_seed(master_seed, client, tag, flat_bin);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let share = client_bin_noise(params, &mut rng);
            if share != 0 {
                noisy.add_to_bin(level, bin, share as f64);
            }
            flat_bin += 1;
        }
    }
    noisy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ScoreRange;
    use crate::histogram::TreeConfig;
    use rand_chacha::ChaCha12Rng;

    fn mean_var(samples: &[f64]) -> (f64, f64) {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn polya_near_zero_p_is_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..200 {
            assert_eq!(sample_polya(1.0, 1e-12, &mut rng), 0);
        }
    }

    #[test]
    fn polya_geometric_moments() {
        // Polya(1, 0.5) is geometric with mean p/(1-p) = 1, variance p/(1-p)^2 = 2.
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| sample_polya(1.0, 0.5, &mut rng) as f64)
            .collect();
        let (mean, var) = mean_var(&samples);
        let sigma = (2.0f64 / samples.len() as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean}");
        assert!((var - 2.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn polya_fractional_shape_mean() {
        // mean r p / (1 - p) with r = 0.1, p = e^-1
        let (r, p) = (0.1, (-1.0f64).exp());
        let expect = r * p / (1.0 - p);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| sample_polya(r, p, &mut rng) as f64)
            .collect();
        let (mean, var) = mean_var(&samples);
        let se = (var / samples.len() as f64).sqrt();
        assert!((mean - expect).abs() < 4.0 * se, "mean {mean} vs {expect}");
    }

    #[test]
    fn single_client_share_is_two_sided_geometric() {
        // m=1 reduces to the central mechanism: check pmf at k in {0,1,2}
        // against a^|k| (1-a)/(1+a).
        let params = PrivacyParams::new(0.5, 1, 1).unwrap();
        let a = params.alpha();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let n = 100_000usize;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let v = client_bin_noise(&params, &mut rng).unsigned_abs() as usize;
            if v < 3 {
                counts[v] += 1;
            }
        }
        for k in 0..3usize {
            // two-sided: P(|X| = k) doubles the pmf except at zero
            let p = a.powi(k as i32) * (1.0 - a) / (1.0 + a) * if k == 0 { 1.0 } else { 2.0 };
            let freq = counts[k] as f64 / n as f64;
            let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() < tol, "k={k}: {freq} vs {p}");
        }
    }

    #[test]
    fn aggregated_share_variance_matches_geometric() {
        // Spot-check one m here; the acceptance suite sweeps m in {1, 5, 20}.
        let params = PrivacyParams::new(2.5, 5, 5).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 100_000usize;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                (0..params.clients)
                    .map(|_| client_bin_noise(&params, &mut rng) as f64)
                    .sum()
            })
            .collect();
        let (mean, var) = mean_var(&samples);
        let expect = params.aggregate_variance();
        assert!((var - expect).abs() < 0.05 * expect, "var {var} vs {expect}");
        let se = (expect / n as f64).sqrt();
        assert!(mean.abs() < 5.0 * se, "mean {mean}");
    }

    #[test]
    fn add_noise_is_deterministic_and_perturbs_every_level() {
        let config = TreeConfig::new(2, 4, ScoreRange::unit()).unwrap();
        let scores: Vec<f64> = (0..64).map(|i| (i as f64 + 0.5) / 64.0).collect();
        let tree = HierHistogram::build(&scores, config).unwrap();
        let params = PrivacyParams::new(0.5, 1, 4).unwrap();

        let a = add_noise(&tree, &params, 42, 0, 0);
        let b = add_noise(&tree, &params, 42, 0, 0);
        assert_eq!(a, b);

        let other_client = add_noise(&tree, &params, 42, 1, 0);
        assert_ne!(a, other_client);

        // strong noise at eps/h = 0.125 should touch most levels
        let touched = (1..=4)
            .filter(|&l| a.level(l) != tree.level(l))
            .count();
        assert!(touched >= 3, "only {touched} levels perturbed");
        // counts remain integers
        assert!(a.level(4).iter().all(|v| v.fract() == 0.0));
    }

    #[test]
    fn huge_epsilon_adds_no_noise() {
        let config = TreeConfig::new(2, 3, ScoreRange::unit()).unwrap();
        let tree = HierHistogram::build(&[0.3, 0.9], config).unwrap();
        let params = PrivacyParams::new(1e6, 4, 3).unwrap();
        let noisy = add_noise(&tree, &params, 7, 2, 1);
        assert_eq!(noisy, tree);
    }

    #[test]
    fn noise_is_unbiased_per_bin() {
        let params = PrivacyParams::new(1.0, 3, 2).unwrap();
        let config = TreeConfig::new(2, 2, ScoreRange::unit()).unwrap();
        let tree = HierHistogram::build(&[0.1, 0.4, 0.6, 0.9], config).unwrap();
        let trials = 10_000usize;
        let mut deltas = vec![0.0; 4];
        for t in 0..trials {
            for c in 0..params.clients {
                let noisy = add_noise(&tree, &params, t as u64, c as u64, 0);
                for (i, (n, orig)) in noisy.level(2).iter().zip(tree.level(2)).enumerate() {
                    deltas[i] += n - orig;
                }
            }
        }
        let sigma = params.aggregate_variance().sqrt();
        let se = 5.0 * sigma / (trials as f64).sqrt();
        for (i, d) in deltas.iter().enumerate() {
            let mean = d / trials as f64;
            assert!(mean.abs() < se, "bin {i}: mean {mean} vs se {se}");
        }
    }

    #[test]
    fn cross_bin_noise_is_uncorrelated() {
        let params = PrivacyParams::new(0.8, 2, 2).unwrap();
        let config = TreeConfig::new(2, 2, ScoreRange::unit()).unwrap();
        let tree = HierHistogram::zeros(config);
        let trials = 10_000usize;
        let mut a = Vec::with_capacity(trials);
        let mut b = Vec::with_capacity(trials);
        for t in 0..trials {
            let noisy = add_noise(&tree, &params, 1000 + t as u64, 0, 0);
            a.push(noisy.level(2)[0]);
            b.push(noisy.level(2)[1]);
        }
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let cov = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (trials as f64 - 1.0);
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.05, "corr {corr}");
    }
}
