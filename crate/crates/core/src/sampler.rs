//! Stratified Monte Carlo generation of retain-masks by Hamming weight.
//!
//! For each stratum `k` the sampler draws its quota of masks uniformly from
//! all masks with exactly `k` retained layers. Strata are visited in the order
//! given and draws are emitted in draw order, so a fixed seed reproduces the
//! same sequence.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::rng::seeded;
use crate::types::HammingWeightPlan;

/// Splits `total` masks over `strata_count` strata: `q = total / n`, the first
/// `total % n` strata get `q + 1`, the rest `q`.
pub fn allocate_per_stratum(total: usize, strata_count: usize) -> Result<Vec<usize>> {
    if strata_count == 0 {
        return Err(Error::ZeroStrata);
    }
    let q = total / strata_count;
    let r = total % strata_count;
    Ok((0..strata_count).map(|j| if j < r { q + 1 } else { q }).collect())
}

/// Uniform random mask with exactly `k` of `layer_count` bits set.
///
/// Runs a partial Fisher-Yates shuffle over the layer indices and keeps the
/// first `k` positions.
pub fn sample_k_subset<R: Rng + ?Sized>(layer_count: usize, k: usize, rng: &mut R) -> Result<Mask> {
    if layer_count == 0 {
        return Err(Error::InvalidConfig("layer count must be positive".into()));
    }
    if k > layer_count {
        return Err(Error::KExceedsL { k, layer_count });
    }
    let mut indices: Vec<usize> = (0..layer_count).collect();
    for i in 0..k {
        let j = rng.gen_range(i..layer_count);
        indices.swap(i, j);
    }
    Mask::from_retained(layer_count, &indices[..k])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub layer_count: usize,
    pub plan: HammingWeightPlan,
    pub seed: u64,
    /// Reject repeated masks within a stratum and redraw.
    #[serde(default)]
    pub dedupe: bool,
}

impl SamplerConfig {
    pub fn new(layer_count: usize, plan: HammingWeightPlan, seed: u64) -> Self {
        SamplerConfig {
            layer_count,
            plan,
            seed,
            dedupe: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 {
            return Err(Error::InvalidConfig("layer count must be positive".into()));
        }
        self.plan.validate(self.layer_count)?;
        if self.dedupe {
            for (k, count) in self.plan.strata() {
                if (count as f64) > binomial(self.layer_count, k) {
                    return Err(Error::InvalidConfig(format!(
                        "{count} distinct masks requested from stratum {k}, only C({}, {k}) exist",
                        self.layer_count
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A sampled mask tagged with the stratum it was drawn for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledMask {
    pub mask: Mask,
    pub stratum: usize,
}

pub fn sample_stratified(config: &SamplerConfig) -> Result<Vec<SampledMask>> {
    config.validate()?;
    let mut rng = seeded(config.seed);
    let mut out = Vec::with_capacity(config.plan.total);
    for (k, count) in config.plan.strata() {
        let mut seen = HashSet::new();
        let mut drawn = 0;
        while drawn < count {
            let mask = sample_k_subset(config.layer_count, k, &mut rng)?;
            if config.dedupe && !seen.insert(mask.clone()) {
                continue;
            }
            out.push(SampledMask { mask, stratum: k });
            drawn += 1;
        }
    }
    Ok(out)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_per_stratum(8000, 5).unwrap(), vec![1600; 5]);
        assert_eq!(allocate_per_stratum(10, 3).unwrap(), vec![4, 3, 3]);
        assert_eq!(allocate_per_stratum(0, 4).unwrap(), vec![0; 4]);
        assert!(matches!(allocate_per_stratum(5, 0), Err(Error::ZeroStrata)));
    }

    #[test]
    fn degenerate_subsets() {
        let mut rng = seeded(3);
        assert_eq!(sample_k_subset(4, 4, &mut rng).unwrap().to_string(), "1111");
        assert_eq!(sample_k_subset(4, 0, &mut rng).unwrap().to_string(), "0000");
        assert!(matches!(
            sample_k_subset(4, 5, &mut rng),
            Err(Error::KExceedsL { k: 5, layer_count: 4 })
        ));
    }

    #[test]
    fn inclusion_frequency_is_half() {
        // Over all C(12,6) subsets each position is included in exactly half.
        let exact = (0u64..1 << 12)
            .filter(|c| c.count_ones() == 6)
            .fold([0usize; 12], |mut acc, c| {
                for (i, slot) in acc.iter_mut().enumerate() {
                    *slot += (c >> i & 1) as usize;
                }
                acc
            });
        assert!(exact.iter().all(|&n| n * 2 == binomial(12, 6) as usize));

        let mut counts = [0usize; 12];
        for seed in 0..10_000u64 {
            let mask = sample_k_subset(12, 6, &mut seeded(seed)).unwrap();
            for i in mask.retained() {
                counts[i] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 0.5).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn subsets_pass_chi_square_uniformity() {
        // L = 6, k = 3: 20 subsets enumerated as the reference support.
        let support: Vec<u64> = (0u64..64).filter(|c| c.count_ones() == 3).collect();
        assert_eq!(support.len(), 20);
        let draws = 20_000usize;
        let mut rng = seeded(2024);
        let mut hist: HashMap<u64, usize> = HashMap::new();
        for _ in 0..draws {
            let code = sample_k_subset(6, 3, &mut rng).unwrap().to_u64().unwrap();
            *hist.entry(code).or_default() += 1;
        }
        assert!(hist.keys().all(|c| support.contains(c)));
        let expected = draws as f64 / support.len() as f64;
        let chi2: f64 = support
            .iter()
            .map(|c| {
                let o = *hist.get(c).unwrap_or(&0) as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        // chi-square 0.99 quantile, 19 degrees of freedom
        assert!(chi2 < 36.191, "chi2 = {chi2}");
    }

    #[test]
    fn paper_scale_configuration() {
        let plan = HammingWeightPlan::even(&[30, 27, 24, 21, 18], 8000).unwrap();
        let masks = sample_stratified(&SamplerConfig::new(32, plan, 42)).unwrap();
        assert_eq!(masks.len(), 8000);
        for k in [30, 27, 24, 21, 18] {
            let n = masks
                .iter()
                .filter(|m| m.stratum == k && m.mask.hamming_weight() == k)
                .count();
            assert_eq!(n, 1600);
        }
    }

    #[test]
    fn single_possible_mask() {
        let plan = HammingWeightPlan::even(&[4], 3).unwrap();
        let masks = sample_stratified(&SamplerConfig::new(4, plan, 0)).unwrap();
        let text: Vec<String> = masks.iter().map(|m| m.mask.to_string()).collect();
        assert_eq!(text, vec!["1111"; 3]);
    }

    #[test]
    fn golden_small_run() {
        let plan = HammingWeightPlan::even(&[10, 8, 6], 9).unwrap();
        let masks = sample_stratified(&SamplerConfig::new(12, plan, 7)).unwrap();
        let weights: Vec<usize> = masks.iter().map(|m| m.mask.hamming_weight()).collect();
        assert_eq!(weights, vec![10, 10, 10, 8, 8, 8, 6, 6, 6]);
        let text: Vec<String> = masks.iter().map(|m| m.mask.to_string()).collect();
        assert_eq!(text, GOLDEN_L12_SEED7);
    }

    const GOLDEN_L12_SEED7: [&str; 9] = [
        "011111111110",
        "111101101111",
        "111101111011",
        "011101101011",
        "010111110011",
        "101111001101",
        "010111001010",
        "010101001110",
        "100111010001",
    ];

    #[test]
    fn dedupe_rejects_impossible_quota() {
        let plan = HammingWeightPlan::even(&[1], 5).unwrap();
        let mut config = SamplerConfig::new(4, plan, 1);
        config.dedupe = true;
        assert!(matches!(sample_stratified(&config), Err(Error::InvalidConfig(_))));
        config.plan = HammingWeightPlan::even(&[1], 4).unwrap();
        let masks = sample_stratified(&config).unwrap();
        let distinct: HashSet<_> = masks.iter().map(|m| m.mask.clone()).collect();
        assert_eq!(distinct.len(), 4);
    }

    proptest! {
        #[test]
        fn allocation_sums_to_total(total in 0usize..100_000, n in 1usize..50) {
            let counts = allocate_per_stratum(total, n).unwrap();
            prop_assert_eq!(counts.len(), n);
            prop_assert_eq!(counts.iter().sum::<usize>(), total);
            prop_assert!(counts.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
        }

        #[test]
        fn strata_are_pure_and_deterministic(
            layer_count in 1usize..40,
            raw_weights in prop::collection::btree_set(0usize..40, 1..6),
            total in 0usize..200,
            seed in any::<u64>(),
        ) {
            let weights: Vec<usize> = raw_weights.into_iter().map(|k| k % (layer_count + 1)).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let plan = HammingWeightPlan::even(&weights, total).unwrap();
            let config = SamplerConfig::new(layer_count, plan.clone(), seed);
            let a = sample_stratified(&config).unwrap();
            let b = sample_stratified(&config).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), total);
            for (k, count) in plan.strata() {
                let n = a.iter().filter(|m| m.stratum == k).count();
                prop_assert_eq!(n, count);
            }
            prop_assert!(a.iter().all(|m| m.mask.hamming_weight() == m.stratum && m.mask.len() == layer_count));
        }
    }
}
