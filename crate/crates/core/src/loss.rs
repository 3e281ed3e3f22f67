//! Expectation-value form of the MMD² loss.
//!
//! For the Gaussian kernel `exp(−‖x−y‖²/2σ)` on bitstrings,
//! `MMD²(p, q) = E_{z∼p_σ}[(⟨Z_z⟩_p − ⟨Z_z⟩_q)²]` where every variable enters
//! `z` independently with probability `p_σ = (1 − e^{−1/(2σ)})/2`. The loss is
//! estimated by Monte Carlo over strings drawn from that distribution,
//! truncated to lengths `1..=ell_max`.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::BitDataset;
use crate::engine::ZString;
use crate::error::{invalid, Error, Result};

/// Cap on the number of rejection rounds a truncated draw may represent.
pub const MAX_REJECTION_ITERATIONS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Bandwidth; ignored by the linear kernel.
    pub sigma: f64,
    pub ell_max: usize,
    pub n_ops: usize,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64, ell_max: usize, n_ops: usize) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            sigma,
            ell_max,
            n_ops,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            sigma: 1.0,
            ell_max: 1,
            n_ops: 1,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.kind == KernelKind::Linear {
            return if n >= 1 {
                Ok(())
            } else {
                Err(invalid("linear kernel needs n ≥ 1"))
            };
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("bandwidth must be positive, got {}", self.sigma)));
        }
        if self.ell_max < 1 || self.ell_max > n {
            return Err(invalid(format!("ell_max must lie in 1..={n}, got {}", self.ell_max)));
        }
        if self.n_ops < 1 {
            return Err(invalid("n_ops must be at least 1"));
        }
        Ok(())
    }
}

/// Inclusion probability `p_σ` of a single variable.
pub fn p_sigma(sigma: f64) -> f64 {
    -(-1.0 / (2.0 * sigma)).exp_m1() / 2.0
}

/// `(1 − p_σ)^{n−ℓ} p_σ^ℓ`, the untruncated probability of one string of length `ℓ`.
pub fn kernel_weight(sigma: f64, len: usize, n: usize) -> f64 {
    let p = p_sigma(sigma);
    (1.0 - p).powi((n - len) as i32) * p.powi(len as i32)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Distribution of the string length after truncation to `1..=ell_max`,
/// together with the acceptance probability of the untruncated draw.
fn truncated_lengths(spec: &KernelSpec, n: usize) -> Result<(Vec<f64>, f64)> {
    let p = p_sigma(spec.sigma);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let logw: Vec<f64> = (1..=spec.ell_max)
        .map(|l| ln_binomial(n, l) + l as f64 * lp + (n - l) as f64 * lq)
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Sampling(format!(
            "no string of length 1..={} has positive probability",
            spec.ell_max
        )));
    }
    let w: Vec<f64> = logw.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let acceptance = (max.exp() * total).min(1.0);
    Ok((w.into_iter().map(|x| x / total).collect(), acceptance))
}

/// Draws `n_ops` strings: each variable enters independently with
/// probability `p_σ`, and draws of length 0 or above `ell_max` are rejected.
///
/// The accepted distribution is sampled directly (length from the truncated
/// binomial, then a uniform subset of that length), which is equal in law to
/// the rejection loop but costs the same whatever the acceptance rate. Linear
/// kernels return the `n` singletons.
pub fn sample_zstrings(spec: &KernelSpec, n: usize, seed: u64) -> Result<Vec<ZString>> {
    spec.validate(n)?;
    if spec.kind == KernelKind::Linear {
        return (0..n).map(|i| ZString::new(vec![i], n)).collect();
    }
    let (lengths, _) = truncated_lengths(spec, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.n_ops)
        .map(|_| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut len = lengths.len();
            for (i, w) in lengths.iter().enumerate() {
                acc += w;
                if u < acc {
                    len = i + 1;
                    break;
                }
            }
            let mut idx = sample_indices(&mut rng, n, len).into_vec();
            idx.sort_unstable();
            ZString::new(idx, n)
        })
        .collect()
}

/// Reference sampler that literally runs the rejection loop, failing after
/// [`MAX_REJECTION_ITERATIONS`] rejected draws for one string.
pub fn sample_zstrings_by_rejection(spec: &KernelSpec, n: usize, seed: u64) -> Result<Vec<ZString>> {
    spec.validate(n)?;
    let p = p_sigma(spec.sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.n_ops);
    while out.len() < spec.n_ops {
        let mut tries = 0.0;
        loop {
            tries += 1.0;
            if tries > MAX_REJECTION_ITERATIONS {
                return Err(Error::Sampling(format!(
                    "rejection sampling exceeded {MAX_REJECTION_ITERATIONS} iterations (p_σ = {p})"
                )));
            }
            let idx: Vec<usize> = (0..n).filter(|_| rng.gen::<f64>() < p).collect();
            if !idx.is_empty() && idx.len() <= spec.ell_max {
                out.push(ZString::new(idx, n)?);
                break;
            }
        }
    }
    Ok(out)
}

/// Strings for one kernel, deduplicated, with the Monte Carlo weight of each
/// distinct string (multiplicity over draws; 1 for every linear singleton).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStrings {
    pub spec: KernelSpec,
    pub strings: Vec<ZString>,
    pub weights: Vec<f64>,
}

impl KernelStrings {
    pub fn sample(spec: &KernelSpec, n: usize, seed: u64) -> Result<Self> {
        let drawn = sample_zstrings(spec, n, seed)?;
        Ok(Self::from_draws(*spec, drawn))
    }

    /// Groups repeated draws; weights are multiplicities over the draw count
    /// for Gaussian kernels and 1 for the linear kernel.
    pub fn from_draws(spec: KernelSpec, drawn: Vec<ZString>) -> Self {
        let total = drawn.len() as f64;
        let mut counts: BTreeMap<ZString, usize> = BTreeMap::new();
        for z in drawn {
            *counts.entry(z).or_default() += 1;
        }
        let (strings, weights) = counts
            .into_iter()
            .map(|(z, c)| {
                let w = match spec.kind {
                    KernelKind::Gaussian => c as f64 / total,
                    KernelKind::Linear => c as f64,
                };
                (z, w)
            })
            .unzip();
        Self { spec, strings, weights }
    }

    /// Every string of length `1..=ell_max` with its untruncated kernel weight.
    pub fn enumerate(spec: &KernelSpec, n: usize) -> Result<Self> {
        spec.validate(n)?;
        let strings: Vec<ZString> = ZString::all_up_to(n, spec.ell_max)
            .into_iter()
            .filter(|z| !z.is_empty())
            .collect();
        let weights = strings
            .iter()
            .map(|z| match spec.kind {
                KernelKind::Gaussian => kernel_weight(spec.sigma, z.len(), n),
                KernelKind::Linear => 1.0,
            })
            .collect();
        Ok(Self {
            spec: *spec,
            strings,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }
}

/// Samples one [`KernelStrings`] per spec; spec `i` uses seed `seed + i`.
pub fn sample_all(specs: &[KernelSpec], n: usize, seed: u64) -> Result<Vec<KernelStrings>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| KernelStrings::sample(s, n, seed.wrapping_add(i as u64)))
        .collect()
}

/// Concatenation of the strings of every group, in group order.
pub fn flatten(groups: &[KernelStrings]) -> Vec<ZString> {
    groups.iter().flat_map(|g| g.strings.iter().cloned()).collect()
}

/// `(1/|X|) Σ_x (−1)^{Σ_{i∈z} x_i}` for every string.
pub fn target_expectations(data: &BitDataset, strings: &[ZString]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(invalid("target expectations of an empty dataset"));
    }
    if let Some(z) = strings
        .iter()
        .find(|z| z.indices().last().is_some_and(|&i| i >= data.n()))
    {
        return Err(invalid(format!(
            "Z-string {:?} out of range for {} variables",
            z.indices(),
            data.n()
        )));
    }
    let packed = data.packed();
    let words = data.n().div_ceil(64);
    let rows = packed.len() as f64;
    Ok(crate::par::map_collect(strings, |z| {
        let mut mask = vec![0u64; words];
        for &i in z.indices() {
            mask[i / 64] |= 1 << (i % 64);
        }
        let odd = packed
            .iter()
            .filter(|row| row.iter().zip(&mask).map(|(a, b)| (a & b).count_ones()).sum::<u32>() % 2 == 1)
            .count() as f64;
        (rows - 2.0 * odd) / rows
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthLoss {
    pub spec: KernelSpec,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEstimate {
    /// Mean of the per-kernel values.
    pub value: f64,
    pub per_bandwidth: Vec<BandwidthLoss>,
    /// Every evaluated string with its squared difference.
    pub strings_used: Vec<(ZString, f64)>,
}

/// Weighted squared differences per kernel, averaged over kernels.
///
/// `target` and `model` follow [`flatten`] order.
pub fn mmd2_estimate(target: &[f64], model: &[f64], groups: &[KernelStrings]) -> Result<LossEstimate> {
    let total: usize = groups.iter().map(KernelStrings::len).sum();
    if target.len() != model.len() || target.len() != total {
        return Err(invalid(format!(
            "value lists of lengths {} and {} do not match {total} strings",
            target.len(),
            model.len()
        )));
    }
    if groups.is_empty() {
        return Err(invalid("at least one kernel is required"));
    }
    let mut offset = 0;
    let mut per_bandwidth = Vec::with_capacity(groups.len());
    let mut strings_used = Vec::with_capacity(total);
    for g in groups {
        let mut value = 0.0;
        for (i, (z, w)) in g.strings.iter().zip(&g.weights).enumerate() {
            let d = model[offset + i] - target[offset + i];
            value += w * d * d;
            strings_used.push((z.clone(), d * d));
        }
        offset += g.len();
        per_bandwidth.push(BandwidthLoss { spec: g.spec, value });
    }
    let value = per_bandwidth.iter().map(|b| b.value).sum::<f64>() / groups.len() as f64;
    Ok(LossEstimate {
        value,
        per_bandwidth,
        strings_used,
    })
}

/// `∂ loss / ∂ model_i` for the estimate of [`mmd2_estimate`].
pub fn mmd2_model_gradient(target: &[f64], model: &[f64], groups: &[KernelStrings]) -> Vec<f64> {
    let scale = 2.0 / groups.len() as f64;
    groups
        .iter()
        .flat_map(|g| g.weights.iter())
        .zip(target.iter().zip(model))
        .map(|(w, (t, m))| scale * w * (m - t))
        .collect()
}

/// Median `m` of the squared Hamming distances between pairs of differing
/// rows of a seeded subsample; returns `(m/2, m)`.
pub fn median_heuristic(data: &BitDataset, subsample: usize, seed: u64) -> Result<(f64, f64)> {
    if data.len() < 2 {
        return Err(invalid("median heuristic needs at least two rows"));
    }
    if subsample < 2 {
        return Err(invalid("subsample must hold at least two rows"));
    }
    let rows: Vec<usize> = if data.len() > subsample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample_indices(&mut rng, data.len(), subsample).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..data.len()).collect()
    };
    let mut dist = Vec::new();
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let h = data.row(i).iter().zip(data.row(j)).filter(|(x, y)| x != y).count();
            if h > 0 {
                dist.push((h * h) as f64);
            }
        }
    }
    if dist.is_empty() {
        return Err(Error::DegenerateBandwidth("all sampled rows are identical".into()));
    }
    dist.sort_by(f64::total_cmp);
    let k = dist.len();
    let m = if k % 2 == 1 {
        dist[k / 2]
    } else {
        0.5 * (dist[k / 2 - 1] + dist[k / 2])
    };
    Ok((m / 2.0, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: &[&str]) -> BitDataset {
        crate::datagen::parse_dataset(&rows.join("\n")).unwrap()
    }

    #[test]
    fn p_sigma_value() {
        assert!((p_sigma(0.5) - 0.316_060_279_414_278_6).abs() < 1e-15);
        let p = p_sigma(0.7);
        assert!((kernel_weight(0.7, 0, 5) - (1.0 - p).powi(5)).abs() < 1e-16);
    }

    #[test]
    fn kernel_weights_normalize() {
        for n in 1..=12 {
            let total: f64 = (0..=n)
                .map(|l| kernel_weight(1.3, l, n) * (ln_binomial(n, l).exp()))
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::gaussian(0.0, 2, 10).validate(4).is_err());
        assert!(KernelSpec::gaussian(1.0, 0, 10).validate(4).is_err());
        assert!(KernelSpec::gaussian(1.0, 5, 10).validate(4).is_err());
        assert!(KernelSpec::gaussian(1.0, 2, 0).validate(4).is_err());
        assert!(KernelSpec::gaussian(1.0, 4, 1).validate(4).is_ok());
    }

    #[test]
    fn singletons_when_ell_max_is_one() {
        let s = sample_zstrings(&KernelSpec::gaussian(1.0, 1, 3000), 6, 2).unwrap();
        let mut counts = [0usize; 6];
        for z in &s {
            assert_eq!(z.len(), 1);
            counts[z.indices()[0]] += 1;
        }
        assert!(counts.iter().all(|&c| (400..600).contains(&c)), "{counts:?}");
        assert_eq!(sample_zstrings(&KernelSpec::gaussian(1.0, 1, 3000), 6, 2).unwrap(), s);
    }

    #[test]
    fn extreme_truncation_is_still_sampled() {
        let spec = KernelSpec::gaussian(0.2, 2, 50);
        let s = sample_zstrings(&spec, 120, 0).unwrap();
        assert!(s.iter().all(|z| (1..=2).contains(&z.len())));
        assert!(matches!(
            sample_zstrings_by_rejection(&spec, 120, 0),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn parity_targets() {
        let d = data(&["00", "01", "11"]);
        let z0 = ZString::new(vec![0], 2).unwrap();
        let z01 = ZString::new(vec![0, 1], 2).unwrap();
        let v = target_expectations(&d, &[z0.clone(), z01]).unwrap();
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-15 && (v[1] - 1.0 / 3.0).abs() < 1e-15);
        let zeros = data(&["000", "000"]);
        let all = ZString::all_up_to(3, 3);
        assert!(target_expectations(&zeros, &all).unwrap().iter().all(|&v| v == 1.0));
        assert!(target_expectations(&d, &[ZString::new(vec![2], 3).unwrap()]).is_err());
    }

    #[test]
    fn estimate_basics() {
        let spec = KernelSpec::gaussian(1.0, 2, 2);
        let g = KernelStrings::from_draws(
            spec,
            vec![ZString::new(vec![0], 2).unwrap(), ZString::new(vec![1], 2).unwrap()],
        );
        let est = mmd2_estimate(&[0.5, 0.5], &[0.7, 0.3], std::slice::from_ref(&g)).unwrap();
        assert!((est.value - 0.04).abs() < 1e-15);
        assert_eq!(
            mmd2_estimate(&[0.5, 0.5], &[0.5, 0.5], std::slice::from_ref(&g))
                .unwrap()
                .value,
            0.0
        );
        assert!(mmd2_estimate(&[0.5], &[0.5, 0.5], &[g]).is_err());
    }

    #[test]
    fn duplicates_keep_their_weight() {
        let spec = KernelSpec::gaussian(1.0, 2, 3);
        let z = ZString::new(vec![0], 2).unwrap();
        let y = ZString::new(vec![1], 2).unwrap();
        let g = KernelStrings::from_draws(spec, vec![z.clone(), y, z]);
        assert_eq!(g.len(), 2);
        assert_eq!(g.weights, vec![2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn linear_kernel_is_sum_of_singleton_squares() {
        let g = KernelStrings::sample(&KernelSpec::linear(), 3, 0).unwrap();
        assert_eq!(g.len(), 3);
        let t = [0.1, 0.2, 0.3];
        let m = [0.4, -0.2, 0.3];
        let direct: f64 = t.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum();
        assert_eq!(mmd2_estimate(&t, &m, &[g]).unwrap().value, direct);
    }

    #[test]
    fn model_gradient_matches_difference_quotient() {
        let groups = [KernelSpec::gaussian(1.0, 2, 5), KernelSpec::gaussian(2.0, 2, 5)]
            .iter()
            .enumerate()
            .map(|(i, s)| KernelStrings::sample(s, 4, i as u64).unwrap())
            .collect::<Vec<_>>();
        let k: usize = groups.iter().map(|g| g.len()).sum();
        let t: Vec<f64> = (0..k).map(|i| (i as f64 * 0.37).sin()).collect();
        let m: Vec<f64> = (0..k).map(|i| (i as f64 * 0.11).cos()).collect();
        let g = mmd2_model_gradient(&t, &m, &groups);
        for i in 0..k {
            let mut mp = m.clone();
            mp[i] += 1e-6;
            let mut mm = m.clone();
            mm[i] -= 1e-6;
            let fd = (mmd2_estimate(&t, &mp, &groups).unwrap().value - mmd2_estimate(&t, &mm, &groups).unwrap().value)
                / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn median_heuristic_cases() {
        // Hamming distances 1, 2, 3 → squared 1, 4, 9
        let d = data(&["000", "100", "111"]);
        assert_eq!(median_heuristic(&d, 100, 0).unwrap(), (2.0, 4.0));
        let doubled = data(&["000", "100", "111", "000", "100", "111"]);
        assert_eq!(median_heuristic(&doubled, 100, 0).unwrap(), (2.0, 4.0));
        assert!(matches!(
            median_heuristic(&data(&["01", "01"]), 10, 0),
            Err(Error::DegenerateBandwidth(_))
        ));
    }
}
