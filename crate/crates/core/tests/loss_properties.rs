use fermiborn::datagen::{mn_sample, GridMN};
use fermiborn::engine::ZString;
use fermiborn::loss::{
    kernel_weight, mmd2_estimate, p_sigma, sample_zstrings, sample_zstrings_by_rejection, target_expectations,
    KernelSpec, KernelStrings,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability of each length `1..=ell_max` after truncation.
fn truncated_length_probs(sigma: f64, n: usize, ell_max: usize) -> Vec<f64> {
    let w: Vec<f64> = (1..=ell_max)
        .map(|l| binomial(n, l) * kernel_weight(sigma, l, n))
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    // pool sparse tail cells into their neighbour so every expectation is ≥ 5
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o += c as f64;
        e += p * total as f64;
        if e >= 5.0 {
            obs.push(o);
            exp.push(e);
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 {
        *obs.last_mut().unwrap() += o;
        *exp.last_mut().unwrap() += e;
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (obs.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn length_histogram_is_truncated_binomial() {
    let (n, sigma) = (10, 0.8);
    let spec = KernelSpec::gaussian(sigma, n, 20_000);
    let strings = sample_zstrings(&spec, n, 17).unwrap();
    let mut counts = vec![0usize; n];
    for z in &strings {
        counts[z.len() - 1] += 1;
    }
    let p = chi_square_p(&counts, &truncated_length_probs(sigma, n, n));
    assert!(p > 0.01, "chi-square p = {p}");
}

#[test]
fn direct_sampler_agrees_with_rejection_loop() {
    let (n, sigma, ell_max) = (9, 2.0, 3);
    let spec = KernelSpec::gaussian(sigma, ell_max, 20_000);
    let direct = sample_zstrings(&spec, n, 1).unwrap();
    let literal = sample_zstrings_by_rejection(&spec, n, 2).unwrap();
    let probs = truncated_length_probs(sigma, n, ell_max);
    for sample in [&direct, &literal] {
        let mut counts = vec![0usize; ell_max];
        for z in sample.iter() {
            counts[z.len() - 1] += 1;
        }
        assert!(chi_square_p(&counts, &probs) > 0.01);
    }
    // within one length, every index is equally likely
    let mut hits = vec![0usize; n];
    for z in &direct {
        for &i in z.indices() {
            hits[i] += 1;
        }
    }
    let uniform = vec![1.0 / n as f64; n];
    assert!(chi_square_p(&hits, &uniform) > 0.01);
}

#[test]
fn sampling_is_deterministic() {
    let spec = KernelSpec::gaussian(1.0, 3, 500);
    assert_eq!(
        sample_zstrings(&spec, 12, 4).unwrap(),
        sample_zstrings(&spec, 12, 4).unwrap()
    );
    assert_ne!(
        sample_zstrings(&spec, 12, 4).unwrap(),
        sample_zstrings(&spec, 12, 5).unwrap()
    );
}

/// Parity expectations of two fixed 8-variable distributions.
fn calibration_fixture() -> (Vec<ZString>, Vec<f64>, Vec<f64>) {
    let target = GridMN::generate(2, 4, 1).unwrap();
    let model = GridMN::generate(2, 4, 2).unwrap();
    let data = mn_sample(&target, 2000, 3);
    let strings: Vec<ZString> = ZString::all_up_to(8, 8).into_iter().filter(|z| !z.is_empty()).collect();
    let t = target_expectations(&data, &strings).unwrap();
    let m: Vec<f64> = strings.iter().map(|z| model.joint().parity_expectation(z)).collect();
    (strings, t, m)
}

/// Mean and standard deviation of `Δ²` under the truncated string law.
fn exact_moments(strings: &[ZString], t: &[f64], m: &[f64], sigma: f64, ell_max: usize) -> (f64, f64) {
    let mut total = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for (i, z) in strings.iter().enumerate() {
        if z.len() > ell_max {
            continue;
        }
        let w = kernel_weight(sigma, z.len(), 8);
        let d2 = (t[i] - m[i]).powi(2);
        total += w;
        first += w * d2;
        second += w * d2 * d2;
    }
    let mean = first / total;
    (mean, (second / total - mean * mean).sqrt())
}

fn sampled_estimate(strings: &[ZString], t: &[f64], m: &[f64], spec: &KernelSpec, seed: u64) -> f64 {
    let group = KernelStrings::sample(spec, 8, seed).unwrap();
    let idx: Vec<usize> = group
        .strings
        .iter()
        .map(|z| strings.iter().position(|s| s == z).unwrap())
        .collect();
    let tv: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
    let mv: Vec<f64> = idx.iter().map(|&i| m[i]).collect();
    mmd2_estimate(&tv, &mv, &[group]).unwrap().value
}

#[test]
fn sampled_estimate_is_calibrated() {
    let (strings, t, m) = calibration_fixture();
    for (sigma, ell_max) in [(1.0, 8), (0.5, 3)] {
        let (mean, sd) = exact_moments(&strings, &t, &m, sigma, ell_max);
        for n_ops in [100, 400, 1600] {
            let spec = KernelSpec::gaussian(sigma, ell_max, n_ops);
            let est = sampled_estimate(&strings, &t, &m, &spec, 99);
            let se = sd / (n_ops as f64).sqrt();
            assert!(
                (est - mean).abs() < 3.0 * se,
                "σ={sigma} n_ops={n_ops}: {est} vs {mean} ± {se}"
            );
        }
    }
}

#[test]
fn estimator_variance_shrinks_like_inverse_n_ops() {
    let (strings, t, m) = calibration_fixture();
    let var = |n_ops: usize| {
        let spec = KernelSpec::gaussian(1.0, 4, n_ops);
        let xs: Vec<f64> = (0..300)
            .map(|s| sampled_estimate(&strings, &t, &m, &spec, 1000 + s))
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let (v100, v400, v1600) = (var(100), var(400), var(1600));
    for (ratio, expected) in [(v100 / v400, 4.0), (v400 / v1600, 4.0), (v100 / v1600, 16.0)] {
        assert!(
            ratio > expected / 1.6 && ratio < expected * 1.6,
            "variance ratio {ratio}, expected ≈ {expected}"
        );
    }
}

#[test]
fn p_sigma_limits() {
    assert!(p_sigma(1e-3) > 0.499);
    assert!(p_sigma(1e6) < 1e-6);
}

proptest! {
    #[test]
    fn estimate_is_nonnegative_and_zero_only_on_agreement(
        values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..20),
    ) {
        let n = values.len();
        let strings: Vec<ZString> = (0..n).map(|i| ZString::new(vec![i], n).unwrap()).collect();
        let group = KernelStrings::from_draws(KernelSpec::gaussian(1.0, 1, n), strings);
        let (t, m): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
        let est = mmd2_estimate(&t, &m, std::slice::from_ref(&group)).unwrap();
        prop_assert!(est.value >= 0.0);
        prop_assert_eq!(est.value == 0.0, t == m);
        prop_assert_eq!(mmd2_estimate(&t, &t, &[group]).unwrap().value, 0.0);
    }
}
