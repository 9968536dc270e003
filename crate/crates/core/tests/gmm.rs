use approx::assert_abs_diff_eq;
use ccuc::fit::{
    em_fit_report, ks_distance, nataf_sample, sample_gmm, sample_gmm_labeled, CorrelationSpec, EmConfig,
    MarginalHistogram,
};
use ccuc::gmm::{quantile, GaussianComponent, Gmm, QuantileConfig, UnivariateGmm};
use proptest::prelude::*;

fn mixture_strategy() -> impl Strategy<Value = UnivariateGmm> {
    prop::collection::vec((0.05f64..1.0, -50.0f64..50.0, 0.1f64..20.0), 1..12).prop_map(|raw| {
        let total: f64 = raw.iter().map(|c| c.0).sum();
        UnivariateGmm::new(raw.into_iter().map(|(w, m, s)| (w / total, m, s * s)).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quantile_inverts_cdf(u in mixture_strategy(), q in 0.001f64..0.999) {
        let y = quantile(&u, q, &QuantileConfig::default()).unwrap();
        prop_assert!((u.cdf(y) - q).abs() <= 1e-9);
    }

    #[test]
    fn quantile_is_monotone(u in mixture_strategy(), a in 0.001f64..0.999, b in 0.001f64..0.999) {
        let cfg = QuantileConfig::default();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(quantile(&u, lo, &cfg).unwrap() <= quantile(&u, hi, &cfg).unwrap() + 1e-9);
    }

    /// Shifting and scaling the mixture moves its quantiles the same way.
    #[test]
    fn quantile_is_affine_equivariant(u in mixture_strategy(), q in 0.01f64..0.99, shift in -20.0f64..20.0, scale in 0.2f64..5.0) {
        let moved = UnivariateGmm::new(
            u.components().map(|(w, m, v)| (w, scale * m + shift, scale * scale * v)).collect(),
        ).unwrap();
        let cfg = QuantileConfig::default();
        let a = quantile(&u, q, &cfg).unwrap();
        let b = quantile(&moved, q, &cfg).unwrap();
        prop_assert!((b - (scale * a + shift)).abs() <= 1e-6 * (1.0 + b.abs()));
    }

    /// Projection moments agree with the mixture's mean and covariance.
    #[test]
    fn projection_moments(
        w in 0.1f64..0.9,
        m in prop::collection::vec(-10.0f64..10.0, 6),
        d in prop::collection::vec(0.5f64..5.0, 6),
        rho in -0.8f64..0.8,
        s in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let cov = |k: usize| {
            let (a, b, c) = (d[3 * k], d[3 * k + 1], d[3 * k + 2]);
            vec![vec![a * a, rho * a * b, 0.0], vec![rho * a * b, b * b, 0.0], vec![0.0, 0.0, c * c]]
        };
        let g = Gmm::new(3, vec![
            GaussianComponent { weight: w, mean: m[..3].to_vec(), covariance: cov(0) },
            GaussianComponent { weight: 1.0 - w, mean: m[3..].to_vec(), covariance: cov(1) },
        ]).unwrap();
        let u = g.project(&s).unwrap();
        let mean: f64 = g.mean().iter().zip(&s).map(|(a, b)| a * b).sum();
        let cv = g.covariance();
        let var: f64 = (0..3).map(|i| (0..3).map(|j| s[i] * cv[i][j] * s[j]).sum::<f64>()).sum();
        let pm = u.mean();
        let pv: f64 = u.components().map(|(w, m, v)| w * (v + m * m)).sum::<f64>() - pm * pm;
        prop_assert!((pm - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
        prop_assert!((pv - var).abs() <= 1e-8 * (1.0 + var));
    }
}

#[test]
fn standard_normal_quantiles() {
    let u = UnivariateGmm::gaussian(0.0, 1.0).unwrap();
    let cfg = QuantileConfig::default();
    for (q, z) in [
        (0.5, 0.0),
        (0.975, 1.959963984540054),
        (0.95, 1.6448536269514722),
        (0.995, 2.5758293035489004),
        (0.02, -2.053748910631823),
    ] {
        assert_abs_diff_eq!(quantile(&u, q, &cfg).unwrap(), z, epsilon = 1e-8);
    }
    let wide = UnivariateGmm::gaussian(0.0, 100.0).unwrap();
    assert_abs_diff_eq!(quantile(&wide, 0.02, &cfg).unwrap(), -20.5374891, epsilon = 1e-6);
    assert_abs_diff_eq!(quantile(&wide, 0.98, &cfg).unwrap(), 20.5374891, epsilon = 1e-6);
}

#[test]
fn em_recovers_separated_components() {
    let truth = Gmm::new(2, vec![
        GaussianComponent { weight: 0.3, mean: vec![-8.0, 2.0], covariance: vec![vec![1.0, 0.3], vec![0.3, 2.0]] },
        GaussianComponent { weight: 0.7, mean: vec![6.0, -1.0], covariance: vec![vec![3.0, -0.5], vec![-0.5, 1.0]] },
    ])
    .unwrap();
    let x = sample_gmm(&truth, 40_000, 3).unwrap();
    let rep = em_fit_report(&x, &EmConfig::with_components(2, 1)).unwrap();
    assert!(rep.converged);
    assert!(rep.log_likelihoods.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs()));
    let mut comps = rep.gmm.components.clone();
    comps.sort_by(|a, b| a.mean[0].total_cmp(&b.mean[0]));
    for (fit, want) in comps.iter().zip(&truth.components) {
        assert_abs_diff_eq!(fit.weight, want.weight, epsilon = 0.01);
        for i in 0..2 {
            assert_abs_diff_eq!(fit.mean[i], want.mean[i], epsilon = 0.05);
            for j in 0..2 {
                assert_abs_diff_eq!(fit.covariance[i][j], want.covariance[i][j], epsilon = 0.1);
            }
        }
    }
}

#[test]
fn em_is_deterministic() {
    let g = Gmm::gaussian(vec![0.0, 1.0], vec![vec![4.0, 1.0], vec![1.0, 2.0]]).unwrap();
    let x = sample_gmm(&g, 5000, 11).unwrap();
    let a = em_fit_report(&x, &EmConfig::with_components(3, 5)).unwrap();
    let b = em_fit_report(&x, &EmConfig::with_components(3, 5)).unwrap();
    assert_eq!(a.gmm, b.gmm);
}

#[test]
fn labeled_sampling_matches_weights() {
    let g = Gmm::new(1, vec![
        GaussianComponent { weight: 0.25, mean: vec![0.0], covariance: vec![vec![1.0]] },
        GaussianComponent { weight: 0.75, mean: vec![10.0], covariance: vec![vec![1.0]] },
    ])
    .unwrap();
    let (x, labels) = sample_gmm_labeled(&g, 100_000, 4).unwrap();
    let share = labels.iter().filter(|l| **l == 0).count() as f64 / labels.len() as f64;
    assert_abs_diff_eq!(share, 0.25, epsilon = 0.01);
    let u = g.project(&[1.0]).unwrap();
    assert!(ks_distance(&x.column(0), |v| u.cdf(v)) < 0.01);
}

#[test]
fn nataf_reproduces_marginals_and_correlation() {
    // a right-skewed and a uniform marginal
    let skew = MarginalHistogram::from_density(-10.0, 40.0, 100, |x| (x + 10.0) * (-(x + 10.0) / 8.0).exp()).unwrap();
    let flat = MarginalHistogram::new(vec![-20.0, 0.0, 20.0], vec![0.5, 0.5]).unwrap();
    let corr = CorrelationSpec { matrix: vec![vec![1.0, 0.6], vec![0.6, 1.0]] };
    let x = nataf_sample(&[skew.clone(), flat.clone()], &corr, 100_000, 9).unwrap();
    assert_abs_diff_eq!(x.pearson(0, 1), 0.6, epsilon = 0.01);
    assert!(ks_distance(&x.column(0), |v| skew.cdf(v)) < 0.01);
    assert!(ks_distance(&x.column(1), |v| flat.cdf(v)) < 0.01);
}
