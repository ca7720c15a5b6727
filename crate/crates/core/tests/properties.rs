mod common;

use common::*;
use proptest::prelude::*;
use ssl_infolab::cpa_net::{Activation, PwaNetwork};
use ssl_infolab::entropy::{moment_upper_bound, pairwise_bound, PairwiseSide};
use ssl_infolab::gaussian::{Gaussian, GaussianMixture};
use ssl_infolab::genbound::{one_hot, projector};
use ssl_infolab::nalgebra::{DMatrix, DVector};
use ssl_infolab::rng;
use ssl_infolab::stats_validation::{dagostino_pearson, pairwise_distance_histogram};

fn estimates(m: &GaussianMixture) -> [f64; 3] {
    [
        pairwise_bound(m, PairwiseSide::Lower).unwrap().value,
        pairwise_bound(m, PairwiseSide::Upper).unwrap().value,
        moment_upper_bound(m).unwrap().value,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_weights_normalize(raw in prop::collection::vec(0.01f64..10.0, 1..12)) {
        let comps = (0..raw.len()).map(|_| Gaussian::standard(2)).collect();
        let m = GaussianMixture::with_raw_weights(comps, raw.clone()).unwrap();
        let total: f64 = raw.iter().sum();
        prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (w, r) in m.weights().iter().zip(&raw) {
            prop_assert!((w - r / total).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_bounds_are_ordered(seed in any::<u64>(), d in 1usize..6, k in 1usize..8, spread in 0.0f64..5.0) {
        let m = random_mixture(&mut rng(seed), d, k, spread);
        let [lo, hi, _] = estimates(&m);
        let cond: f64 = m.components().iter().zip(m.weights()).map(|(g, w)| w * g.log_det_cov().unwrap()).sum::<f64>() * 0.5
            + 0.5 * d as f64 * ssl_infolab::entropy::LN_2PI_E;
        let h_w: f64 = -m.weights().iter().map(|w| w * w.ln()).sum::<f64>();
        prop_assert!(cond <= lo + 1e-9);
        prop_assert!(lo <= hi + 1e-9);
        prop_assert!(hi <= cond + h_w + 1e-9);
    }

    #[test]
    fn estimators_are_translation_invariant(seed in any::<u64>(), d in 1usize..6, k in 1usize..6) {
        let mut r = rng(seed);
        let m = random_mixture(&mut r, d, k, 2.0);
        let shift = random_vec(&mut r, d, 10.0);
        let (a, b) = (estimates(&m), estimates(&m.translated(&shift)));
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn estimators_shift_by_log_scale(seed in any::<u64>(), d in 1usize..5, k in 1usize..6, s in 0.1f64..10.0) {
        let m = random_mixture(&mut rng(seed), d, k, 2.0);
        let (a, b) = (estimates(&m), estimates(&m.scaled(s).unwrap()));
        for i in 0..3 {
            prop_assert!((b[i] - a[i] - d as f64 * s.ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn estimators_ignore_component_order(seed in any::<u64>(), d in 1usize..5, k in 2usize..7) {
        let mut r = rng(seed);
        let m = random_mixture(&mut r, d, k, 2.0);
        let perm = rng::permutation(&mut r, k);
        let shuffled = GaussianMixture::new(
            perm.iter().map(|&i| m.components()[i].clone()).collect(),
            perm.iter().map(|&i| m.weights()[i]).collect(),
        ).unwrap();
        let (a, b) = (estimates(&m), estimates(&shuffled));
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn region_affine_reproduces_forward(seed in any::<u64>(), slope in 0.0f64..1.0) {
        let mut r = rng(seed);
        let net = PwaNetwork::random(&[3, 7, 5, 2], Activation::LeakyRelu { slope }, seed).unwrap();
        let x = random_vec(&mut r, 3, 2.0);
        let aff = net.affine_extract(&x).unwrap();
        let y = net.forward(&x).unwrap();
        prop_assert!((aff.apply(&x) - &y).norm() <= 1e-10 * (1.0 + y.norm()));
    }

    #[test]
    fn projector_is_symmetric_idempotent(seed in any::<u64>(), d in 1usize..6, n in 1usize..15) {
        let z = rng::normal_matrix(&mut rng(seed), d, n);
        let p = projector(&z);
        prop_assert!((&p * &p - &p).norm() < 1e-8);
        prop_assert!((&p - p.transpose()).norm() < 1e-10);
        prop_assert!((&p * z.transpose()).norm() < 1e-8);
    }

    #[test]
    fn one_hot_rows_sum_to_one(labels in prop::collection::vec(0usize..4, 1..30)) {
        let y = one_hot(&labels, 4);
        for (i, &l) in labels.iter().enumerate() {
            prop_assert_eq!(y.row(i).sum(), 1.0);
            prop_assert_eq!(y[(i, l)], 1.0);
        }
    }

    #[test]
    fn normality_p_value_is_a_probability(seed in any::<u64>(), n in 20usize..300) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..n).map(|_| rng::normal(&mut r).powi(3)).collect();
        let p = dagostino_pearson(&x).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn histogram_counts_every_pair(seed in any::<u64>(), n in 2usize..60, bins in 1usize..20) {
        let x = rng::normal_matrix(&mut rng(seed), n, 3);
        let h = pairwise_distance_histogram(&x, bins).unwrap();
        prop_assert_eq!(h.total as usize, n * (n - 1) / 2);
        prop_assert_eq!(h.counts.iter().sum::<u64>(), h.total);
        prop_assert_eq!(h.edges.len(), bins + 1);
    }

    #[test]
    fn gaussian_affine_image_composes(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let g = random_gaussian(&mut r, d);
        let (a1, b1) = (rng::normal_matrix(&mut r, d, d), random_vec(&mut r, d, 1.0));
        let (a2, b2) = (rng::normal_matrix(&mut r, d, d), random_vec(&mut r, d, 1.0));
        let twice = g.affine_image(&a1, &b1).unwrap().affine_image(&a2, &b2).unwrap();
        let once = g.affine_image(&(&a2 * &a1), &(&a2 * &b1 + &b2)).unwrap();
        let scale = 1.0 + once.covariance().norm();
        prop_assert!((twice.mean() - once.mean()).norm() < 1e-9 * scale);
        prop_assert!((twice.covariance() - once.covariance()).norm() < 1e-9 * scale);
    }
}

#[test]
fn identical_components_collapse_to_one_gaussian() {
    let g = Gaussian::new(DVector::from_vec(vec![1.0, -1.0]), &DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
    let m = GaussianMixture::uniform(vec![g.clone(), g.clone(), g.clone()]).unwrap();
    let h = ssl_infolab::entropy::gaussian_entropy(&g).unwrap().value;
    for v in estimates(&m) {
        assert!((v - h).abs() < 1e-12);
    }
}
