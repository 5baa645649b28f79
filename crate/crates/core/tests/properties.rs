use cdskit::cds::{alpha_bound, extract_cds, payoff, AlphaMode, SolverParams};
use cdskit::dcds::{batch_cds, modified_affinity, probe_alpha, shift_for, FusionParams};
use cdskit::diffusion::{build_locally_constrained_affinity, diffusion_pipeline, DiffusionConfig, TransitionScheme};
use cdskit::fixtures::{g8, random_affinity};
use cdskit::fusion::{
    compute_piw, detect_outliers, incremental_nn_select, membership_entropy, query_cds, retrieve, FeatureChannel,
    FusionConfig,
};
use cdskit::graph::{build_gaussian_affinity, validate_affinity, AffinityMatrix, FeatureTable};
use cdskit::segmentation::coseg_payoff;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn symmetric(n: usize, vals: &[f64]) -> AffinityMatrix {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            m[(i, j)] = vals[k];
            m[(j, i)] = vals[k];
            k += 1;
        }
    }
    AffinityMatrix::new(m).unwrap()
}

fn affinity() -> impl Strategy<Value = AffinityMatrix> {
    (2usize..10).prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], n * (n - 1) / 2).prop_map(move |v| symmetric(n, &v))
    })
}

fn with_constraints() -> impl Strategy<Value = (AffinityMatrix, Vec<usize>)> {
    affinity().prop_flat_map(|a| {
        let n = a.n();
        (Just(a), prop::collection::btree_set(0..n, 1..=n.min(3))).prop_map(|(a, s)| (a, s.into_iter().collect()))
    })
}

fn features() -> impl Strategy<Value = FeatureTable> {
    (2usize..9, 1usize..4).prop_flat_map(|(n, d)| {
        prop::collection::vec(-3.0..3.0f64, n * d)
            .prop_map(move |v| FeatureTable::new(DMatrix::from_row_slice(n, d, &v)).unwrap())
    })
}

fn simplex(x: &[f64]) -> bool {
    (x.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && x.iter().all(|v| *v >= 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_affinity_is_valid(f in features(), sigma in 0.1..5.0f64) {
        let a = build_gaussian_affinity(&f, sigma).unwrap();
        prop_assert!(validate_affinity(a.matrix()).is_empty());
    }

    #[test]
    fn gaussian_affinity_follows_row_permutation(f in features(), seed in any::<u64>()) {
        let n = f.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by_key(|&i| (i as u64).wrapping_mul(seed | 1).rotate_left(17));
        let permuted = FeatureTable::new(DMatrix::from_fn(n, f.dims(), |i, j| f.values()[(perm[i], j)])).unwrap();
        let a = build_gaussian_affinity(&f, 1.0).unwrap();
        let b = build_gaussian_affinity(&permuted, 1.0).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(b.get(i, j), a.get(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn gaussian_affinity_is_scale_free(f in features(), sigma in 0.2..3.0f64, c in 0.1..10.0f64) {
        let scaled = FeatureTable::new(f.values() * c).unwrap();
        let a = build_gaussian_affinity(&f, sigma).unwrap();
        let b = build_gaussian_affinity(&scaled, sigma * c).unwrap();
        prop_assert!((a.matrix() - b.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn extraction_stays_on_simplex_and_meets_constraints((a, s) in with_constraints()) {
        let r = extract_cds(&a, &s, &SolverParams::default()).unwrap();
        prop_assert!(simplex(&r.x));
        prop_assert!(s.iter().any(|&i| r.contains(i)), "support {:?} misses {:?}", r.support, s);
        if r.converged {
            prop_assert!(r.kkt_residual <= 1e-6);
        }
    }

    #[test]
    fn payoff_never_decreases((a, s) in with_constraints()) {
        let r = extract_cds(&a, &s, &SolverParams { polish: false, ..Default::default() }).unwrap();
        for pair in r.trace.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-12);
        }
    }

    #[test]
    fn unconstrained_extraction_stays_on_simplex(a in affinity()) {
        let r = extract_cds(&a, &[], &SolverParams::default()).unwrap();
        prop_assert!(simplex(&r.x));
        prop_assert!(!r.support.is_empty());
    }

    #[test]
    fn locally_constrained_affinity_is_no_denser(n in 4usize..12, seed in any::<u64>()) {
        let a = random_affinity(n, seed);
        let config = DiffusionConfig { k: 3, ..Default::default() };
        for scheme in TransitionScheme::ALL {
            let l = build_locally_constrained_affinity(&a, scheme, &config).unwrap();
            let nnz = l.iter().filter(|v| **v != 0.0).count();
            prop_assert!(nnz <= a.nnz(), "{scheme:?}: {nnz} > {}", a.nnz());
        }
    }

    #[test]
    fn diffused_rows_rank_the_query_first(n in 3usize..10, seed in any::<u64>()) {
        let a = random_affinity(n, seed);
        let v = diffusion_pipeline(&a, &DiffusionConfig { k: 2, iterations: 20, ..Default::default() }).unwrap();
        for q in 0..n {
            let r = cdskit::diffusion::rank(&v, q).unwrap();
            prop_assert_eq!(r.ids[0], q);
            prop_assert!(r.validate(n).is_ok());
        }
    }

    #[test]
    fn piw_is_a_distribution(
        h in prop::collection::vec(0.0..=1.0f64, 1..6),
        sizes in prop::collection::vec(0usize..20, 6),
    ) {
        let w = compute_piw(&h, &sizes[..h.len()]).unwrap();
        prop_assert!(simplex(&w));
    }

    #[test]
    fn raising_npc_never_grows_the_neighbor_set(
        mut scores in prop::collection::vec(0.0..1.0f64, 1..20),
        lo in 0.0..1.0f64,
        hi in 0.0..1.0f64,
    ) {
        scores.sort_by(|a, b| b.total_cmp(a));
        let ranked: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        prop_assert!(incremental_nn_select(&ranked, hi).len() <= incremental_nn_select(&ranked, lo).len());
    }

    #[test]
    fn membership_entropy_is_bounded(x in prop::collection::vec(0.0..1.0f64, 1..12)) {
        let h = membership_entropy(&x);
        prop_assert!((0.0..=1.0).contains(&h));
    }

    #[test]
    fn query_survives_filtering(n in 3usize..10, seed in any::<u64>(), q in 0usize..10, zeta in 0.0..1.0f64) {
        let a = random_affinity(n, seed);
        let q = q % n;
        let r = query_cds(&a, q, &SolverParams::default()).unwrap();
        prop_assert!(detect_outliers(&r, q, zeta).contains(&q));
    }

    #[test]
    fn channel_order_does_not_change_fusion(n in 4usize..9, seed in any::<u64>(), q in 0usize..9) {
        let q = q % n;
        let a = FeatureChannel::new("a", random_affinity(n, seed).matrix()).unwrap();
        let b = FeatureChannel::new("b", random_affinity(n, seed ^ 0x5eed).matrix()).unwrap();
        let cfg = FusionConfig::default();
        let ab = retrieve(q, &[a.clone(), b.clone()], &cfg).unwrap();
        let ba = retrieve(q, &[b, a], &cfg).unwrap();
        prop_assert_eq!(&ab.ranked.ids, &ba.ranked.ids);
        prop_assert!((ab.piw[0] - ba.piw[1]).abs() <= 1e-12 && (ab.piw[1] - ba.piw[0]).abs() <= 1e-12);
    }

    #[test]
    fn coseg_payoff_is_linear(n in 1usize..6, seed in any::<u64>(), which in 0usize..4) {
        let mats: Vec<DMatrix<f64>> = (0..5).map(|k| random_affinity(n.max(2), seed.wrapping_add(k)).into_matrix()).collect();
        let base = coseg_payoff(&mats[0], &mats[1], &mats[2], &mats[3]).unwrap();
        let mut edited = mats[..4].to_vec();
        edited[which] = &edited[which] * 2.0;
        let m = coseg_payoff(&edited[0], &edited[1], &edited[2], &edited[3]).unwrap();
        let coef = [1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.5][which];
        prop_assert!((&m - &base - &mats[which] * coef).amax() <= 1e-12);
    }

    #[test]
    fn membership_rows_stay_on_simplex(n in 1usize..8, seed in any::<u64>(), unroll in 0usize..30) {
        let a = random_affinity(n.max(2), seed);
        let y = batch_cds(&a, &FusionParams { unroll, ..Default::default() }).unwrap();
        for r in y.row_iter() {
            let r: Vec<f64> = r.iter().copied().collect();
            prop_assert!(simplex(&r));
        }
    }

    #[test]
    fn unrolled_payoff_never_decreases(n in 2usize..8, seed in any::<u64>(), probe in 0usize..8) {
        let a = random_affinity(n, seed).into_matrix();
        let probe = probe % n;
        let alpha = probe_alpha(&a, probe, 1e-4);
        let b = modified_affinity(&a, probe, alpha);
        let c = shift_for(alpha);
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut last = payoff(&b, x.as_slice());
        for _ in 0..20 {
            let bx = &b * &x;
            let s = c + x.dot(&bx);
            x = x.zip_map(&bx, |xi, bxi| xi * (c + bxi) / s);
            let now = payoff(&b, x.as_slice());
            prop_assert!(now >= last - 1e-12);
            last = now;
        }
    }
}

#[test]
fn support_ignores_doubling_alpha_on_g8() {
    let a = g8();
    for s in [vec![1], vec![4], vec![3, 4], vec![4, 7], vec![0, 3], vec![1, 4, 7]] {
        let base = extract_cds(&a, &s, &SolverParams::default()).unwrap();
        let doubled = SolverParams {
            alpha: AlphaMode::Explicit(2.0 * (1.0 + 1e-4) * alpha_bound(&a, &s).unwrap()),
            ..Default::default()
        };
        let r = extract_cds(&a, &s, &doubled).unwrap();
        assert_eq!(r.support, base.support, "constraints {s:?}");
    }
}

#[test]
fn seeded_fixtures_are_deterministic() {
    assert_eq!(random_affinity(12, 3), random_affinity(12, 3));
    let a = random_affinity(8, 5);
    let run = || {
        diffusion_pipeline(
            &a,
            &DiffusionConfig {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap()
    };
    assert_eq!(run(), run());
}
