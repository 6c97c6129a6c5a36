mod common;

use krondpp::learning::{check_pd, theta_batch, theta_sparse};
use krondpp::linalg::{
    index_join, index_split, kron_eig, kron_product, partial_trace_1, partial_trace_2, rearrange,
    Matrix, SpdMatrix,
};
use krondpp::model::log_likelihood;
use krondpp::partition::greedy_partition;
use krondpp::sampling::{enumerate_distribution, KronSampler, RngStream};
use krondpp::{KronKernel, Subset, TrainingSet};
use proptest::prelude::*;

fn spd(n: usize, seed: u64) -> SpdMatrix {
    common::random_spd(n, 0.2, &mut RngStream::seed_from(seed))
}

fn lists(n: usize, max_len: usize, count: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::btree_set(0..n, 1..=max_len), 0..=count)
        .prop_map(|v| v.into_iter().map(|s| s.into_iter().collect()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_round_trip(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
        let n: usize = dims.iter().product();
        let i = (seed as usize) % n;
        let parts = index_split(i, &dims).unwrap();
        prop_assert_eq!(index_join(&parts, &dims).unwrap(), i);
    }

    #[test]
    fn kron_eigenvalues_are_factor_products(n1 in 1usize..5, n2 in 1usize..5, seed in any::<u64>()) {
        let (a, b) = (spd(n1, seed), spd(n2, seed ^ 1));
        let eig = kron_eig(&[a.clone(), b.clone()]).unwrap();
        let dense = krondpp::linalg::sym_eig(&kron_product(&a, &b)).unwrap();
        let sorted: Vec<f64> = eig.sorted_spectrum().into_iter().map(|s| s.0).collect();
        for (x, y) in sorted.iter().zip(&dense.values) {
            prop_assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
    }

    #[test]
    fn partial_traces_of_products(n1 in 1usize..4, n2 in 1usize..4, seed in any::<u64>()) {
        let (a, b) = (spd(n1, seed), spd(n2, seed ^ 7));
        let m = kron_product(&a, &b);
        let t1 = partial_trace_1(&m, n1, n2).unwrap();
        let t2 = partial_trace_2(&m, n1, n2).unwrap();
        prop_assert!((t1 - a.as_matrix() * b.trace()).norm() <= 1e-12 * m.norm());
        prop_assert!((t2 - b.as_matrix() * a.trace()).norm() <= 1e-12 * m.norm());
    }

    #[test]
    fn rearranged_product_has_rank_one(n1 in 1usize..4, n2 in 1usize..4, seed in any::<u64>()) {
        let (a, b) = (spd(n1, seed), spd(n2, seed ^ 3));
        let r = rearrange(&kron_product(&a, &b), n1, n2).unwrap().matrix;
        let sv = r.singular_values();
        let top = sv.max();
        prop_assert!(sv.iter().filter(|s| **s > 1e-10 * top).count() == 1);
    }

    #[test]
    fn probabilities_normalize(n1 in 1usize..4, n2 in 1usize..4, seed in any::<u64>()) {
        let k = KronKernel::pair(spd(n1, seed), spd(n2, seed ^ 5));
        let d = enumerate_distribution(&k).unwrap();
        prop_assert!((d.total() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn sample_size_equals_selected_count(seed in any::<u64>()) {
        let k = KronKernel::pair(spd(3, seed), spd(4, seed ^ 9));
        let s = KronSampler::new(&k).unwrap();
        let mut rng = RngStream::seed_from(seed);
        for _ in 0..20 {
            let r = s.sample(&mut rng).unwrap();
            prop_assert_eq!(r.subset.len(), r.selected.len());
        }
    }

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>()) {
        let k = KronKernel::pair(spd(2, seed), spd(3, seed ^ 2));
        let s = KronSampler::new(&k).unwrap();
        let draw = |seed| {
            let mut rng = RngStream::seed_from(seed);
            (0..10).map(|_| s.sample(&mut rng).unwrap().subset).collect::<Vec<Subset>>()
        };
        prop_assert_eq!(draw(seed), draw(seed));
    }

    #[test]
    fn greedy_plans_satisfy_bound(raw in lists(12, 4, 10), extra in 1usize..8) {
        let t = TrainingSet::from_lists(12, raw).unwrap();
        let z = t.kappa() + extra;
        let plan = greedy_partition(&t, z).unwrap();
        plan.validate(&t).unwrap();
        prop_assert!(plan.unions.iter().all(|u| u.len() < z));
        prop_assert!(plan.storage_entries() <= plan.len() * z * z);
    }

    #[test]
    fn sparse_and_dense_theta_agree(raw in lists(6, 3, 4), seed in any::<u64>()) {
        prop_assume!(!raw.is_empty());
        let t = TrainingSet::from_lists(6, raw).unwrap();
        let k = KronKernel::pair(spd(2, seed), spd(3, seed ^ 4));
        let dense = theta_batch(&k, &t).unwrap().densify();
        let sparse = theta_sparse(&k, t.subsets()).unwrap().densify();
        prop_assert!((dense - sparse).amax() <= 1e-12);
    }

    #[test]
    fn kron_loglik_matches_dense(raw in lists(6, 3, 5), seed in any::<u64>()) {
        prop_assume!(!raw.is_empty());
        let t = TrainingSet::from_lists(6, raw).unwrap();
        let k = KronKernel::pair(spd(3, seed), spd(2, seed ^ 6));
        let a = log_likelihood(&k, &t).unwrap();
        let b = log_likelihood(&k.materialize(), &t).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
    }

    #[test]
    fn check_pd_accepts_spd_and_rejects_shifted(n in 1usize..6, seed in any::<u64>()) {
        let m = spd(n, seed);
        prop_assert!(check_pd(&m, 1e-10).is_ok());
        let min = krondpp::linalg::sym_eig(&m).unwrap().min_value();
        let shifted: Matrix = m.as_matrix() - Matrix::identity(n, n) * (min + 1e-3);
        prop_assert!(check_pd(&shifted, 1e-10).is_err());
    }
}
