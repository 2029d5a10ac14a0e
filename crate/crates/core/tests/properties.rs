//! Property checks through the public API.

use popvec::classify::{evaluate, roc_auc, train_svm, Kernel, KernelSource};
use popvec::clustering::dominant::payoff;
use popvec::clustering::{dbscan, extract_dominant_set, kmeans, kmedoids, DBSCANParams, KParams};
use popvec::dataio::{euclidean_distances, LabelVector, Matrix};
use popvec::embed::{conditional_affinities, joint_affinities, student_t_affinities};
use popvec::rng::seeded;
use popvec::sweep::{external_result, internal_result, run_grid, run_point, Algorithm, GridSpec, SweepData, SweepGrid};
use proptest::prelude::*;
use rand::Rng;

fn points(max_n: usize, dim: usize) -> impl Strategy<Value = Matrix<f64>> {
    (3..=max_n).prop_flat_map(move |n| {
        proptest::collection::vec(-5.0f64..5.0, n * dim).prop_map(move |v| Matrix::from_vec(n, dim, v).unwrap())
    })
}

fn affinity(max_n: usize) -> impl Strategy<Value = Matrix<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(0.0f64..1.0, n * n).prop_map(move |v| {
            Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Equal => 0.0,
                std::cmp::Ordering::Less => v[i * n + j],
                std::cmp::Ordering::Greater => v[j * n + i],
            })
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn replicator_payoff_non_decreasing_and_locally_maximal(a in affinity(25)) {
        let ds = extract_dominant_set(&a).unwrap();
        for w in ds.payoff_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        let sum: f64 = ds.x.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12 && ds.x.iter().all(|&v| v >= 0.0));
        let base = payoff(&a, &ds.x);
        for i in 0..ds.x.len() {
            for eps in [1e-4, -1e-4] {
                if ds.x[i] + eps < 0.0 {
                    continue;
                }
                let mut y = ds.x.clone();
                y[i] += eps;
                let s: f64 = y.iter().sum();
                y.iter_mut().for_each(|v| *v /= s);
                prop_assert!(payoff(&a, &y) <= base + 1e-12);
            }
        }
    }

    #[test]
    fn kmeans_keeps_the_best_restart_and_repeats(m in points(30, 2), k in 1usize..5, seed in 0u64..100) {
        let k = k.min(m.rows());
        let p = KParams::new(k, 4, 100).unwrap();
        let r = kmeans(&m, p, seed).unwrap();
        prop_assert!(r.restart_inertia.iter().all(|&i| r.best.inertia <= i));
        prop_assert_eq!(kmeans(&m, p, seed).unwrap(), r);
    }

    #[test]
    fn kmedoids_and_dbscan_repeat(m in points(30, 2), k in 1usize..5, eps in 0.1f64..4.0, min_pts in 1usize..5) {
        let d = euclidean_distances(&m).unwrap();
        let p = KParams::new(k.min(m.rows()), 1, 100).unwrap();
        prop_assert_eq!(kmedoids(&d, p, 0).unwrap(), kmedoids(&d, p, 0).unwrap());
        let params = DBSCANParams::new(eps, min_pts).unwrap();
        prop_assert_eq!(dbscan(&d, params), dbscan(&d, params));
    }

    #[test]
    fn svm_dual_is_feasible(m in points(40, 3), flips in proptest::collection::vec(any::<bool>(), 40), c in 0.01f64..100.0, rbf in any::<bool>()) {
        let n = m.rows();
        let mut y: Vec<f64> = flips[..n].iter().map(|&f| if f { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let kernel = if rbf { Kernel::Rbf { gamma: 0.5 } } else { Kernel::Linear };
        let idx: Vec<usize> = (0..n).collect();
        let k = KernelSource::new(&m).block(kernel, &idx, &idx);
        let svm = train_svm(&k, &y, c).unwrap();
        prop_assert!(svm.feasibility_error() <= 1e-8);
        if svm.converged {
            prop_assert!(svm.kkt_gap < 1e-3);
        }
    }

    #[test]
    fn auc_ignores_monotone_rescaling(scores in proptest::collection::vec(-3.0f64..3.0, 4..40), seed in any::<u64>()) {
        let positive: Vec<bool> = scores.iter().enumerate().map(|(i, _)| (seed >> (i % 64)) & 1 == 1).collect();
        let warped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 7.0).collect();
        prop_assert_eq!(roc_auc(&scores, &positive), roc_auc(&warped, &positive));
    }

    #[test]
    fn micro_f1_is_accuracy(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let scores: Vec<Vec<f64>> = pred.iter().map(|&p| (0..4).map(|c| f64::from(u8::from(c == p))).collect()).collect();
        let m = evaluate(&pred, &scores, &truth, 4).unwrap();
        prop_assert_eq!(m.micro_f1, m.acc);
    }

    #[test]
    fn tsne_affinities_are_normalised(m in points(20, 3)) {
        let n = m.rows();
        prop_assume!(n >= 8);
        let d = euclidean_distances(&m).unwrap();
        let perplexity = (n as f64 - 1.0) / 3.0 - 0.5;
        let (cond, _) = conditional_affinities(&d, perplexity).unwrap();
        for i in 0..n {
            let h: f64 = cond.row(i).iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
            prop_assert!((h - perplexity.ln()).abs() <= 1e-5);
        }
        let p = joint_affinities(&cond);
        prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let q = student_t_affinities(&Matrix::from_fn(n, 2, |i, c| m.get(i, c)));
        prop_assert!((q.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sweep_rows_reproduce_in_isolation(n in 12usize..40, seed in 0u64..50) {
        let mut rng = seeded(seed);
        let m = Matrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let d = euclidean_distances(&m).unwrap();
        let data = SweepData { matrix: &m, distances: &d };
        let labels = LabelVector::new((0..n).map(|i| i % 2).collect(), 2).unwrap();
        for alg in [Algorithm::Dbscan, Algorithm::KMeans] {
            let grid = SweepGrid::new(alg, GridSpec::default().points(alg, &d), seed).unwrap();
            let run = run_grid(data, &grid).unwrap();
            for i in 0..grid.points.len() {
                prop_assert_eq!(&run_point(data, &grid, i).unwrap().0, &run.partitions[i]);
            }
            prop_assert_eq!(run_grid(data, &grid).unwrap(), run.clone());
            prop_assert_eq!(external_result(&run, &labels).unwrap(), external_result(&run, &labels).unwrap());
            prop_assert_eq!(internal_result(&run, 2), internal_result(&run, 2));
        }
    }
}
