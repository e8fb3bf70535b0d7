use std::collections::BTreeSet;

use intht_core::gradient::gradient_from_residuals;
use intht_core::{
    gen_uniform, gradient_on_support, hard_threshold, intht_order3_run, intht_run, intht_vr_run,
    residuals, Coord, DeltaRule, Extraction, LossModel, Order, OuterPick, SolverConfig,
    SparseTensor,
};

fn cfg(extraction: Extraction, k: usize, batch: usize, iters: usize) -> SolverConfig {
    SolverConfig {
        k,
        iters,
        batch,
        extraction,
        buckets: 128,
        seed: 5,
        ..SolverConfig::default()
    }
}

#[test]
fn ground_truth_is_a_fixed_point() {
    for order in [Order::Two, Order::Three] {
        let (p, big_k) = if order == Order::Two { (20, 5) } else { (10, 5) };
        let data = gen_uniform(400, p, big_k, order, 3).unwrap();
        let truth = &data.theta_star;
        for mode in [Extraction::Atee, Extraction::Exact] {
            let c = cfg(mode, 3 * big_k, 50, 20);
            let out = if order == Order::Three {
                intht_order3_run(&c, &data, Some(truth), Some(truth)).unwrap()
            } else {
                intht_run(&c, &data, Some(truth), Some(truth)).unwrap()
            };
            assert_eq!(out.records.len(), 20);
            for r in &out.records {
                assert!(r.frob_error <= 1e-12, "{order:?} {mode:?} t={} err={}", r.t, r.frob_error);
            }
        }
    }
}

/// Full-batch IHT over every canonical coordinate.
fn dense_iht(data: &intht_core::DataSet, k: usize, eta: f64, iters: usize) -> Vec<SparseTensor> {
    let p = data.dim();
    let coords: Vec<Coord> = (0..p).flat_map(|i| (i..p).map(move |j| Coord::pair(i, j))).collect();
    let mut theta = SparseTensor::zeros(p, Order::Two);
    let mut out = Vec::new();
    for _ in 0..iters {
        let mut g = vec![0.0; coords.len()];
        for s in 0..data.n() {
            let x = data.x(s);
            let pred: f64 = theta.iter().map(|(c, v)| v * x[c.get(0)] * x[c.get(1)]).sum();
            let u = pred - data.y[s];
            for (gi, c) in g.iter_mut().zip(&coords) {
                *gi += u * x[c.get(0)] * x[c.get(1)];
            }
        }
        let moved = SparseTensor::from_entries(
            p,
            Order::Two,
            coords.iter().zip(&g).map(|(&c, gi)| (c, theta.get(&c) - eta * gi / data.n() as f64)),
        )
        .unwrap();
        theta = hard_threshold(&moved, k);
        out.push(theta.clone());
    }
    out
}

#[test]
fn exact_mode_full_batch_matches_dense_iht() {
    let data = gen_uniform(120, 12, 4, Order::Two, 8).unwrap();
    let reference = dense_iht(&data, 12, 0.2, 25);
    for t in [1, 2, 5, 10, 25] {
        let c = SolverConfig {
            eta: 0.2,
            ..cfg(Extraction::Exact, 12, data.n(), t)
        };
        let out = intht_run(&c, &data, None, None).unwrap();
        let gap = out.theta.frobenius_distance(&reference[t - 1]);
        assert!(gap <= 1e-10 * reference[t - 1].frobenius_norm().max(1.0), "t={t}: {gap}");
    }
}

#[test]
fn iterates_respect_the_sparsity_level() {
    let data = gen_uniform(600, 30, 6, Order::Two, 2).unwrap();
    for mode in [Extraction::Atee, Extraction::Exact] {
        for t in [1, 3, 8] {
            let out = intht_run(&cfg(mode, 10, 60, t), &data, None, None).unwrap();
            assert!(out.theta.len() <= 10);
            assert!(out.theta.iter().all(|(c, _)| c.is_canonical()));
        }
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let data = gen_uniform(600, 25, 5, Order::Two, 4).unwrap();
    let c = cfg(Extraction::Atee, 15, 80, 10);
    let a = intht_run(&c, &data, Some(&data.theta_star), None).unwrap();
    let b = intht_run(&c, &data, Some(&data.theta_star), None).unwrap();
    assert_eq!(a.theta, b.theta);
    let errs = |o: &intht_core::RunOutcome| o.records.iter().map(|r| r.frob_error).collect::<Vec<_>>();
    assert_eq!(errs(&a), errs(&b));
}

#[test]
fn exact_extraction_converges_on_a_small_instance() {
    let data = gen_uniform(2000, 15, 3, Order::Two, 6).unwrap();
    let c = SolverConfig {
        eta: 0.5,
        ..cfg(Extraction::Exact, 9, 200, 200)
    };
    let out = intht_run(&c, &data, Some(&data.theta_star), None).unwrap();
    let rel = out.final_error().unwrap() / data.theta_star.frobenius_norm();
    assert!(rel < 1e-3, "relative error {rel}");
}

#[test]
fn order3_restricted_gradient_matches_dense_tensor() {
    let p = 4;
    let data = gen_uniform(30, p, 3, Order::Three, 9).unwrap();
    let theta = SparseTensor::from_entries(p, Order::Three, [(Coord::triple(0, 1, 2), 1.5)]).unwrap();
    let batch: Vec<usize> = (0..30).step_by(2).collect();
    // dense 4 x 4 x 4 oracle
    let mut dense = [0.0; 64];
    for &s in &batch {
        let x = data.x(s);
        let pred = 1.5 * x[0] * x[1] * x[2];
        let u = pred - data.y[s];
        for i in 0..p {
            for j in 0..p {
                for k in 0..p {
                    dense[(i * p + j) * p + k] += u * x[i] * x[j] * x[k] / batch.len() as f64;
                }
            }
        }
    }
    let support: BTreeSet<Coord> = (0..p)
        .flat_map(|i| (i..p).flat_map(move |j| (j..p).map(move |k| Coord::triple(i, j, k))))
        .collect();
    let g = gradient_on_support(&theta, &batch, &support, &data, LossModel::Squared).unwrap();
    for c in &support {
        let want = dense[(c.get(0) * p + c.get(1)) * p + c.get(2)];
        assert!((g.get(c) - want).abs() <= 1e-12, "{c:?}: {} vs {want}", g.get(c));
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let data = gen_uniform(50, 6, 2, Order::Two, 1).unwrap();
    let bad = [
        SolverConfig { batch: 0, ..SolverConfig::default() },
        SolverConfig { batch: 51, ..SolverConfig::default() },
        SolverConfig { batch: 10, eta: 0.0, ..SolverConfig::default() },
        SolverConfig { batch: 10, buckets: 0, ..SolverConfig::default() },
        SolverConfig { batch: 10, repetitions: 0, ..SolverConfig::default() },
        SolverConfig { batch: 10, delta: DeltaRule::Fixed(-1.0), ..SolverConfig::default() },
    ];
    for c in bad {
        assert!(intht_run(&c, &data, None, None).is_err(), "{c:?}");
    }
    let cubic = gen_uniform(50, 6, 2, Order::Three, 1).unwrap();
    let ok = SolverConfig { batch: 10, iters: 1, ..SolverConfig::default() };
    assert!(intht_order3_run(&ok, &data, None, None).is_err());
    assert!(intht_order3_run(&ok, &cubic, None, None).is_ok());
}

#[test]
fn vr_rounds_reduce_the_error() {
    let data = gen_uniform(2000, 30, 4, Order::Two, 12).unwrap();
    let c = SolverConfig {
        k: 12,
        iters: 6,
        inner: 10,
        batch: 100,
        buckets: 128,
        eta: 0.5,
        outer_pick: OuterPick::Last,
        seed: 3,
        ..SolverConfig::default()
    };
    let out = intht_vr_run(&c, &data, Some(&data.theta_star), None).unwrap();
    let norm = data.theta_star.frobenius_norm();
    let first = out.records[0].frob_error / norm;
    let last = out.final_error().unwrap() / norm;
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn residual_gradient_equals_support_gradient() {
    let data = gen_uniform(60, 8, 3, Order::Two, 13).unwrap();
    let theta = SparseTensor::from_entries(8, Order::Two, [(Coord::pair(1, 4), -3.0)]).unwrap();
    let batch: Vec<usize> = (10..40).collect();
    let support: BTreeSet<Coord> = [Coord::pair(0, 0), Coord::pair(1, 4), Coord::pair(2, 7)].into();
    let u = residuals(&theta, &batch, &data, LossModel::Squared).unwrap();
    let a = gradient_from_residuals(&u, &batch, &support, &data).unwrap();
    let b = gradient_on_support(&theta, &batch, &support, &data, LossModel::Squared).unwrap();
    for (c, v) in a {
        assert_eq!(b.get(&c), v);
    }
}
