//! Solver cross-checks against independent optimizers and the structural
//! properties the estimators are supposed to have.

mod common;

use common::{
    group_ista, group_objective, lasso_ista, lassoes_objective, random_dataset, random_orthogonal,
    residual_risk, ring_objective, rng,
};
use mtsparse::group::{fit_group, GroupOptions};
use mtsparse::lassoes::{fit_lassoes, select_lambda_lassoes, LassoesOptions, NormMode};
use mtsparse::model::{MultiTaskDataset, Task};
use mtsparse::ring::{fit_ring, RingOptions};
use mtsparse::simgen::{gen_decay, SimConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[test]
fn lassoes_alpha1_matches_ista() {
    let mut r = rng(301);
    for trial in 0..8 {
        let p = r.gen_range(2..=4);
        let m = r.gen_range(4..=10);
        let x = common::random_matrix(&mut r, m, p);
        let y = DVector::from_fn(m, |_, _| r.gen_range(-1.0..1.0));
        let lambda = r.gen_range(0.1..2.0);
        let task = Task::new(x.clone(), y.clone()).unwrap();
        let ds = MultiTaskDataset::new(vec![task]).unwrap();
        let opts = LassoesOptions {
            alpha: 1.0,
            lambda,
            norm_mode: NormMode::Plain,
            ..Default::default()
        };
        let (b, _) = fit_lassoes(&ds, &opts).unwrap();
        let oracle = lasso_ista(&x, &y, lambda, 200_000);
        let ours = lassoes_objective(&ds, &b.values, lambda, 1.0, false);
        let theirs = {
            let bm = DMatrix::from_column_slice(p, 1, oracle.as_slice());
            lassoes_objective(&ds, &bm, lambda, 1.0, false)
        };
        assert!(
            ours <= theirs + 1e-6 * (1.0 + theirs),
            "trial {trial}: ours {ours} vs ista {theirs}"
        );
    }
}

#[test]
fn group_matches_block_proximal_gradient() {
    let mut r = rng(303);
    for trial in 0..6 {
        let n = r.gen_range(2..=4);
        let p = r.gen_range(2..=4);
        let m = r.gen_range(3..=8);
        let ds = random_dataset(&mut r, n, p, m);
        let lambda = r.gen_range(0.2..3.0);
        let (b, _) = fit_group(
            &ds,
            &GroupOptions {
                lambda,
                tol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        let oracle = group_ista(&ds, lambda, 150_000);
        let ours = group_objective(&ds, &b.values, lambda);
        let theirs = group_objective(&ds, &oracle, lambda);
        let rel = (ours - theirs).abs() / (1.0 + theirs);
        assert!(
            rel < 1e-6 || ours < theirs,
            "trial {trial}: ours {ours} vs ista {theirs}"
        );
    }
}

#[test]
fn ring_rotation_equivariance() {
    // rotating the regressors by U^T turns the fit into U * original fit
    let mut r = rng(307);
    let n = 4;
    let p = 3;
    let m = 12;
    let base = random_dataset(&mut r, n, p, m);
    let u = random_orthogonal(&mut r, p);
    let rotated_tasks: Vec<Task> = base
        .tasks()
        .iter()
        .map(|t| Task::new(&t.design * &u, t.response.clone()).unwrap())
        .collect();
    let rotated = MultiTaskDataset::new(rotated_tasks).unwrap();

    let opts = RingOptions {
        lambda: 1.5,
        tol: 1e-11,
        max_passes: 4000,
        gamma: 0.9,
        init_scale: 1e-3,
        seed: 5,
        ..Default::default()
    };
    let (b_base, _) = fit_ring(&base, &opts).unwrap();
    let (b_rot, _) = fit_ring(&rotated, &opts).unwrap();
    // rotated design X U has coefficients U^T beta
    let mapped = u.transpose() * &b_base.values;
    assert!(
        (mapped - &b_rot.values).norm() < 1e-5 * (1.0 + b_base.values.norm()),
        "equivariance gap {}",
        (u.transpose() * &b_base.values - &b_rot.values).norm()
    );
}

#[test]
fn ring_agrees_with_group_fit_in_singular_basis() {
    // fitting the group lasso in the basis of the ring solution's left
    // singular vectors reproduces the ring objective
    let mut r = rng(311);
    let ds = random_dataset(&mut r, 4, 3, 10);
    let lambda = 1.0;
    let opts = RingOptions {
        lambda,
        tol: 1e-11,
        max_passes: 4000,
        ..Default::default()
    };
    let (b_ring, _) = fit_ring(&ds, &opts).unwrap();
    let ring_obj = ring_objective(&ds, &b_ring.values, lambda);

    // complete the left singular basis to a full rotation
    let svd = mtsparse::spectra::svd(&b_ring.values).unwrap();
    let p = ds.n_features();
    let rank = svd.rank();
    let mut extended = DMatrix::<f64>::zeros(p, p + rank);
    extended.columns_mut(0, rank).copy_from(&svd.left);
    extended
        .columns_mut(rank, p)
        .copy_from(&DMatrix::<f64>::identity(p, p));
    let u_full = extended.qr().q().columns(0, p).clone_owned();

    let rotated_tasks: Vec<Task> = ds
        .tasks()
        .iter()
        .map(|t| Task::new(&t.design * &u_full, t.response.clone()).unwrap())
        .collect();
    let rotated = MultiTaskDataset::new(rotated_tasks).unwrap();
    let (b_group, _) = fit_group(
        &rotated,
        &GroupOptions {
            lambda,
            tol: 1e-12,
            ..Default::default()
        },
    )
    .unwrap();
    let group_obj = group_objective(&rotated, &b_group.values, lambda);
    let rel = (group_obj - ring_obj).abs() / (1.0 + ring_obj);
    assert!(
        rel < 1e-4 || group_obj < ring_obj,
        "group-in-basis {group_obj} vs ring {ring_obj}"
    );
}

#[test]
fn ring_best_iterate_never_worse_than_start() {
    let mut r = rng(313);
    let ds = random_dataset(&mut r, 3, 4, 6);
    let opts = RingOptions {
        lambda: 2.0,
        max_passes: 50,
        seed: 9,
        ..Default::default()
    };
    let (b, report) = fit_ring(&ds, &opts).unwrap();
    let final_obj = ring_objective(&ds, &b.values, report.final_lambda);
    let start_risk: f64 = ds.tasks().iter().map(|t| t.response.norm_squared()).sum();
    // the initial iterate is near zero, so its objective is close to the
    // pure-noise risk; the returned iterate must not regress past it
    assert!(final_obj <= start_risk * 1.01 + report.final_lambda * 1e-2);
    assert!(report.objective_trace.iter().all(|v| v.is_finite()));
}

#[test]
fn lambda_selection_matches_cold_start_refits() {
    let config = SimConfig {
        n: 20,
        p: 20,
        m: 25,
        seed: 1,
        ..Default::default()
    };
    let (ds, _) = gen_decay(&config).unwrap();
    let opts = LassoesOptions {
        alpha: 3.0,
        norm_mode: NormMode::Plain,
        tol: 1e-10,
        ..Default::default()
    };
    let grid: Vec<f64> = (0..10).map(|k| 400.0 * 0.5f64.powi(k)).collect();
    let warm = select_lambda_lassoes(&ds, &opts, &grid).unwrap();

    // cold-start oracle: refit every grid point from scratch
    let n = ds.n_tasks() as f64;
    let mut cold_choice = None;
    for &lambda in &grid {
        let step = LassoesOptions {
            lambda,
            ..opts.clone()
        };
        let (b, _) = fit_lassoes(&ds, &step).unwrap();
        let g = (0..b.values.ncols())
            .map(|i| {
                let l1: f64 = b.values.column(i).iter().map(|v| v.abs()).sum();
                l1 * l1
            })
            .sum::<f64>()
            / n;
        if cold_choice.is_none() && g >= lambda.powf(-2.0 / opts.alpha) {
            cold_choice = Some(lambda);
        }
    }
    assert!(warm.crossed, "path should cross on this design");
    assert_eq!(Some(warm.chosen), cold_choice);
}

#[test]
fn lassoes_powered_matches_profile_oracle() {
    let mut r = rng(317);
    for trial in 0..6 {
        let p = r.gen_range(2..=4);
        let m = r.gen_range(4..=9);
        let x = common::random_matrix(&mut r, m, p);
        let y = DVector::from_fn(m, |_, _| r.gen_range(-1.0..1.0));
        let alpha = [2.0, 3.0][trial % 2];
        let lambda = r.gen_range(0.2..1.5);
        let ds = MultiTaskDataset::new(vec![Task::new(x.clone(), y.clone()).unwrap()]).unwrap();
        let opts = LassoesOptions {
            alpha,
            lambda,
            norm_mode: NormMode::Plain,
            tol: 1e-11,
            ..Default::default()
        };
        let (b, _) = fit_lassoes(&ds, &opts).unwrap();
        let ours = lassoes_objective(&ds, &b.values, lambda, alpha, false);
        let oracle = common::lassoes_task_oracle(&x, &y, lambda, alpha, false);
        let rel = (ours - oracle).abs() / (1.0 + oracle);
        assert!(
            rel < 1e-4 || ours < oracle,
            "trial {trial} alpha {alpha}: ours {ours} vs oracle {oracle}"
        );
    }
}

#[test]
fn group_objective_never_increases_risk_term_unboundedly() {
    // sanity: fitted risk is no larger than the all-zero risk
    let mut r = rng(319);
    let ds = random_dataset(&mut r, 3, 4, 8);
    let (b, _) = fit_group(
        &ds,
        &GroupOptions {
            lambda: 0.8,
            ..Default::default()
        },
    )
    .unwrap();
    let zero_risk: f64 = ds.tasks().iter().map(|t| t.response.norm_squared()).sum();
    assert!(residual_risk(&ds, &b.values) <= zero_risk + 1e-12);
}
