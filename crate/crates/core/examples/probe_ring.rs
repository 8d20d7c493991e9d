use mtsparse::model::{MultiTaskDataset, Task};
use mtsparse::ring::{fit_ring, kkt_residuals, RingOptions};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let mut r = ChaCha12Rng::seed_from_u64(9003);
    let mut ds_keep = None;
    let mut lambda_keep = 0.0;
    for trial in 0..4 {
        let n: usize = r.gen_range(2..=6);
        let p: usize = r.gen_range(2..=4);
        let m: usize = r.gen_range(5..=12);
        let tasks: Vec<Task> = (0..n)
            .map(|_| {
                let design = DMatrix::from_fn(m, p, |_, _| r.gen_range(-1.0..1.0));
                let response = DVector::from_fn(m, |_, _| r.gen_range(-1.0..1.0));
                Task::new(design, response).unwrap()
            })
            .collect();
        let ds = MultiTaskDataset::new(tasks).unwrap();
        let lambda: f64 = r.gen_range(0.3..2.0);
        if trial == 3 {
            ds_keep = Some(ds);
            lambda_keep = lambda;
        }
    }
    let ds = ds_keep.unwrap();
    let lambda = lambda_keep;
    println!("instance: n={} p={} lambda={lambda:.4}", ds.n_tasks(), ds.n_features());
    for &passes in &[1000usize, 8000, 64000, 256000] {
        let opts = RingOptions {
            lambda,
            tol: 1e-13,
            max_passes: passes,
            gamma: 1.0,
            svd_refresh_every: 1,
            seed: 3,
            ..Default::default()
        };
        let (b, rep) = fit_ring(&ds, &opts).unwrap();
        let sv = b.values.clone().svd(false, false).singular_values;
        let risk: f64 = ds
            .tasks()
            .iter()
            .enumerate()
            .map(|(i, t)| (&t.response - &t.design * b.values.column(i)).norm_squared())
            .sum();
        let nuc: f64 = sv.iter().sum();
        let kkt = kkt_residuals(&b, &ds, lambda).unwrap();
        println!(
            "passes={passes:6} term={:?} obj={:.9} sv={:?} kkt_active={:?}",
            rep.termination,
            risk + lambda * nuc,
            sv.as_slice().iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>(),
            kkt.active.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
        );
    }
}
