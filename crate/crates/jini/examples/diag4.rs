//! Temporary micro-benchmark of one warm negbin fit.

use jini::harness::{ExperimentConfig, SettingId};
use jini_core::crn::{CrnBank, RngStream};
use jini_core::estimators::{negbin_loglik, negbin_score, FitConfig, Fitter};
use jini_core::models::ParamVec;
use std::time::Instant;

fn main() {
    let cfg = ExperimentConfig::preset(SettingId::NegbinT2);
    let model = cfg.build_model().unwrap();
    let fit_cfg = FitConfig::default();
    let master = RngStream::new(42);
    let bank = CrnBank::new(master.substream(0xBA).substream(0).seed(), cfg.h, model.n()).unwrap();
    let mut tv = cfg.theta0.clone();
    tv[0] = 1.521;
    tv[20] = 0.696;
    let theta = ParamVec::new(tv);

    // Simulate all banks once.
    let datasets: Vec<_> = (0..bank.rows())
        .map(|h| model.simulate(&theta, &bank, h).unwrap())
        .collect();

    let t = Instant::now();
    let mut iters = 0usize;
    use core::sync::atomic::Ordering;
    jini_core::estimators::BETA_STEP_COUNT.store(0, Ordering::Relaxed);
    jini_core::estimators::LL_EVAL_COUNT.store(0, Ordering::Relaxed);
    for d in &datasets {
        let fit = Fitter::NegBinMle
            .fit_from(d, &model.bounds, &fit_cfg, Some(theta.as_slice()))
            .unwrap();
        iters += fit.iterations;
    }
    let per_fit = t.elapsed() / datasets.len() as u32;
    println!(
        "warm fit: {per_fit:?} per fit, avg alpha-outers = {}, avg beta steps = {}, avg ll evals = {}",
        iters as f64 / 100.0,
        jini_core::estimators::BETA_STEP_COUNT.load(Ordering::Relaxed) as f64 / 100.0,
        jini_core::estimators::LL_EVAL_COUNT.load(Ordering::Relaxed) as f64 / 100.0
    );

    // Component costs.
    let d = &datasets[0];
    let params = theta.as_slice().to_vec();
    let t = Instant::now();
    let reps = 2000;
    let mut acc = 0.0;
    for _ in 0..reps {
        acc += negbin_loglik(d, &params).unwrap();
    }
    println!("uncached full loglik: {:?} (acc {acc:.1})", t.elapsed() / reps);
    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..reps {
        acc += negbin_score(d, &params).unwrap()[20];
    }
    println!("score: {:?} (acc {acc:.1})", t.elapsed() / reps);

    let t = Instant::now();
    let mut acc = 0u64;
    for _ in 0..reps {
        acc += model.simulate(&theta, &bank, 0).unwrap().y.iter().sum::<u64>();
    }
    println!("simulate: {:?} (acc {acc})", t.elapsed() / reps);
}
