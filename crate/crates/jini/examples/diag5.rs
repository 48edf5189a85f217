//! Temporary diagnostic: stopped estimate vs plateau-ball center on the
//! censored Poisson study.

use jini::harness::{ExperimentConfig, SettingId};
use jini_core::bias_correct::{ib_solve, FailurePolicy, IbConfig, SerialExecutor};
use jini_core::crn::{CrnBank, RngStream};
use jini_core::estimators::{FitConfig, Fitter};
use jini_core::models::ParamVec;

fn main() {
    let cfg = ExperimentConfig::preset(SettingId::CensoredPoissonT8);
    let model = cfg.build_model().unwrap();
    let theta0 = ParamVec::new(cfg.theta0.clone());
    let fit_cfg = FitConfig::default();
    let master = RngStream::new(42);
    let data_root = master.substream(0xB5);
    let bank_root = master.substream(0xBA);
    let reps = 8;
    let mut sum_stop = vec![0.0; 3];
    let mut sum_center = vec![0.0; 3];
    let mut sum_naive = vec![0.0; 3];
    for rep in 0..reps {
        let obs = CrnBank::new(data_root.substream(rep).seed(), 1, model.n()).unwrap();
        let data = model.simulate(&theta0, &obs, 0).unwrap();
        let fitter = Fitter::PoissonMle;
        let initial = fitter.fit(&data, &model.bounds, &fit_cfg).unwrap();
        let bank = CrnBank::new(bank_root.substream(rep).seed(), cfg.h, model.n()).unwrap();
        let long = IbConfig {
            h: cfg.h,
            tol: 1e-12,
            max_iter: 120,
            seed: 0,
            failure_policy: FailurePolicy::Abort,
        };
        let out = ib_solve(&initial.params, &model, &bank, fitter, &fit_cfg, &long, &SerialExecutor)
            .unwrap();
        let trace = out.trace.unwrap();
        // Ball center over the late plateau.
        let mut center = vec![0.0; 3];
        let lo = 40;
        let hi = trace.iterates.len();
        for it in &trace.iterates[lo..hi] {
            for j in 0..3 {
                center[j] += it[j] / (hi - lo) as f64;
            }
        }
        // Where would the preset tolerance have stopped?
        let mut stop_idx = trace.step_norms.len();
        for (k, s) in trace.step_norms.iter().enumerate() {
            if *s < 2e-2 {
                stop_idx = k + 1;
                break;
            }
        }
        let stopped = &trace.iterates[stop_idx];
        for j in 0..3 {
            sum_stop[j] += stopped[j] / reps as f64;
            sum_center[j] += center[j] / reps as f64;
            sum_naive[j] += initial.params[j] / reps as f64;
        }
        println!(
            "rep {rep}: stop at k={stop_idx}, stopped[1]={:.4}, center[1]={:.4}",
            stopped[1], center[1]
        );
    }
    println!("theta0[0..3]            = [0.5, 0.8, -0.4]");
    println!("mean naive  [0..3]      = {sum_naive:.4?}");
    println!("mean stopped[0..3]      = {sum_stop:.4?}");
    println!("mean ball center [0..3] = {sum_center:.4?}");
}
