//! Temporary diagnostic: step-norm trajectory of one negbin-t2 solve.

use jini::harness::{ExperimentConfig, SettingId};
use jini_core::bias_correct::{ib_solve, FailurePolicy, IbConfig, SerialExecutor};
use jini_core::crn::{CrnBank, RngStream};
use jini_core::estimators::{FitConfig, Fitter};
use jini_core::models::ParamVec;

fn main() {
    let mut cfg = ExperimentConfig::preset(match std::env::var("DIAG_SETTING").as_deref() {
        Ok("t8") => SettingId::CensoredPoissonT8,
        Ok("t4") => SettingId::LogisticMisclassT4I,
        _ => SettingId::NegbinT2,
    });
    if cfg.setting == SettingId::LogisticMisclassT4I {
        cfg.n = 600;
        cfg.p = 20;
        let mut t = vec![0.0; 20];
        t[0] = 5.0; t[1] = 5.0; t[2] = -7.0; t[3] = -7.0;
        cfg.theta0 = t;
    }
    let model = cfg.build_model().unwrap();
    let theta0 = ParamVec::new(cfg.theta0.clone());
    let fit_cfg = FitConfig::default();
    let master = RngStream::new(42);
    let obs = CrnBank::new(master.substream(0xB5).substream(0).seed(), 1, model.n()).unwrap();
    let data = model.simulate(&theta0, &obs, 0).unwrap();
    let t = std::time::Instant::now();
    let fitter = Fitter::initial_for(model.family).unwrap();
    let initial = fitter.fit(&data, &model.bounds, &fit_cfg).unwrap();
    println!(
        "initial fit: converged={} iters={} grad={:.2e} alpha={:.4} ({:?})",
        initial.converged,
        initial.iterations,
        initial.grad_norm,
        initial.params[initial.params.len() - 1],
        t.elapsed()
    );
    let bank = CrnBank::new(master.substream(0xBA).substream(0).seed(), cfg.h, model.n()).unwrap();
    let ib = IbConfig {
        h: cfg.h,
        tol: 1e-4,
        max_iter: 25,
        seed: 0,
        failure_policy: FailurePolicy::Abort,
    };
    let t = std::time::Instant::now();
    let out = ib_solve(&initial.params, &model, &bank, fitter, &fit_cfg, &ib, &SerialExecutor)
        .unwrap();
    let trace = out.trace.unwrap();
    println!(
        "solve: {:?}, converged={}, fit_failures={}",
        t.elapsed(),
        trace.converged,
        trace.fit_failures
    );
    for (k, s) in trace.step_norms.iter().enumerate() {
        let a = trace.iterates[k].as_slice();
        let b = trace.iterates[k + 1].as_slice();
        let mut worst = (0usize, 0.0f64);
        for j in 0..a.len() {
            let d = (b[j] - a[j]).abs();
            if d > worst.1 {
                worst = (j, d);
            }
        }
        println!(
            "k={:2}  step={:.3e}  worst coord {} (|d|={:.3e})  alpha={:.5}",
            k + 1,
            s,
            worst.0,
            worst.1,
            b[b.len() - 1]
        );
    }
}
