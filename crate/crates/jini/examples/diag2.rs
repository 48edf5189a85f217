//! Temporary diagnostic: per-sample fit behavior at a fixed theta.

use jini::harness::{ExperimentConfig, SettingId};
use jini_core::crn::{CrnBank, RngStream};
use jini_core::estimators::{FitConfig, Fitter};
use jini_core::models::ParamVec;

fn main() {
    let cfg = ExperimentConfig::preset(SettingId::NegbinT2);
    let model = cfg.build_model().unwrap();
    let fit_cfg = FitConfig::default();
    let master = RngStream::new(42);
    let bank = CrnBank::new(master.substream(0xBA).substream(0).seed(), cfg.h, model.n()).unwrap();
    // Roughly where the solve plateaued.
    let mut tv = cfg.theta0.clone();
    tv[0] = 1.52;
    tv[20] = 0.55;
    let theta = ParamVec::new(tv);
    let mut worst = Vec::new();
    for h in 0..bank.rows() {
        let data = model.simulate(&theta, &bank, h).unwrap();
        let fit = Fitter::NegBinMle
            .fit_from(&data, &model.bounds, &fit_cfg, Some(theta.as_slice()))
            .unwrap();
        if !fit.converged || fit.iterations >= 99 {
            worst.push((h, fit.clone()));
        }
    }
    println!("non-converged samples: {}", worst.len());
    for (h, fit) in &worst {
        let maxbeta = fit.params.as_slice()[..20]
            .iter()
            .fold(0.0_f64, |a, b| a.max(b.abs()));
        println!(
            "h={h}: iters={} grad={:.3e} alpha={:.4e} max|beta|={:.3} ll={:.3}",
            fit.iterations, fit.grad_norm, fit.params[20], maxbeta, fit.loglik
        );
        // Perturb theta slightly and compare the returned estimate.
        let mut tv2 = theta.as_slice().to_vec();
        tv2[0] += 1e-3;
        let theta2 = ParamVec::new(tv2);
        let data2 = model.simulate(&theta2, &bank, *h).unwrap();
        let fit2 = Fitter::NegBinMle
            .fit_from(&data2, &model.bounds, &fit_cfg, Some(theta2.as_slice()))
            .unwrap();
        let mut dmax = 0.0_f64;
        for j in 0..fit.params.len() {
            dmax = dmax.max((fit.params[j] - fit2.params[j]).abs());
        }
        println!("   estimate shift under theta+1e-3: max|d| = {dmax:.4e} (converged2={})", fit2.converged);
    }
}
