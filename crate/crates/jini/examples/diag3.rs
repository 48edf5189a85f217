//! Temporary diagnostic: smoothness of the simulated mean in theta.

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
    // Near the plateau point.
    let mut tv = cfg.theta0.clone();
    tv[0] = 1.521;
    tv[20] = 0.696;
    let base = ParamVec::new(tv.clone());

    let per_sample = |theta: &ParamVec| -> Vec<Vec<f64>> {
        (0..bank.rows())
            .map(|h| {
                let data = model.simulate(theta, &bank, h).unwrap();
                Fitter::NegBinMle
                    .fit_from(&data, &model.bounds, &fit_cfg, Some(theta.as_slice()))
                    .unwrap()
                    .params
                    .into_vec()
            })
            .collect()
    };
    let est0 = per_sample(&base);
    for delta in [1e-4, 1e-3] {
        let mut tv2 = tv.clone();
        tv2[8] += delta;
        let est1 = per_sample(&ParamVec::new(tv2));
        // Mean shift per coordinate and the largest per-sample jump.
        let dim = est0[0].len();
        let mut mean_shift = vec![0.0; dim];
        let mut max_jump = (0usize, 0usize, 0.0f64);
        for h in 0..est0.len() {
            for j in 0..dim {
                let d = est1[h][j] - est0[h][j];
                mean_shift[j] += d / est0.len() as f64;
                if d.abs() > max_jump.2 {
                    max_jump = (h, j, d.abs());
                }
            }
        }
        let shift8 = mean_shift[8];
        let shift_norm: f64 = mean_shift.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!(
            "delta={delta:.0e}: mean shift in coord 8 = {shift8:+.5e} (norm {shift_norm:.3e}), largest per-sample jump: h={} coord={} |d|={:.4}",
            max_jump.0, max_jump.1, max_jump.2
        );
    }
}
