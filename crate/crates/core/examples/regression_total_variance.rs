//! Heteroscedastic regression: the toy ensemble predicts a mean and a
//! variance per target, total variance ranks the instances, and RMSE is
//! swept per target for the two subgroups.

use uqfair::manifest::{McPredictions, TaskKind};
use uqfair::metrics::{MetricName, Scope};
use uqfair::synth::{default_target_names, regression_set, SynthConfig};
use uqfair::sweep::{sweep_curves, threshold_grid, EvalSet, Normalizer};
use uqfair::toy::{mc_predict, train_toy, Targets, TrainConfig};
use uqfair::uncertainty::total_variance;

pub fn run_example() {
    let mut cfg = SynthConfig::new(TaskKind::Regression);
    cfg.m = 200;
    cfg.l = 100;
    cfg.seed = 5;
    let (data, _) = regression_set(&cfg).unwrap();
    let Targets::Values { targets: k, y } = &data.targets else { unreachable!() };
    let train = TrainConfig { epochs: 200, seed: 5, ..TrainConfig::default() };
    let ens = train_toy(&data, &train).unwrap();

    let mut pred = Vec::new();
    let mut raw = Vec::new();
    for p in mc_predict(&ens, &data.x, 5) {
        let McPredictions::Regression(rs) = p else { unreachable!() };
        for t in 0..*k {
            pred.push(rs.means(t).iter().sum::<f64>() / rs.samples() as f64);
            raw.push(total_variance(&rs, t).unwrap());
        }
    }
    let names = default_target_names(*k);
    let set = EvalSet::regression(data.groups.clone(), names, y.clone(), pred, &raw, Normalizer::minmax()).unwrap();
    let res = sweep_curves(&set, &threshold_grid(20.0).unwrap()).unwrap();
    for t in 0..*k {
        let c = res.curve(MetricName::Rmse, Scope::Target(t)).unwrap();
        println!("{} RMSE", c.scope_label);
        for i in 0..c.taus.len() {
            let f = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3}"));
            println!("  tau {:>3}: D0 {:>7} D1 {:>7} FG {:>7}", c.taus[i], f(c.em_d0[i].value), f(c.em_d1[i].value), f(c.fg[i]));
        }
    }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
