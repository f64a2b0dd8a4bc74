//! Trains a dropout ensemble on synthetic two-group data, then sweeps the
//! uncertainty threshold and reports how subgroup accuracy and the
//! fairness gap move as uncertain predictions are filtered out.

use uqfair::manifest::{McPredictions, Measure, TaskKind};
use uqfair::metrics::{MetricName, Scope};
use uqfair::synth::{classification_set, SynthConfig};
use uqfair::sweep::{desired_behavior_flags, sweep_curves, threshold_grid, EvalSet, Normalizer};
use uqfair::toy::{mc_predict, train_toy, TrainConfig};
use uqfair::uncertainty::{classification_uncertainty, predictive_mean};

pub fn run_example() {
    let mut cfg = SynthConfig::new(TaskKind::Classification);
    cfg.classes = 3;
    cfg.m = 300;
    cfg.l = 150;
    cfg.seed = 3;
    let (data, _) = classification_set(&cfg).unwrap();
    let ens = train_toy(&data, &TrainConfig { epochs: 20, seed: 3, ..TrainConfig::default() }).unwrap();

    let mut mean = Vec::new();
    let mut raw = Vec::new();
    for p in mc_predict(&ens, &data.x, 3) {
        let McPredictions::Classification(cs) = p else { unreachable!() };
        mean.extend(predictive_mean(&cs));
        raw.push(classification_uncertainty(&cs, Measure::Entropy).unwrap());
    }
    let set = EvalSet::classification(
        data.groups.clone(),
        data.classes().unwrap().to_vec(),
        mean,
        cfg.classes,
        vec!["a".into(), "b".into(), "c".into()],
        &raw,
        Normalizer::bound((cfg.classes as f64).ln()),
    )
    .unwrap();
    let res = sweep_curves(&set, &threshold_grid(10.0).unwrap()).unwrap();
    let acc = res.curve(MetricName::Accuracy, Scope::Overall).unwrap();
    println!("{:>5} {:>7} {:>7} {:>7} {:>5} {:>5}", "tau", "D0", "D1", "FG", "n0", "n1");
    for i in 0..acc.taus.len() {
        let f = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
        println!(
            "{:>5} {:>7} {:>7} {:>7} {:>5} {:>5}",
            acc.taus[i],
            f(acc.em_d0[i].value),
            f(acc.em_d1[i].value),
            f(acc.fg[i]),
            acc.n_retained_d0[i],
            acc.n_retained_d1[i]
        );
    }
    let b = desired_behavior_flags(acc).unwrap();
    println!("gap shrinks on {:.0}% of steps", 100.0 * b.fg_improved_fraction);
}

#[allow(dead_code)]
fn main() {
    run_example();
}
