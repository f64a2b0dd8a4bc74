//! Trains the toy ensemble with each mitigation strategy on a 10:1
//! group-imbalanced, group-shifted classification set and compares the
//! unfiltered accuracy gap on a held-out set with equal-size groups.

use uqfair::manifest::{McPredictions, TaskKind};
use uqfair::synth::{classification_set, SynthConfig};
use uqfair::toy::{mc_predict, train_toy, Strategy, ToyDataset, TrainConfig};
use uqfair::uncertainty::{argmax, predictive_mean};

pub const TRAIN: [usize; 2] = [1000, 100];
pub const TEST: usize = 500;
pub const SHIFT: f64 = 1.5;

/// Draws train and test rows from one generator run so that both share the
/// class centres; returns `(train, test)`.
pub fn split(seed: u64) -> (ToyDataset, ToyDataset) {
    let mut cfg = SynthConfig::new(TaskKind::Classification);
    cfg.m = TRAIN[0] + TEST;
    cfg.l = TRAIN[1] + TEST;
    cfg.group_shift = SHIFT;
    cfg.noise_sigma = [0.5, 0.5];
    cfg.seed = seed;
    let (data, _) = classification_set(&cfg).expect("valid config");
    let (m, l) = (cfg.m, cfg.l);
    let train: Vec<usize> = (0..TRAIN[0]).chain(m..m + TRAIN[1]).collect();
    let test: Vec<usize> = (TRAIN[0]..m).chain(m + TRAIN[1]..m + l).collect();
    (data.subset(&train), data.subset(&test))
}

/// Per-group test accuracy of the ensemble's mean prediction.
pub fn group_accuracy(strategy: Strategy, seed: u64) -> [f64; 2] {
    let (train, test) = split(seed);
    let cfg = TrainConfig {
        strategy,
        seed,
        ..TrainConfig::default()
    };
    let ens = train_toy(&train, &cfg).expect("training converges");
    let preds = mc_predict(&ens, &test.x, seed);
    let y = test.classes().expect("classification");
    let mut hit = [0.0; 2];
    let mut n = [0.0; 2];
    for ((p, &y), g) in preds.iter().zip(y).zip(&test.groups) {
        let McPredictions::Classification(cs) = p else { unreachable!() };
        n[g.index()] += 1.0;
        if argmax(&predictive_mean(cs)) == y {
            hit[g.index()] += 1.0;
        }
    }
    [hit[0] / n[0], hit[1] / n[1]]
}

pub fn run_example() {
    for seed in 0..3 {
        print!("seed {seed}:");
        for strategy in [Strategy::Baseline, Strategy::Balanced, Strategy::GroupDro] {
            let [a0, a1] = group_accuracy(strategy, seed);
            print!("  {strategy:?} D0 {a0:.3} D1 {a1:.3} FG {:.3}", (a0 - a1).abs());
        }
        println!();
    }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
