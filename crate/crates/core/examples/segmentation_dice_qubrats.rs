//! Voxel-level filtering on nested-sphere tumour phantoms: Dice per region
//! as the threshold drops, and the aggregate QU-BraTS score per subgroup.

use uqfair::manifest::{GroupLabel, RegionDef};
use uqfair::metrics::{MetricName, Scope};
use uqfair::rng::SplitMix64;
use uqfair::synth::sphere_label_map;
use uqfair::sweep::{sweep_curves, threshold_grid, EvalSet, Normalizer, SegCase};

/// A phantom whose prediction flips labels with probability `err`; flipped
/// voxels get high uncertainty more often than correct ones.
fn case(seed: u64, err: f64) -> SegCase {
    let truth = sphere_label_map([16; 3], [8.0; 3], [6.0, 4.0, 2.5]).labels;
    let mut rng = SplitMix64::new(seed);
    let mut pred = truth.clone();
    let mut raw = Vec::with_capacity(truth.len());
    for p in pred.iter_mut() {
        let wrong = *p != 0 && rng.bernoulli(err);
        if wrong {
            *p = (*p + 1 + rng.below(3) as u8) % 4;
        }
        raw.push(if wrong { rng.uniform(0.3, 1.0) } else { rng.uniform(0.0, 0.6) });
    }
    SegCase { truth, pred, raw }
}

pub fn run_example() {
    let mut groups = Vec::new();
    let mut cases = Vec::new();
    for i in 0..6 {
        let g = if i < 3 { GroupLabel::D0 } else { GroupLabel::D1 };
        cases.push(case(i, if g == GroupLabel::D0 { 0.05 } else { 0.2 }));
        groups.push(g);
    }
    let set = EvalSet::segmentation(groups, RegionDef::brats(), cases, Normalizer::minmax()).unwrap();
    let res = sweep_curves(&set, &threshold_grid(25.0).unwrap()).unwrap();
    for r in 0..3 {
        let dice = res.curve(MetricName::Dice, Scope::Region(r)).unwrap();
        let row: Vec<String> = dice
            .taus
            .iter()
            .zip(&dice.fg)
            .map(|(t, fg)| format!("tau {t}: FG {}", fg.map_or("-".into(), |v| format!("{v:.3}"))))
            .collect();
        println!("{} dice  {}", dice.scope_label, row.join("  "));
    }
    for q in &res.qubrats {
        println!("QU-BraTS {}: D0 {:?} D1 {:?} FG {:?}", q.region, q.d0, q.d1, q.fg);
    }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
