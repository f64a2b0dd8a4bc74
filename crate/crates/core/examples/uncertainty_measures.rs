//! Raw uncertainty measures on hand-made Monte-Carlo stacks, then both
//! normalization modes.

use uqfair::manifest::{ClassSamples, Measure, NormalizationMode, RegressionSamples};
use uqfair::uncertainty::{classification_uncertainty, entropy, normalize, predictive_mean, total_variance};

pub fn run_example() {
    let c = 3;
    println!("entropy of a one-hot vector: {}", entropy(&[0.0, 1.0, 0.0]).unwrap());
    println!("entropy of uniform over {c}: {:.6} (ln {c} = {:.6})", entropy(&[1.0 / 3.0; 3]).unwrap(), (c as f64).ln());

    // Four dropout samples that agree on the class but not on the confidence.
    let stack = ClassSamples::new(
        4,
        c,
        vec![0.7, 0.2, 0.1, 0.9, 0.05, 0.05, 0.6, 0.3, 0.1, 0.8, 0.1, 0.1],
    )
    .unwrap();
    println!("predictive mean: {:?}", predictive_mean(&stack));
    for m in [Measure::Entropy, Measure::SampleVariance] {
        println!("{m:?}: {:.6}", classification_uncertainty(&stack, m).unwrap());
    }

    // Regression samples are interleaved (mean, variance) pairs per target.
    let reg = RegressionSamples::new(3, 1, vec![10.0, 1.0, 12.0, 2.0, 11.0, 1.5]).unwrap();
    println!("total variance: {:.6} (spread of means 2/3 + mean variance 1.5)", total_variance(&reg, 0).unwrap());

    let raw = [0.2, 0.5, 0.8];
    let bound = normalize(&raw, NormalizationMode::Bound, Some((c as f64).ln())).unwrap();
    let minmax = normalize(&raw, NormalizationMode::MinMax, None).unwrap();
    println!("bound-normalized:  {:?}", bound.normalized);
    println!("minmax-normalized: {:?}", minmax.normalized);
}

#[allow(dead_code)]
fn main() {
    run_example();
}
