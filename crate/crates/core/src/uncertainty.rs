//! Uncertainty measures over Monte-Carlo sample stacks, and their
//! normalization onto the 0 (certain) .. 100 (uncertain) scale.

use thiserror::Error;

use crate::manifest::{ClassSamples, Measure, NormalizationMode, RegressionSamples, SegPredictions};

#[derive(Debug, Error, PartialEq)]
pub enum UncertaintyError {
    #[error("probability {value} at index {index} is negative")]
    Domain { index: usize, value: f64 },
    #[error("predicted variance {value} of sample {sample} is negative")]
    NegativeVariance { sample: usize, value: f64 },
    #[error("bound-mode normalization needs a positive bound_max")]
    BadBound,
    #[error("raw uncertainty {value} at index {index} must be finite and >= 0")]
    BadRaw { index: usize, value: f64 },
    #[error("nothing to normalize")]
    Empty,
    #[error("measure {measure:?} is not available for this prediction type")]
    Unsupported { measure: Measure },
}

/// Mean over the sample axis of a row-major `[T, C]` stack.
pub fn predictive_mean(stack: &ClassSamples) -> Vec<f64> {
    mean_rows(stack.probs(), stack.samples(), stack.classes())
}

pub(crate) fn mean_rows(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut mean = vec![0.0; cols];
    for row in data.chunks_exact(cols) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let inv = rows as f64;
    mean.iter_mut().for_each(|m| *m /= inv);
    mean
}

/// Shannon entropy in nats with `0 ln 0 = 0`. Entries in `(-1e-9, 0)` are
/// treated as rounding residue and contribute nothing.
pub fn entropy(p: &[f64]) -> Result<f64, UncertaintyError> {
    let mut h = 0.0;
    for (index, &value) in p.iter().enumerate() {
        if value < -1e-9 {
            return Err(UncertaintyError::Domain { index, value });
        }
        if value > 0.0 {
            h -= value * value.ln();
        }
    }
    Ok(h.max(0.0))
}

/// Population variance in the one-pass form `E[y^2] - E[y]^2`, clamped at 0.
pub fn sample_variance(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let t = samples.len() as f64;
    let (s, s2) = samples
        .iter()
        .fold((0.0, 0.0), |(s, s2), &y| (s + y, s2 + y * y));
    let mean = s / t;
    (s2 / t - mean * mean).max(0.0)
}

/// Sample variance of the predicted means plus the mean predicted variance,
/// for target `k`.
pub fn total_variance(mc: &RegressionSamples, k: usize) -> Result<f64, UncertaintyError> {
    let vars = mc.variances(k);
    if let Some((sample, &value)) = vars.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(UncertaintyError::NegativeVariance { sample, value });
    }
    let aleatoric = vars.iter().sum::<f64>() / vars.len() as f64;
    Ok(sample_variance(&mc.means(k)) + aleatoric)
}

/// Raw per-instance uncertainty for a classification stack.
///
/// `SampleVariance` is the spread of the probability assigned to the
/// predicted (argmax of mean) class.
pub fn classification_uncertainty(mc: &ClassSamples, measure: Measure) -> Result<f64, UncertaintyError> {
    match measure {
        Measure::Entropy => entropy(&predictive_mean(mc)),
        Measure::SampleVariance => {
            let c = argmax(&predictive_mean(mc));
            let ys: Vec<f64> = (0..mc.samples()).map(|t| mc.sample(t)[c]).collect();
            Ok(sample_variance(&ys))
        }
        Measure::TotalVariance => Err(UncertaintyError::Unsupported { measure }),
    }
}

pub fn regression_uncertainty(mc: &RegressionSamples, k: usize, measure: Measure) -> Result<f64, UncertaintyError> {
    match measure {
        Measure::TotalVariance => total_variance(mc, k),
        Measure::SampleVariance => Ok(sample_variance(&mc.means(k))),
        Measure::Entropy => Err(UncertaintyError::Unsupported { measure }),
    }
}

/// Per-voxel reduction of a segmentation prediction: predicted labels and
/// raw uncertainty.
pub struct VoxelSummary {
    pub labels: Vec<u8>,
    pub raw: Vec<f64>,
}

pub fn segmentation_summary(pred: &SegPredictions, measure: Measure) -> Result<VoxelSummary, UncertaintyError> {
    let voxels = pred.voxels();
    let classes = pred.classes();
    let mut labels = Vec::with_capacity(voxels);
    let mut raw = Vec::with_capacity(voxels);
    match pred {
        SegPredictions::Full { samples, probs, .. } => {
            let per_sample = classes * voxels;
            let mut mean = vec![0.0; classes];
            let mut ys = vec![0.0; *samples];
            for v in 0..voxels {
                mean.iter_mut().for_each(|m| *m = 0.0);
                for t in 0..*samples {
                    let base = t * per_sample + v;
                    for (c, m) in mean.iter_mut().enumerate() {
                        *m += probs[base + c * voxels];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= *samples as f64);
                let label = argmax(&mean);
                labels.push(label as u8);
                let u = match measure {
                    Measure::Entropy => entropy(&mean)?,
                    Measure::SampleVariance => {
                        for (t, y) in ys.iter_mut().enumerate() {
                            *y = probs[t * per_sample + label * voxels + v];
                        }
                        sample_variance(&ys)
                    }
                    Measure::TotalVariance => return Err(UncertaintyError::Unsupported { measure }),
                };
                raw.push(u);
            }
        }
        SegPredictions::Precomputed { mean, uncertainty, .. } => {
            let mut col = vec![0.0; classes];
            for v in 0..voxels {
                for (c, slot) in col.iter_mut().enumerate() {
                    *slot = mean[c * voxels + v];
                }
                labels.push(argmax(&col) as u8);
            }
            raw.extend_from_slice(uncertainty);
        }
    }
    Ok(VoxelSummary { labels, raw })
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate().skip(1) {
        if x > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyScores {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub mode: NormalizationMode,
}

/// Maps raw uncertainties onto `[0, 100]`.
///
/// `Bound`: `100 * raw / bound_max`, clamped to 100.
/// `MinMax`: affine map of `[min, max]` over the whole collection onto
/// `[0, 100]`; a degenerate range maps everything to 0.
pub fn normalize(
    raw: &[f64],
    mode: NormalizationMode,
    bound_max: Option<f64>,
) -> Result<UncertaintyScores, UncertaintyError> {
    if raw.is_empty() {
        return Err(UncertaintyError::Empty);
    }
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(UncertaintyError::BadRaw { index, value });
    }
    let normalized = match mode {
        NormalizationMode::Bound => {
            let b = bound_max
                .filter(|b| b.is_finite() && *b > 0.0)
                .ok_or(UncertaintyError::BadBound)?;
            raw.iter().map(|&r| (100.0 * r / b).min(100.0)).collect()
        }
        NormalizationMode::MinMax => {
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                let span = hi - lo;
                raw.iter().map(|&r| (100.0 * (r - lo) / span).clamp(0.0, 100.0)).collect()
            } else {
                vec![0.0; raw.len()]
            }
        }
    };
    Ok(UncertaintyScores {
        raw: raw.to_vec(),
        normalized,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn predictive_mean_cases() {
        let s = ClassSamples::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(predictive_mean(&s), vec![0.5, 0.5]);
        let s = ClassSamples::new(1, 3, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(predictive_mean(&s), vec![0.2, 0.3, 0.5]);
        let s = ClassSamples::new(3, 2, vec![0.9, 0.1, 0.8, 0.2, 0.7, 0.3]).unwrap();
        let m = predictive_mean(&s);
        assert!(close(m[0], 0.8, 1e-12) && close(m[1], 0.2, 1e-12));
    }

    #[test]
    fn entropy_cases() {
        let mut onehot = vec![0.0; 8];
        onehot[0] = 1.0;
        assert_eq!(entropy(&onehot).unwrap(), 0.0);
        let uniform = vec![0.125; 8];
        assert!(close(entropy(&uniform).unwrap(), 8f64.ln(), 1e-12));
        assert!(close(entropy(&[0.8, 0.2]).unwrap(), 0.500402, 1e-6));
        assert!(matches!(
            entropy(&[1.1, -0.1]),
            Err(UncertaintyError::Domain { index: 1, .. })
        ));
    }

    #[test]
    fn sample_variance_cases() {
        assert_eq!(sample_variance(&[4.0; 5]), 0.0);
        assert!(close(sample_variance(&[1.0, 2.0, 3.0]), 2.0 / 3.0, 1e-12));
        assert_eq!(sample_variance(&[7.0]), 0.0);
    }

    #[test]
    fn total_variance_cases() {
        let zero = RegressionSamples::new(3, 1, vec![5.0, 0.0, 5.0, 0.0, 5.0, 0.0]).unwrap();
        assert_eq!(total_variance(&zero, 0).unwrap(), 0.0);
        let spread = RegressionSamples::new(3, 1, vec![1.0, 0.5, 2.0, 0.5, 3.0, 0.5]).unwrap();
        assert!(close(total_variance(&spread, 0).unwrap(), 7.0 / 6.0, 1e-12));
        let alea = RegressionSamples::new(2, 1, vec![2.0, 0.1, 2.0, 0.3]).unwrap();
        assert!(close(total_variance(&alea, 0).unwrap(), 0.2, 1e-12));
    }

    #[test]
    fn normalize_cases() {
        let s = normalize(&[0.0, 5.0, 10.0], NormalizationMode::MinMax, None).unwrap();
        assert_eq!(s.normalized, vec![0.0, 50.0, 100.0]);
        let s = normalize(&[2f64.ln()], NormalizationMode::Bound, Some(2f64.ln())).unwrap();
        assert_eq!(s.normalized, vec![100.0]);
        let s = normalize(&[3.0, 3.0, 3.0], NormalizationMode::MinMax, None).unwrap();
        assert_eq!(s.normalized, vec![0.0; 3]);
        assert_eq!(
            normalize(&[1.0], NormalizationMode::Bound, None),
            Err(UncertaintyError::BadBound)
        );
        assert_eq!(
            normalize(&[1.0], NormalizationMode::Bound, Some(0.0)),
            Err(UncertaintyError::BadBound)
        );
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.25, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    fn arb_simplex() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..10).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-12;
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_permutation_invariant(p in arb_simplex(), rot in 0usize..10) {
            let h = entropy(&p).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (p.len() as f64).ln() + 1e-12);
            let mut q = p.clone();
            let r = rot % q.len();
            q.rotate_left(r);
            q.reverse();
            prop_assert!((entropy(&q).unwrap() - h).abs() < 1e-12);
        }

        #[test]
        fn minmax_is_monotone_and_idempotent(raw in prop::collection::vec(0.0f64..1e3, 1..50)) {
            let s = normalize(&raw, NormalizationMode::MinMax, None).unwrap();
            for i in 0..raw.len() {
                prop_assert!((0.0..=100.0).contains(&s.normalized[i]));
                for j in 0..raw.len() {
                    if raw[i] <= raw[j] {
                        prop_assert!(s.normalized[i] <= s.normalized[j]);
                    }
                }
            }
            let again = normalize(&s.normalized, NormalizationMode::MinMax, None).unwrap();
            for (a, b) in again.normalized.iter().zip(&s.normalized) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn total_variance_dominates_sample_variance(
            rows in prop::collection::vec((-50.0f64..50.0, 0.0f64..10.0), 1..30)
        ) {
            let t = rows.len();
            let values: Vec<f64> = rows.iter().flat_map(|&(m, v)| [m, v]).collect();
            let mc = RegressionSamples::new(t, 1, values).unwrap();
            prop_assert!(total_variance(&mc, 0).unwrap() >= sample_variance(&mc.means(0)));
        }
    }
}
