//! Per-(class, group) undersampling.

use crate::manifest::GroupLabel;
use crate::rng::SplitMix64;

use super::ToyError;

/// Indices of a subset in which, for every class, both groups keep
/// `min(n(c, D0), n(c, D1))` instances. The larger side of each cell is
/// subsampled without replacement; the result is shuffled. Pass
/// `classes = None` to balance on group only.
pub fn balanced_resample_indices(
    groups: &[GroupLabel],
    classes: Option<&[usize]>,
    seed: u64,
) -> Result<Vec<usize>, ToyError> {
    let class_of = |i: usize| classes.map_or(0, |c| c[i]);
    let class_count = classes.map_or(1, |c| c.iter().max().map_or(0, |m| m + 1));
    let mut cells = vec![[Vec::new(), Vec::new()]; class_count];
    for (i, g) in groups.iter().enumerate() {
        cells[class_of(i)][g.index()].push(i);
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::new();
    for (c, [d0, d1]) in cells.iter().enumerate() {
        if d0.is_empty() && d1.is_empty() {
            continue;
        }
        if d0.is_empty() || d1.is_empty() {
            return Err(ToyError::EmptyCell {
                class: c,
                group: if d0.is_empty() { 0 } else { 1 },
            });
        }
        let keep = d0.len().min(d1.len());
        for side in [d0, d1] {
            if side.len() == keep {
                out.extend_from_slice(side);
            } else {
                let mut picked = rng.sample_indices(side.len(), keep);
                picked.sort_unstable();
                out.extend(picked.into_iter().map(|k| side[k]));
            }
        }
    }
    rng.shuffle(&mut out);
    Ok(out)
}
