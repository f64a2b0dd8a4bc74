//! Uncertainty-threshold sweep: filter predictions whose normalized
//! uncertainty exceeds `tau`, score the retained ones per subgroup and
//! report the fairness gap `|EM(D0) - EM(D1)|` at every threshold.
//!
//! Reductions are sequential in instance order (voxel order within an
//! image), so results do not depend on how many worker threads run the
//! per-image statistics.

use rayon::prelude::*;
use thiserror::Error;

use crate::manifest::{EvalManifest, GroupLabel, Measure, McPredictions, NormalizationMode, RegionDef, TaskKind, Truth};
use crate::metrics::{
    self, balanced_from_counts, Confusion, GroupSel, MetricError, MetricId, MetricName, MetricValue, Scope,
};
use crate::uncertainty::{self, normalize, UncertaintyError, UncertaintyScores};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("threshold step {step} must be in (0, 100] and divide 100")]
    BadStep { step: f64 },
    #[error("threshold grid must be non-empty, descending and within [0, 100]")]
    BadGrid,
    #[error("metric mismatch: {left:?} vs {right:?}")]
    ScopeMismatch { left: MetricId, right: MetricId },
    #[error("curve has {found} defined points, need at least 2")]
    TooFewPoints { found: usize },
    #[error("evaluation set is inconsistent: {0}")]
    BadInput(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
}

/// `[100, 100 - step, ..., 0]`.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>, SweepError> {
    if !(step.is_finite() && step > 0.0 && step <= 100.0) {
        return Err(SweepError::BadStep { step });
    }
    let count = 100.0 / step;
    let n = count.round();
    if (count - n).abs() > 1e-9 {
        return Err(SweepError::BadStep { step });
    }
    let n = n as usize;
    Ok((0..=n)
        .map(|k| if k == n { 0.0 } else { (100.0 - k as f64 * step).max(0.0) })
        .collect())
}

/// Retained iff `normalized <= tau`.
pub fn filter_retained(scores: &UncertaintyScores, tau: f64) -> Vec<bool> {
    retain_at(&scores.normalized, tau)
}

pub fn retain_at(normalized: &[f64], tau: f64) -> Vec<bool> {
    normalized.iter().map(|&u| u <= tau).collect()
}

/// `|em0 - em1|`, undefined when either side is.
pub fn fairness_gap(em0: &MetricValue, em1: &MetricValue) -> Result<Option<f64>, SweepError> {
    if em0.id != em1.id {
        return Err(SweepError::ScopeMismatch {
            left: em0.id,
            right: em1.id,
        });
    }
    Ok(match (em0.value, em1.value) {
        (Some(a), Some(b)) => Some((a - b).abs()),
        _ => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub mode: NormalizationMode,
    pub bound_max: Option<f64>,
}

impl Normalizer {
    pub fn minmax() -> Self {
        Self {
            mode: NormalizationMode::MinMax,
            bound_max: None,
        }
    }

    pub fn bound(bound_max: f64) -> Self {
        Self {
            mode: NormalizationMode::Bound,
            bound_max: Some(bound_max),
        }
    }

    fn apply(&self, raw: &[f64]) -> Result<UncertaintyScores, UncertaintyError> {
        normalize(raw, self.mode, self.bound_max)
    }
}

/// One segmentation case: truth labels, predicted labels, raw per-voxel
/// uncertainty, all over the same voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SegCase {
    pub truth: Vec<u8>,
    pub pred: Vec<u8>,
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum EvalData {
    Classification {
        class_count: usize,
        class_names: Vec<String>,
        truth: Vec<usize>,
        /// Row-major `[N, C]` predictive means.
        mean_probs: Vec<f64>,
        pred: Vec<usize>,
        scores: UncertaintyScores,
    },
    Segmentation {
        regions: Vec<RegionDef>,
        truth: Vec<Vec<u8>>,
        pred: Vec<Vec<u8>>,
        /// Normalized jointly over every voxel of every case.
        scores: Vec<Vec<f64>>,
    },
    Regression {
        target_names: Vec<String>,
        /// Row-major `[N, K]`.
        truth: Vec<f64>,
        pred: Vec<f64>,
        /// One normalization per target.
        scores: Vec<UncertaintyScores>,
    },
}

/// Per-instance sufficient statistics for a sweep: groups, truths, point
/// predictions and normalized uncertainties.
/// `(truth, pred, raw)` for one regression instance.
type RegRow = (Vec<f64>, Vec<f64>, Vec<f64>);

#[derive(Debug, Clone)]
pub struct EvalSet {
    pub groups: Vec<GroupLabel>,
    pub data: EvalData,
}

impl EvalSet {
    pub fn task(&self) -> TaskKind {
        match self.data {
            EvalData::Classification { .. } => TaskKind::Classification,
            EvalData::Segmentation { .. } => TaskKind::Segmentation,
            EvalData::Regression { .. } => TaskKind::Regression,
        }
    }

    pub fn n(&self) -> usize {
        self.groups.len()
    }

    pub fn classification(
        groups: Vec<GroupLabel>,
        truth: Vec<usize>,
        mean_probs: Vec<f64>,
        class_count: usize,
        class_names: Vec<String>,
        raw: &[f64],
        norm: Normalizer,
    ) -> Result<Self, SweepError> {
        let n = groups.len();
        if truth.len() != n || raw.len() != n || mean_probs.len() != n * class_count {
            return Err(SweepError::BadInput("classification arrays disagree on N".into()));
        }
        if let Some(y) = truth.iter().find(|&&y| y >= class_count) {
            return Err(SweepError::BadInput(format!("class {y} out of range")));
        }
        let pred = mean_probs.chunks_exact(class_count).map(uncertainty::argmax).collect();
        let scores = norm.apply(raw)?;
        Ok(Self {
            groups,
            data: EvalData::Classification {
                class_count,
                class_names,
                truth,
                mean_probs,
                pred,
                scores,
            },
        })
    }

    pub fn segmentation(
        groups: Vec<GroupLabel>,
        regions: Vec<RegionDef>,
        cases: Vec<SegCase>,
        norm: Normalizer,
    ) -> Result<Self, SweepError> {
        if cases.len() != groups.len() {
            return Err(SweepError::BadInput("one case per group label required".into()));
        }
        for (i, c) in cases.iter().enumerate() {
            if c.truth.len() != c.pred.len() || c.truth.len() != c.raw.len() {
                return Err(SweepError::BadInput(format!("case {i}: voxel counts differ")));
            }
        }
        let all_raw: Vec<f64> = cases.iter().flat_map(|c| c.raw.iter().copied()).collect();
        let scores = norm.apply(&all_raw)?;
        let mut split = Vec::with_capacity(cases.len());
        let mut offset = 0;
        let mut truth = Vec::with_capacity(cases.len());
        let mut pred = Vec::with_capacity(cases.len());
        for c in cases {
            let v = c.raw.len();
            split.push(scores.normalized[offset..offset + v].to_vec());
            offset += v;
            truth.push(c.truth);
            pred.push(c.pred);
        }
        Ok(Self {
            groups,
            data: EvalData::Segmentation {
                regions,
                truth,
                pred,
                scores: split,
            },
        })
    }

    /// `truth`, `pred` and `raw` are row-major `[N, K]`.
    pub fn regression(
        groups: Vec<GroupLabel>,
        target_names: Vec<String>,
        truth: Vec<f64>,
        pred: Vec<f64>,
        raw: &[f64],
        norm: Normalizer,
    ) -> Result<Self, SweepError> {
        let n = groups.len();
        let k = target_names.len();
        if k == 0 || truth.len() != n * k || pred.len() != n * k || raw.len() != n * k {
            return Err(SweepError::BadInput("regression arrays disagree on N x K".into()));
        }
        let scores = (0..k)
            .map(|t| {
                let col: Vec<f64> = (0..n).map(|i| raw[i * k + t]).collect();
                norm.apply(&col)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            groups,
            data: EvalData::Regression {
                target_names,
                truth,
                pred,
                scores,
            },
        })
    }

    /// Loads every prediction referenced by `manifest` and reduces it to
    /// sufficient statistics. Instances are processed on the current rayon
    /// pool; the result is independent of its size.
    pub fn from_manifest(
        manifest: &EvalManifest,
        measure: Option<Measure>,
        normalization: Option<NormalizationMode>,
    ) -> Result<Self, crate::Error> {
        let measure = measure.unwrap_or_else(|| manifest.measure());
        if !measure.supports(manifest.task) {
            return Err(crate::Error::Invalid(format!(
                "measure {measure:?} is not defined for {}",
                manifest.task
            )));
        }
        let mode = normalization
            .or(manifest.normalization)
            .unwrap_or_else(|| NormalizationMode::default_for(measure));
        let bound_max = match (mode, measure) {
            (NormalizationMode::Bound, Measure::Entropy) => {
                Some(manifest.bound_max.unwrap_or((manifest.class_count() as f64).ln()))
            }
            (NormalizationMode::Bound, _) => manifest.bound_max,
            (NormalizationMode::MinMax, _) => None,
        };
        let norm = Normalizer { mode, bound_max };
        let groups: Vec<GroupLabel> = manifest.instances.iter().map(|r| r.group).collect();

        match manifest.task {
            TaskKind::Classification => {
                let c = manifest.class_count();
                let rows = manifest
                    .instances
                    .par_iter()
                    .map(|r| -> Result<(usize, Vec<f64>, f64), crate::Error> {
                        let Truth::Class(y) = r.truth else {
                            return Err(crate::Error::Invalid(format!("{}: bad truth", r.id)));
                        };
                        let McPredictions::Classification(mc) = manifest.load_predictions(r)? else {
                            unreachable!("task checked by loader")
                        };
                        let raw = uncertainty::classification_uncertainty(&mc, measure)?;
                        Ok((y, uncertainty::predictive_mean(&mc), raw))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let truth = rows.iter().map(|r| r.0).collect();
                let mean_probs = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
                let raw: Vec<f64> = rows.iter().map(|r| r.2).collect();
                let names = (0..c).map(|i| manifest.class_label(i)).collect();
                Ok(Self::classification(groups, truth, mean_probs, c, names, &raw, norm)?)
            }
            TaskKind::Segmentation => {
                let cases = manifest
                    .instances
                    .par_iter()
                    .map(|r| -> Result<SegCase, crate::Error> {
                        let labels = manifest.load_label_map(r)?;
                        let McPredictions::Segmentation(seg) = manifest.load_predictions(r)? else {
                            unreachable!("task checked by loader")
                        };
                        if seg.dims() != labels.dims {
                            return Err(crate::Error::Invalid(format!("{}: grid mismatch", r.id)));
                        }
                        let summary = uncertainty::segmentation_summary(&seg, measure)?;
                        Ok(SegCase {
                            truth: labels.labels,
                            pred: summary.labels,
                            raw: summary.raw,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Self::segmentation(groups, manifest.regions.clone(), cases, norm)?)
            }
            TaskKind::Regression => {
                let k = manifest.target_count();
                let rows = manifest
                    .instances
                    .par_iter()
                    .map(|r| -> Result<RegRow, crate::Error> {
                        let Truth::Values(y) = &r.truth else {
                            return Err(crate::Error::Invalid(format!("{}: bad truth", r.id)));
                        };
                        let McPredictions::Regression(mc) = manifest.load_predictions(r)? else {
                            unreachable!("task checked by loader")
                        };
                        let mut pred = Vec::with_capacity(k);
                        let mut raw = Vec::with_capacity(k);
                        for t in 0..k {
                            let means = mc.means(t);
                            pred.push(means.iter().sum::<f64>() / means.len() as f64);
                            raw.push(uncertainty::regression_uncertainty(&mc, t, measure)?);
                        }
                        Ok((y.clone(), pred, raw))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let truth = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
                let pred = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
                let raw: Vec<f64> = rows.iter().flat_map(|r| r.2.iter().copied()).collect();
                Ok(Self::regression(groups, manifest.target_names.clone(), truth, pred, &raw, norm)?)
            }
        }
    }

    /// Same set with group labels 0 and 1 exchanged.
    pub fn with_swapped_groups(&self) -> Self {
        Self {
            groups: self.groups.iter().map(|g| g.swapped()).collect(),
            data: self.data.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessCurve {
    pub id: MetricId,
    pub scope_label: String,
    /// Descending thresholds.
    pub taus: Vec<f64>,
    pub em_d0: Vec<MetricValue>,
    pub em_d1: Vec<MetricValue>,
    pub em_all: Vec<MetricValue>,
    pub fg: Vec<Option<f64>>,
    /// Retained instances (voxels for segmentation) per threshold.
    pub n_retained_d0: Vec<usize>,
    pub n_retained_d1: Vec<usize>,
}

impl FairnessCurve {
    fn new(id: MetricId, scope_label: String, taus: &[f64]) -> Self {
        Self {
            id,
            scope_label,
            taus: taus.to_vec(),
            em_d0: Vec::with_capacity(taus.len()),
            em_d1: Vec::with_capacity(taus.len()),
            em_all: Vec::with_capacity(taus.len()),
            fg: Vec::with_capacity(taus.len()),
            n_retained_d0: Vec::with_capacity(taus.len()),
            n_retained_d1: Vec::with_capacity(taus.len()),
        }
    }

    fn push(&mut self, d0: MetricValue, d1: MetricValue, all: MetricValue, counts: (usize, usize)) {
        let d0 = MetricValue { id: self.id, ..d0 }.with_group(GroupSel::D0);
        let d1 = MetricValue { id: self.id, ..d1 }.with_group(GroupSel::D1);
        let all = MetricValue { id: self.id, ..all }.with_group(GroupSel::All);
        self.fg.push(fairness_gap(&d0, &d1).expect("same id"));
        self.em_d0.push(d0);
        self.em_d1.push(d1);
        self.em_all.push(all);
        self.n_retained_d0.push(counts.0);
        self.n_retained_d1.push(counts.1);
    }

    pub fn name(&self) -> MetricName {
        self.id.name
    }

    /// Index of the `tau = 100` point, if on the grid.
    pub fn unfiltered_index(&self) -> Option<usize> {
        self.taus.iter().position(|&t| t == 100.0)
    }
}

/// QU-BraTS-style aggregate for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct QuBratsRow {
    pub region: String,
    pub d0: Option<f64>,
    pub d1: Option<f64>,
    pub all: Option<f64>,
    pub fg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub task: TaskKind,
    pub taus: Vec<f64>,
    pub curves: Vec<FairnessCurve>,
    pub qubrats: Vec<QuBratsRow>,
}

impl SweepResult {
    pub fn curve(&self, name: MetricName, scope: Scope) -> Option<&FairnessCurve> {
        self.curves.iter().find(|c| c.id == MetricId::new(name, scope))
    }
}

fn check_grid(grid: &[f64]) -> Result<(), SweepError> {
    let ok = !grid.is_empty()
        && grid.iter().all(|t| (0.0..=100.0).contains(t))
        && grid.windows(2).all(|w| w[0] > w[1]);
    if ok {
        Ok(())
    } else {
        Err(SweepError::BadGrid)
    }
}

const SELS: [GroupSel; 3] = [GroupSel::D0, GroupSel::D1, GroupSel::All];

fn in_sel(g: GroupLabel, sel: GroupSel) -> bool {
    match sel {
        GroupSel::D0 => g == GroupLabel::D0,
        GroupSel::D1 => g == GroupLabel::D1,
        GroupSel::All => true,
    }
}

/// Computes every fairness curve the task calls for over `grid`.
pub fn sweep_curves(set: &EvalSet, grid: &[f64]) -> Result<SweepResult, SweepError> {
    check_grid(grid)?;
    let (curves, qubrats) = match &set.data {
        EvalData::Classification { .. } => (sweep_classification(set, grid)?, Vec::new()),
        EvalData::Segmentation { .. } => sweep_segmentation(set, grid)?,
        EvalData::Regression { .. } => (sweep_regression(set, grid)?, Vec::new()),
    };
    Ok(SweepResult {
        task: set.task(),
        taus: grid.to_vec(),
        curves,
        qubrats,
    })
}

/// Instances of one group ordered by ascending uncertainty, with prefix
/// counts so that any threshold's retained set is a prefix.
struct SortedGroup {
    scores: Vec<f64>,
    correct: Vec<usize>,
    class_n: Vec<Vec<usize>>,
    class_correct: Vec<Vec<usize>>,
}

impl SortedGroup {
    fn build(members: &[usize], u: &[f64], truth: &[usize], pred: &[usize], c: usize) -> Self {
        let mut order = members.to_vec();
        order.sort_by(|&a, &b| u[a].total_cmp(&u[b]).then(a.cmp(&b)));
        let len = order.len();
        let mut correct = vec![0; len + 1];
        let mut class_n = vec![vec![0; len + 1]; c];
        let mut class_correct = vec![vec![0; len + 1]; c];
        for (k, &i) in order.iter().enumerate() {
            let hit = usize::from(truth[i] == pred[i]);
            correct[k + 1] = correct[k] + hit;
            for cls in 0..c {
                let is = usize::from(truth[i] == cls);
                class_n[cls][k + 1] = class_n[cls][k] + is;
                class_correct[cls][k + 1] = class_correct[cls][k] + is * hit;
            }
        }
        Self {
            scores: order.iter().map(|&i| u[i]).collect(),
            correct,
            class_n,
            class_correct,
        }
    }

    fn retained(&self, tau: f64) -> usize {
        self.scores.partition_point(|&s| s <= tau)
    }
}

fn sweep_classification(set: &EvalSet, grid: &[f64]) -> Result<Vec<FairnessCurve>, SweepError> {
    let EvalData::Classification {
        class_count,
        class_names,
        truth,
        mean_probs,
        pred,
        scores,
    } = &set.data
    else {
        unreachable!()
    };
    let c = *class_count;
    let u = &scores.normalized;
    let sorted: Vec<SortedGroup> = SELS
        .iter()
        .map(|&sel| {
            let members: Vec<usize> = (0..set.n()).filter(|&i| in_sel(set.groups[i], sel)).collect();
            SortedGroup::build(&members, u, truth, pred, c)
        })
        .collect();

    let mut acc = FairnessCurve::new(MetricId::new(MetricName::Accuracy, Scope::Overall), "overall".into(), grid);
    let mut bal = FairnessCurve::new(
        MetricId::new(MetricName::BalancedAccuracy, Scope::Overall),
        "overall".into(),
        grid,
    );
    let mut auc = FairnessCurve::new(MetricId::new(MetricName::MacroAuc, Scope::Overall), "overall".into(), grid);
    let mut per_class: Vec<FairnessCurve> = (0..c)
        .map(|k| {
            let label = class_names.get(k).cloned().unwrap_or_else(|| format!("class{k}"));
            FairnessCurve::new(MetricId::new(MetricName::ClassAccuracy, Scope::Class(k)), label, grid)
        })
        .collect();

    for &tau in grid {
        let ks: Vec<usize> = sorted.iter().map(|s| s.retained(tau)).collect();
        let counts = (ks[0], ks[1]);
        let value = |g: usize, num: usize, den: usize, id: MetricId| {
            let _ = g;
            MetricValue::new(id, (den > 0).then(|| num as f64 / den as f64), den)
        };
        let [a0, a1, a2] = [0, 1, 2].map(|g| value(g, sorted[g].correct[ks[g]], ks[g], acc.id));
        acc.push(a0, a1, a2, counts);

        let [b0, b1, b2] = [0, 1, 2].map(|g| {
            let n: Vec<usize> = (0..c).map(|k| sorted[g].class_n[k][ks[g]]).collect();
            let hit: Vec<usize> = (0..c).map(|k| sorted[g].class_correct[k][ks[g]]).collect();
            balanced_from_counts(&n, &hit)
        });
        bal.push(b0, b1, b2, counts);

        let mut aucs = Vec::with_capacity(3);
        for sel in SELS {
            let mask: Vec<bool> = (0..set.n())
                .map(|i| in_sel(set.groups[i], sel) && u[i] <= tau)
                .collect();
            aucs.push(metrics::macro_auc_ovr(truth, mean_probs, c, &mask)?);
        }
        auc.push(aucs[0], aucs[1], aucs[2], counts);

        for (k, curve) in per_class.iter_mut().enumerate() {
            let [p0, p1, p2] = [0, 1, 2].map(|g| {
                value(
                    g,
                    sorted[g].class_correct[k][ks[g]],
                    sorted[g].class_n[k][ks[g]],
                    curve.id,
                )
            });
            curve.push(p0, p1, p2, counts);
        }
    }
    let mut out = vec![acc, bal, auc];
    out.extend(per_class);
    Ok(out)
}

fn sweep_regression(set: &EvalSet, grid: &[f64]) -> Result<Vec<FairnessCurve>, SweepError> {
    let EvalData::Regression {
        target_names,
        truth,
        pred,
        scores,
    } = &set.data
    else {
        unreachable!()
    };
    let k = target_names.len();
    let n = set.n();
    let mut out = Vec::with_capacity(2 * k);
    for (t, name) in target_names.iter().enumerate() {
        let y: Vec<f64> = (0..n).map(|i| truth[i * k + t]).collect();
        let p: Vec<f64> = (0..n).map(|i| pred[i * k + t]).collect();
        let u = &scores[t].normalized;
        let mut rmse = FairnessCurve::new(MetricId::new(MetricName::Rmse, Scope::Target(t)), name.clone(), grid);
        let mut mae = FairnessCurve::new(MetricId::new(MetricName::Mae, Scope::Target(t)), name.clone(), grid);
        for &tau in grid {
            let masks: Vec<Vec<bool>> = SELS
                .iter()
                .map(|&sel| (0..n).map(|i| in_sel(set.groups[i], sel) && u[i] <= tau).collect())
                .collect();
            let r: Vec<MetricValue> = masks
                .iter()
                .map(|m| metrics::rmse(&y, &p, m, t))
                .collect::<Result<_, _>>()?;
            let a: Vec<MetricValue> = masks
                .iter()
                .map(|m| metrics::mae(&y, &p, m, t))
                .collect::<Result<_, _>>()?;
            let counts = (r[0].n_retained, r[1].n_retained);
            rmse.push(r[0], r[1], r[2], counts);
            mae.push(a[0], a[1], a[2], counts);
        }
        out.push(rmse);
        out.push(mae);
    }
    Ok(out)
}

/// Per-threshold confusion counts of one case for every region, plus the
/// unfiltered totals.
struct CaseStats {
    /// `[region][tau]`
    kept: Vec<Vec<Confusion>>,
    total: Vec<Confusion>,
}

fn case_stats(truth: &[u8], pred: &[u8], u: &[f64], regions: &[RegionDef], grid: &[f64]) -> CaseStats {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]).then(a.cmp(&b)));
    let mut kept = Vec::with_capacity(regions.len());
    let mut total = Vec::with_capacity(regions.len());
    for region in regions {
        let g = metrics::region_mask(truth, region);
        let p = metrics::region_mask(pred, region);
        let bump = |c: &mut Confusion, i: usize| match (p[i], g[i]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        };
        let mut all = Confusion::default();
        (0..u.len()).for_each(|i| bump(&mut all, i));
        // walk thresholds in ascending order, extending the retained prefix
        let mut per_tau = vec![Confusion::default(); grid.len()];
        let mut acc = Confusion::default();
        let mut next = 0;
        for (slot, &tau) in grid.iter().enumerate().rev() {
            while next < order.len() && u[order[next]] <= tau {
                bump(&mut acc, order[next]);
                next += 1;
            }
            per_tau[slot] = acc;
        }
        kept.push(per_tau);
        total.push(all);
    }
    CaseStats { kept, total }
}

type SegSweep = (Vec<FairnessCurve>, Vec<QuBratsRow>);

fn sweep_segmentation(set: &EvalSet, grid: &[f64]) -> Result<SegSweep, SweepError> {
    let EvalData::Segmentation {
        regions,
        truth,
        pred,
        scores,
    } = &set.data
    else {
        unreachable!()
    };
    let stats: Vec<CaseStats> = (0..set.n())
        .into_par_iter()
        .map(|i| case_stats(&truth[i], &pred[i], &scores[i], regions, grid))
        .collect();

    let mut curves = Vec::with_capacity(3 * regions.len());
    let mut rows = Vec::with_capacity(regions.len());
    for (r, region) in regions.iter().enumerate() {
        let scope = Scope::Region(r);
        let mut dice = FairnessCurve::new(MetricId::new(MetricName::Dice, scope), region.name.clone(), grid);
        let mut ftp = FairnessCurve::new(MetricId::new(MetricName::Ftp, scope), region.name.clone(), grid);
        let mut ftn = FairnessCurve::new(MetricId::new(MetricName::Ftn, scope), region.name.clone(), grid);
        for t in 0..grid.len() {
            let mut voxels = [0usize; 3];
            let mut dv = Vec::with_capacity(3);
            let mut pv = Vec::with_capacity(3);
            let mut nv = Vec::with_capacity(3);
            for (s, &sel) in SELS.iter().enumerate() {
                let (mut dsum, mut dn) = (0.0, 0usize);
                let (mut psum, mut nsum, mut cases) = (0.0, 0.0, 0usize);
                for (i, st) in stats.iter().enumerate() {
                    if !in_sel(set.groups[i], sel) {
                        continue;
                    }
                    let kept = st.kept[r][t];
                    let all = st.total[r];
                    voxels[s] += kept.retained();
                    if let Some(d) = kept.dice() {
                        dsum += d;
                        dn += 1;
                    }
                    psum += metrics::filtered_ratio(all.tp, kept.tp);
                    nsum += metrics::filtered_ratio(all.tn, kept.tn);
                    cases += 1;
                }
                dv.push(MetricValue::new(dice.id, (dn > 0).then(|| dsum / dn as f64), dn));
                let mean = |x: f64| (cases > 0).then(|| x / cases as f64);
                pv.push(MetricValue::new(ftp.id, mean(psum), cases));
                nv.push(MetricValue::new(ftn.id, mean(nsum), cases));
            }
            let counts = (voxels[0], voxels[1]);
            dice.push(dv[0], dv[1], dv[2], counts);
            ftp.push(pv[0], pv[1], pv[2], counts);
            ftn.push(nv[0], nv[1], nv[2], counts);
        }
        let score = |sel: fn(&FairnessCurve) -> &Vec<MetricValue>| -> Result<Option<f64>, MetricError> {
            let vals = |c: &FairnessCurve| sel(c).iter().map(|v| v.value).collect::<Vec<_>>();
            metrics::qubrats_score(grid, &vals(&dice), &vals(&ftp), &vals(&ftn))
        };
        let d0 = score(|c| &c.em_d0)?;
        let d1 = score(|c| &c.em_d1)?;
        let all = score(|c| &c.em_all)?;
        rows.push(QuBratsRow {
            region: region.name.clone(),
            d0,
            d1,
            all,
            fg: d0.zip(d1).map(|(a, b)| (a - b).abs()),
        });
        curves.push(dice);
        curves.push(ftp);
        curves.push(ftn);
    }
    Ok((curves, rows))
}

/// Flags for one adjacent pair of defined points, `tau_hi > tau_lo`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFlags {
    pub tau_hi: f64,
    pub tau_lo: f64,
    pub fg_improved: bool,
    pub em_improved_d0: bool,
    pub em_improved_d1: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorReport {
    pub pairs: Vec<PairFlags>,
    pub fg_improved_fraction: f64,
    pub em_improved_d0_fraction: f64,
    pub em_improved_d1_fraction: f64,
}

/// Checks the desired behavior under stronger filtering: the gap should
/// not grow and neither group's metric should get worse. Only thresholds
/// where the gap is defined take part.
pub fn desired_behavior_flags(curve: &FairnessCurve) -> Result<BehaviorReport, SweepError> {
    let defined: Vec<usize> = (0..curve.taus.len()).filter(|&i| curve.fg[i].is_some()).collect();
    if defined.len() < 2 {
        return Err(SweepError::TooFewPoints { found: defined.len() });
    }
    let lower_better = curve.id.name.is_error_like();
    let improved = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
        (Some(lo), Some(hi)) => {
            if lower_better {
                lo <= hi
            } else {
                lo >= hi
            }
        }
        _ => false,
    };
    let mut pairs = Vec::with_capacity(defined.len() - 1);
    for w in defined.windows(2) {
        // taus descend, so w[0] is the larger threshold
        let (hi, lo) = (w[0], w[1]);
        pairs.push(PairFlags {
            tau_hi: curve.taus[hi],
            tau_lo: curve.taus[lo],
            fg_improved: curve.fg[lo].unwrap() <= curve.fg[hi].unwrap(),
            em_improved_d0: improved(curve.em_d0[lo].value, curve.em_d0[hi].value),
            em_improved_d1: improved(curve.em_d1[lo].value, curve.em_d1[hi].value),
        });
    }
    let frac = |f: fn(&PairFlags) -> bool| pairs.iter().filter(|p| f(p)).count() as f64 / pairs.len() as f64;
    Ok(BehaviorReport {
        fg_improved_fraction: frac(|p| p.fg_improved),
        em_improved_d0_fraction: frac(|p| p.em_improved_d0),
        em_improved_d1_fraction: frac(|p| p.em_improved_d1),
        pairs,
    })
}
