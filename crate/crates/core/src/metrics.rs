//! Task evaluation metrics. Every metric takes a `retained` mask so the
//! threshold sweep can score only the predictions that survive filtering.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::manifest::RegionDef;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("voxel grids differ: {expected} vs {found} voxels")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("curves are not on a common grid of {expected} thresholds (got {found})")]
    GridMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Accuracy,
    BalancedAccuracy,
    MacroAuc,
    ClassAccuracy,
    Dice,
    Ftp,
    Ftn,
    Rmse,
    Mae,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Accuracy => "accuracy",
            MetricName::BalancedAccuracy => "balanced_accuracy",
            MetricName::MacroAuc => "macro_auc",
            MetricName::ClassAccuracy => "class_accuracy",
            MetricName::Dice => "dice",
            MetricName::Ftp => "ftp",
            MetricName::Ftn => "ftn",
            MetricName::Rmse => "rmse",
            MetricName::Mae => "mae",
        }
    }

    /// Lower values are better.
    pub fn is_error_like(self) -> bool {
        matches!(
            self,
            MetricName::Rmse | MetricName::Mae | MetricName::Ftp | MetricName::Ftn
        )
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Overall,
    Class(usize),
    Region(usize),
    Target(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetricId {
    pub name: MetricName,
    pub scope: Scope,
}

impl MetricId {
    pub fn new(name: MetricName, scope: Scope) -> Self {
        Self { name, scope }
    }
}

/// Which subset of the evaluation set a value was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupSel {
    D0,
    D1,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub id: MetricId,
    pub group: GroupSel,
    /// `None` when nothing contributed.
    pub value: Option<f64>,
    pub n_retained: usize,
}

impl MetricValue {
    pub fn new(id: MetricId, value: Option<f64>, n_retained: usize) -> Self {
        Self {
            id,
            group: GroupSel::All,
            value,
            n_retained,
        }
    }

    pub fn with_group(mut self, group: GroupSel) -> Self {
        self.group = group;
        self
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), MetricError> {
    if expected == found {
        Ok(())
    } else {
        Err(MetricError::LengthMismatch {
            what,
            expected,
            found,
        })
    }
}

fn check_cls(truth: &[usize], pred: &[usize], retained: &[bool]) -> Result<(), MetricError> {
    check_len("pred", truth.len(), pred.len())?;
    check_len("retained", truth.len(), retained.len())
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn accuracy(truth: &[usize], pred: &[usize], retained: &[bool]) -> Result<MetricValue, MetricError> {
    check_cls(truth, pred, retained)?;
    let (mut n, mut correct) = (0, 0);
    for ((t, p), &keep) in truth.iter().zip(pred).zip(retained) {
        if keep {
            n += 1;
            correct += usize::from(t == p);
        }
    }
    Ok(MetricValue::new(
        MetricId::new(MetricName::Accuracy, Scope::Overall),
        ratio(correct, n),
        n,
    ))
}

pub fn per_class_accuracy(
    truth: &[usize],
    pred: &[usize],
    retained: &[bool],
    class: usize,
) -> Result<MetricValue, MetricError> {
    check_cls(truth, pred, retained)?;
    let (mut n, mut correct) = (0, 0);
    for ((&t, &p), &keep) in truth.iter().zip(pred).zip(retained) {
        if keep && t == class {
            n += 1;
            correct += usize::from(p == class);
        }
    }
    Ok(MetricValue::new(
        MetricId::new(MetricName::ClassAccuracy, Scope::Class(class)),
        ratio(correct, n),
        n,
    ))
}

/// Mean per-class recall over classes that still have a retained instance.
pub fn balanced_accuracy(
    truth: &[usize],
    pred: &[usize],
    retained: &[bool],
    class_count: usize,
) -> Result<MetricValue, MetricError> {
    check_cls(truth, pred, retained)?;
    let mut n = vec![0usize; class_count];
    let mut correct = vec![0usize; class_count];
    for ((&t, &p), &keep) in truth.iter().zip(pred).zip(retained) {
        if keep {
            n[t] += 1;
            correct[t] += usize::from(p == t);
        }
    }
    Ok(balanced_from_counts(&n, &correct))
}

pub(crate) fn balanced_from_counts(n: &[usize], correct: &[usize]) -> MetricValue {
    let recalls: Vec<f64> = n
        .iter()
        .zip(correct)
        .filter(|(n, _)| **n > 0)
        .map(|(&n, &c)| c as f64 / n as f64)
        .collect();
    let value = (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64);
    MetricValue::new(
        MetricId::new(MetricName::BalancedAccuracy, Scope::Overall),
        value,
        n.iter().sum(),
    )
}

/// One-vs-rest AUC of `scores` for the `positive` flags, counting ties as
/// one half. `None` unless both classes are present.
///
/// Uses the Mann-Whitney rank sum with mid-ranks for ties.
pub fn rank_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps mid-ranks integral.
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j, midrank (i+1+j)/2
        let mid_x2 = (i + 1 + j) as u128;
        let pos_in_tie = order[i..j].iter().filter(|&&k| positive[k]).count() as u128;
        rank_sum_x2 += mid_x2 * pos_in_tie;
        i = j;
    }
    let np = n_pos as u128;
    // U statistic doubled: 2R - np(np+1)
    let u_x2 = rank_sum_x2 - np * (np + 1);
    Some(u_x2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Macro-averaged one-vs-rest AUC over classes that have at least one
/// retained positive and one retained negative. `probs` is row-major `[N, C]`.
pub fn macro_auc_ovr(
    truth: &[usize],
    probs: &[f64],
    class_count: usize,
    retained: &[bool],
) -> Result<MetricValue, MetricError> {
    check_len("probs", truth.len() * class_count, probs.len())?;
    check_len("retained", truth.len(), retained.len())?;
    let kept: Vec<usize> = (0..truth.len()).filter(|&i| retained[i]).collect();
    let positive_of = |c: usize| kept.iter().map(|&i| truth[i] == c).collect::<Vec<_>>();
    let mut aucs = Vec::new();
    for c in 0..class_count {
        let scores: Vec<f64> = kept.iter().map(|&i| probs[i * class_count + c]).collect();
        if let Some(a) = rank_auc(&scores, &positive_of(c)) {
            aucs.push(a);
        }
    }
    let value = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    Ok(MetricValue::new(
        MetricId::new(MetricName::MacroAuc, Scope::Overall),
        value,
        kept.len(),
    ))
}

pub fn region_mask(label_map: &[u8], region: &RegionDef) -> Vec<bool> {
    let mut member = [false; 256];
    for &l in &region.labels {
        member[l as usize] = true;
    }
    label_map.iter().map(|&l| member[l as usize]).collect()
}

/// Confusion counts over retained voxels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn retained(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `2|P and G| / (|P| + |G|)`; both empty gives 1, no retained voxels
    /// gives `None`.
    pub fn dice(&self) -> Option<f64> {
        if self.retained() == 0 {
            return None;
        }
        let denom = 2 * self.tp + self.fp + self.fn_;
        Some(if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        })
    }
}

fn confusion(pred: &[bool], truth: &[bool], retained: &[bool]) -> Result<(Confusion, Confusion), MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::ShapeMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if retained.len() != truth.len() {
        return Err(MetricError::ShapeMismatch {
            expected: truth.len(),
            found: retained.len(),
        });
    }
    let mut all = Confusion::default();
    let mut kept = Confusion::default();
    for ((&p, &g), &keep) in pred.iter().zip(truth).zip(retained) {
        let slot = |c: &mut Confusion| match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        };
        slot(&mut all);
        if keep {
            slot(&mut kept);
        }
    }
    Ok((all, kept))
}

pub fn dice(pred: &[bool], truth: &[bool], retained: &[bool]) -> Result<MetricValue, MetricError> {
    let (_, kept) = confusion(pred, truth, retained)?;
    Ok(MetricValue::new(
        MetricId::new(MetricName::Dice, Scope::Overall),
        kept.dice(),
        kept.retained(),
    ))
}

/// Fraction of lost true positives / true negatives, `(TP_all - TP_kept) / TP_all`.
/// A zero denominator yields 0.
pub fn filtered_ratio(total: usize, kept: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        (total - kept) as f64 / total as f64
    }
}

pub fn ftp_ftn(pred: &[bool], truth: &[bool], retained: &[bool]) -> Result<(f64, f64), MetricError> {
    let (all, kept) = confusion(pred, truth, retained)?;
    Ok((filtered_ratio(all.tp, kept.tp), filtered_ratio(all.tn, kept.tn)))
}

/// Trapezoidal mean of `ys` over the threshold grid `taus`, restricted to
/// the points where `ys` is defined. One defined point yields that value.
pub fn trapezoid_mean(taus: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(taus.len(), ys.len());
    if ys.len() == 1 {
        return ys[0];
    }
    let span = (taus[0] - taus[taus.len() - 1]).abs();
    if span == 0.0 {
        return ys.iter().sum::<f64>() / ys.len() as f64;
    }
    let area: f64 = taus
        .windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| (t[0] - t[1]).abs() * (y[0] + y[1]) / 2.0)
        .sum();
    area / span
}

/// Aggregate uncertainty score on a 0..100 scale:
/// `100 * (AUC(dice) + (1 - AUC(ftp)) + (1 - AUC(ftn))) / 3`.
///
/// Points where any of the three series is undefined are skipped; `None` if
/// none remain.
pub fn qubrats_score(
    taus: &[f64],
    dice: &[Option<f64>],
    ftp: &[Option<f64>],
    ftn: &[Option<f64>],
) -> Result<Option<f64>, MetricError> {
    for s in [dice.len(), ftp.len(), ftn.len()] {
        if s != taus.len() {
            return Err(MetricError::GridMismatch {
                expected: taus.len(),
                found: s,
            });
        }
    }
    let mut t = Vec::new();
    let (mut d, mut p, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..taus.len() {
        if let (Some(a), Some(b), Some(c)) = (dice[i], ftp[i], ftn[i]) {
            t.push(taus[i]);
            d.push(a);
            p.push(b);
            n.push(c);
        }
    }
    if t.is_empty() {
        return Ok(None);
    }
    let score = (trapezoid_mean(&t, &d) + (1.0 - trapezoid_mean(&t, &p)) + (1.0 - trapezoid_mean(&t, &n))) / 3.0;
    Ok(Some(100.0 * score))
}

fn check_reg(truth: &[f64], pred: &[f64], retained: &[bool]) -> Result<(), MetricError> {
    check_len("pred", truth.len(), pred.len())?;
    check_len("retained", truth.len(), retained.len())
}

pub fn rmse(truth: &[f64], pred: &[f64], retained: &[bool], target: usize) -> Result<MetricValue, MetricError> {
    check_reg(truth, pred, retained)?;
    let (mut n, mut sq) = (0usize, 0.0);
    for ((t, p), &keep) in truth.iter().zip(pred).zip(retained) {
        if keep {
            n += 1;
            sq += (p - t) * (p - t);
        }
    }
    Ok(MetricValue::new(
        MetricId::new(MetricName::Rmse, Scope::Target(target)),
        (n > 0).then(|| (sq / n as f64).sqrt()),
        n,
    ))
}

pub fn mae(truth: &[f64], pred: &[f64], retained: &[bool], target: usize) -> Result<MetricValue, MetricError> {
    check_reg(truth, pred, retained)?;
    let (mut n, mut abs) = (0usize, 0.0);
    for ((t, p), &keep) in truth.iter().zip(pred).zip(retained) {
        if keep {
            n += 1;
            abs += (p - t).abs();
        }
    }
    Ok(MetricValue::new(
        MetricId::new(MetricName::Mae, Scope::Target(target)),
        (n > 0).then(|| abs / n as f64),
        n,
    ))
}
