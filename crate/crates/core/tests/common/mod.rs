//! Independent reference computations for integration tests. Everything
//! here recomputes from raw inputs with plain loops and masks, never
//! through the crate's sweep or metric code.

#![allow(dead_code)]

use std::path::Path;

use tempfile::TempDir;
use uqfair::manifest::{load_manifest, EvalManifest, GroupLabel, McPredictions, TaskKind, Truth};
use uqfair::metrics::{MetricId, MetricName, Scope};
use uqfair::sweep::{EvalData, EvalSet, SweepResult};
use uqfair::synth::{gen_synth, SynthConfig};

/// Per threshold: `[d0, d1, all, fg]`.
pub type NaiveCurve = (MetricId, Vec<[Option<f64>; 4]>);

pub fn small_config(task: TaskKind, seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::new(task);
    cfg.seed = seed;
    match task {
        TaskKind::Classification => {
            cfg.m = 20 + (seed as usize * 7) % 20;
            cfg.l = 10 + (seed as usize * 3) % 15;
            cfg.classes = 2 + seed as usize % 3;
            cfg.feature_dim = 2 + seed as usize % 3;
            cfg.mc_samples = 8;
        }
        TaskKind::Segmentation => {
            cfg.m = 5;
            cfg.l = 5;
            cfg.volume_dims = [8, 8, 8];
            cfg.radii = Some([3.5, 2.5, 1.5]);
            cfg.mc_samples = 6;
        }
        TaskKind::Regression => {
            cfg.m = 20 + (seed as usize * 5) % 20;
            cfg.l = 10 + (seed as usize * 3) % 15;
            cfg.targets = 1 + seed as usize % 2;
            cfg.mc_samples = 8;
        }
    }
    cfg
}

pub fn synth_manifest(cfg: &SynthConfig) -> (TempDir, EvalManifest) {
    let dir = tempfile::tempdir().unwrap();
    gen_synth(cfg, dir.path()).unwrap();
    let m = load_manifest(dir.path().join("manifest.json")).unwrap();
    (dir, m)
}

pub fn brute_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for (i, &pi) in positive.iter().enumerate() {
        if !pi {
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

fn in_group(g: GroupLabel, sel: usize) -> bool {
    sel == 2 || g.index() == sel
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn gap(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

struct ClsView<'a> {
    c: usize,
    truth: &'a [usize],
    probs: &'a [f64],
    groups: &'a [GroupLabel],
}

fn cls_metrics(v: &ClsView, keep: &[bool]) -> Vec<(MetricId, Option<f64>)> {
    let c = v.c;
    let pred: Vec<usize> = (0..v.truth.len()).map(|i| argmax(&v.probs[i * c..(i + 1) * c])).collect();
    let idx: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    let acc = (!idx.is_empty())
        .then(|| idx.iter().filter(|&&i| pred[i] == v.truth[i]).count() as f64 / idx.len() as f64);
    let class_acc: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let members: Vec<usize> = idx.iter().copied().filter(|&i| v.truth[i] == k).collect();
            (!members.is_empty())
                .then(|| members.iter().filter(|&&i| pred[i] == k).count() as f64 / members.len() as f64)
        })
        .collect();
    let recalls: Vec<f64> = class_acc.iter().flatten().copied().collect();
    let aucs: Vec<f64> = (0..c)
        .filter_map(|k| {
            let s: Vec<f64> = idx.iter().map(|&i| v.probs[i * c + k]).collect();
            let p: Vec<bool> = idx.iter().map(|&i| v.truth[i] == k).collect();
            brute_auc(&s, &p)
        })
        .collect();
    let mut out = vec![
        (MetricId::new(MetricName::Accuracy, Scope::Overall), acc),
        (MetricId::new(MetricName::BalancedAccuracy, Scope::Overall), mean(&recalls)),
        (MetricId::new(MetricName::MacroAuc, Scope::Overall), mean(&aucs)),
    ];
    for (k, a) in class_acc.into_iter().enumerate() {
        out.push((MetricId::new(MetricName::ClassAccuracy, Scope::Class(k)), a));
    }
    out
}

fn reg_metrics(truth: &[f64], pred: &[f64], keep: &[bool], t: usize) -> Vec<(MetricId, Option<f64>)> {
    let errs: Vec<f64> = (0..truth.len()).filter(|&i| keep[i]).map(|i| pred[i] - truth[i]).collect();
    let sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
    let abs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
    vec![
        (MetricId::new(MetricName::Rmse, Scope::Target(t)), mean(&sq).map(f64::sqrt)),
        (MetricId::new(MetricName::Mae, Scope::Target(t)), mean(&abs)),
    ]
}

/// `(dice, ftp, ftn)` of one case and region at threshold `tau`.
fn seg_case(truth: &[u8], pred: &[u8], u: &[f64], labels: &[u8], tau: f64) -> (Option<f64>, f64, f64) {
    let (mut tp, mut fp, mut fn_, mut tn, mut kept) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let (mut tp_all, mut tn_all) = (0usize, 0usize);
    for v in 0..truth.len() {
        let g = labels.contains(&truth[v]);
        let p = labels.contains(&pred[v]);
        tp_all += usize::from(g && p);
        tn_all += usize::from(!g && !p);
        if u[v] > tau {
            continue;
        }
        kept += 1;
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let dice = if kept == 0 {
        None
    } else if tp + fp + fn_ == 0 {
        Some(1.0)
    } else {
        Some(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
    };
    let lost = |all: usize, k: usize| if all == 0 { 0.0 } else { (all - k) as f64 / all as f64 };
    (dice, lost(tp_all, tp), lost(tn_all, tn))
}

/// Recomputes every curve by filtering and scoring from scratch at each
/// threshold.
pub fn naive_curves(set: &EvalSet, grid: &[f64]) -> Vec<NaiveCurve> {
    let n = set.n();
    let mut curves: Vec<NaiveCurve> = Vec::new();
    let mut push = |id: MetricId, t: usize, sel: usize, v: Option<f64>| {
        let pos = match curves.iter().position(|c| c.0 == id) {
            Some(p) => p,
            None => {
                curves.push((id, vec![[None; 4]; grid.len()]));
                curves.len() - 1
            }
        };
        curves[pos].1[t][sel] = v;
    };
    match &set.data {
        EvalData::Classification {
            class_count,
            truth,
            mean_probs,
            scores,
            ..
        } => {
            let view = ClsView {
                c: *class_count,
                truth,
                probs: mean_probs,
                groups: &set.groups,
            };
            for (t, &tau) in grid.iter().enumerate() {
                for sel in 0..3 {
                    let keep: Vec<bool> = (0..n)
                        .map(|i| in_group(view.groups[i], sel) && scores.normalized[i] <= tau)
                        .collect();
                    for (id, v) in cls_metrics(&view, &keep) {
                        push(id, t, sel, v);
                    }
                }
            }
        }
        EvalData::Regression {
            target_names,
            truth,
            pred,
            scores,
        } => {
            let k = target_names.len();
            for tg in 0..k {
                let y: Vec<f64> = (0..n).map(|i| truth[i * k + tg]).collect();
                let p: Vec<f64> = (0..n).map(|i| pred[i * k + tg]).collect();
                for (t, &tau) in grid.iter().enumerate() {
                    for sel in 0..3 {
                        let keep: Vec<bool> = (0..n)
                            .map(|i| in_group(set.groups[i], sel) && scores[tg].normalized[i] <= tau)
                            .collect();
                        for (id, v) in reg_metrics(&y, &p, &keep, tg) {
                            push(id, t, sel, v);
                        }
                    }
                }
            }
        }
        EvalData::Segmentation {
            regions,
            truth,
            pred,
            scores,
        } => {
            for (r, region) in regions.iter().enumerate() {
                for (t, &tau) in grid.iter().enumerate() {
                    for sel in 0..3 {
                        let (mut dice, mut ftp, mut ftn) = (Vec::new(), Vec::new(), Vec::new());
                        for i in (0..n).filter(|&i| in_group(set.groups[i], sel)) {
                            let (d, p, q) = seg_case(&truth[i], &pred[i], &scores[i], &region.labels, tau);
                            dice.extend(d);
                            ftp.push(p);
                            ftn.push(q);
                        }
                        push(MetricId::new(MetricName::Dice, Scope::Region(r)), t, sel, mean(&dice));
                        push(MetricId::new(MetricName::Ftp, Scope::Region(r)), t, sel, mean(&ftp));
                        push(MetricId::new(MetricName::Ftn, Scope::Region(r)), t, sel, mean(&ftn));
                    }
                }
            }
        }
    }
    for (_, pts) in &mut curves {
        for p in pts.iter_mut() {
            p[3] = gap(p[0], p[1]);
        }
    }
    curves
}

/// Largest absolute difference between swept and naive curves; infinite
/// when a curve is missing or definedness differs.
pub fn max_deviation(result: &SweepResult, naive: &[NaiveCurve]) -> f64 {
    if result.curves.len() != naive.len() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for (id, pts) in naive {
        let Some(c) = result.curves.iter().find(|c| c.id == *id) else {
            return f64::INFINITY;
        };
        for (t, p) in pts.iter().enumerate() {
            let got = [c.em_d0[t].value, c.em_d1[t].value, c.em_all[t].value, c.fg[t]];
            for (a, b) in got.iter().zip(p) {
                match (a, b) {
                    (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                    (None, None) => {}
                    _ => return f64::INFINITY,
                }
            }
        }
    }
    worst
}

fn entropy_nats(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Unfiltered metric per subgroup straight from the manifest's stacks:
/// `(id, [d0, d1, all, fg])` for the headline metric of each scope.
pub fn direct_unfiltered(m: &EvalManifest) -> Vec<(MetricId, [Option<f64>; 4])> {
    let n = m.n();
    let groups: Vec<GroupLabel> = m.instances.iter().map(|r| r.group).collect();
    let preds: Vec<McPredictions> = m.instances.iter().map(|r| m.load_predictions(r).unwrap()).collect();
    let mut out: Vec<(MetricId, [Option<f64>; 4])> = Vec::new();
    let finish = |mut v: [Option<f64>; 4]| {
        v[3] = gap(v[0], v[1]);
        v
    };
    match m.task {
        TaskKind::Classification => {
            let c = m.class_count();
            let mut probs = Vec::with_capacity(n * c);
            let truth: Vec<usize> = m
                .instances
                .iter()
                .map(|r| match r.truth {
                    Truth::Class(y) => y,
                    _ => unreachable!(),
                })
                .collect();
            for p in &preds {
                let McPredictions::Classification(cs) = p else { unreachable!() };
                let t = cs.samples();
                for k in 0..c {
                    probs.push((0..t).map(|s| cs.sample(s)[k]).sum::<f64>() / t as f64);
                }
            }
            let view = ClsView {
                c,
                truth: &truth,
                probs: &probs,
                groups: &groups,
            };
            let per_sel: Vec<Vec<(MetricId, Option<f64>)>> = (0..3)
                .map(|sel| {
                    let keep: Vec<bool> = groups.iter().map(|&g| in_group(g, sel)).collect();
                    cls_metrics(&view, &keep)
                })
                .collect();
            for (j, (id, _)) in per_sel[0].iter().enumerate() {
                out.push((*id, finish([per_sel[0][j].1, per_sel[1][j].1, per_sel[2][j].1, None])));
            }
        }
        TaskKind::Regression => {
            let k = m.target_count();
            for tg in 0..k {
                let y: Vec<f64> = m
                    .instances
                    .iter()
                    .map(|r| match &r.truth {
                        Truth::Values(v) => v[tg],
                        _ => unreachable!(),
                    })
                    .collect();
                let p: Vec<f64> = preds
                    .iter()
                    .map(|p| {
                        let McPredictions::Regression(rs) = p else { unreachable!() };
                        (0..rs.samples()).map(|s| rs.mean_at(s, tg)).sum::<f64>() / rs.samples() as f64
                    })
                    .collect();
                let per_sel: Vec<_> = (0..3)
                    .map(|sel| {
                        let keep: Vec<bool> = groups.iter().map(|&g| in_group(g, sel)).collect();
                        reg_metrics(&y, &p, &keep, tg)
                    })
                    .collect();
                for (j, &(id, d0)) in per_sel[0].iter().enumerate().take(2) {
                    out.push((id, finish([d0, per_sel[1][j].1, per_sel[2][j].1, None])));
                }
            }
        }
        TaskKind::Segmentation => {
            let c = m.class_count();
            let cases: Vec<(Vec<u8>, Vec<u8>)> = m
                .instances
                .iter()
                .zip(&preds)
                .map(|(r, p)| {
                    let truth = m.load_label_map(r).unwrap().labels;
                    let McPredictions::Segmentation(uqfair::manifest::SegPredictions::Full { samples, probs, .. }) = p
                    else {
                        panic!("reference expects full stacks")
                    };
                    let v = truth.len();
                    let pred = (0..v)
                        .map(|vx| {
                            let mean: Vec<f64> = (0..c)
                                .map(|k| (0..*samples).map(|t| probs[(t * c + k) * v + vx]).sum::<f64>())
                                .collect();
                            argmax(&mean) as u8
                        })
                        .collect();
                    (truth, pred)
                })
                .collect();
            for (r, region) in m.regions.iter().enumerate() {
                let mut v = [None; 4];
                for (sel, slot) in v.iter_mut().take(3).enumerate() {
                    let dice: Vec<f64> = (0..n)
                        .filter(|&i| in_group(groups[i], sel))
                        .filter_map(|i| {
                            let ones = vec![0.0; cases[i].0.len()];
                            seg_case(&cases[i].0, &cases[i].1, &ones, &region.labels, 100.0).0
                        })
                        .collect();
                    *slot = mean(&dice);
                }
                out.push((MetricId::new(MetricName::Dice, Scope::Region(r)), finish(v)));
            }
        }
    }
    out
}

/// Entropy of the mean of each classification stack (reference for the
/// uncertainty module).
pub fn reference_entropies(m: &EvalManifest) -> Vec<f64> {
    m.instances
        .iter()
        .map(|r| {
            let McPredictions::Classification(cs) = m.load_predictions(r).unwrap() else {
                unreachable!()
            };
            let t = cs.samples();
            let mean: Vec<f64> = (0..cs.classes())
                .map(|k| (0..t).map(|s| cs.sample(s)[k]).sum::<f64>() / t as f64)
                .collect();
            entropy_nats(&mean)
        })
        .collect()
}

pub fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

use uqfair::rng::SplitMix64;
use uqfair::toy::{toy_gradients, Batch, BatchTargets, Head, ParamBlock, ToyModel};

/// Random model and batch; every other configuration carries fixed dropout
/// masks and non-uniform row weights.
pub fn random_gradient_case(seed: u64, regression: bool) -> (ToyModel, Batch) {
    let mut rng = SplitMix64::new(seed);
    let d = 1 + rng.below(5);
    let h = 2 + rng.below(7);
    let n = 1 + rng.below(6);
    let head = if regression {
        Head::Regressor { targets: 1 + rng.below(3) }
    } else {
        Head::Classifier { classes: 2 + rng.below(4) }
    };
    let mut model = ToyModel::init(d, h, head, 0.3, &mut rng);
    for b in ParamBlock::ALL {
        for v in model.block_mut(b) {
            *v += 0.3 * rng.normal();
        }
    }
    let x: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
    let targets = match head {
        Head::Classifier { classes } => BatchTargets::Classes((0..n).map(|_| rng.below(classes)).collect()),
        Head::Regressor { targets } => BatchTargets::Values((0..n * targets).map(|_| rng.normal()).collect()),
    };
    let mut batch = Batch::uniform(n, x, targets);
    if seed % 2 == 1 {
        batch.masks = Some((0..n).flat_map(|_| model.sample_mask(&mut rng)).collect());
        let w: Vec<f64> = (0..n).map(|_| rng.uniform(0.1, 1.0)).collect();
        let s: f64 = w.iter().sum();
        batch.weights = w.into_iter().map(|v| v / s).collect();
    }
    (model, batch)
}

/// Per parameter block, `||analytic - numeric|| / max(||analytic||, ||numeric||)`
/// with central differences at step `h`.
pub fn gradient_errors(model: &ToyModel, batch: &Batch, h: f64) -> Vec<(ParamBlock, f64)> {
    let g = toy_gradients(model, batch);
    ParamBlock::ALL
        .iter()
        .map(|&blk| {
            let mut probe = model.clone();
            let numeric: Vec<f64> = (0..model.block(blk).len())
                .map(|k| {
                    let orig = probe.block(blk)[k];
                    probe.block_mut(blk)[k] = orig + h;
                    let up = probe.loss(batch);
                    probe.block_mut(blk)[k] = orig - h;
                    let down = probe.loss(batch);
                    probe.block_mut(blk)[k] = orig;
                    (up - down) / (2.0 * h)
                })
                .collect();
            let analytic = g.block(blk);
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
            let scale = norm(analytic).max(norm(&numeric));
            (blk, if scale == 0.0 { 0.0 } else { norm(&diff) / scale })
        })
        .collect()
}

/// Skin-lesion training counts per class for D0 and D1.
pub const LESION_COUNTS: [[usize; 8]; 2] = [
    [1835, 1638, 1895, 594, 1388, 50, 68, 470],
    [1161, 8280, 585, 99, 513, 122, 100, 52],
];
/// Counts expected after per-(class, group) undersampling.
pub const LESION_BALANCED: [usize; 8] = [1161, 1638, 585, 99, 513, 50, 68, 52];

/// `(em_d0, em_d1, reported_gap)` rows from published result tables.
pub const GAP_ROWS: [(f64, f64, f64); 4] = [
    (90.34, 86.99, 3.35),
    (85.14, 70.33, 14.81),
    (78.74, 76.83, 1.91),
    (9.68, 8.18, 1.50),
];

pub fn lesion_labels() -> (Vec<GroupLabel>, Vec<usize>) {
    let mut groups = Vec::new();
    let mut classes = Vec::new();
    for (g, row) in LESION_COUNTS.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            groups.extend(std::iter::repeat_n(GroupLabel::try_from(g as u8).unwrap(), n));
            classes.extend(std::iter::repeat_n(c, n));
        }
    }
    (groups, classes)
}

/// `[group][class]` counts of the selected rows.
pub fn cell_counts(idx: &[usize], groups: &[GroupLabel], classes: &[usize]) -> [[usize; 8]; 2] {
    let mut out = [[0; 8]; 2];
    for &i in idx {
        out[groups[i].index()][classes[i]] += 1;
    }
    out
}
