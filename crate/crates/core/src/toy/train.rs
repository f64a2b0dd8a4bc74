use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{
    ClassSamples, EvalManifest, GroupLabel, McPredictions, RegressionSamples, TaskKind, Truth,
};
use crate::rng::SplitMix64;
use crate::tensor::read_tensor;

use super::groupdro::{groupdro_step, GroupWeights};
use super::model::{softmax_probs, toy_gradients, Batch, BatchTargets, Head, ParamBlock, ToyModel};
use super::resample::balanced_resample_indices;
use super::ToyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Baseline,
    Balanced,
    GroupDro,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Strategy::Baseline),
            "balanced" => Ok(Strategy::Balanced),
            "groupdro" => Ok(Strategy::GroupDro),
            _ => Err(format!("unknown strategy '{s}' (baseline, balanced, groupdro)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Step size of the group-weight update.
    pub groupdro_step: f64,
    pub ensemble_size: usize,
    pub dropout_samples: usize,
    pub hidden_width: usize,
    pub dropout_p: f64,
    /// Gradient norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Baseline,
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.05,
            groupdro_step: 0.01,
            ensemble_size: 3,
            dropout_samples: 20,
            hidden_width: 16,
            dropout_p: 0.2,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: &str| Err(ToyError::BadConfig(m.to_string()));
        if self.ensemble_size == 0 || self.dropout_samples == 0 {
            return bad("ensemble size and dropout samples must be at least 1");
        }
        if self.hidden_width == 0 || self.batch_size == 0 {
            return bad("hidden width and batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout probability must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.groupdro_step > 0.0) {
            return bad("step sizes must be positive");
        }
        Ok(())
    }

    /// Monte-Carlo samples per instance, `E * S`.
    pub fn total_samples(&self) -> usize {
        self.ensemble_size * self.dropout_samples
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { classes: usize, y: Vec<usize> },
    /// Row-major `[N, K]`.
    Values { targets: usize, y: Vec<f64> },
}

/// Features, targets and group labels held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub dim: usize,
    /// Row-major `[N, dim]`.
    pub x: Vec<f64>,
    pub targets: Targets,
    pub groups: Vec<GroupLabel>,
    pub ids: Vec<String>,
}

impl ToyDataset {
    pub fn n(&self) -> usize {
        self.groups.len()
    }

    pub fn head(&self) -> Head {
        match self.targets {
            Targets::Classes { classes, .. } => Head::Classifier { classes },
            Targets::Values { targets, .. } => Head::Regressor { targets },
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { y, .. } => Some(y),
            Targets::Values { .. } => None,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let targets = match &self.targets {
            Targets::Classes { classes, y } => Targets::Classes {
                classes: *classes,
                y: idx.iter().map(|&i| y[i]).collect(),
            },
            Targets::Values { targets, y } => Targets::Values {
                targets: *targets,
                y: idx.iter().flat_map(|&i| y[i * targets..(i + 1) * targets].iter().copied()).collect(),
            },
        };
        Self {
            dim: self.dim,
            x: idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            targets,
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    fn batch(&self, idx: &[usize]) -> Batch {
        let sub = self.subset(idx);
        let targets = match sub.targets {
            Targets::Classes { y, .. } => BatchTargets::Classes(y),
            Targets::Values { y, .. } => BatchTargets::Values(y),
        };
        Batch::uniform(idx.len(), sub.x, targets)
    }

    /// Reads the features tensor `[N, D]` and per-instance targets of a
    /// classification or regression manifest.
    pub fn from_manifest(m: &EvalManifest) -> crate::Result<Self> {
        let Some(fp) = &m.features_path else {
            return Err(crate::Error::Invalid("manifest has no features_path".into()));
        };
        let t = read_tensor(m.resolve(fp))?;
        let (n, dim) = match t.dims() {
            [n, d] if *n == m.n() => (*n, *d),
            dims => {
                return Err(crate::Error::Invalid(format!(
                    "features tensor has shape {dims:?}, expected [{}, D]",
                    m.n()
                )))
            }
        };
        let targets = match m.task {
            TaskKind::Classification => Targets::Classes {
                classes: m.class_count(),
                y: m.instances
                    .iter()
                    .map(|r| match r.truth {
                        Truth::Class(c) => Ok(c),
                        _ => Err(crate::Error::Invalid(format!("{}: expected a class index", r.id))),
                    })
                    .collect::<crate::Result<_>>()?,
            },
            TaskKind::Regression => {
                let k = m.target_count();
                let mut y = Vec::with_capacity(n * k);
                for r in &m.instances {
                    match &r.truth {
                        Truth::Values(v) if v.len() == k => y.extend_from_slice(v),
                        _ => return Err(crate::Error::Invalid(format!("{}: expected {k} target values", r.id))),
                    }
                }
                Targets::Values { targets: k, y }
            }
            TaskKind::Segmentation => {
                return Err(crate::Error::Invalid("the toy trainer handles classification and regression only".into()))
            }
        };
        Ok(Self {
            dim,
            x: t.to_f64_vec(),
            targets,
            groups: m.instances.iter().map(|r| r.group).collect(),
            ids: m.instances.iter().map(|r| r.id.clone()).collect(),
        })
    }
}

/// Trained ensemble members with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub config: TrainConfig,
    pub members: Vec<ToyModel>,
    /// Final group weights per member (uniform unless GroupDRO).
    pub group_weights: Vec<GroupWeights>,
}

pub fn train_toy(data: &ToyDataset, cfg: &TrainConfig) -> Result<Ensemble, ToyError> {
    cfg.validate()?;
    if data.n() == 0 {
        return Err(ToyError::BadConfig("empty training set".into()));
    }
    let balanced;
    let data = if cfg.strategy == Strategy::Balanced {
        let idx = balanced_resample_indices(&data.groups, data.classes(), cfg.seed)?;
        balanced = data.subset(&idx);
        &balanced
    } else {
        data
    };
    let trained = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|m| train_member(data, cfg, m))
        .collect::<Result<Vec<_>, _>>()?;
    let (members, group_weights) = trained.into_iter().unzip();
    Ok(Ensemble {
        config: cfg.clone(),
        members,
        group_weights,
    })
}

fn train_member(data: &ToyDataset, cfg: &TrainConfig, member: usize) -> Result<(ToyModel, GroupWeights), ToyError> {
    let mut rng = SplitMix64::new(cfg.seed.wrapping_add(member as u64));
    let mut model = ToyModel::init(data.dim, cfg.hidden_width, data.head(), cfg.dropout_p, &mut rng);
    let mut q = GroupWeights::uniform(2);
    let mut order: Vec<usize> = (0..data.n()).collect();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch = data.batch(idx);
            if cfg.dropout_p > 0.0 {
                batch.masks = Some((0..idx.len()).flat_map(|_| model.sample_mask(&mut rng)).collect());
            }
            if cfg.strategy == Strategy::GroupDro {
                let losses = model.row_losses(&batch);
                let mut sum = [0.0; 2];
                let mut count = [0usize; 2];
                for (k, &i) in idx.iter().enumerate() {
                    let g = data.groups[i].index();
                    sum[g] += losses[k];
                    count[g] += 1;
                }
                let mean: Vec<f64> = (0..2)
                    .map(|g| if count[g] > 0 { sum[g] / count[g] as f64 } else { 0.0 })
                    .collect();
                q = groupdro_step(&q, &mean, cfg.groupdro_step).map_err(|_| ToyError::DivergedLoss {
                    member,
                    epoch,
                    batch: b,
                })?;
                for (k, &i) in idx.iter().enumerate() {
                    let g = data.groups[i].index();
                    batch.weights[k] = q.as_slice()[g] / count[g] as f64;
                }
            }
            let grads = toy_gradients(&model, &batch);
            if !grads.loss.is_finite() {
                return Err(ToyError::DivergedLoss { member, epoch, batch: b });
            }
            let norm = ParamBlock::ALL
                .iter()
                .flat_map(|&p| grads.block(p).iter())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            let scale = match cfg.clip_norm {
                Some(c) if norm > c => c / norm,
                _ => 1.0,
            };
            for p in ParamBlock::ALL {
                let step = cfg.learning_rate * scale;
                for (w, g) in model.block_mut(p).iter_mut().zip(grads.block(p)) {
                    *w -= step * g;
                }
            }
            if !model.is_finite() {
                return Err(ToyError::DivergedLoss { member, epoch, batch: b });
            }
        }
    }
    Ok((model, q))
}

/// `E * S` dropout-active forward passes per input row. Member `m` of
/// instance `i` draws its masks from sub-stream `i * E + m` of `seed`.
pub fn mc_predict(ens: &Ensemble, x: &[f64], seed: u64) -> Vec<McPredictions> {
    let first = &ens.members[0];
    let d = first.input;
    let e = ens.members.len();
    let s = ens.config.dropout_samples;
    let n = x.len() / d;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &x[i * d..(i + 1) * d];
            let mut out = Vec::new();
            for (m, model) in ens.members.iter().enumerate() {
                let mut rng = SplitMix64::derive(seed, (i * e + m) as u64);
                for _ in 0..s {
                    let mask = (model.dropout_p > 0.0).then(|| model.sample_mask(&mut rng));
                    let z = model.forward(row, mask.as_deref());
                    match model.head {
                        Head::Classifier { .. } => out.extend(softmax_probs(&z)),
                        Head::Regressor { targets } => {
                            for t in 0..targets {
                                out.push(z[t]);
                                out.push(z[targets + t].exp());
                            }
                        }
                    }
                }
            }
            match first.head {
                Head::Classifier { classes } => McPredictions::Classification(
                    ClassSamples::new(e * s, classes, out).expect("softmax rows lie on the simplex"),
                ),
                Head::Regressor { targets } => McPredictions::Regression(
                    RegressionSamples::new(e * s, targets, out).expect("variances are positive"),
                ),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two separable blobs in 2-D with a known separating line `x0 = 0`.
    fn blobs(n: usize, seed: u64) -> ToyDataset {
        let mut rng = SplitMix64::new(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut groups = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let sign = if c == 0 { -1.0 } else { 1.0 };
            x.push(sign * rng.uniform(0.5, 2.0));
            x.push(rng.uniform(-1.0, 1.0));
            y.push(c);
            groups.push(if i % 4 < 2 { GroupLabel::D0 } else { GroupLabel::D1 });
        }
        ToyDataset {
            dim: 2,
            x,
            targets: Targets::Classes { classes: 2, y },
            groups,
            ids: (0..n).map(|i| format!("s{i}")).collect(),
        }
    }

    fn small_cfg(strategy: Strategy) -> TrainConfig {
        TrainConfig {
            strategy,
            epochs: 20,
            ensemble_size: 2,
            dropout_samples: 3,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let d = blobs(80, 1);
        let a = train_toy(&d, &small_cfg(Strategy::GroupDro)).unwrap();
        let b = train_toy(&d, &small_cfg(Strategy::GroupDro)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let d = blobs(200, 2);
        let ens = train_toy(&d, &small_cfg(Strategy::Baseline)).unwrap();
        let preds = mc_predict(&ens, &d.x, 4);
        let y = d.classes().unwrap();
        let correct = preds
            .iter()
            .zip(y)
            .filter(|(p, &y)| {
                let McPredictions::Classification(cs) = p else { unreachable!() };
                crate::uncertainty::argmax(&crate::uncertainty::predictive_mean(cs)) == y
            })
            .count();
        assert!(correct as f64 / 200.0 >= 0.95);
    }

    #[test]
    fn no_dropout_gives_identical_samples() {
        let d = blobs(20, 3);
        let cfg = TrainConfig {
            dropout_p: 0.0,
            ensemble_size: 1,
            dropout_samples: 5,
            epochs: 2,
            ..TrainConfig::default()
        };
        let ens = train_toy(&d, &cfg).unwrap();
        let McPredictions::Classification(cs) = &mc_predict(&ens, d.row(0), 0)[0] else {
            unreachable!()
        };
        assert_eq!(cs.samples(), 5);
        assert!((1..5).all(|t| cs.sample(t) == cs.sample(0)));
    }

    #[test]
    fn default_protocol_draws_sixty_samples() {
        let d = blobs(20, 4);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let ens = train_toy(&d, &cfg).unwrap();
        for p in mc_predict(&ens, &d.x, 0) {
            let McPredictions::Classification(cs) = p else { unreachable!() };
            assert_eq!(cs.samples(), 60);
            for t in 0..60 {
                assert!((cs.sample(t).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bad_configs_rejected() {
        let d = blobs(8, 5);
        for cfg in [
            TrainConfig { ensemble_size: 0, ..TrainConfig::default() },
            TrainConfig { dropout_p: 1.0, ..TrainConfig::default() },
        ] {
            assert!(matches!(train_toy(&d, &cfg), Err(ToyError::BadConfig(_))));
        }
        assert_eq!("groupdro".parse::<Strategy>(), Ok(Strategy::GroupDro));
        assert!("adam".parse::<Strategy>().is_err());
    }
}
