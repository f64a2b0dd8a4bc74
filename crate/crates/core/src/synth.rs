//! Seeded synthetic datasets for the three tasks, with knobs that make one
//! subgroup harder than the other.
//!
//! Every dataset is written as a manifest directory:
//!
//! ```text
//! out/manifest.json
//! out/features.uqt          [N, D] f64 (classification, regression)
//! out/truth/<id>.uqt        [P, Q, S] u8 label maps (segmentation)
//! out/pred/<id>.uqt         simulated Monte-Carlo predictions
//! out/pred/<id>.unc.uqt     per-voxel uncertainty (precomputed segmentation)
//! out/synth_meta.json       config plus construction witnesses
//! ```
//!
//! Instance `i` draws from sub-stream `i` of the seed, so files are
//! byte-identical for a given config no matter how many threads write them.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{
    EvalManifest, GroupLabel, InstanceRecord, LabelMap, RegionDef, TaskKind, Truth,
};
use crate::rng::SplitMix64;
use crate::tensor::{write_tensor, Tensor};
use crate::toy::{softmax_probs, Targets, ToyDataset};
use crate::uncertainty::entropy;

#[derive(Debug, Error)]
#[error("bad synthetic config: {0}")]
pub struct SynthError(pub String);

/// Label count of synthetic segmentation volumes (background + 3 tumour labels).
pub const SEG_CLASSES: usize = 4;
const MAX_VOLUME_EDGE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub task: TaskKind,
    /// Instances in group 0.
    pub m: usize,
    /// Instances in group 1.
    pub l: usize,
    pub classes: usize,
    pub targets: usize,
    pub feature_dim: usize,
    /// Distance of classification class centres from the origin.
    pub class_sep: f64,
    /// Classification/regression: offset of group-1 features along the
    /// first axis. Segmentation: fraction by which group-1 inner spheres
    /// shrink (enhancing core by the full fraction, core by half of it).
    pub group_shift: f64,
    /// Per-group noise scale: feature noise (classification), target noise
    /// (regression), logit noise (segmentation).
    pub noise_sigma: [f64; 2],
    pub volume_dims: [usize; 3],
    /// Group-0 sphere radii `[whole, core, enhancing]`; `None` scales with
    /// the volume.
    pub radii: Option<[f64; 3]>,
    pub mc_samples: usize,
    /// Segmentation: write mean probabilities plus an entropy volume instead
    /// of the full sample stack.
    pub precomputed: bool,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(task: TaskKind) -> Self {
        let base = Self {
            task,
            m: 80,
            l: 20,
            classes: 2,
            targets: 2,
            feature_dim: 2,
            class_sep: 2.0,
            group_shift: 0.5,
            noise_sigma: [0.5, 1.0],
            volume_dims: [32, 32, 32],
            radii: None,
            mc_samples: 60,
            precomputed: false,
            seed: 0,
        };
        match task {
            TaskKind::Classification => base,
            TaskKind::Segmentation => Self {
                m: 10,
                l: 10,
                classes: SEG_CLASSES,
                ..base
            },
            TaskKind::Regression => Self {
                feature_dim: 4,
                noise_sigma: [1.0, 3.0],
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError(m));
        if self.m == 0 || self.l == 0 {
            return bad("both groups need at least one instance".into());
        }
        if self.noise_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise scales must be finite and >= 0".into());
        }
        if !self.group_shift.is_finite() || !(self.class_sep.is_finite() && self.class_sep > 0.0) {
            return bad("shift and class separation must be finite, separation > 0".into());
        }
        if self.mc_samples < 2 {
            return bad("need at least 2 Monte-Carlo samples".into());
        }
        match self.task {
            TaskKind::Classification => {
                if self.classes < 2 {
                    return bad("classification needs at least 2 classes".into());
                }
                if !(2..=8).contains(&self.feature_dim) {
                    return bad("feature dimension must be within 2..=8".into());
                }
            }
            TaskKind::Regression => {
                if self.targets == 0 {
                    return bad("regression needs at least one target".into());
                }
                if !(2..=8).contains(&self.feature_dim) {
                    return bad("feature dimension must be within 2..=8".into());
                }
            }
            TaskKind::Segmentation => {
                if self.classes != SEG_CLASSES {
                    return bad(format!("segmentation volumes use {SEG_CLASSES} labels"));
                }
                if self.volume_dims.iter().any(|&d| !(4..=MAX_VOLUME_EDGE).contains(&d)) {
                    return bad(format!("volume edges must be within 4..={MAX_VOLUME_EDGE}"));
                }
                if !(0.0..=1.0).contains(&self.group_shift) {
                    return bad("segmentation shrink fraction must be within [0, 1]".into());
                }
                if let Some(r) = self.radii {
                    if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(r[0] >= r[1] && r[1] >= r[2]) {
                        return bad("radii must be >= 0 and ordered whole >= core >= enhancing".into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.m + self.l
    }

    /// Group 0 first, then group 1.
    pub fn group_of(&self, i: usize) -> GroupLabel {
        if i < self.m {
            GroupLabel::D0
        } else {
            GroupLabel::D1
        }
    }

    fn instance_id(&self, i: usize) -> String {
        format!("case{i:04}")
    }

    fn sigma(&self, g: GroupLabel) -> f64 {
        self.noise_sigma[g.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub w: Vec<f64>,
    pub b: f64,
}

/// Construction facts that let tests check generated data independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Witness {
    Classification {
        centers: Vec<Vec<f64>>,
        /// Half-width of the per-point jitter cube around each centre.
        jitter: f64,
        /// Separates classes 0 and 1 when noise and shift are zero (C = 2).
        hyperplane: Option<Hyperplane>,
    },
    Segmentation {
        /// Per instance `[whole, core, enhancing]`.
        radii: Vec<[f64; 3]>,
        centers: Vec<[f64; 3]>,
    },
    Regression {
        /// `[K][D]`
        weights: Vec<Vec<f64>>,
        intercepts: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub config: SynthConfig,
    pub witness: Witness,
}

fn class_centers(cfg: &SynthConfig) -> (Vec<Vec<f64>>, f64) {
    let c = cfg.classes;
    let centers = (0..c)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / c as f64;
            let mut v = vec![0.0; cfg.feature_dim];
            v[0] = cfg.class_sep * a.cos();
            v[1] = cfg.class_sep * a.sin();
            if c == 2 {
                v[1] = 0.0;
            }
            v
        })
        .collect();
    let d_min = 2.0 * cfg.class_sep * (PI / c as f64).sin();
    // cube half-width whose circumscribed ball stays inside 0.4 * d_min
    (centers, 0.4 * d_min / (cfg.feature_dim as f64).sqrt())
}

/// Blobs around points on a circle; group 1 is offset along the first axis
/// and carries its own noise scale.
pub fn classification_set(cfg: &SynthConfig) -> Result<(ToyDataset, Witness), SynthError> {
    if cfg.task != TaskKind::Classification {
        return Err(SynthError("config is not for classification".into()));
    }
    cfg.validate()?;
    let (centers, jitter) = class_centers(cfg);
    let d = cfg.feature_dim;
    let mut x = Vec::with_capacity(cfg.n() * d);
    let mut y = Vec::with_capacity(cfg.n());
    for i in 0..cfg.n() {
        let mut rng = SplitMix64::derive(cfg.seed, i as u64);
        let g = cfg.group_of(i);
        let c = rng.below(cfg.classes);
        for (k, &ck) in centers[c].iter().enumerate() {
            let mut v = ck + rng.uniform(-jitter, jitter) + cfg.sigma(g) * rng.normal();
            if k == 0 && g == GroupLabel::D1 {
                v += cfg.group_shift;
            }
            x.push(v);
        }
        y.push(c);
    }
    let hyperplane = (cfg.classes == 2).then(|| {
        let w: Vec<f64> = centers[1].iter().zip(&centers[0]).map(|(a, b)| a - b).collect();
        let mid: Vec<f64> = centers[1].iter().zip(&centers[0]).map(|(a, b)| 0.5 * (a + b)).collect();
        let b = -w.iter().zip(&mid).map(|(a, m)| a * m).sum::<f64>();
        Hyperplane { w, b }
    });
    let data = ToyDataset {
        dim: d,
        x,
        targets: Targets::Classes {
            classes: cfg.classes,
            y,
        },
        groups: (0..cfg.n()).map(|i| cfg.group_of(i)).collect(),
        ids: (0..cfg.n()).map(|i| cfg.instance_id(i)).collect(),
    };
    Ok((
        data,
        Witness::Classification {
            centers,
            jitter,
            hyperplane,
        },
    ))
}

/// Targets are a fixed linear map of Gaussian features plus group-scaled
/// Gaussian noise.
pub fn regression_set(cfg: &SynthConfig) -> Result<(ToyDataset, Witness), SynthError> {
    if cfg.task != TaskKind::Regression {
        return Err(SynthError("config is not for regression".into()));
    }
    cfg.validate()?;
    let (d, k) = (cfg.feature_dim, cfg.targets);
    let mut coef = SplitMix64::derive(cfg.seed, u64::MAX);
    let weights: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| coef.normal()).collect()).collect();
    let intercepts: Vec<f64> = (0..k).map(|t| 10.0 * (t + 1) as f64).collect();
    let mut x = Vec::with_capacity(cfg.n() * d);
    let mut y = Vec::with_capacity(cfg.n() * k);
    for i in 0..cfg.n() {
        let mut rng = SplitMix64::derive(cfg.seed, i as u64);
        let g = cfg.group_of(i);
        let row: Vec<f64> = (0..d)
            .map(|j| rng.normal() + if j == 0 && g == GroupLabel::D1 { cfg.group_shift } else { 0.0 })
            .collect();
        for t in 0..k {
            let f: f64 = weights[t].iter().zip(&row).map(|(w, v)| w * v).sum::<f64>() + intercepts[t];
            y.push(f + cfg.sigma(g) * rng.normal());
        }
        x.extend(row);
    }
    let data = ToyDataset {
        dim: d,
        x,
        targets: Targets::Values { targets: k, y },
        groups: (0..cfg.n()).map(|i| cfg.group_of(i)).collect(),
        ids: (0..cfg.n()).map(|i| cfg.instance_id(i)).collect(),
    };
    Ok((data, Witness::Regression { weights, intercepts }))
}

pub fn default_target_names(k: usize) -> Vec<String> {
    if k == 2 {
        vec!["ADAS13".into(), "MMSE".into()]
    } else {
        (0..k).map(|t| format!("target{t}")).collect()
    }
}

/// Label volume of nested balls: enhancing (3) inside core (1) inside
/// whole (2), background 0. Voxel centres sit at integer coordinates.
pub fn sphere_label_map(dims: [usize; 3], center: [f64; 3], radii: [f64; 3]) -> LabelMap {
    let [p, q, s] = dims;
    let mut labels = Vec::with_capacity(p * q * s);
    for a in 0..p {
        for b in 0..q {
            for c in 0..s {
                let d2 = (a as f64 - center[0]).powi(2) + (b as f64 - center[1]).powi(2) + (c as f64 - center[2]).powi(2);
                labels.push(if d2 <= radii[2] * radii[2] {
                    3
                } else if d2 <= radii[1] * radii[1] {
                    1
                } else if d2 <= radii[0] * radii[0] {
                    2
                } else {
                    0
                });
            }
        }
    }
    LabelMap { dims, labels }
}

fn seg_geometry(cfg: &SynthConfig, i: usize, rng: &mut SplitMix64) -> ([f64; 3], [f64; 3]) {
    let edge = *cfg.volume_dims.iter().min().unwrap() as f64;
    let base = cfg.radii.unwrap_or([0.3 * edge, 0.2 * edge, 0.12 * edge]);
    let scale = rng.uniform(0.9, 1.1);
    let mut r = base.map(|v| v * scale);
    if cfg.group_of(i) == GroupLabel::D1 {
        r[1] *= 1.0 - 0.5 * cfg.group_shift;
        r[2] *= 1.0 - cfg.group_shift;
    }
    let wiggle = 0.1 * edge;
    let center = [0, 1, 2].map(|k| (cfg.volume_dims[k] as f64 - 1.0) / 2.0 + rng.uniform(-wiggle, wiggle));
    (center, r)
}

/// Predicted label probabilities of one volume: a persistent per-voxel
/// logit perturbation plus fresh noise per sample on top of a one-hot
/// logit for the true label. Returns `[T, C, V]` as `f32`.
fn seg_samples(cfg: &SynthConfig, g: GroupLabel, truth: &[u8], rng: &mut SplitMix64) -> Vec<f32> {
    let (t_count, c_count, v_count) = (cfg.mc_samples, SEG_CLASSES, truth.len());
    let sigma = cfg.sigma(g);
    let persistent: Vec<f64> = (0..v_count * c_count).map(|_| sigma * rng.normal()).collect();
    let mut out = vec![0f32; t_count * c_count * v_count];
    let mut z = [0.0; SEG_CLASSES];
    for t in 0..t_count {
        for v in 0..v_count {
            for (c, zc) in z.iter_mut().enumerate() {
                let hot = if truth[v] as usize == c { 3.0 } else { 0.0 };
                *zc = hot + persistent[v * c_count + c] + 0.5 * sigma * rng.normal();
            }
            let p = softmax_probs(&z);
            for c in 0..c_count {
                out[(t * c_count + c) * v_count + v] = p[c] as f32;
            }
        }
    }
    out
}

/// Simulated Monte-Carlo class probabilities `[T, C]`: a distance-based
/// softmax that ignores the group offset, with per-sample logit noise.
fn class_samples(cfg: &SynthConfig, centers: &[Vec<f64>], x: &[f64], g: GroupLabel, rng: &mut SplitMix64) -> Vec<f64> {
    let spread = 0.5 * (1.0 + cfg.sigma(g));
    let mut out = Vec::with_capacity(cfg.mc_samples * cfg.classes);
    for _ in 0..cfg.mc_samples {
        let z: Vec<f64> = centers
            .iter()
            .map(|c| -0.5 * c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + spread * rng.normal())
            .collect();
        out.extend(softmax_probs(&z));
    }
    out
}

/// Simulated `[T, K, 2]` regression stack: the true linear map plus an
/// instance-level bias and sample noise; predicted variance is the group's
/// target noise variance.
fn regression_samples(cfg: &SynthConfig, w: &Witness, x: &[f64], g: GroupLabel, rng: &mut SplitMix64) -> Vec<f64> {
    let Witness::Regression { weights, intercepts } = w else {
        unreachable!()
    };
    let sigma = cfg.sigma(g);
    let spread = 0.3 * (1.0 + sigma);
    let bias: Vec<f64> = (0..cfg.targets).map(|_| spread * rng.normal()).collect();
    let mut out = Vec::with_capacity(cfg.mc_samples * cfg.targets * 2);
    for _ in 0..cfg.mc_samples {
        for t in 0..cfg.targets {
            let f: f64 = weights[t].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + intercepts[t];
            out.push(f + bias[t] + spread * rng.normal());
            out.push(sigma * sigma);
        }
    }
    out
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> crate::Error + '_ {
    move |e| crate::Error::io(path, e)
}

fn prepare_dirs(out: &Path, subdirs: &[&str]) -> crate::Result<()> {
    fs::create_dir_all(out).map_err(io(out))?;
    for s in subdirs {
        let p = out.join(s);
        fs::create_dir_all(&p).map_err(io(&p))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> crate::Result<()> {
    fs::write(path, text).map_err(io(path))
}

fn write_meta(out: &Path, meta: &SynthMeta) -> crate::Result<()> {
    let text = serde_json::to_string_pretty(meta).expect("meta serializes") + "\n";
    write_text(&out.join("synth_meta.json"), &text)
}

fn empty_manifest(task: TaskKind, base: &Path) -> EvalManifest {
    EvalManifest {
        task,
        class_count: None,
        class_names: Vec::new(),
        regions: Vec::new(),
        target_names: Vec::new(),
        measure: None,
        normalization: None,
        bound_max: None,
        features_path: None,
        instances: Vec::new(),
        base_dir: base.to_path_buf(),
    }
}

fn record(cfg: &SynthConfig, i: usize, truth: Truth) -> InstanceRecord {
    let id = cfg.instance_id(i);
    InstanceRecord {
        prediction_path: Some(format!("pred/{id}.uqt")),
        id,
        group: cfg.group_of(i),
        truth,
        uncertainty_path: None,
    }
}

pub fn gen_classification(cfg: &SynthConfig, out: &Path) -> crate::Result<SynthMeta> {
    let (data, witness) = classification_set(cfg)?;
    let Witness::Classification { centers, .. } = &witness else {
        unreachable!()
    };
    prepare_dirs(out, &["pred"])?;
    write_tensor(&Tensor::from_f64(vec![data.n(), data.dim], data.x.clone())?, out.join("features.uqt"))?;
    (0..data.n()).into_par_iter().try_for_each(|i| -> crate::Result<()> {
        let mut rng = SplitMix64::derive(cfg.seed ^ PREDICTION_SALT, i as u64);
        let probs = class_samples(cfg, centers, data.row(i), data.groups[i], &mut rng);
        let t = Tensor::from_f64(vec![cfg.mc_samples, cfg.classes], probs)?;
        write_tensor(&t, out.join(format!("pred/{}.uqt", data.ids[i])))?;
        Ok(())
    })?;
    let mut m = empty_manifest(TaskKind::Classification, out);
    m.class_count = Some(cfg.classes);
    m.class_names = (0..cfg.classes).map(|c| format!("class{c}")).collect();
    m.features_path = Some("features.uqt".into());
    let y = data.classes().unwrap();
    m.instances = (0..data.n()).map(|i| record(cfg, i, Truth::Class(y[i]))).collect();
    write_text(&out.join("manifest.json"), &m.to_json_pretty())?;
    let meta = SynthMeta {
        config: cfg.clone(),
        witness,
    };
    write_meta(out, &meta)?;
    Ok(meta)
}

pub fn gen_regression(cfg: &SynthConfig, out: &Path) -> crate::Result<SynthMeta> {
    let (data, witness) = regression_set(cfg)?;
    prepare_dirs(out, &["pred"])?;
    write_tensor(&Tensor::from_f64(vec![data.n(), data.dim], data.x.clone())?, out.join("features.uqt"))?;
    (0..data.n()).into_par_iter().try_for_each(|i| -> crate::Result<()> {
        let mut rng = SplitMix64::derive(cfg.seed ^ PREDICTION_SALT, i as u64);
        let vals = regression_samples(cfg, &witness, data.row(i), data.groups[i], &mut rng);
        let t = Tensor::from_f64(vec![cfg.mc_samples, cfg.targets, 2], vals)?;
        write_tensor(&t, out.join(format!("pred/{}.uqt", data.ids[i])))?;
        Ok(())
    })?;
    let mut m = empty_manifest(TaskKind::Regression, out);
    m.target_names = default_target_names(cfg.targets);
    m.features_path = Some("features.uqt".into());
    let Targets::Values { y, .. } = &data.targets else {
        unreachable!()
    };
    let k = cfg.targets;
    m.instances = (0..data.n())
        .map(|i| record(cfg, i, Truth::Values(y[i * k..(i + 1) * k].to_vec())))
        .collect();
    write_text(&out.join("manifest.json"), &m.to_json_pretty())?;
    let meta = SynthMeta {
        config: cfg.clone(),
        witness,
    };
    write_meta(out, &meta)?;
    Ok(meta)
}

pub fn gen_segmentation(cfg: &SynthConfig, out: &Path) -> crate::Result<SynthMeta> {
    if cfg.task != TaskKind::Segmentation {
        return Err(SynthError("config is not for segmentation".into()).into());
    }
    cfg.validate()?;
    prepare_dirs(out, &["truth", "pred"])?;
    let geometry = (0..cfg.n())
        .into_par_iter()
        .map(|i| -> crate::Result<([f64; 3], [f64; 3])> {
            let mut rng = SplitMix64::derive(cfg.seed, i as u64);
            let (center, radii) = seg_geometry(cfg, i, &mut rng);
            let map = sphere_label_map(cfg.volume_dims, center, radii);
            let id = cfg.instance_id(i);
            write_tensor(&map.to_tensor(), out.join(format!("truth/{id}.uqt")))?;
            let mut prng = SplitMix64::derive(cfg.seed ^ PREDICTION_SALT, i as u64);
            let samples = seg_samples(cfg, cfg.group_of(i), &map.labels, &mut prng);
            let [p, q, s] = cfg.volume_dims;
            if cfg.precomputed {
                let (mean, unc) = summarize_samples(&samples, cfg.mc_samples, map.labels.len());
                write_tensor(&Tensor::from_f32(vec![SEG_CLASSES, p, q, s], mean)?, out.join(format!("pred/{id}.uqt")))?;
                write_tensor(&Tensor::from_f64(vec![p, q, s], unc)?, out.join(format!("pred/{id}.unc.uqt")))?;
            } else {
                let t = Tensor::from_f32(vec![cfg.mc_samples, SEG_CLASSES, p, q, s], samples)?;
                write_tensor(&t, out.join(format!("pred/{id}.uqt")))?;
            }
            Ok((center, radii))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let mut m = empty_manifest(TaskKind::Segmentation, out);
    m.class_count = Some(SEG_CLASSES);
    m.regions = RegionDef::brats();
    m.instances = (0..cfg.n())
        .map(|i| {
            let mut r = record(cfg, i, Truth::LabelMap(format!("truth/{}.uqt", cfg.instance_id(i))));
            if cfg.precomputed {
                r.uncertainty_path = Some(format!("pred/{}.unc.uqt", r.id));
            }
            r
        })
        .collect();
    write_text(&out.join("manifest.json"), &m.to_json_pretty())?;
    let meta = SynthMeta {
        config: cfg.clone(),
        witness: Witness::Segmentation {
            centers: geometry.iter().map(|g| g.0).collect(),
            radii: geometry.iter().map(|g| g.1).collect(),
        },
    };
    write_meta(out, &meta)?;
    Ok(meta)
}

/// Mean probabilities `[C, V]` (f32) and entropy of the mean per voxel.
fn summarize_samples(samples: &[f32], t_count: usize, v_count: usize) -> (Vec<f32>, Vec<f64>) {
    let mut mean = vec![0f64; SEG_CLASSES * v_count];
    for t in 0..t_count {
        let block = &samples[t * SEG_CLASSES * v_count..(t + 1) * SEG_CLASSES * v_count];
        for (m, &p) in mean.iter_mut().zip(block) {
            *m += p as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t_count as f64);
    let unc = (0..v_count)
        .map(|v| {
            let col: Vec<f64> = (0..SEG_CLASSES).map(|c| mean[c * v_count + v]).collect();
            entropy(&col).expect("mean of probabilities")
        })
        .collect();
    (mean.into_iter().map(|m| m as f32).collect(), unc)
}

const PREDICTION_SALT: u64 = 0x5052_4544_4943_5421;

/// Writes the dataset the config describes.
pub fn gen_synth(cfg: &SynthConfig, out: &Path) -> crate::Result<SynthMeta> {
    match cfg.task {
        TaskKind::Classification => gen_classification(cfg, out),
        TaskKind::Segmentation => gen_segmentation(cfg, out),
        TaskKind::Regression => gen_regression(cfg, out),
    }
}
