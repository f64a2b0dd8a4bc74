//! Dataset and prediction data model: manifests, instance records and
//! Monte-Carlo prediction stacks, with eager validation at load time.
//!
//! A manifest is a JSON document listing evaluation instances. Each instance
//! carries its sensitive-group label, its ground truth and a path to a `UQT1`
//! file holding the model's Monte-Carlo samples for it. Relative paths are
//! resolved against the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{read_tensor, Tensor, TensorError};

/// Allowed deviation of a probability vector's sum from 1.
pub const PROB_SUM_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot parse manifest {path}: {message}")]
    Parse { path: String, message: String },
    #[error("instance {id}: {rule}")]
    Validation { id: String, rule: String },
    #[error("group {missing} has no instances; both subgroups are required")]
    MissingGroup { missing: u8 },
    #[error("instance {id}: {source}")]
    Tensor {
        id: String,
        #[source]
        source: TensorError,
    },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ManifestError {
    fn rule(id: impl Into<String>, rule: impl Into<String>) -> Self {
        ManifestError::Validation {
            id: id.into(),
            rule: rule.into(),
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            ManifestError::Io { .. } => true,
            ManifestError::Tensor { source, .. } => matches!(source, TensorError::Io { .. }),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Segmentation,
    Regression,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Segmentation => "segmentation",
            TaskKind::Regression => "regression",
        })
    }
}

/// Binary sensitive attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum GroupLabel {
    D0,
    D1,
}

impl GroupLabel {
    pub fn index(self) -> usize {
        match self {
            GroupLabel::D0 => 0,
            GroupLabel::D1 => 1,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            GroupLabel::D0 => GroupLabel::D1,
            GroupLabel::D1 => GroupLabel::D0,
        }
    }
}

impl TryFrom<u8> for GroupLabel {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(GroupLabel::D0),
            1 => Ok(GroupLabel::D1),
            other => Err(format!("group label must be 0 or 1, got {other}")),
        }
    }
}

impl From<GroupLabel> for u8 {
    fn from(g: GroupLabel) -> u8 {
        g.index() as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "entropy")]
    Entropy,
    #[serde(rename = "sample-var")]
    SampleVariance,
    #[serde(rename = "total-var")]
    TotalVariance,
}

impl Measure {
    pub fn default_for(task: TaskKind) -> Self {
        match task {
            TaskKind::Classification | TaskKind::Segmentation => Measure::Entropy,
            TaskKind::Regression => Measure::TotalVariance,
        }
    }

    pub fn supports(self, task: TaskKind) -> bool {
        !matches!(
            (self, task),
            (Measure::Entropy, TaskKind::Regression)
                | (Measure::TotalVariance, TaskKind::Classification | TaskKind::Segmentation)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    Bound,
    MinMax,
}

impl NormalizationMode {
    pub fn default_for(measure: Measure) -> Self {
        match measure {
            Measure::Entropy => NormalizationMode::Bound,
            Measure::SampleVariance | Measure::TotalVariance => NormalizationMode::MinMax,
        }
    }
}

/// A binary segmentation region: the union of the listed class labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionDef {
    pub name: String,
    pub labels: Vec<u8>,
}

impl RegionDef {
    pub fn new(name: impl Into<String>, labels: &[u8]) -> Self {
        Self {
            name: name.into(),
            labels: labels.to_vec(),
        }
    }

    /// Whole tumour / tumour core / enhancing tumour over labels
    /// {0 background, 1 necrotic core, 2 edema, 3 enhancing}.
    pub fn brats() -> Vec<RegionDef> {
        vec![
            RegionDef::new("WT", &[1, 2, 3]),
            RegionDef::new("TC", &[1, 3]),
            RegionDef::new("ET", &[3]),
        ]
    }
}

/// Ground truth of one instance; the JSON form depends on the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Truth {
    Class(usize),
    Values(Vec<f64>),
    LabelMap(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub group: GroupLabel,
    pub truth: Truth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction_path: Option<String>,
    /// Segmentation only: raw per-voxel uncertainty volume. When present,
    /// `prediction_path` holds the mean probabilities `[C, P, Q, S]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub target_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Measure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationMode>,
    /// Upper bound used by bound-mode normalization of non-entropy measures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_max: Option<f64>,
    /// Row-aligned `[N, D]` feature tensor (synthetic/toy datasets only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_path: Option<String>,
    pub instances: Vec<InstanceRecord>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// How strictly [`EvalManifest::validate`] treats prediction files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionCheck {
    /// Every instance must reference a readable, valid prediction file.
    Required,
    /// Prediction paths may be absent (training-only datasets); present
    /// ones are still checked.
    Optional,
}

impl EvalManifest {
    pub fn n(&self) -> usize {
        self.instances.len()
    }

    /// `(M, L)`: instance counts of groups 0 and 1.
    pub fn group_counts(&self) -> (usize, usize) {
        let m = self
            .instances
            .iter()
            .filter(|r| r.group == GroupLabel::D0)
            .count();
        (m, self.n() - m)
    }

    pub fn measure(&self) -> Measure {
        self.measure.unwrap_or_else(|| Measure::default_for(self.task))
    }

    pub fn normalization(&self) -> NormalizationMode {
        self.normalization
            .unwrap_or_else(|| NormalizationMode::default_for(self.measure()))
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count.unwrap_or(0)
    }

    pub fn class_label(&self, c: usize) -> String {
        self.class_names
            .get(c)
            .cloned()
            .unwrap_or_else(|| format!("class{c}"))
    }

    pub fn target_count(&self) -> usize {
        self.target_names.len()
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Checks every structural rule, reading each referenced file once.
    pub fn validate(&self, check: PredictionCheck) -> Result<(), ManifestError> {
        let task = self.task;
        if self.n() < 2 {
            return Err(ManifestError::rule("<manifest>", "at least 2 instances are required"));
        }
        let (m, l) = self.group_counts();
        if m == 0 {
            return Err(ManifestError::MissingGroup { missing: 0 });
        }
        if l == 0 {
            return Err(ManifestError::MissingGroup { missing: 1 });
        }
        let mut seen = HashSet::new();
        for r in &self.instances {
            if !seen.insert(r.id.as_str()) {
                return Err(ManifestError::rule(&r.id, "duplicate instance id"));
            }
        }
        let measure = self.measure();
        if !measure.supports(task) {
            return Err(ManifestError::rule(
                "<manifest>",
                format!("measure {measure:?} is not defined for {task}"),
            ));
        }
        if let Some(b) = self.bound_max {
            if !(b.is_finite() && b > 0.0) {
                return Err(ManifestError::rule("<manifest>", "bound_max must be positive"));
            }
        }
        match task {
            TaskKind::Classification | TaskKind::Segmentation => {
                let c = self.class_count();
                if c < 2 {
                    return Err(ManifestError::rule("<manifest>", "class_count must be >= 2"));
                }
                if !self.class_names.is_empty() && self.class_names.len() != c {
                    return Err(ManifestError::rule(
                        "<manifest>",
                        format!("class_names has {} entries, class_count is {c}", self.class_names.len()),
                    ));
                }
            }
            TaskKind::Regression => {
                if self.target_names.is_empty() {
                    return Err(ManifestError::rule("<manifest>", "regression needs target_names"));
                }
            }
        }
        if task == TaskKind::Segmentation {
            if self.class_count() > 256 {
                return Err(ManifestError::rule("<manifest>", "segmentation supports at most 256 classes"));
            }
            if self.regions.is_empty() {
                return Err(ManifestError::rule("<manifest>", "segmentation needs at least one region"));
            }
            for region in &self.regions {
                if region.labels.is_empty() {
                    return Err(ManifestError::rule(
                        "<manifest>",
                        format!("region {} has no labels", region.name),
                    ));
                }
                if let Some(bad) = region.labels.iter().find(|&&lab| lab as usize >= self.class_count()) {
                    return Err(ManifestError::rule(
                        "<manifest>",
                        format!("region {} label {bad} >= class_count", region.name),
                    ));
                }
            }
        }
        if let Some(fp) = &self.features_path {
            let t = read_tensor(self.resolve(fp)).map_err(|source| ManifestError::Tensor {
                id: "<features>".into(),
                source,
            })?;
            if t.dims().len() != 2 || t.dims()[0] != self.n() {
                return Err(ManifestError::rule(
                    "<features>",
                    format!("features must be [N, D] with N = {}, got {:?}", self.n(), t.dims()),
                ));
            }
        }
        for r in &self.instances {
            self.validate_instance(r, check)?;
        }
        Ok(())
    }

    fn validate_instance(&self, r: &InstanceRecord, check: PredictionCheck) -> Result<(), ManifestError> {
        let id = r.id.as_str();
        let truth_dims = match (self.task, &r.truth) {
            (TaskKind::Classification, Truth::Class(y)) => {
                if *y >= self.class_count() {
                    return Err(ManifestError::rule(
                        id,
                        format!("class index {y} out of range for class_count {}", self.class_count()),
                    ));
                }
                None
            }
            (TaskKind::Regression, Truth::Values(v)) => {
                if v.len() != self.target_count() {
                    return Err(ManifestError::rule(
                        id,
                        format!("{} target values, expected {}", v.len(), self.target_count()),
                    ));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(ManifestError::rule(id, "non-finite target value"));
                }
                None
            }
            (TaskKind::Segmentation, Truth::LabelMap(_)) => {
                let labels = self.load_label_map(r)?;
                Some(labels.dims)
            }
            (task, truth) => {
                return Err(ManifestError::rule(
                    id,
                    format!("truth {truth:?} does not match task {task}"),
                ))
            }
        };
        match (&r.prediction_path, check) {
            (None, PredictionCheck::Required) => {
                Err(ManifestError::rule(id, "missing prediction_path"))
            }
            (None, PredictionCheck::Optional) => Ok(()),
            (Some(_), _) => {
                let mc = self.load_predictions(r)?;
                if let (Some(td), McPredictions::Segmentation(seg)) = (truth_dims, &mc) {
                    if seg.dims() != td {
                        return Err(ManifestError::rule(
                            id,
                            format!("prediction grid {:?} differs from label map {:?}", seg.dims(), td),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn load_label_map(&self, r: &InstanceRecord) -> Result<LabelMap, ManifestError> {
        let Truth::LabelMap(path) = &r.truth else {
            return Err(ManifestError::rule(&r.id, "truth is not a label-map path"));
        };
        let t = read_tensor(self.resolve(path)).map_err(|source| ManifestError::Tensor {
            id: r.id.clone(),
            source,
        })?;
        LabelMap::from_tensor(&t, self.class_count()).map_err(|rule| ManifestError::rule(&r.id, rule))
    }

    pub fn load_predictions(&self, r: &InstanceRecord) -> Result<McPredictions, ManifestError> {
        let id = r.id.as_str();
        let Some(pred_path) = &r.prediction_path else {
            return Err(ManifestError::rule(id, "missing prediction_path"));
        };
        let read = |p: &str| {
            read_tensor(self.resolve(p)).map_err(|source| ManifestError::Tensor {
                id: id.to_string(),
                source,
            })
        };
        let t = read(pred_path)?;
        let mc = match self.task {
            TaskKind::Classification => McPredictions::Classification(
                ClassSamples::from_tensor(&t, self.class_count()).map_err(|e| ManifestError::rule(id, e))?,
            ),
            TaskKind::Regression => McPredictions::Regression(
                RegressionSamples::from_tensor(&t, self.target_count())
                    .map_err(|e| ManifestError::rule(id, e))?,
            ),
            TaskKind::Segmentation => {
                let seg = match &r.uncertainty_path {
                    None => SegPredictions::full_from_tensor(&t, self.class_count()),
                    Some(up) => {
                        let u = read(up)?;
                        SegPredictions::precomputed_from_tensors(&t, &u, self.class_count())
                    }
                }
                .map_err(|e| ManifestError::rule(id, e))?;
                McPredictions::Segmentation(seg)
            }
        };
        Ok(mc)
    }
}

/// Parses a manifest without touching referenced files.
pub fn parse_manifest(text: &str, base_dir: impl Into<PathBuf>) -> Result<EvalManifest, ManifestError> {
    let mut m: EvalManifest = serde_json::from_str(text).map_err(|e| ManifestError::Parse {
        path: "<inline>".into(),
        message: e.to_string(),
    })?;
    m.base_dir = base_dir.into();
    Ok(m)
}

/// Reads and fully validates a manifest, including every prediction file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<EvalManifest, ManifestError> {
    load_manifest_with(path, PredictionCheck::Required)
}

pub fn load_manifest_with(path: impl AsRef<Path>, check: PredictionCheck) -> Result<EvalManifest, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut m = parse_manifest(&text, base).map_err(|e| match e {
        ManifestError::Parse { message, .. } => ManifestError::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })?;
    if m.base_dir.as_os_str().is_empty() {
        m.base_dir = PathBuf::from(".");
    }
    m.validate(check)?;
    Ok(m)
}

/// Integer label volume `[P, Q, S]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub dims: [usize; 3],
    pub labels: Vec<u8>,
}

impl LabelMap {
    pub fn from_tensor(t: &Tensor, class_count: usize) -> Result<Self, String> {
        let dims: [usize; 3] = t
            .dims()
            .try_into()
            .map_err(|_| format!("label map must be 3-d, got {:?}", t.dims()))?;
        let raw = t
            .to_i64_vec()
            .ok_or_else(|| format!("label map must have an integer dtype, got {:?}", t.dtype()))?;
        let mut labels = Vec::with_capacity(raw.len());
        for v in raw {
            if v < 0 || v as usize >= class_count {
                return Err(format!("label {v} outside 0..{class_count}"));
            }
            labels.push(v as u8);
        }
        Ok(Self { dims, labels })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_u8(self.dims.to_vec(), self.labels.clone()).expect("label map shape")
    }
}

/// `T` samples of class probabilities, row-major `[T, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSamples {
    samples: usize,
    classes: usize,
    probs: Vec<f64>,
}

fn check_simplex(row: &[f64]) -> Result<(), String> {
    if let Some(p) = row.iter().find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
        return Err(format!("probability {p} outside [0, 1]"));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > PROB_SUM_TOL {
        return Err(format!("class probabilities sum to {s}, not 1 within {PROB_SUM_TOL}"));
    }
    Ok(())
}

impl ClassSamples {
    /// Validates shape and the probability simplex for every sample row.
    pub fn new(samples: usize, classes: usize, probs: Vec<f64>) -> Result<Self, String> {
        if samples == 0 || classes == 0 || probs.len() != samples * classes {
            return Err(format!(
                "expected {samples} x {classes} probabilities, got {}",
                probs.len()
            ));
        }
        for row in probs.chunks_exact(classes) {
            check_simplex(row)?;
        }
        Ok(Self {
            samples,
            classes,
            probs,
        })
    }

    pub fn from_tensor(t: &Tensor, class_count: usize) -> Result<Self, String> {
        match t.dims() {
            &[samples, classes] if classes == class_count => {
                if samples < 2 {
                    return Err(format!("need T >= 2 samples, got {samples}"));
                }
                Self::new(samples, classes, t.to_f64_vec())
            }
            other => Err(format!("classification predictions must be [T, {class_count}], got {other:?}")),
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample(&self, t: usize) -> &[f64] {
        &self.probs[t * self.classes..(t + 1) * self.classes]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(vec![self.samples, self.classes], self.probs.clone()).expect("shape")
    }
}

/// Segmentation predictions in one of the two ingestion modes.
#[derive(Debug, Clone, PartialEq)]
pub enum SegPredictions {
    /// Full Monte-Carlo stack `[T, C, P, Q, S]`.
    Full {
        samples: usize,
        classes: usize,
        dims: [usize; 3],
        probs: Vec<f64>,
    },
    /// Mean probabilities `[C, P, Q, S]` plus raw per-voxel uncertainty.
    Precomputed {
        classes: usize,
        dims: [usize; 3],
        mean: Vec<f64>,
        uncertainty: Vec<f64>,
    },
}

impl SegPredictions {
    pub fn full(samples: usize, classes: usize, dims: [usize; 3], probs: Vec<f64>) -> Result<Self, String> {
        let voxels = dims.iter().product::<usize>();
        if samples == 0 || probs.len() != samples * classes * voxels {
            return Err(format!(
                "expected {samples} x {classes} x {dims:?} probabilities, got {}",
                probs.len()
            ));
        }
        let mut col = vec![0.0; classes];
        for t in 0..samples {
            let block = &probs[t * classes * voxels..(t + 1) * classes * voxels];
            for v in 0..voxels {
                for (c, slot) in col.iter_mut().enumerate() {
                    *slot = block[c * voxels + v];
                }
                check_simplex(&col).map_err(|e| format!("sample {t} voxel {v}: {e}"))?;
            }
        }
        Ok(SegPredictions::Full {
            samples,
            classes,
            dims,
            probs,
        })
    }

    pub fn precomputed(
        classes: usize,
        dims: [usize; 3],
        mean: Vec<f64>,
        uncertainty: Vec<f64>,
    ) -> Result<Self, String> {
        let voxels = dims.iter().product::<usize>();
        if mean.len() != classes * voxels || uncertainty.len() != voxels {
            return Err("precomputed mean/uncertainty sizes do not match the grid".into());
        }
        let mut col = vec![0.0; classes];
        for v in 0..voxels {
            for (c, slot) in col.iter_mut().enumerate() {
                *slot = mean[c * voxels + v];
            }
            check_simplex(&col).map_err(|e| format!("voxel {v}: {e}"))?;
        }
        if let Some(u) = uncertainty.iter().find(|u| !(u.is_finite() && **u >= 0.0)) {
            return Err(format!("raw uncertainty {u} must be finite and >= 0"));
        }
        Ok(SegPredictions::Precomputed {
            classes,
            dims,
            mean,
            uncertainty,
        })
    }

    fn full_from_tensor(t: &Tensor, class_count: usize) -> Result<Self, String> {
        match *t.dims() {
            [samples, classes, p, q, s] if classes == class_count => {
                if samples < 2 {
                    return Err(format!("need T >= 2 samples, got {samples}"));
                }
                Self::full(samples, classes, [p, q, s], t.to_f64_vec())
            }
            ref other => Err(format!(
                "full segmentation predictions must be [T, {class_count}, P, Q, S], got {other:?}"
            )),
        }
    }

    fn precomputed_from_tensors(mean: &Tensor, unc: &Tensor, class_count: usize) -> Result<Self, String> {
        match (mean.dims(), unc.dims()) {
            (&[c, p, q, s], &[p2, q2, s2]) if c == class_count && [p, q, s] == [p2, q2, s2] => {
                Self::precomputed(c, [p, q, s], mean.to_f64_vec(), unc.to_f64_vec())
            }
            (a, b) => Err(format!(
                "precomputed predictions must be [{class_count}, P, Q, S] + [P, Q, S], got {a:?} + {b:?}"
            )),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        match self {
            SegPredictions::Full { dims, .. } | SegPredictions::Precomputed { dims, .. } => *dims,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            SegPredictions::Full { classes, .. } | SegPredictions::Precomputed { classes, .. } => *classes,
        }
    }

    pub fn voxels(&self) -> usize {
        self.dims().iter().product()
    }
}

/// `T` samples of `(mean, predicted variance)` per target, `[T, K, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSamples {
    samples: usize,
    targets: usize,
    values: Vec<f64>,
}

impl RegressionSamples {
    pub fn new(samples: usize, targets: usize, values: Vec<f64>) -> Result<Self, String> {
        if samples == 0 || targets == 0 || values.len() != samples * targets * 2 {
            return Err(format!(
                "expected {samples} x {targets} x 2 values, got {}",
                values.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite regression output {v}"));
        }
        if let Some(v) = values.iter().skip(1).step_by(2).find(|v| **v < 0.0) {
            return Err(format!("negative predicted variance {v}"));
        }
        Ok(Self {
            samples,
            targets,
            values,
        })
    }

    pub fn from_tensor(t: &Tensor, target_count: usize) -> Result<Self, String> {
        match *t.dims() {
            [samples, k, 2] if k == target_count => {
                if samples < 2 {
                    return Err(format!("need T >= 2 samples, got {samples}"));
                }
                Self::new(samples, k, t.to_f64_vec())
            }
            ref other => Err(format!("regression predictions must be [T, {target_count}, 2], got {other:?}")),
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn mean_at(&self, t: usize, k: usize) -> f64 {
        self.values[(t * self.targets + k) * 2]
    }

    pub fn variance_at(&self, t: usize, k: usize) -> f64 {
        self.values[(t * self.targets + k) * 2 + 1]
    }

    pub fn means(&self, k: usize) -> Vec<f64> {
        (0..self.samples).map(|t| self.mean_at(t, k)).collect()
    }

    pub fn variances(&self, k: usize) -> Vec<f64> {
        (0..self.samples).map(|t| self.variance_at(t, k)).collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(vec![self.samples, self.targets, 2], self.values.clone()).expect("shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum McPredictions {
    Classification(ClassSamples),
    Segmentation(SegPredictions),
    Regression(RegressionSamples),
}

impl McPredictions {
    /// Tensor in the on-disk layout. Precomputed segmentation yields the
    /// mean-probability tensor only.
    pub fn to_tensor(&self) -> Tensor {
        match self {
            McPredictions::Classification(c) => c.to_tensor(),
            McPredictions::Regression(r) => r.to_tensor(),
            McPredictions::Segmentation(SegPredictions::Full {
                samples,
                classes,
                dims,
                probs,
            }) => Tensor::from_f64(vec![*samples, *classes, dims[0], dims[1], dims[2]], probs.clone())
                .expect("validated shape"),
            McPredictions::Segmentation(SegPredictions::Precomputed { classes, dims, mean, .. }) => {
                Tensor::from_f64(vec![*classes, dims[0], dims[1], dims[2]], mean.clone()).expect("validated shape")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::write_tensor;

    fn write_cls_manifest(dir: &Path, groups: &[u8], truths: &[usize], c: usize) -> PathBuf {
        let mut instances = Vec::new();
        for (i, (&g, &y)) in groups.iter().zip(truths).enumerate() {
            let mut probs = Vec::new();
            for _ in 0..2 {
                let mut row = vec![0.0; c];
                row[i % c] = 1.0;
                probs.extend(row);
            }
            let t = Tensor::from_f64(vec![2, c], probs).unwrap();
            let name = format!("p{i}.uqt");
            write_tensor(&t, dir.join(&name)).unwrap();
            instances.push(serde_json::json!({
                "id": format!("i{i}"), "group": g, "truth": y, "prediction_path": name
            }));
        }
        let doc = serde_json::json!({
            "task": "classification", "class_count": c,
            "instances": instances,
        });
        let path = dir.join("manifest.json");
        fs::write(&path, doc.to_string()).unwrap();
        path
    }

    #[test]
    fn counts_add_up() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cls_manifest(dir.path(), &[0, 0, 1, 1], &[0, 1, 0, 1], 2);
        let m = load_manifest(p).unwrap();
        assert_eq!(m.n(), 4);
        assert_eq!(m.group_counts(), (2, 2));
        assert_eq!(m.measure(), Measure::Entropy);
        assert_eq!(m.normalization(), NormalizationMode::Bound);
    }

    #[test]
    fn single_group_is_missing_group() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cls_manifest(dir.path(), &[0, 0, 0], &[0, 1, 0], 2);
        assert!(matches!(
            load_manifest(p),
            Err(ManifestError::MissingGroup { missing: 1 })
        ));
    }

    #[test]
    fn class_index_equal_to_c_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cls_manifest(dir.path(), &[0, 1], &[8, 0], 8);
        match load_manifest(p) {
            Err(ManifestError::Validation { id, rule }) => {
                assert_eq!(id, "i0");
                assert!(rule.contains("out of range"), "{rule}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn logits_instead_of_probabilities_fail_closure() {
        let err = ClassSamples::new(2, 2, vec![2.0, -1.0, 0.5, 0.5]).unwrap_err();
        assert!(err.contains("outside"), "{err}");
        let err = ClassSamples::new(1, 2, vec![0.6, 0.6]).unwrap_err();
        assert!(err.contains("sum"), "{err}");
        // f32 rounding residue within tolerance is admitted
        assert!(ClassSamples::new(1, 2, vec![0.5, 0.50005]).is_ok());
    }

    #[test]
    fn negative_predicted_variance_rejected() {
        assert!(RegressionSamples::new(2, 1, vec![1.0, 0.1, 1.0, -0.1]).is_err());
    }

    #[test]
    fn malformed_json_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        fs::write(&p, "{\"task\": \"classification\", ").unwrap();
        assert!(matches!(load_manifest(&p), Err(ManifestError::Parse { .. })));
    }

    #[test]
    fn group_label_outside_binary_fails_parse() {
        let text = r#"{"task":"classification","class_count":2,"instances":[
            {"id":"a","group":2,"truth":0,"prediction_path":"x"}]}"#;
        assert!(parse_manifest(text, ".").is_err());
    }

    #[test]
    fn truth_variants_parse_by_shape() {
        let text = r#"{"task":"regression","target_names":["a","b"],"instances":[
            {"id":"a","group":0,"truth":[1.5,2.0]},
            {"id":"b","group":1,"truth":"maps/b.uqt"},
            {"id":"c","group":1,"truth":3}]}"#;
        let m = parse_manifest(text, ".").unwrap();
        assert_eq!(m.instances[0].truth, Truth::Values(vec![1.5, 2.0]));
        assert_eq!(m.instances[1].truth, Truth::LabelMap("maps/b.uqt".into()));
        assert_eq!(m.instances[2].truth, Truth::Class(3));
    }
}
