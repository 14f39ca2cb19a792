//! File formats and the synthetic scenario generator.
//!
//! Datasets are UTF-8 JSON lines, one frame per line:
//!
//! ```text
//! {"frame_id": "f0",
//!  "ground_truths": [{"class": "car", "center": [x, y, z], "size": [l, h, w],
//!                     "yaw": 0.1, "velocity": [vx, vz], "attribute": "moving"}],
//!  "predictions":   [{... same fields ..., "score": 0.9}]}
//! ```
//!
//! `velocity` and `attribute` are optional, and either list may be omitted
//! (read as empty). Floats are written in the shortest form that parses back
//! to the same `f64`, so `load(save(d)) == d` holds exactly.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evaluation::{
    Annotation, BucketReport, Detection, FrameRecord, MetricsReport, ProtocolConfig, RangeBucket,
    TpMeasure,
};
use crate::geometry::{project_bev, Box3D, Point3};
use crate::loss::LossConfig;

fn field<'a>(obj: &'a Map<String, Value>, path: &str, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::schema(join(path, name), "missing required field"))
}

fn join(path: &str, name: &str) -> String {
    if path.is_empty() {
        name.to_string()
    } else {
        format!("{path}.{name}")
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::schema(path, "expected an object"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::schema(path, "expected a string"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::schema(path, "expected a number"))
}

fn as_bool(v: &Value, path: &str) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| Error::schema(path, "expected a boolean"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::schema(path, "expected an array"))
}

fn as_numbers<const N: usize>(v: &Value, path: &str) -> Result<[f64; N]> {
    let arr = as_array(v, path)?;
    if arr.len() != N {
        return Err(Error::schema(
            path,
            format!("expected {N} numbers, got {}", arr.len()),
        ));
    }
    let mut out = [0.0; N];
    for (i, x) in arr.iter().enumerate() {
        out[i] = as_f64(x, &format!("{path}[{i}]"))?;
    }
    Ok(out)
}

fn as_f64_list(v: &Value, path: &str) -> Result<Vec<f64>> {
    as_array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, x)| as_f64(x, &format!("{path}[{i}]")))
        .collect()
}

struct ObjectFields {
    class_name: String,
    bbox: Box3D,
    velocity: Option<[f64; 2]>,
    attribute: Option<String>,
}

fn parse_object(v: &Value, path: &str) -> Result<ObjectFields> {
    let obj = as_object(v, path)?;
    let class_name = as_str(field(obj, path, "class")?, &join(path, "class"))?;
    if class_name.is_empty() {
        return Err(Error::schema(join(path, "class"), "class name is empty"));
    }
    let center: [f64; 3] = as_numbers(field(obj, path, "center")?, &join(path, "center"))?;
    let size: [f64; 3] = as_numbers(field(obj, path, "size")?, &join(path, "size"))?;
    let yaw = as_f64(field(obj, path, "yaw")?, &join(path, "yaw"))?;
    let bbox = Box3D::new(
        Point3::new(center[0], center[1], center[2]),
        size[0],
        size[1],
        size[2],
        yaw,
    )
    .map_err(|e| Error::schema(path, e.to_string()))?;
    let velocity = match obj.get("velocity") {
        None | Some(Value::Null) => None,
        Some(v) => Some(as_numbers::<2>(v, &join(path, "velocity"))?),
    };
    let attribute = match obj.get("attribute") {
        None | Some(Value::Null) => None,
        Some(v) => Some(as_str(v, &join(path, "attribute"))?.to_string()),
    };
    Ok(ObjectFields {
        class_name: class_name.to_string(),
        bbox,
        velocity,
        attribute,
    })
}

fn parse_list<T>(
    obj: &Map<String, Value>,
    name: &str,
    item: impl Fn(&Value, &str) -> Result<T>,
) -> Result<Vec<T>> {
    match obj.get(name) {
        None => Ok(Vec::new()),
        Some(v) => as_array(v, name)?
            .iter()
            .enumerate()
            .map(|(i, x)| item(x, &format!("{name}[{i}]")))
            .collect(),
    }
}

/// Parses one dataset line.
pub fn parse_frame(v: &Value) -> Result<FrameRecord> {
    let obj = as_object(v, "")?;
    let frame_id = as_str(field(obj, "", "frame_id")?, "frame_id")?.to_string();
    let ground_truths = parse_list(obj, "ground_truths", |v, path| {
        let o = parse_object(v, path)?;
        Ok(Annotation {
            class_name: o.class_name,
            bbox: o.bbox,
            velocity: o.velocity,
            attribute: o.attribute,
        })
    })?;
    let predictions = parse_list(obj, "predictions", |v, path| {
        let o = parse_object(v, path)?;
        let score_path = join(path, "score");
        let score = as_f64(field(as_object(v, path)?, path, "score")?, &score_path)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::schema(
                score_path,
                format!("score {score} outside [0, 1]"),
            ));
        }
        Ok(Detection {
            class_name: o.class_name,
            bbox: o.bbox,
            score,
            velocity: o.velocity,
            attribute: o.attribute,
        })
    })?;
    Ok(FrameRecord {
        frame_id,
        ground_truths,
        predictions,
    })
}

/// Parses a JSON-lines dataset. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn parse_dataset(text: &str) -> Result<Vec<FrameRecord>> {
    let mut frames = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let frame = parse_frame(&value).map_err(|e| match e {
            Error::Schema { path, message } => Error::Schema {
                path: format!("line {line_no}: {path}"),
                message,
            },
            other => other,
        })?;
        if !ids.insert(frame.frame_id.clone()) {
            return Err(Error::schema(
                format!("line {line_no}: frame_id"),
                format!("duplicate frame id `{}`", frame.frame_id),
            ));
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

#[derive(Serialize)]
struct ObjectOut<'a> {
    class: &'a str,
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    velocity: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attribute: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Serialize)]
struct FrameOut<'a> {
    frame_id: &'a str,
    ground_truths: Vec<ObjectOut<'a>>,
    predictions: Vec<ObjectOut<'a>>,
}

fn object_out<'a>(
    class: &'a str,
    b: &Box3D,
    velocity: Option<[f64; 2]>,
    attribute: Option<&'a String>,
    score: Option<f64>,
) -> ObjectOut<'a> {
    let c = b.center();
    ObjectOut {
        class,
        center: [c.x, c.y, c.z],
        size: b.size(),
        yaw: b.yaw(),
        velocity,
        attribute: attribute.map(String::as_str),
        score,
    }
}

pub fn dataset_to_string(frames: &[FrameRecord]) -> String {
    let mut out = String::new();
    for f in frames {
        let record = FrameOut {
            frame_id: &f.frame_id,
            ground_truths: f
                .ground_truths
                .iter()
                .map(|a| {
                    object_out(
                        &a.class_name,
                        &a.bbox,
                        a.velocity,
                        a.attribute.as_ref(),
                        None,
                    )
                })
                .collect(),
            predictions: f
                .predictions
                .iter()
                .map(|d| {
                    object_out(
                        &d.class_name,
                        &d.bbox,
                        d.velocity,
                        d.attribute.as_ref(),
                        Some(d.score),
                    )
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record).expect("dataset serializes"));
        out.push('\n');
    }
    out
}

pub fn save_dataset(frames: &[FrameRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_string(frames)).map_err(|e| Error::io(path, e))
}

/// Combines separate ground-truth and prediction datasets by `frame_id`.
/// Frames keep the order of first appearance, ground-truth file first.
pub fn merge_datasets(gt: Vec<FrameRecord>, pred: Vec<FrameRecord>) -> Vec<FrameRecord> {
    let mut merged: Vec<FrameRecord> = Vec::with_capacity(gt.len());
    let mut index = std::collections::HashMap::new();
    for frame in gt.into_iter().chain(pred) {
        match index.get(&frame.frame_id) {
            Some(&i) => {
                let target: &mut FrameRecord = &mut merged[i];
                target.ground_truths.extend(frame.ground_truths);
                target.predictions.extend(frame.predictions);
            }
            None => {
                index.insert(frame.frame_id.clone(), merged.len());
                merged.push(frame);
            }
        }
    }
    merged
}

/// Evaluation protocol plus loss settings, as read from one JSON document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub protocol: ProtocolConfig,
    pub loss: LossConfig,
}

const CONFIG_FIELDS: [&str; 9] = [
    "range_buckets",
    "match_thresholds",
    "ap_distance_thresholds",
    "tp_measures",
    "skip_missing_classes",
    "focal",
    "lambda",
    "smooth_l1_beta",
    "wrap_yaw",
];

/// Reads a config object; absent fields keep their defaults.
pub fn parse_config(v: &Value) -> Result<Config> {
    let obj = as_object(v, "")?;
    if let Some(unknown) = obj.keys().find(|k| !CONFIG_FIELDS.contains(&k.as_str())) {
        return Err(Error::schema(unknown.as_str(), "unknown field"));
    }
    let mut cfg = Config::default();
    let p = &mut cfg.protocol;
    if let Some(v) = obj.get("range_buckets") {
        p.range_buckets = as_array(v, "range_buckets")?
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let [near, far] = as_numbers::<2>(b, &format!("range_buckets[{i}]"))?;
                Ok(RangeBucket { near, far })
            })
            .collect::<Result<_>>()?;
    }
    if let Some(v) = obj.get("match_thresholds") {
        p.match_thresholds = as_f64_list(v, "match_thresholds")?;
    }
    if let Some(v) = obj.get("ap_distance_thresholds") {
        p.ap_distance_thresholds = as_f64_list(v, "ap_distance_thresholds")?;
    }
    if let Some(v) = obj.get("tp_measures") {
        p.tp_measures = as_array(v, "tp_measures")?
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let path = format!("tp_measures[{i}]");
                let name = as_str(m, &path)?;
                TpMeasure::ALL
                    .into_iter()
                    .find(|t| t.label() == name)
                    .ok_or_else(|| Error::schema(path, format!("unknown TP measure `{name}`")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(v) = obj.get("skip_missing_classes") {
        p.skip_missing_classes = as_bool(v, "skip_missing_classes")?;
    }
    if let Some(v) = obj.get("focal") {
        p.focal = as_f64(v, "focal")?;
    }
    if let Some(v) = obj.get("lambda") {
        cfg.loss.lambda = as_f64(v, "lambda")?;
    }
    if let Some(v) = obj.get("smooth_l1_beta") {
        cfg.loss.smooth_l1_beta = as_f64(v, "smooth_l1_beta")?;
    }
    if let Some(v) = obj.get("wrap_yaw") {
        cfg.loss.wrap_yaw = as_bool(v, "wrap_yaw")?;
    }
    if !(cfg.loss.lambda > 0.0 && cfg.loss.lambda < 1.0) {
        return Err(Error::schema(
            "lambda",
            format!("{} outside (0, 1)", cfg.loss.lambda),
        ));
    }
    cfg.loss
        .validate()
        .map_err(|e| Error::schema("smooth_l1_beta", e.to_string()))?;
    cfg.protocol
        .validate()
        .map_err(|e| Error::schema("", e.to_string()))?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<Config> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    parse_config(&value)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

pub fn report_to_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report(text: &str) -> Result<MetricsReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn load_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report(&text)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn render_bucket(out: &mut String, b: &BucketReport, measures: &[TpMeasure]) {
    use std::fmt::Write;
    let _ = writeln!(
        out,
        "range [{}, {}) m, match threshold {} m",
        b.range.near, b.range.far, b.match_threshold
    );
    let mut header = format!(
        "{:<14}{:>6}{:>6}{:>6}{:>6}{:>8}",
        "class", "GT", "TP", "FP", "FN", "mAP"
    );
    for m in measures {
        let _ = write!(header, "{:>8}", m.label());
    }
    let _ = write!(header, "{:>8}", "AUSC");
    let _ = writeln!(out, "{header}");
    for (name, c) in &b.classes {
        let mut row = format!(
            "{:<14}{:>6}{:>6}{:>6}{:>6}{:>8}",
            name,
            c.counts.annotations,
            c.counts.true_positives,
            c.counts.false_positives,
            c.counts.false_negatives,
            cell(c.mean_ap)
        );
        for m in measures {
            let _ = write!(row, "{:>8}", cell(c.tp_errors.get(m).copied().flatten()));
        }
        let _ = write!(row, "{:>8}", cell(c.ausc));
        let _ = writeln!(out, "{row}");
    }
    let s = &b.summary;
    let _ = writeln!(
        out,
        "mAP {}  NDS {}  mAUSC {}  USC-NDS {}  (USC undefined for {} pairs)",
        cell(s.mean_ap),
        cell(s.nds),
        cell(s.mausc),
        cell(s.usc_nds),
        b.usc_failures
    );
}

/// Human-readable per-bucket summary.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = format!("frames: {}\n", report.frames);
    for b in &report.buckets {
        out.push('\n');
        render_bucket(&mut out, b, &report.tp_measures);
    }
    let s = &report.overall;
    out.push_str(&format!(
        "\noverall: mAP {}  NDS {}  mAUSC {}  USC-NDS {}\n",
        cell(s.mean_ap),
        cell(s.nds),
        cell(s.mausc),
        cell(s.usc_nds)
    ));
    out
}

pub fn write_report(
    report: &MetricsReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Json => report_to_json(report),
        ReportFormat::Table => render_table(report),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub name: String,
    pub weight: f64,
    /// Nominal `[length, height, width]` in meters.
    pub size: [f64; 3],
}

/// Parameters of the synthetic scene generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub frames: usize,
    /// Inclusive range of objects per frame.
    pub objects_per_frame: [usize; 2],
    pub classes: Vec<SyntheticClass>,
    /// Ground-truth center ranges are drawn from `[min_range, max_range)`.
    pub min_range: f64,
    pub max_range: f64,
    /// Largest absolute azimuth of a ground-truth center, radians.
    pub max_azimuth: f64,
    /// Signed radial shift of every prediction center, meters.
    pub depth_bias: f64,
    pub lateral_noise: f64,
    pub size_noise: f64,
    pub yaw_noise: f64,
    pub miss_rate: f64,
    pub fp_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 10,
            objects_per_frame: [1, 4],
            classes: vec![
                SyntheticClass {
                    name: "car".into(),
                    weight: 0.5,
                    size: [1.9, 1.6, 4.6],
                },
                SyntheticClass {
                    name: "pedestrian".into(),
                    weight: 0.3,
                    size: [0.7, 1.75, 0.7],
                },
                SyntheticClass {
                    name: "bicycle".into(),
                    weight: 0.2,
                    size: [0.6, 1.3, 1.8],
                },
            ],
            min_range: 2.0,
            max_range: 20.0,
            max_azimuth: 0.6,
            depth_bias: 0.0,
            lateral_noise: 0.0,
            size_noise: 0.0,
            yaw_noise: 0.0,
            miss_rate: 0.0,
            fp_rate: 0.0,
        }
    }
}

/// Minimum depth of every ground-truth footprint vertex.
const MIN_FOOTPRINT_DEPTH: f64 = 1.0;
const PLACEMENT_ATTEMPTS: usize = 200;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, rate) in [("miss_rate", self.miss_rate), ("fp_rate", self.fp_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} must lie in [0, 1], got {rate}"));
            }
        }
        let [lo, hi] = self.objects_per_frame;
        if hi == 0 || lo > hi {
            return bad(format!("objects_per_frame [{lo}, {hi}] is empty"));
        }
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        for c in &self.classes {
            if c.name.is_empty()
                || c.weight.is_nan()
                || c.weight <= 0.0
                || c.size.iter().any(|s| s.is_nan() || *s <= 0.0)
            {
                return bad(format!(
                    "class `{}` needs a name, positive weight and size",
                    c.name
                ));
            }
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range) {
            return bad(format!(
                "range [{}, {}) is empty",
                self.min_range, self.max_range
            ));
        }
        if !(self.max_azimuth > 0.0 && self.max_azimuth < PI / 2.0) {
            return bad(format!(
                "max_azimuth {} outside (0, pi/2)",
                self.max_azimuth
            ));
        }
        for (name, v) in [
            ("depth_bias", self.depth_bias),
            ("lateral_noise", self.lateral_noise),
            ("size_noise", self.size_noise),
            ("yaw_noise", self.yaw_noise),
        ] {
            if !v.is_finite() || (name != "depth_bias" && v < 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

fn pick_class<'a>(rng: &mut ChaCha8Rng, classes: &'a [SyntheticClass]) -> &'a SyntheticClass {
    let total: f64 = classes.iter().map(|c| c.weight).sum();
    let mut u = rng.random::<f64>() * total;
    for c in classes {
        if u < c.weight {
            return c;
        }
        u -= c.weight;
    }
    classes.last().expect("non-empty")
}

fn footprint_radius(size: &[f64; 3]) -> f64 {
    size[0].hypot(size[2]) / 2.0
}

fn sample_frontal_box(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    size: [f64; 3],
    placed: &[(Point3, f64)],
) -> Option<Box3D> {
    let radius = footprint_radius(&size);
    for _ in 0..PLACEMENT_ATTEMPTS {
        let range = rng.random_range(spec.min_range..spec.max_range);
        let azimuth = rng.random_range(-spec.max_azimuth..=spec.max_azimuth);
        let yaw = rng.random_range(-PI..PI);
        let center = Point3::new(range * azimuth.sin(), 0.0, range * azimuth.cos());
        let b = Box3D::new(center, size[0], size[1], size[2], yaw).ok()?;
        if project_bev(&b)
            .vertices()
            .iter()
            .any(|v| v.y < MIN_FOOTPRINT_DEPTH)
        {
            continue;
        }
        let clear = placed
            .iter()
            .all(|(c, r)| (c.x - center.x).hypot(c.z - center.z) > r + radius + 0.5);
        if clear {
            return Some(b);
        }
    }
    None
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("validated std")
}

fn perturb(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, g: &Box3D) -> Box3D {
    // fixed draw order so that specs differing only in magnitudes share noise
    let lateral = normal(spec.lateral_noise).sample(rng);
    let scale: [f64; 3] = std::array::from_fn(|_| normal(spec.size_noise).sample(rng));
    let dyaw = normal(spec.yaw_noise).sample(rng);

    let c = g.center();
    let range = c.x.hypot(c.z);
    let (ux, uz) = (c.x / range, c.z / range);
    let center = Point3::new(
        c.x + ux * spec.depth_bias + uz * lateral,
        c.y,
        c.z + uz * spec.depth_bias - ux * lateral,
    );
    let size = g.size();
    let dims: [f64; 3] = std::array::from_fn(|i| (size[i] * (1.0 + scale[i])).max(0.05));
    Box3D::new(center, dims[0], dims[1], dims[2], g.yaw() + dyaw).expect("finite perturbation")
}

/// Generates a dataset; identical specs give identical output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<FrameRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut frames = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let count = rng.random_range(spec.objects_per_frame[0]..=spec.objects_per_frame[1]);
        let mut placed: Vec<(Point3, f64)> = Vec::new();
        let mut ground_truths = Vec::new();
        let mut predictions = Vec::new();
        for _ in 0..count {
            let class = pick_class(&mut rng, &spec.classes);
            let Some(g) = sample_frontal_box(&mut rng, spec, class.size, &placed) else {
                continue;
            };
            placed.push((g.center(), footprint_radius(&class.size)));
            let missed = rng.random::<f64>() < spec.miss_rate;
            let p = perturb(&mut rng, spec, &g);
            let score = rng.random_range(0.5..=1.0);
            if !missed {
                predictions.push(Detection::new(class.name.clone(), p, score));
            }
            if rng.random::<f64>() < spec.fp_rate {
                let fp_class = pick_class(&mut rng, &spec.classes);
                if let Some(b) = sample_frontal_box(&mut rng, spec, fp_class.size, &placed) {
                    let score = rng.random_range(0.0..0.5);
                    predictions.push(Detection::new(fp_class.name.clone(), b, score));
                }
            }
            ground_truths.push(Annotation::new(class.name.clone(), g));
        }
        frames.push(FrameRecord {
            frame_id: format!("frame-{f:06}"),
            ground_truths,
            predictions,
        });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::evaluate;
    use proptest::prelude::*;

    const LINE: &str = r#"{"frame_id":"a","ground_truths":[{"class":"car","center":[1.0,0.0,10.0],"size":[1.8,1.6,4.5],"yaw":0.1}],"predictions":[{"class":"car","center":[1.2,0.0,10.5],"size":[1.8,1.6,4.5],"yaw":0.0,"score":0.9}]}"#;

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(parse_dataset("").unwrap().is_empty());
        assert!(parse_dataset("\n\n").unwrap().is_empty());
    }

    #[test]
    fn parses_a_frame() {
        let frames = parse_dataset(LINE).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].ground_truths[0].class_name, "car");
        assert_eq!(frames[0].predictions[0].score, 0.9);
    }

    #[test]
    fn missing_yaw_is_named() {
        let line = LINE.replacen(r#","yaw":0.1"#, "", 1);
        match parse_dataset(&line).unwrap_err() {
            Error::Schema { path, .. } => assert_eq!(path, "line 1: ground_truths[0].yaw"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn every_required_field_is_named() {
        for (name, list) in [
            ("class", "ground_truths"),
            ("center", "ground_truths"),
            ("size", "ground_truths"),
            ("yaw", "ground_truths"),
            ("score", "predictions"),
        ] {
            let mut v: Value = serde_json::from_str(LINE).unwrap();
            let target = if list == "ground_truths" && name != "score" {
                &mut v["ground_truths"][0]
            } else {
                &mut v["predictions"][0]
            };
            target.as_object_mut().unwrap().remove(name);
            let text = serde_json::to_string(&v).unwrap();
            match parse_dataset(&text).unwrap_err() {
                Error::Schema { path, .. } => {
                    assert!(path.ends_with(&format!("{list}[0].{name}")), "{path}")
                }
                e => panic!("unexpected {e}"),
            }
        }
        let mut v: Value = serde_json::from_str(LINE).unwrap();
        v.as_object_mut().unwrap().remove("frame_id");
        let err = parse_dataset(&serde_json::to_string(&v).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Schema { ref path, .. } if path.ends_with("frame_id")));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{LINE}\n{{not json\n");
        assert!(matches!(
            parse_dataset(&text),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn invalid_values_are_schema_errors() {
        let bad_size = LINE.replacen("[1.8,1.6,4.5]", "[0.0,1.6,4.5]", 1);
        assert!(matches!(
            parse_dataset(&bad_size),
            Err(Error::Schema { .. })
        ));
        let bad_score = LINE.replace(r#""score":0.9"#, r#""score":1.5"#);
        assert!(matches!(
            parse_dataset(&bad_score),
            Err(Error::Schema { .. })
        ));
        let dup = format!("{LINE}\n{LINE}");
        assert!(matches!(parse_dataset(&dup), Err(Error::Schema { .. })));
    }

    #[test]
    fn dataset_round_trip_is_byte_stable() {
        let frames = parse_dataset(LINE).unwrap();
        let text = dataset_to_string(&frames);
        let again = parse_dataset(&text).unwrap();
        assert_eq!(frames, again);
        assert_eq!(dataset_to_string(&again), text);
    }

    #[test]
    fn optional_fields_round_trip() {
        let line = LINE.replacen(
            r#""yaw":0.1}"#,
            r#""yaw":0.1,"velocity":[1.5,-0.25],"attribute":"moving"}"#,
            1,
        );
        let frames = parse_dataset(&line).unwrap();
        assert_eq!(frames[0].ground_truths[0].velocity, Some([1.5, -0.25]));
        assert_eq!(parse_dataset(&dataset_to_string(&frames)).unwrap(), frames);
    }

    #[test]
    fn merge_by_frame_id() {
        let gt = parse_dataset(r#"{"frame_id":"a","ground_truths":[{"class":"car","center":[0,0,5],"size":[1,1,1],"yaw":0}]}"#).unwrap();
        let pred = parse_dataset(r#"{"frame_id":"a","predictions":[{"class":"car","center":[0,0,5],"size":[1,1,1],"yaw":0,"score":1}]}
{"frame_id":"b"}"#)
        .unwrap();
        let merged = merge_datasets(gt, pred);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].ground_truths.len(), 1);
        assert_eq!(merged[0].predictions.len(), 1);
    }

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = parse_config_str("{}").unwrap();
        assert_eq!(cfg, Config::default());
        let p = &cfg.protocol;
        assert_eq!(
            p.range_buckets,
            vec![
                RangeBucket {
                    near: 0.0,
                    far: 10.0
                },
                RangeBucket {
                    near: 10.0,
                    far: 20.0
                }
            ]
        );
        assert_eq!(p.match_thresholds, vec![1.0, 2.0]);
        assert!(p.skip_missing_classes);
        assert_eq!(p.focal, 1.0);
        assert_eq!(cfg.loss.lambda, 0.8);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            parse_config_str(r#"{"lambda": 1.3}"#),
            Err(Error::Schema { ref path, .. }) if path == "lambda"
        ));
        assert!(matches!(
            parse_config_str(r#"{"lamda": 0.5}"#),
            Err(Error::Schema { ref path, .. }) if path == "lamda"
        ));
        assert!(matches!(
            parse_config_str(r#"{"tp_measures": ["ATE", "XYZ"]}"#),
            Err(Error::Schema { ref path, .. }) if path == "tp_measures[1]"
        ));
        assert!(matches!(
            parse_config_str(r#"{"range_buckets": [[0, 5]]}"#),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn custom_buckets_override_defaults() {
        let cfg = parse_config_str(
            r#"{"range_buckets": [[0, 5], [5, 15], [15, 30]], "match_thresholds": [0.5, 1, 2],
                "tp_measures": ["ATE", "ASE", "AOE", "AVE", "AAE"], "lambda": 0.6}"#,
        )
        .unwrap();
        assert_eq!(cfg.protocol.range_buckets.len(), 3);
        assert_eq!(
            cfg.protocol.range_buckets[2],
            RangeBucket {
                near: 15.0,
                far: 30.0
            }
        );
        assert_eq!(cfg.protocol.tp_measures.len(), 5);
        assert_eq!(cfg.loss.lambda, 0.6);
    }

    fn perfect_report() -> MetricsReport {
        let frames = generate_synthetic(&SyntheticSpec {
            frames: 20,
            ..SyntheticSpec::default()
        })
        .unwrap();
        evaluate(&frames, &ProtocolConfig::default()).unwrap()
    }

    #[test]
    fn report_json_round_trip_and_nulls() {
        let report = perfect_report();
        let text = report_to_json(&report);
        assert_eq!(parse_report(&text).unwrap(), report);

        let empty = evaluate(&[], &ProtocolConfig::default()).unwrap();
        let text = report_to_json(&empty);
        assert!(text.contains("\"mausc\": null"));
        assert_eq!(parse_report(&text).unwrap(), empty);
    }

    #[test]
    fn table_shows_perfect_scores() {
        let table = render_table(&perfect_report());
        let summaries: Vec<&str> = table.lines().filter(|l| l.starts_with("mAP ")).collect();
        assert_eq!(summaries.len(), 2);
        for line in summaries {
            assert!(
                line.starts_with("mAP 1.000  NDS 1.000  mAUSC 1.000  USC-NDS 1.000"),
                "{line}"
            );
        }
    }

    #[test]
    fn zero_noise_predictions_equal_ground_truths() {
        let frames = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert!(frames.iter().any(|f| !f.ground_truths.is_empty()));
        for f in &frames {
            assert_eq!(f.ground_truths.len(), f.predictions.len());
            for (a, d) in f.ground_truths.iter().zip(&f.predictions) {
                assert_eq!(a.bbox, d.bbox);
                assert_eq!(a.class_name, d.class_name);
                let c = a.bbox.center();
                assert!(c.x.hypot(c.z) < 20.0);
                assert!(project_bev(&a.bbox).vertices().iter().all(|v| v.y > 1.0));
            }
        }
    }

    #[test]
    fn synthetic_spec_validation() {
        let spec = SyntheticSpec {
            miss_rate: 1.5,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&spec).is_err());
        let spec = SyntheticSpec {
            frames: 0,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&spec).unwrap().is_empty());
    }

    #[test]
    fn miss_and_fp_rates_shape_the_dataset() {
        let spec = SyntheticSpec {
            frames: 200,
            miss_rate: 1.0,
            ..SyntheticSpec::default()
        };
        let frames = generate_synthetic(&spec).unwrap();
        assert!(frames.iter().all(|f| f.predictions.is_empty()));
        let spec = SyntheticSpec {
            frames: 200,
            fp_rate: 1.0,
            ..SyntheticSpec::default()
        };
        let frames = generate_synthetic(&spec).unwrap();
        let gts: usize = frames.iter().map(|f| f.ground_truths.len()).sum();
        let preds: usize = frames.iter().map(|f| f.predictions.len()).sum();
        assert!(preds > gts);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn generated_datasets_round_trip(seed in any::<u64>(), noise in 0.0..0.5f64) {
            let spec = SyntheticSpec {
                seed,
                frames: 5,
                lateral_noise: noise,
                size_noise: noise / 4.0,
                yaw_noise: noise,
                depth_bias: noise - 0.25,
                fp_rate: 0.3,
                miss_rate: 0.2,
                ..SyntheticSpec::default()
            };
            let a = generate_synthetic(&spec).unwrap();
            let b = generate_synthetic(&spec).unwrap();
            prop_assert_eq!(&a, &b);
            let text = dataset_to_string(&a);
            prop_assert_eq!(parse_dataset(&text).unwrap(), a);
        }
    }
}
