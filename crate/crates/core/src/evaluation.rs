//! Range-bucketed detection benchmark: center-distance matching, average
//! precision, TP error measures, NDS and the USC aggregates.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Box3D};
use crate::usc::{usc_score, DEFAULT_FOCAL};

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub class_name: String,
    pub bbox: Box3D,
    /// `(vx, vz)` in m/s.
    pub velocity: Option<[f64; 2]>,
    pub attribute: Option<String>,
}

impl Annotation {
    pub fn new(class_name: impl Into<String>, bbox: Box3D) -> Self {
        Self {
            class_name: class_name.into(),
            bbox,
            velocity: None,
            attribute: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_name: String,
    pub bbox: Box3D,
    pub score: f64,
    pub velocity: Option<[f64; 2]>,
    pub attribute: Option<String>,
}

impl Detection {
    pub fn new(class_name: impl Into<String>, bbox: Box3D, score: f64) -> Self {
        Self {
            class_name: class_name.into(),
            bbox,
            score,
            velocity: None,
            attribute: None,
        }
    }
}

/// Ground truths and predictions for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub ground_truths: Vec<Annotation>,
    pub predictions: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TpMeasure {
    #[serde(rename = "ATE")]
    Translation,
    #[serde(rename = "ASE")]
    Scale,
    #[serde(rename = "AOE")]
    Orientation,
    #[serde(rename = "AVE")]
    Velocity,
    #[serde(rename = "AAE")]
    Attribute,
}

impl TpMeasure {
    pub const ALL: [TpMeasure; 5] = [
        TpMeasure::Translation,
        TpMeasure::Scale,
        TpMeasure::Orientation,
        TpMeasure::Velocity,
        TpMeasure::Attribute,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TpMeasure::Translation => "ATE",
            TpMeasure::Scale => "ASE",
            TpMeasure::Orientation => "AOE",
            TpMeasure::Velocity => "AVE",
            TpMeasure::Attribute => "AAE",
        }
    }
}

/// Half-open range `[near, far)` of ground-truth BEV center distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBucket {
    pub near: f64,
    pub far: f64,
}

impl RangeBucket {
    pub fn contains(&self, distance: f64) -> bool {
        self.near <= distance && distance < self.far
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub range_buckets: Vec<RangeBucket>,
    /// Center-distance threshold used for TP measures and USC, one per bucket.
    pub match_thresholds: Vec<f64>,
    pub ap_distance_thresholds: Vec<f64>,
    pub tp_measures: Vec<TpMeasure>,
    pub skip_missing_classes: bool,
    pub focal: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            range_buckets: vec![
                RangeBucket {
                    near: 0.0,
                    far: 10.0,
                },
                RangeBucket {
                    near: 10.0,
                    far: 20.0,
                },
            ],
            match_thresholds: vec![1.0, 2.0],
            ap_distance_thresholds: vec![0.5, 1.0, 2.0, 4.0],
            tp_measures: vec![
                TpMeasure::Translation,
                TpMeasure::Scale,
                TpMeasure::Orientation,
            ],
            skip_missing_classes: true,
            focal: DEFAULT_FOCAL,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.range_buckets.is_empty() {
            return bad("at least one range bucket is required".into());
        }
        for (i, b) in self.range_buckets.iter().enumerate() {
            if !(b.near >= 0.0 && b.near < b.far) {
                return bad(format!(
                    "bucket {i} [{}, {}) is empty or negative",
                    b.near, b.far
                ));
            }
            if let Some(next) = self.range_buckets.get(i + 1) {
                if next.near < b.far {
                    return bad(format!(
                        "buckets {i} and {} overlap or are unordered",
                        i + 1
                    ));
                }
            }
        }
        if self.match_thresholds.len() != self.range_buckets.len() {
            return bad(format!(
                "{} match thresholds for {} buckets",
                self.match_thresholds.len(),
                self.range_buckets.len()
            ));
        }
        let positive = |v: &f64| v.is_finite() && *v > 0.0;
        if !self.match_thresholds.iter().all(positive) {
            return bad("match thresholds must be positive".into());
        }
        if self.ap_distance_thresholds.is_empty()
            || !self.ap_distance_thresholds.iter().all(positive)
        {
            return bad("AP distance thresholds must be non-empty and positive".into());
        }
        let unique: BTreeSet<_> = self.tp_measures.iter().collect();
        if self.tp_measures.is_empty() || unique.len() != self.tp_measures.len() {
            return bad("TP measures must be a non-empty set".into());
        }
        if !positive(&self.focal) {
            return bad(format!("focal must be positive, got {}", self.focal));
        }
        Ok(())
    }

    pub fn bucket_of(&self, distance: f64) -> Option<usize> {
        self.range_buckets.iter().position(|b| b.contains(distance))
    }
}

/// BEV distance between box centers, ignoring height.
pub fn bev_center_distance(p: &Box3D, g: &Box3D) -> f64 {
    let (a, b) = (p.center(), g.center());
    (a.x - b.x).hypot(a.z - b.z)
}

fn range_of(b: &Box3D) -> f64 {
    let c = b.center();
    c.x.hypot(c.z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub detection: usize,
    pub annotation: usize,
    pub distance: f64,
}

/// One-to-one assignment of a frame's detections to annotations, by index
/// into the slices given to [`match_frame`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    pub pairs: Vec<MatchedPair>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

/// Greedy center-distance matching for one class.
///
/// Detections are visited by descending score (ties keep input order); each
/// takes the nearest unmatched annotation within `threshold`, ties going to
/// the lower annotation index.
pub fn match_frame(
    detections: &[Detection],
    annotations: &[Annotation],
    class_name: &str,
    threshold: f64,
) -> MatchSet {
    let mut order: Vec<usize> = (0..detections.len())
        .filter(|&i| detections[i].class_name == class_name)
        .collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));

    let candidates: Vec<usize> = (0..annotations.len())
        .filter(|&j| annotations[j].class_name == class_name)
        .collect();
    let mut taken = vec![false; annotations.len()];
    let mut set = MatchSet::default();

    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for &j in &candidates {
            if taken[j] {
                continue;
            }
            let d = bev_center_distance(&detections[i].bbox, &annotations[j].bbox);
            if d <= threshold && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        match best {
            Some((j, distance)) => {
                taken[j] = true;
                set.pairs.push(MatchedPair {
                    detection: i,
                    annotation: j,
                    distance,
                });
            }
            None => set.false_positives.push(i),
        }
    }
    set.false_negatives = candidates.into_iter().filter(|&j| !taken[j]).collect();
    set
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    pub score: f64,
    pub is_true_positive: bool,
}

pub const AP_MIN_RECALL: f64 = 0.1;
pub const AP_MIN_PRECISION: f64 = 0.1;
const AP_RECALL_SAMPLES: usize = 101;

// Linear interpolation of `ys` over non-decreasing `xs`, holding ys[0] to the
// left and returning 0 to the right of the last sample. For repeated xs the
// last sample at or below `x` is used.
fn interpolate(x: f64, xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    if x < xs[0] {
        return ys[0];
    }
    if x > xs[n - 1] {
        return 0.0;
    }
    let j = xs.partition_point(|&v| v <= x) - 1;
    if j == n - 1 {
        return ys[n - 1];
    }
    ys[j] + (x - xs[j]) * (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j])
}

/// Average precision over a class's scored detections.
///
/// Outcomes are ranked by descending score (stable). Precision is
/// interpolated at recalls `i / 100` for `i = 0..=100`; the points with recall
/// above 0.1 are kept, 0.1 is subtracted from each precision (floored at 0)
/// and the mean is renormalised by `1 / 0.9`. Returns 0 when there are no
/// annotations or no detections.
pub fn average_precision(outcomes: &[ScoredOutcome], num_annotations: usize) -> f64 {
    if num_annotations == 0 || outcomes.is_empty() {
        return 0.0;
    }
    let mut ranked = outcomes.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    for o in &ranked {
        if o.is_true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_annotations as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }

    let first = (100.0 * AP_MIN_RECALL).round() as usize + 1;
    let samples = AP_RECALL_SAMPLES - first;
    // mean of (p - m)+ / (1 - m), written as 1 - mean deficit so that a
    // perfect curve gives exactly 1
    let deficit: f64 = (first..AP_RECALL_SAMPLES)
        .map(|i| {
            let p = interpolate(i as f64 / 100.0, &recall, &precision);
            1.0 - p.max(AP_MIN_PRECISION)
        })
        .sum();
    (1.0 - deficit / (samples as f64 * (1.0 - AP_MIN_PRECISION))).clamp(0.0, 1.0)
}

/// IoU of two boxes after aligning centers and yaw.
pub fn aligned_iou(p: &Box3D, g: &Box3D) -> f64 {
    let inter: f64 = p
        .size()
        .iter()
        .zip(g.size())
        .map(|(a, b)| a.min(b))
        .product();
    inter / (p.volume() + g.volume() - inter)
}

/// Per-pair error for one TP measure.
pub fn tp_error(measure: TpMeasure, det: &Detection, ann: &Annotation) -> Result<f64> {
    Ok(match measure {
        TpMeasure::Translation => bev_center_distance(&det.bbox, &ann.bbox),
        TpMeasure::Scale => 1.0 - aligned_iou(&det.bbox, &ann.bbox),
        TpMeasure::Orientation => normalize_angle(det.bbox.yaw() - ann.bbox.yaw()).abs(),
        TpMeasure::Velocity => match (det.velocity, ann.velocity) {
            (Some(a), Some(b)) => (a[0] - b[0]).hypot(a[1] - b[1]),
            _ => {
                return Err(Error::MissingAnnotationField {
                    measure: "AVE",
                    field: "velocity",
                })
            }
        },
        TpMeasure::Attribute => match (&det.attribute, &ann.attribute) {
            (Some(a), Some(b)) => f64::from(u8::from(a != b)),
            _ => {
                return Err(Error::MissingAnnotationField {
                    measure: "AAE",
                    field: "attribute",
                })
            }
        },
    })
}

/// Mean error per requested measure; `None` for an empty pair list.
pub fn tp_error_means(
    pairs: &[(&Detection, &Annotation)],
    measures: &[TpMeasure],
) -> Result<BTreeMap<TpMeasure, Option<f64>>> {
    measures
        .iter()
        .map(|&m| {
            if pairs.is_empty() {
                return Ok((m, None));
            }
            let sum = pairs
                .iter()
                .map(|(d, a)| tp_error(m, d, a))
                .sum::<Result<f64>>()?;
            Ok((m, Some(sum / pairs.len() as f64)))
        })
        .collect()
}

/// NDS generalised to `k = tp_errors.len()` measures:
/// `(k * mAP + sum(1 - min(1, e))) / (2k)`. With all five measures this is
/// the standard score.
pub fn nds(mean_ap: f64, tp_errors: &[f64]) -> f64 {
    let k = tp_errors.len();
    if k == 0 {
        return mean_ap;
    }
    let tp_score: f64 = tp_errors.iter().map(|e| 1.0 - e.min(1.0)).sum();
    (k as f64 * mean_ap + tp_score) / (2 * k) as f64
}

/// Mean of AUSC over classes that have one. With `skip_missing` unset, a
/// class without scores counts as 0.
pub fn aggregate_usc(
    per_class: &BTreeMap<String, Vec<f64>>,
    skip_missing: bool,
) -> (BTreeMap<String, Option<f64>>, Option<f64>) {
    let ausc: BTreeMap<String, Option<f64>> = per_class
        .iter()
        .map(|(c, v)| (c.clone(), mean(v)))
        .collect();
    let values: Vec<f64> = ausc
        .values()
        .filter_map(|a| {
            if skip_missing {
                *a
            } else {
                Some(a.unwrap_or(0.0))
            }
        })
        .collect();
    (ausc, mean(&values))
}

pub fn usc_nds(nds: f64, mausc: f64) -> f64 {
    (nds + mausc) / 2.0
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::SeriesLength(xs.len(), ys.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let scale = |m: f64| f64::EPSILON * n * m.abs().max(1.0);
    if sxx.sqrt() <= scale(mx) || syy.sqrt() <= scale(my) {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub annotations: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        self.annotations += rhs.annotations;
        self.true_positives += rhs.true_positives;
        self.false_positives += rhs.false_positives;
        self.false_negatives += rhs.false_negatives;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: Option<f64>,
}

/// Metrics for one class in one range bucket. `None` marks values that are
/// undefined for lack of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub counts: Counts,
    pub usc_failures: usize,
    pub ap: Vec<ThresholdAp>,
    pub mean_ap: Option<f64>,
    pub tp_errors: BTreeMap<TpMeasure, Option<f64>>,
    pub ausc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub mean_ap: Option<f64>,
    pub nds: Option<f64>,
    pub mausc: Option<f64>,
    pub usc_nds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub range: RangeBucket,
    pub match_threshold: f64,
    pub counts: Counts,
    /// Matched pairs whose USC is undefined (object beside or around the
    /// vehicle); excluded from AUSC.
    pub usc_failures: usize,
    pub classes: BTreeMap<String, ClassMetrics>,
    pub tp_errors: BTreeMap<TpMeasure, Option<f64>>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub tp_measures: Vec<TpMeasure>,
    pub buckets: Vec<BucketReport>,
    /// Mean of each bucket summary value over the buckets where it is defined.
    pub overall: Summary,
}

#[derive(Default)]
struct ClassAccumulator {
    counts: Counts,
    usc_failures: usize,
    // per AP threshold
    outcomes: Vec<Vec<ScoredOutcome>>,
    errors: BTreeMap<TpMeasure, Vec<f64>>,
    usc: Vec<f64>,
}

/// Evaluates a dataset bucket by bucket.
///
/// Annotations fall in the bucket of their BEV center range. Matching runs
/// over the whole frame; a matched detection is attributed to its
/// annotation's bucket, an unmatched one to the bucket of its own range.
pub fn evaluate(frames: &[FrameRecord], config: &ProtocolConfig) -> Result<MetricsReport> {
    config.validate()?;
    let mut seen = HashSet::new();
    for f in frames {
        if !seen.insert(f.frame_id.as_str()) {
            return Err(Error::schema(
                "frame_id",
                format!("duplicate frame id `{}`", f.frame_id),
            ));
        }
    }
    // canonical order makes every reduction independent of input order
    let mut ordered: Vec<&FrameRecord> = frames.iter().collect();
    ordered.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));

    let classes: BTreeSet<&str> = frames
        .iter()
        .flat_map(|f| {
            f.ground_truths
                .iter()
                .map(|a| a.class_name.as_str())
                .chain(f.predictions.iter().map(|d| d.class_name.as_str()))
        })
        .collect();

    let n_buckets = config.range_buckets.len();
    let n_ap = config.ap_distance_thresholds.len();
    let mut acc: Vec<BTreeMap<&str, ClassAccumulator>> = (0..n_buckets)
        .map(|_| {
            classes
                .iter()
                .map(|&c| {
                    let a = ClassAccumulator {
                        outcomes: vec![Vec::new(); n_ap],
                        ..Default::default()
                    };
                    (c, a)
                })
                .collect()
        })
        .collect();

    for frame in ordered {
        let ann_bucket: Vec<Option<usize>> = frame
            .ground_truths
            .iter()
            .map(|a| config.bucket_of(range_of(&a.bbox)))
            .collect();
        let det_bucket: Vec<Option<usize>> = frame
            .predictions
            .iter()
            .map(|d| config.bucket_of(range_of(&d.bbox)))
            .collect();
        let frame_classes: BTreeSet<&str> = frame
            .ground_truths
            .iter()
            .map(|a| a.class_name.as_str())
            .chain(frame.predictions.iter().map(|d| d.class_name.as_str()))
            .collect();

        for class in frame_classes {
            for (ti, &threshold) in config.ap_distance_thresholds.iter().enumerate() {
                let ms = match_frame(&frame.predictions, &frame.ground_truths, class, threshold);
                for pair in &ms.pairs {
                    if let Some(b) = ann_bucket[pair.annotation] {
                        acc[b].get_mut(class).unwrap().outcomes[ti].push(ScoredOutcome {
                            score: frame.predictions[pair.detection].score,
                            is_true_positive: true,
                        });
                    }
                }
                for &i in &ms.false_positives {
                    if let Some(b) = det_bucket[i] {
                        acc[b].get_mut(class).unwrap().outcomes[ti].push(ScoredOutcome {
                            score: frame.predictions[i].score,
                            is_true_positive: false,
                        });
                    }
                }
            }

            for (b, &threshold) in config.match_thresholds.iter().enumerate() {
                let ms = match_frame(&frame.predictions, &frame.ground_truths, class, threshold);
                let slot = acc[b].get_mut(class).unwrap();
                slot.counts.annotations += frame
                    .ground_truths
                    .iter()
                    .zip(&ann_bucket)
                    .filter(|(a, ab)| a.class_name == class && **ab == Some(b))
                    .count();
                slot.counts.false_negatives += ms
                    .false_negatives
                    .iter()
                    .filter(|&&j| ann_bucket[j] == Some(b))
                    .count();
                slot.counts.false_positives += ms
                    .false_positives
                    .iter()
                    .filter(|&&i| det_bucket[i] == Some(b))
                    .count();

                for pair in ms
                    .pairs
                    .iter()
                    .filter(|p| ann_bucket[p.annotation] == Some(b))
                {
                    let det = &frame.predictions[pair.detection];
                    let ann = &frame.ground_truths[pair.annotation];
                    slot.counts.true_positives += 1;
                    for &m in &config.tp_measures {
                        let e = tp_error(m, det, ann).map_err(|e| Error::Frame {
                            frame_id: frame.frame_id.clone(),
                            source: Box::new(e),
                        })?;
                        slot.errors.entry(m).or_default().push(e);
                    }
                    match usc_score(&det.bbox, &ann.bbox, config.focal) {
                        Ok(s) => slot.usc.push(s.usc),
                        Err(_) => slot.usc_failures += 1,
                    }
                }
            }
        }
    }

    let buckets = acc
        .into_iter()
        .enumerate()
        .map(|(b, per_class)| build_bucket(b, per_class, config))
        .collect::<Vec<_>>();

    let overall_of = |f: fn(&Summary) -> Option<f64>| {
        let vals: Vec<f64> = buckets.iter().filter_map(|b| f(&b.summary)).collect();
        mean(&vals)
    };
    let overall = Summary {
        mean_ap: overall_of(|s| s.mean_ap),
        nds: overall_of(|s| s.nds),
        mausc: overall_of(|s| s.mausc),
        usc_nds: overall_of(|s| s.usc_nds),
    };

    Ok(MetricsReport {
        frames: frames.len(),
        tp_measures: config.tp_measures.clone(),
        buckets,
        overall,
    })
}

fn build_bucket(
    index: usize,
    per_class: BTreeMap<&str, ClassAccumulator>,
    config: &ProtocolConfig,
) -> BucketReport {
    let mut counts = Counts::default();
    let mut usc_failures = 0;
    let mut classes = BTreeMap::new();

    // values entering the bucket means, per included class
    let mut map_terms = Vec::new();
    let mut tp_terms: BTreeMap<TpMeasure, Vec<f64>> = BTreeMap::new();
    let mut usc_terms = Vec::new();

    for (class, a) in per_class {
        counts += a.counts;
        usc_failures += a.usc_failures;
        let present = a.counts.annotations > 0;

        let ap: Vec<ThresholdAp> = config
            .ap_distance_thresholds
            .iter()
            .zip(&a.outcomes)
            .map(|(&threshold, outcomes)| ThresholdAp {
                threshold,
                ap: present.then(|| average_precision(outcomes, a.counts.annotations)),
            })
            .collect();
        let mean_ap = present
            .then(|| mean(&ap.iter().filter_map(|t| t.ap).collect::<Vec<_>>()))
            .flatten();
        let tp_errors: BTreeMap<TpMeasure, Option<f64>> = config
            .tp_measures
            .iter()
            .map(|&m| (m, a.errors.get(&m).and_then(|v| mean(v))))
            .collect();
        let ausc = mean(&a.usc);

        if present || !config.skip_missing_classes {
            map_terms.push(mean_ap.unwrap_or(0.0));
            for (&m, e) in &tp_errors {
                tp_terms.entry(m).or_default().push(e.unwrap_or(1.0));
            }
            // a class whose every pair has undefined USC stays out of mAUSC
            if a.usc.is_empty() && a.usc_failures > 0 {
                // excluded
            } else {
                usc_terms.push(ausc.unwrap_or(0.0));
            }
        }

        classes.insert(
            class.to_string(),
            ClassMetrics {
                counts: a.counts,
                usc_failures: a.usc_failures,
                ap,
                mean_ap,
                tp_errors,
                ausc,
            },
        );
    }

    let bucket_tp: BTreeMap<TpMeasure, Option<f64>> = config
        .tp_measures
        .iter()
        .map(|&m| (m, tp_terms.get(&m).and_then(|v| mean(v))))
        .collect();
    let mean_ap = mean(&map_terms);
    let nds_value = mean_ap.map(|m| {
        let errors: Vec<f64> = bucket_tp.values().map(|e| e.unwrap_or(1.0)).collect();
        nds(m, &errors)
    });
    let mausc = mean(&usc_terms);
    let usc_nds_value = nds_value.zip(mausc).map(|(n, u)| usc_nds(n, u));

    BucketReport {
        range: config.range_buckets[index],
        match_threshold: config.match_thresholds[index],
        counts,
        usc_failures,
        classes,
        tp_errors: bucket_tp,
        summary: Summary {
            mean_ap,
            nds: nds_value,
            mausc,
            usc_nds: usc_nds_value,
        },
    }
}
