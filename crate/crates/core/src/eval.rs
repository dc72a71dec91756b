//! Five-crop geometry, score fusion, and accuracy metrics.
//!
//! Prediction files are line-delimited JSON. The first line is a header:
//!
//! ```text
//! {"format":"predictions v1","n_classes":7,"layout":"five_crop","crops":["UL","UR","LL","LR","C"],"score_kind":"probability"}
//! {"id":"a1","true_class":3,"crops":[[...7 probs...], ... 5 vectors ...],"whole":[...optional...]}
//! ```
//!
//! With `"layout":"single"` each record carries only `whole`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geo::{CountryPolygonSet, LatLon};
use crate::grouping::ClassGrouping;
use crate::manifest::ClassId;
use crate::normalize::scale_to_min_side;

pub const RESIZE_MIN_SIDE: u32 = 256;
pub const CROP_SIDE: u32 = 224;
pub const PREDICTIONS_FORMAT: &str = "predictions v1";
/// Tolerance on prediction vectors summing to one.
pub const VECTOR_SUM_TOLERANCE: f64 = 1e-5;
pub const REPORT_KS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("strategy {strategy} needs {expected} score vector(s), got {got}")]
    VectorCount {
        strategy: FusionStrategy,
        expected: usize,
        got: usize,
    },
    #[error("k = {k} exceeds the {n} classes")]
    KTooLarge { k: usize, n: usize },
    #[error("score vectors are empty or differ in length")]
    VectorLength,
    #[error("k must be at least 1")]
    KZero,
    #[error("no predictions to evaluate")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown fusion strategy `{0}`")]
    UnknownStrategy(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CropLabel {
    UL,
    UR,
    LL,
    LR,
    C,
}

impl CropLabel {
    /// Order of crops in plans and prediction files.
    pub const ORDER: [CropLabel; 5] = [CropLabel::UL, CropLabel::UR, CropLabel::LL, CropLabel::LR, CropLabel::C];

    pub fn as_str(self) -> &'static str {
        match self {
            CropLabel::UL => "UL",
            CropLabel::UR => "UR",
            CropLabel::LL => "LL",
            CropLabel::LR => "LR",
            CropLabel::C => "C",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub label: CropLabel,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropPlan {
    pub source: (u32, u32),
    pub resized: (u32, u32),
    pub crops: [CropRect; 5],
}

/// Resize so the smaller side is 256 (upscaling allowed), then take four
/// corner crops and a centre crop of 224 × 224.
pub fn crop_plan(width: u32, height: u32) -> CropPlan {
    let (w, h) = scale_to_min_side(width, height, RESIZE_MIN_SIDE);
    let (dx, dy) = (w - CROP_SIDE, h - CROP_SIDE);
    let at = |label, x, y| CropRect {
        label,
        x,
        y,
        w: CROP_SIDE,
        h: CROP_SIDE,
    };
    CropPlan {
        source: (width, height),
        resized: (w, h),
        crops: [
            at(CropLabel::UL, 0, 0),
            at(CropLabel::UR, dx, 0),
            at(CropLabel::LL, 0, dy),
            at(CropLabel::LR, dx, dy),
            at(CropLabel::C, dx / 2, dy / 2),
        ],
    }
}

#[derive(Serialize)]
struct CropPlanRow<'a> {
    id: &'a str,
    width: u32,
    height: u32,
    resized: [u32; 2],
    crops: Vec<[u32; 4]>,
    labels: [&'static str; 5],
}

/// Writes one crop plan per image as JSON lines: crops are `[x, y, w, h]`
/// in `UL, UR, LL, LR, C` order.
pub fn write_crop_plans<'a, W: Write>(
    images: impl IntoIterator<Item = (&'a str, u32, u32)>,
    mut out: W,
) -> io::Result<usize> {
    let mut n = 0;
    for (id, width, height) in images {
        let plan = crop_plan(width, height);
        let row = CropPlanRow {
            id,
            width,
            height,
            resized: [plan.resized.0, plan.resized.1],
            crops: plan.crops.iter().map(|c| [c.x, c.y, c.w, c.h]).collect(),
            labels: CropLabel::ORDER.map(CropLabel::as_str),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    Average,
    Max,
    #[serde(rename = "single_UL")]
    SingleUL,
    #[serde(rename = "single_UR")]
    SingleUR,
    #[serde(rename = "single_LL")]
    SingleLL,
    #[serde(rename = "single_LR")]
    SingleLR,
    #[serde(rename = "single_C")]
    SingleC,
    #[serde(rename = "resize224")]
    Resize224,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 8] = [
        FusionStrategy::Average,
        FusionStrategy::Max,
        FusionStrategy::SingleUL,
        FusionStrategy::SingleUR,
        FusionStrategy::SingleLL,
        FusionStrategy::SingleLR,
        FusionStrategy::SingleC,
        FusionStrategy::Resize224,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionStrategy::Average => "average",
            FusionStrategy::Max => "max",
            FusionStrategy::SingleUL => "single_UL",
            FusionStrategy::SingleUR => "single_UR",
            FusionStrategy::SingleLL => "single_LL",
            FusionStrategy::SingleLR => "single_LR",
            FusionStrategy::SingleC => "single_C",
            FusionStrategy::Resize224 => "resize224",
        }
    }

    fn single_index(self) -> Option<usize> {
        match self {
            FusionStrategy::SingleUL => Some(0),
            FusionStrategy::SingleUR => Some(1),
            FusionStrategy::SingleLL => Some(2),
            FusionStrategy::SingleLR => Some(3),
            FusionStrategy::SingleC => Some(4),
            _ => None,
        }
    }

    /// Whether the strategy reads the whole-image vector instead of crops.
    pub fn uses_whole_image(self) -> bool {
        self == FusionStrategy::Resize224
    }
}

impl std::fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FusionStrategy {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        FusionStrategy::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| EvalError::UnknownStrategy(s.to_string()))
    }
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(v: &[f64]) -> ClassId {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best as ClassId
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fused {
    pub scores: Vec<f64>,
    pub class: ClassId,
}

/// Fuses five crop vectors (or one whole-image vector for `resize224`).
///
/// `max` keeps the elementwise maximum, so its argmax is the class holding
/// the highest probability in any single crop.
pub fn fuse_scores(vectors: &[Vec<f64>], strategy: FusionStrategy) -> Result<Fused, EvalError> {
    let expected = if strategy.uses_whole_image() { 1 } else { 5 };
    if vectors.len() != expected {
        return Err(EvalError::VectorCount {
            strategy,
            expected,
            got: vectors.len(),
        });
    }
    let n = vectors[0].len();
    if n == 0 || vectors.iter().any(|v| v.len() != n) {
        return Err(EvalError::VectorLength);
    }
    let scores = match strategy {
        FusionStrategy::Average => (0..n)
            .map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / vectors.len() as f64)
            .collect(),
        FusionStrategy::Max => (0..n)
            .map(|j| vectors.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        FusionStrategy::Resize224 => vectors[0].clone(),
        single => vectors[single.single_index().expect("single-crop strategy")].clone(),
    };
    let class = argmax(&scores);
    Ok(Fused { scores, class })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    FiveCrop,
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionHeader {
    pub format: String,
    pub n_classes: usize,
    pub layout: Layout,
    #[serde(default)]
    pub crops: Vec<String>,
    pub score_kind: String,
}

impl PredictionHeader {
    pub fn new(n_classes: usize, layout: Layout) -> Self {
        PredictionHeader {
            format: PREDICTIONS_FORMAT.to_string(),
            n_classes,
            crops: match layout {
                Layout::FiveCrop => CropLabel::ORDER.iter().map(|c| c.as_str().to_string()).collect(),
                Layout::Single => Vec::new(),
            },
            layout,
            score_kind: "probability".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub true_class: ClassId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crops: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whole: Option<Vec<f64>>,
}

impl PredictionRecord {
    /// Vectors a strategy consumes: the five crops, or the whole-image vector.
    pub fn vectors_for(&self, strategy: FusionStrategy) -> Option<&[Vec<f64>]> {
        if strategy.uses_whole_image() {
            self.whole.as_ref().map(std::slice::from_ref)
        } else {
            self.crops.as_deref()
        }
    }

    fn check(&self, n: usize, layout: &Layout) -> Result<(), String> {
        if self.true_class as usize >= n {
            return Err(format!("true_class {} outside {n} classes", self.true_class));
        }
        let check_vec = |v: &[f64]| -> Result<(), String> {
            if v.len() != n {
                return Err(format!("vector of length {}, expected {n}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
                return Err("probability outside [0, 1]".into());
            }
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > VECTOR_SUM_TOLERANCE {
                return Err(format!("vector sums to {s}"));
            }
            Ok(())
        };
        match (layout, &self.crops) {
            (Layout::FiveCrop, None) => return Err("missing `crops`".into()),
            (Layout::FiveCrop, Some(c)) if c.len() != 5 => {
                return Err(format!("{} crop vectors, expected 5", c.len()))
            }
            (Layout::Single, Some(_)) => return Err("`crops` not allowed in single layout".into()),
            (Layout::Single, None) if self.whole.is_none() => return Err("missing `whole`".into()),
            _ => {}
        }
        for v in self.crops.iter().flatten().chain(self.whole.iter()) {
            check_vec(v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionFile {
    pub header: PredictionHeader,
    pub records: Vec<PredictionRecord>,
}

impl PredictionFile {
    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, EvalError> {
        let mut header: Option<PredictionHeader> = None;
        let mut records = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let err = |message: String| EvalError::Parse { line: i + 1, message };
            match &header {
                None => {
                    let h: PredictionHeader = serde_json::from_str(t).map_err(|e| err(format!("header: {e}")))?;
                    if h.format != PREDICTIONS_FORMAT {
                        return Err(err(format!("unsupported format `{}`", h.format)));
                    }
                    if h.score_kind != "probability" {
                        return Err(err(format!("unsupported score kind `{}`", h.score_kind)));
                    }
                    if h.n_classes == 0 {
                        return Err(err("n_classes must be positive".into()));
                    }
                    if h.layout == Layout::FiveCrop {
                        let order: Vec<&str> = CropLabel::ORDER.iter().map(|c| c.as_str()).collect();
                        if h.crops != order {
                            return Err(err(format!("crop order must be {order:?}")));
                        }
                    }
                    header = Some(h);
                }
                Some(h) => {
                    let r: PredictionRecord = serde_json::from_str(t).map_err(|e| err(e.to_string()))?;
                    r.check(h.n_classes, &h.layout).map_err(|m| err(format!("{}: {m}", r.id)))?;
                    if !ids.insert(r.id.clone()) {
                        return Err(err(format!("duplicate id {}", r.id)));
                    }
                    records.push(r);
                }
            }
        }
        let header = header.ok_or(EvalError::Parse {
            line: 0,
            message: "missing header line".into(),
        })?;
        Ok(PredictionFile { header, records })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Strategies every record can supply vectors for.
    pub fn available_strategies(&self) -> Vec<FusionStrategy> {
        FusionStrategy::ALL
            .into_iter()
            .filter(|&s| !self.records.is_empty() && self.records.iter().all(|r| r.vectors_for(s).is_some()))
            .collect()
    }
}

/// One image's class ranking, best first. An empty ranking means no
/// prediction and is scored wrong at every k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub id: String,
    pub true_class: ClassId,
    pub ranking: Vec<ClassId>,
}

/// Position of `class` when classes are ordered by descending score, ties by
/// ascending class id.
pub fn rank_of(scores: &[f64], class: ClassId) -> usize {
    let c = class as usize;
    let s = scores[c];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &x)| x > s || (x == s && j < c))
        .count()
}

/// All classes ordered by descending score, ties by ascending class id.
pub fn rank_classes(scores: &[f64]) -> Vec<ClassId> {
    let mut idx: Vec<ClassId> = (0..scores.len() as ClassId).collect();
    idx.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    idx
}

/// Rankings of every record under one fusion strategy.
pub fn strategy_rankings(file: &PredictionFile, strategy: FusionStrategy) -> Result<Vec<Ranked>, EvalError> {
    file.records
        .par_iter()
        .map(|r| {
            let vectors = r.vectors_for(strategy).ok_or(EvalError::VectorCount {
                strategy,
                expected: if strategy.uses_whole_image() { 1 } else { 5 },
                got: 0,
            })?;
            let fused = fuse_scores(vectors, strategy)?;
            Ok(Ranked {
                id: r.id.clone(),
                true_class: r.true_class,
                ranking: rank_classes(&fused.scores),
            })
        })
        .collect()
}

fn in_topk(r: &Ranked, k: usize) -> bool {
    r.ranking.iter().take(k).any(|&c| c == r.true_class)
}

/// Fraction of predictions whose true class is within the first `k` ranks.
pub fn topk_accuracy(predictions: &[Ranked], k: usize, n_classes: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::KZero);
    }
    if k > n_classes {
        return Err(EvalError::KTooLarge { k, n: n_classes });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = predictions.par_iter().filter(|r| in_topk(r, k)).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Counts of (true class, top-1 class), plus predictions with no class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
    pub unassigned: Vec<u64>,
}

impl Confusion {
    pub fn new(n_classes: usize) -> Self {
        Confusion {
            n_classes,
            counts: vec![vec![0; n_classes]; n_classes],
            unassigned: vec![0; n_classes],
        }
    }

    pub fn from_matrix(counts: Vec<Vec<u64>>) -> Self {
        let n = counts.len();
        Confusion {
            n_classes: n,
            counts,
            unassigned: vec![0; n],
        }
    }

    pub fn observe(&mut self, r: &Ranked) {
        let t = r.true_class as usize;
        match r.ranking.first() {
            Some(&p) => self.counts[t][p as usize] += 1,
            None => self.unassigned[t] += 1,
        }
    }

    pub fn merge(mut self, other: Confusion) -> Confusion {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.unassigned.iter_mut().zip(other.unassigned) {
            *x += y;
        }
        self
    }

    fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() + self.unassigned[class]
    }

    /// Recall per class; `None` for classes absent from the ground truth.
    pub fn recalls(&self) -> Vec<Option<f64>> {
        (0..self.n_classes)
            .map(|c| {
                let n = self.support(c);
                (n > 0).then(|| self.counts[c][c] as f64 / n as f64)
            })
            .collect()
    }

    /// Mean recall over classes present in the ground truth.
    pub fn balanced_accuracy(&self) -> Result<f64, EvalError> {
        let present: Vec<(u64, u64)> = (0..self.n_classes)
            .map(|c| (self.counts[c][c], self.support(c)))
            .filter(|&(_, n)| n > 0)
            .collect();
        if present.is_empty() {
            return Err(EvalError::Empty);
        }
        Ok(exact_mean_of_ratios(&present).unwrap_or_else(|| {
            present.iter().map(|&(h, n)| h as f64 / n as f64).sum::<f64>() / present.len() as f64
        }))
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of `h_i / n_i` summed as an exact fraction and rounded once, so that
/// e.g. recalls 0.8, 0.6, 1.0 average to exactly 0.8. `None` on overflow.
fn exact_mean_of_ratios(parts: &[(u64, u64)]) -> Option<f64> {
    let (mut num, mut den) = (0u128, 1u128);
    for &(h, n) in parts {
        let (h, n) = (h as u128, n as u128);
        let g = gcd(den, n);
        let l = den.checked_mul(n / g)?;
        num = num.checked_mul(l / den)?.checked_add(h.checked_mul(l / n)?)?;
        den = l;
        let r = gcd(num, den).max(1);
        (num, den) = (num / r, den / r);
    }
    let den = den.checked_mul(parts.len() as u128)?;
    let r = gcd(num, den).max(1);
    let (num, den) = (num / r, den / r);
    if num >= 1 << 53 || den >= 1 << 53 {
        return None;
    }
    Some(num as f64 / den as f64)
}

pub fn confusion(predictions: &[Ranked], n_classes: usize) -> Confusion {
    predictions
        .par_iter()
        .fold(
            || Confusion::new(n_classes),
            |mut c, r| {
                c.observe(r);
                c
            },
        )
        .reduce(|| Confusion::new(n_classes), Confusion::merge)
}

pub fn balanced_accuracy(predictions: &[Ranked], n_classes: usize) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    confusion(predictions, n_classes).balanced_accuracy()
}

/// Maps a point to a class via country assignment, or `None` when no country
/// (or no class for the country) is found.
pub fn coord_to_class(
    point: LatLon,
    boundaries: &CountryPolygonSet,
    grouping: &ClassGrouping,
    fallback_km: f64,
) -> Option<ClassId> {
    let code = boundaries.locate(point.lat, point.lon, fallback_km).code()?;
    grouping.class_of(code)
}

/// A coordinate predictor's output for one image: GPS hypotheses, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpsPrediction {
    pub id: String,
    pub true_class: ClassId,
    pub gps: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoordsOutcome {
    pub ranked: Vec<Ranked>,
    /// Images whose first hypothesis maps to no class.
    pub unassigned: usize,
}

/// Turns GPS hypotheses into class rankings. Hypotheses that map to no class
/// are skipped and repeated classes keep their first position.
pub fn coords_to_class(
    predictions: &[GpsPrediction],
    boundaries: &CountryPolygonSet,
    grouping: &ClassGrouping,
    fallback_km: f64,
) -> CoordsOutcome {
    let per_image: Vec<(Ranked, bool)> = predictions
        .par_iter()
        .map(|p| {
            let mut ranking = Vec::new();
            let mut first_unassigned = false;
            for (i, g) in p.gps.iter().enumerate() {
                match coord_to_class(LatLon::new(g[0], g[1]), boundaries, grouping, fallback_km) {
                    Some(c) if !ranking.contains(&c) => ranking.push(c),
                    Some(_) => {}
                    None if i == 0 => first_unassigned = true,
                    None => {}
                }
            }
            if p.gps.is_empty() {
                first_unassigned = true;
            }
            // A missed first hypothesis is a wrong top-1 answer.
            if first_unassigned {
                ranking.clear();
            }
            (
                Ranked {
                    id: p.id.clone(),
                    true_class: p.true_class,
                    ranking,
                },
                first_unassigned,
            )
        })
        .collect();
    let unassigned = per_image.iter().filter(|p| p.1).count();
    CoordsOutcome {
        ranked: per_image.into_iter().map(|p| p.0).collect(),
        unassigned,
    }
}

pub fn read_gps_predictions<R: BufRead>(reader: R) -> Result<Vec<GpsPrediction>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let p: GpsPrediction = serde_json::from_str(t).map_err(|e| EvalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

/// A named list of rankings to report, e.g. one fusion strategy.
#[derive(Clone, Debug)]
pub struct Method {
    pub name: String,
    pub predictions: Vec<Ranked>,
}

/// A named subset of image ids; `None` selects everything.
#[derive(Clone, Debug)]
pub struct NamedSet {
    pub name: String,
    pub ids: Option<BTreeSet<String>>,
}

impl NamedSet {
    pub fn all() -> Self {
        NamedSet {
            name: "all".into(),
            ids: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub n: usize,
    /// `(k, accuracy)`; accuracy is `None` when k exceeds the class count.
    pub top: Vec<(usize, Option<f64>)>,
    pub balanced: Option<f64>,
    pub per_class_recall: Vec<Option<f64>>,
    pub unassigned: u64,
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub set: String,
    pub rows: Vec<MetricRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_classes: usize,
    /// How crop scores were combined before ranking.
    pub score_kind: String,
    pub sets: Vec<SetReport>,
}

fn metric_row(name: &str, preds: &[Ranked], n_classes: usize) -> MetricRow {
    let top = REPORT_KS
        .iter()
        .map(|&k| (k, topk_accuracy(preds, k, n_classes).ok()))
        .collect();
    let conf = confusion(preds, n_classes);
    MetricRow {
        method: name.to_string(),
        n: preds.len(),
        top,
        balanced: if preds.is_empty() { None } else { conf.balanced_accuracy().ok() },
        per_class_recall: conf.recalls(),
        unassigned: conf.unassigned.iter().sum(),
        confusion: conf.counts,
    }
}

pub fn eval_report(methods: &[Method], sets: &[NamedSet], n_classes: usize) -> EvalReport {
    let sets_vec;
    let sets = if sets.is_empty() {
        sets_vec = vec![NamedSet::all()];
        &sets_vec[..]
    } else {
        sets
    };
    let sets = sets
        .iter()
        .map(|set| SetReport {
            set: set.name.clone(),
            rows: methods
                .iter()
                .map(|m| {
                    let selected: Vec<Ranked> = match &set.ids {
                        None => m.predictions.clone(),
                        Some(ids) => m.predictions.iter().filter(|r| ids.contains(&r.id)).cloned().collect(),
                    };
                    metric_row(&m.name, &selected, n_classes)
                })
                .collect(),
        })
        .collect();
    EvalReport {
        n_classes,
        score_kind: "probability vectors; average fusion is the arithmetic mean of crop probabilities".into(),
        sets,
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    /// Aligned text table: one block per set, one row per method.
    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut out = String::new();
        for set in &self.sets {
            let width = set.rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
            let _ = writeln!(out, "set: {}", set.set);
            let _ = write!(out, "{:<width$}  {:>6}", "method", "n");
            for k in REPORT_KS {
                let _ = write!(out, "  {:>7}", format!("top-{k}"));
            }
            let _ = writeln!(out, "  {:>8}", "balanced");
            for r in &set.rows {
                let _ = write!(out, "{:<width$}  {:>6}", r.method, r.n);
                for (_, v) in &r.top {
                    let _ = write!(out, "  {:>7}", cell(*v));
                }
                let _ = writeln!(out, "  {:>8}", cell(r.balanced));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_plan() {
        let p = crop_plan(256, 256);
        let xy: Vec<(u32, u32)> = p.crops.iter().map(|c| (c.x, c.y)).collect();
        assert_eq!(xy, [(0, 0), (32, 0), (0, 32), (32, 32), (16, 16)]);
    }

    #[test]
    fn landscape_plan() {
        let p = crop_plan(1024, 768);
        assert_eq!(p.resized, (341, 256));
        assert_eq!((p.crops[4].x, p.crops[4].y), (58, 16));
        // Upscaling small images.
        assert_eq!(crop_plan(100, 50).resized, (512, 256));
    }

    #[test]
    fn fusion_table() {
        let mut v = vec![vec![0.6, 0.4]];
        v.extend(std::iter::repeat_n(vec![0.2, 0.8], 4));
        let avg = fuse_scores(&v, FusionStrategy::Average).unwrap();
        assert!((avg.scores[0] - 0.28).abs() < 1e-12 && (avg.scores[1] - 0.72).abs() < 1e-12);
        assert_eq!(avg.class, 1);
        assert_eq!(fuse_scores(&v, FusionStrategy::Max).unwrap().class, 1);
        assert_eq!(fuse_scores(&v, FusionStrategy::SingleUL).unwrap().class, 0);
        assert!(matches!(
            fuse_scores(&v, FusionStrategy::Resize224),
            Err(EvalError::VectorCount { .. })
        ));
        assert!(fuse_scores(&v[..1], FusionStrategy::Resize224).is_ok());
    }

    #[test]
    fn ties_go_to_lower_class() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(rank_classes(&[0.2, 0.4, 0.4]), vec![1, 2, 0]);
        assert_eq!(rank_of(&[0.2, 0.4, 0.4], 2), 1);
    }

    fn ranked(id: &str, t: ClassId, ranking: Vec<ClassId>) -> Ranked {
        Ranked {
            id: id.into(),
            true_class: t,
            ranking,
        }
    }

    #[test]
    fn topk_cases() {
        let preds = [ranked("a", 0, vec![0, 1, 2, 3, 4]), ranked("b", 3, vec![0, 1, 2, 3, 4])];
        assert_eq!(topk_accuracy(&preds, 3, 5).unwrap(), 0.5);
        assert_eq!(topk_accuracy(&preds, 5, 5).unwrap(), 1.0);
        assert!(matches!(topk_accuracy(&preds, 6, 5), Err(EvalError::KTooLarge { .. })));
        assert!(matches!(topk_accuracy(&[], 1, 5), Err(EvalError::Empty)));
    }

    #[test]
    fn hand_confusion() {
        let c = Confusion::from_matrix(vec![vec![8, 1, 1], vec![2, 6, 2], vec![0, 0, 10]]);
        assert_eq!(c.balanced_accuracy().unwrap(), 0.8);
        let c = Confusion::from_matrix(vec![vec![4, 0], vec![2, 2]]);
        assert_eq!(c.balanced_accuracy().unwrap(), 0.75);
    }

    #[test]
    fn prediction_file_round_trip() {
        let file = PredictionFile {
            header: PredictionHeader::new(2, Layout::FiveCrop),
            records: vec![PredictionRecord {
                id: "x".into(),
                true_class: 1,
                crops: Some(vec![vec![0.25, 0.75]; 5]),
                whole: Some(vec![0.5, 0.5]),
            }],
        };
        let mut buf = Vec::new();
        file.write_to(&mut buf).unwrap();
        let back = PredictionFile::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.available_strategies().len(), 8);

        let bad = "{\"format\":\"predictions v1\",\"n_classes\":2,\"layout\":\"single\",\"score_kind\":\"probability\"}\n{\"id\":\"x\",\"true_class\":0,\"whole\":[0.5,0.6]}\n";
        assert!(PredictionFile::read_from(bad.as_bytes()).is_err());
    }

    #[test]
    fn report_table() {
        let preds: Vec<Ranked> = (0..4).map(|i| ranked(&i.to_string(), i % 2, vec![i % 2, 1 - i % 2])).collect();
        let rep = eval_report(
            &[Method {
                name: "average".into(),
                predictions: preds,
            }],
            &[],
            2,
        );
        let row = &rep.sets[0].rows[0];
        assert_eq!(row.top[0], (1, Some(1.0)));
        assert_eq!(row.top[1], (3, None));
        assert_eq!(row.balanced, Some(1.0));
        let table = rep.to_table();
        assert!(table.contains("average"));
        assert!(table.contains("1.0000"));
    }
}
