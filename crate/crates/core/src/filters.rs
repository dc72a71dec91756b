//! Evidence-driven filter cascade.
//!
//! Evidence is produced by external scorers and read from line-delimited JSON
//! files keyed by image id:
//!
//! ```text
//! scene: {"id": "...", "top5": [[category_id, probability], ...]}
//! face:  {"id": "...", "boxes": [[x, y, w, h], ...]}
//! grey:  {"id": "...", "is_grey": false}
//! ```
//!
//! Any row may instead carry `"error": "<message>"` when the scorer could not
//! decode the image. Stages run in the fixed order date → grey → scene → face
//! and the first failing stage names the rejection reason.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead};

use chrono::{Datelike, NaiveDate};
use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::manifest::{ImageRecord, RejectionReason};

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("image {id}: no {stage} evidence")]
    MissingEvidence { id: String, stage: Stage },
    #[error("image {id}: scorer could not decode image for {stage} evidence")]
    Decode { id: String, stage: Stage },
    #[error("image {id}: unknown scene category {category}")]
    UnknownCategory { id: String, category: u32 },
    #[error("{file} line {line}: {message}")]
    Schema {
        file: String,
        line: usize,
        message: String,
    },
    #[error("taxonomy line {line}: {message}")]
    Taxonomy { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Date,
    Grey,
    Scene,
    Face,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Date => "date",
            Stage::Grey => "grey",
            Stage::Scene => "scene",
            Stage::Face => "face",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Indoor,
    Natural,
    Urban,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneCategory {
    pub id: u32,
    pub name: String,
    pub kind: SceneKind,
}

/// Category names treated as non-relevant subjects when a blacklist file is
/// not supplied: aircraft, airfields, ships and sports venues.
pub const DEFAULT_BLACKLIST: &[&str] = &[
    "airfield",
    "airplane_cabin",
    "hangar/outdoor",
    "runway",
    "sky",
    "boat_deck",
    "harbor",
    "ocean",
    "baseball_field",
    "football_field",
    "soccer_field",
    "stadium/baseball",
    "stadium/football",
    "stadium/soccer",
    "racecourse",
    "raceway",
];

/// Scene categories with their super-category and the blacklisted subset.
///
/// File layout: `id <TAB> name <TAB> indoor|natural|urban`, `#` comments.
#[derive(Clone, Debug, Default)]
pub struct SceneTaxonomy {
    categories: BTreeMap<u32, SceneCategory>,
    blacklist: BTreeSet<u32>,
}

impl SceneTaxonomy {
    pub fn from_categories(categories: Vec<SceneCategory>) -> Result<Self, FilterError> {
        let mut map = BTreeMap::new();
        for (i, c) in categories.into_iter().enumerate() {
            let id = c.id;
            if map.insert(id, c).is_some() {
                return Err(FilterError::Taxonomy {
                    line: i + 1,
                    message: format!("duplicate category id {id}"),
                });
            }
        }
        Ok(SceneTaxonomy {
            categories: map,
            blacklist: BTreeSet::new(),
        })
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self, FilterError> {
        let mut cats = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let err = |message: String| FilterError::Taxonomy { line: i + 1, message };
            let cols: Vec<&str> = t.split('\t').collect();
            if cols.len() != 3 {
                return Err(err(format!("expected 3 columns, found {}", cols.len())));
            }
            let id = cols[0]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad category id `{}`", cols[0])))?;
            let kind = match cols[2].trim() {
                "indoor" => SceneKind::Indoor,
                "natural" => SceneKind::Natural,
                "urban" => SceneKind::Urban,
                other => return Err(err(format!("unknown super-category `{other}`"))),
            };
            cats.push(SceneCategory {
                id,
                name: cols[1].trim().to_string(),
                kind,
            });
        }
        Self::from_categories(cats)
    }

    /// Blacklist entries are category names or numeric ids, one per line.
    pub fn load_blacklist<R: BufRead>(&mut self, reader: R) -> Result<(), FilterError> {
        let mut ids = BTreeSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let id = match t.parse::<u32>() {
                Ok(id) if self.categories.contains_key(&id) => id,
                _ => self.id_of(t).ok_or_else(|| FilterError::Taxonomy {
                    line: i + 1,
                    message: format!("blacklist entry `{t}` is not a taxonomy category"),
                })?,
            };
            ids.insert(id);
        }
        self.blacklist = ids;
        Ok(())
    }

    /// Blacklists every [`DEFAULT_BLACKLIST`] name present in the taxonomy.
    pub fn with_default_blacklist(mut self) -> Self {
        self.blacklist = DEFAULT_BLACKLIST.iter().filter_map(|n| self.id_of(n)).collect();
        self
    }

    pub fn set_blacklist(&mut self, ids: impl IntoIterator<Item = u32>) -> Result<(), FilterError> {
        let ids: BTreeSet<u32> = ids.into_iter().collect();
        if let Some(bad) = ids.iter().find(|id| !self.categories.contains_key(id)) {
            return Err(FilterError::Taxonomy {
                line: 0,
                message: format!("blacklist id {bad} is not a taxonomy category"),
            });
        }
        self.blacklist = ids;
        Ok(())
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.categories.values().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn kind(&self, id: u32) -> Option<SceneKind> {
        self.categories.get(&id).map(|c| c.kind)
    }

    pub fn is_blacklisted(&self, id: u32) -> bool {
        self.blacklist.contains(&id)
    }

    pub fn blacklist(&self) -> &BTreeSet<u32> {
        &self.blacklist
    }

    pub fn categories(&self) -> impl Iterator<Item = &SceneCategory> {
        self.categories.values()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenePrediction {
    pub category: u32,
    pub prob: f64,
}

/// Axis-aligned face box in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl FaceBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        FaceBox { x, y, w, h }
    }

    /// Box as `(x0, y0, x1, y1)` clamped to `[0, width] × [0, height]`.
    pub fn clamped(&self, width: f64, height: f64) -> (f64, f64, f64, f64) {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = (self.x + self.w.max(0.0)).clamp(0.0, width);
        let y1 = (self.y + self.h.max(0.0)).clamp(0.0, height);
        (x0, y0, x1, y1)
    }
}

/// Evidence slot: absent, present, or a scorer-side decode failure.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Slot<T> {
    #[default]
    Missing,
    Present(T),
    DecodeError(String),
}

impl<T> Slot<T> {
    fn get(&self, id: &str, stage: Stage) -> Result<&T, FilterError> {
        match self {
            Slot::Present(v) => Ok(v),
            Slot::Missing => Err(FilterError::MissingEvidence {
                id: id.to_string(),
                stage,
            }),
            Slot::DecodeError(_) => Err(FilterError::Decode {
                id: id.to_string(),
                stage,
            }),
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Slot::Missing)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterEvidence {
    pub scene_top5: Slot<Vec<ScenePrediction>>,
    pub face_boxes: Slot<Vec<FaceBox>>,
    pub is_grey: Slot<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRow {
    id: String,
    #[serde(default)]
    top5: Option<Vec<(u32, f64)>>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FaceRow {
    id: String,
    #[serde(default)]
    boxes: Option<Vec<[f64; 4]>>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GreyRow {
    id: String,
    #[serde(default)]
    is_grey: Option<bool>,
    #[serde(default)]
    error: Option<String>,
}

/// Evidence for many images, merged from the three evidence files.
#[derive(Clone, Debug, Default)]
pub struct EvidenceStore {
    by_id: HashMap<String, FilterEvidence>,
}

fn schema_err(file: &str, line: usize, message: impl Into<String>) -> FilterError {
    FilterError::Schema {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn for_each_row<R: BufRead, T: for<'de> Deserialize<'de>>(
    reader: R,
    file: &str,
    mut f: impl FnMut(usize, T) -> Result<(), FilterError>,
) -> Result<(), FilterError> {
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row: T = serde_json::from_str(t).map_err(|e| schema_err(file, i + 1, e.to_string()))?;
        f(i + 1, row)?;
    }
    Ok(())
}

/// Checks the scene list invariants: at most 5 entries, probabilities in
/// `[0, 1]`, sorted descending.
pub fn check_top5(top5: &[ScenePrediction]) -> Result<(), String> {
    if top5.len() > 5 {
        return Err(format!("{} scene predictions, at most 5 allowed", top5.len()));
    }
    if let Some(p) = top5.iter().find(|p| !(0.0..=1.0).contains(&p.prob)) {
        return Err(format!("probability {} outside [0, 1]", p.prob));
    }
    if top5.windows(2).any(|w| w[0].prob < w[1].prob) {
        return Err("scene predictions not sorted by descending probability".into());
    }
    Ok(())
}

impl EvidenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str) -> Option<&FilterEvidence> {
        self.by_id.get(id)
    }

    pub fn entry(&mut self, id: &str) -> &mut FilterEvidence {
        self.by_id.entry(id.to_string()).or_default()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn load_scene<R: BufRead>(&mut self, reader: R, file: &str) -> Result<usize, FilterError> {
        let mut seen = BTreeSet::new();
        for_each_row(reader, file, |line, row: SceneRow| {
            if !seen.insert(row.id.clone()) {
                return Err(schema_err(file, line, format!("duplicate id {}", row.id)));
            }
            let slot = match (row.top5, row.error) {
                (Some(top5), None) => {
                    let preds: Vec<ScenePrediction> = top5
                        .into_iter()
                        .map(|(category, prob)| ScenePrediction { category, prob })
                        .collect();
                    check_top5(&preds).map_err(|m| schema_err(file, line, m))?;
                    Slot::Present(preds)
                }
                (None, Some(e)) => Slot::DecodeError(e),
                _ => return Err(schema_err(file, line, "exactly one of `top5` or `error` required")),
            };
            self.entry(&row.id).scene_top5 = slot;
            Ok(())
        })?;
        Ok(seen.len())
    }

    pub fn load_faces<R: BufRead>(&mut self, reader: R, file: &str) -> Result<usize, FilterError> {
        let mut seen = BTreeSet::new();
        for_each_row(reader, file, |line, row: FaceRow| {
            if !seen.insert(row.id.clone()) {
                return Err(schema_err(file, line, format!("duplicate id {}", row.id)));
            }
            let slot = match (row.boxes, row.error) {
                (Some(boxes), None) => {
                    if boxes.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(schema_err(file, line, "non-finite box coordinate"));
                    }
                    if boxes.iter().any(|b| b[2] < 0.0 || b[3] < 0.0) {
                        return Err(schema_err(file, line, "negative box size"));
                    }
                    Slot::Present(boxes.iter().map(|b| FaceBox::new(b[0], b[1], b[2], b[3])).collect())
                }
                (None, Some(e)) => Slot::DecodeError(e),
                _ => return Err(schema_err(file, line, "exactly one of `boxes` or `error` required")),
            };
            self.entry(&row.id).face_boxes = slot;
            Ok(())
        })?;
        Ok(seen.len())
    }

    pub fn load_grey<R: BufRead>(&mut self, reader: R, file: &str) -> Result<usize, FilterError> {
        let mut seen = BTreeSet::new();
        for_each_row(reader, file, |line, row: GreyRow| {
            if !seen.insert(row.id.clone()) {
                return Err(schema_err(file, line, format!("duplicate id {}", row.id)));
            }
            let slot = match (row.is_grey, row.error) {
                (Some(g), None) => Slot::Present(g),
                (None, Some(e)) => Slot::DecodeError(e),
                _ => return Err(schema_err(file, line, "exactly one of `is_grey` or `error` required")),
            };
            self.entry(&row.id).is_grey = slot;
            Ok(())
        })?;
        Ok(seen.len())
    }
}

/// Sum of the probabilities of urban categories in the top-5 list.
pub fn urban_score(top5: &[ScenePrediction], taxonomy: &SceneTaxonomy) -> Result<f64, u32> {
    let mut sum = 0.0;
    for p in top5 {
        match taxonomy.kind(p.category) {
            Some(SceneKind::Urban) => sum += p.prob,
            Some(_) => {}
            None => return Err(p.category),
        }
    }
    Ok(sum)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneDecision {
    pub urban_probability: f64,
    pub reject: Option<RejectionReason>,
}

/// Rejects `non_urban` unless the urban score is strictly above
/// `urban_threshold`; otherwise rejects `blacklisted_scene` when the top-1
/// category is blacklisted with probability at least `blacklist_threshold`.
pub fn scene_filter(
    top5: &[ScenePrediction],
    taxonomy: &SceneTaxonomy,
    urban_threshold: f64,
    blacklist_threshold: f64,
) -> Result<SceneDecision, u32> {
    let urban = urban_score(top5, taxonomy)?;
    let reject = if urban <= urban_threshold {
        Some(RejectionReason::NonUrban)
    } else {
        match top5.first() {
            Some(top) if taxonomy.is_blacklisted(top.category) && top.prob >= blacklist_threshold => {
                Some(RejectionReason::BlacklistedScene)
            }
            _ => None,
        }
    };
    Ok(SceneDecision {
        urban_probability: urban,
        reject,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreyParams {
    /// Largest pairwise channel difference still counted as a grey pixel.
    pub max_channel_diff: u8,
    /// Fraction of grey pixels at or above which the image is grey.
    pub min_grey_fraction: f64,
    pub min_samples: usize,
}

impl Default for GreyParams {
    fn default() -> Self {
        GreyParams {
            max_channel_diff: 8,
            min_grey_fraction: 0.995,
            min_samples: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PixelSample {
    SingleChannel,
    Rgb(Vec<[u8; 3]>),
}

/// Samples pixels on a regular stride grid with at least
/// `params.min_samples` points (or every pixel of smaller images).
pub fn sample_pixels(img: &DynamicImage, min_samples: usize) -> PixelSample {
    if img.color().channel_count() <= 2 {
        return PixelSample::SingleChannel;
    }
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w * h <= min_samples {
        return PixelSample::Rgb(rgb.pixels().map(|p| p.0).collect());
    }
    let side = (min_samples as f64).sqrt().ceil() as usize;
    let (nx, ny) = (side.min(w), side.min(h));
    let (nx, ny) = if nx * ny < min_samples {
        // Thin images: spend the budget on the long side.
        if nx == w {
            (nx, min_samples.div_ceil(nx).min(h))
        } else {
            (min_samples.div_ceil(ny).min(w), ny)
        }
    } else {
        (nx, ny)
    };
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = (j * h + h / 2) / ny;
        for i in 0..nx {
            let x = (i * w + w / 2) / nx;
            out.push(rgb.get_pixel(x.min(w - 1) as u32, y.min(h - 1) as u32).0);
        }
    }
    PixelSample::Rgb(out)
}

/// Grey iff single-channel, or enough sampled pixels have all channels within
/// `max_channel_diff` of each other.
pub fn grey_filter(sample: &PixelSample, params: &GreyParams) -> bool {
    match sample {
        PixelSample::SingleChannel => true,
        PixelSample::Rgb(px) if px.is_empty() => false,
        PixelSample::Rgb(px) => {
            let grey = px
                .iter()
                .filter(|p| {
                    let max = p[0].max(p[1]).max(p[2]);
                    let min = p[0].min(p[1]).min(p[2]);
                    max - min <= params.max_channel_diff
                })
                .count();
            grey as f64 >= params.min_grey_fraction * px.len() as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DateDecision {
    Keep,
    /// Kept; the capture date is unknown.
    KeepUnknown,
    Reject,
}

/// Rejects captures dated before January 1 of `cutoff_year`.
pub fn date_filter(record: &ImageRecord, cutoff_year: i32) -> DateDecision {
    match record.captured_at {
        None => DateDecision::KeepUnknown,
        Some(d) if d < NaiveDate::from_ymd_opt(cutoff_year, 1, 1).unwrap_or(NaiveDate::MIN) => {
            DateDecision::Reject
        }
        Some(d) => {
            debug_assert!(d.year() >= cutoff_year);
            DateDecision::Keep
        }
    }
}

/// Union area of the clamped boxes over the image area, computed exactly by a
/// sweep over compressed x coordinates.
pub fn face_ratio(boxes: &[FaceBox], width: u32, height: u32) -> f64 {
    let (w, h) = (width as f64, height as f64);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let rects: Vec<(f64, f64, f64, f64)> = boxes
        .iter()
        .map(|b| b.clamped(w, h))
        .filter(|r| r.2 > r.0 && r.3 > r.1)
        .collect();
    if rects.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.0, r.2]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut area = 0.0;
    let mut spans: Vec<(f64, f64)> = Vec::with_capacity(rects.len());
    for slab in xs.windows(2) {
        let (xa, xb) = (slab[0], slab[1]);
        spans.clear();
        spans.extend(rects.iter().filter(|r| r.0 <= xa && r.2 >= xb).map(|r| (r.1, r.3)));
        if spans.is_empty() {
            continue;
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let (mut lo, mut hi) = spans[0];
        for &(a, b) in &spans[1..] {
            if a > hi {
                covered += hi - lo;
                (lo, hi) = (a, b);
            } else {
                hi = hi.max(b);
            }
        }
        covered += hi - lo;
        area += covered * (xb - xa);
    }
    (area / (w * h)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub urban_threshold: f64,
    pub blacklist_threshold: f64,
    /// Reject when the face union ratio is strictly above this.
    pub face_threshold: f64,
    pub cutoff_year: i32,
    pub grey: GreyParams,
    pub enable_date: bool,
    pub enable_grey: bool,
    pub enable_scene: bool,
    pub enable_face: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            urban_threshold: 0.5,
            blacklist_threshold: 0.5,
            face_threshold: 0.10,
            cutoff_year: 2012,
            grey: GreyParams::default(),
            enable_date: true,
            enable_grey: true,
            enable_scene: true,
            enable_face: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub id: String,
    pub kept: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectionReason>,
    /// Not computed when an earlier stage rejected the image.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub urban_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub face_ratio: Option<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub date_unknown: bool,
}

/// Applies the enabled stages in order date → grey → scene → face.
///
/// Grey evidence comes from the evidence file, falling back to the record's
/// `is_color` flag.
pub fn run_cascade(
    record: &ImageRecord,
    evidence: Option<&FilterEvidence>,
    taxonomy: &SceneTaxonomy,
    config: &FilterConfig,
) -> Result<FilterOutcome, FilterError> {
    let empty = FilterEvidence::default();
    let ev = evidence.unwrap_or(&empty);
    let id = record.id.as_str();
    let mut out = FilterOutcome {
        id: record.id.clone(),
        kept: false,
        reason: None,
        urban_probability: None,
        face_ratio: None,
        date_unknown: false,
    };
    let reject = |mut out: FilterOutcome, reason| {
        out.reason = Some(reason);
        Ok(out)
    };

    if config.enable_date {
        match date_filter(record, config.cutoff_year) {
            DateDecision::Reject => return reject(out, RejectionReason::Date),
            DateDecision::KeepUnknown => out.date_unknown = true,
            DateDecision::Keep => {}
        }
    }
    if config.enable_grey {
        let grey = match (&ev.is_grey, record.is_color) {
            (Slot::Present(g), _) => *g,
            (Slot::Missing, Some(color)) => !color,
            (slot, _) => *slot.get(id, Stage::Grey)?,
        };
        if grey {
            return reject(out, RejectionReason::Grey);
        }
    }
    if config.enable_scene {
        let top5 = ev.scene_top5.get(id, Stage::Scene)?;
        let decision = scene_filter(top5, taxonomy, config.urban_threshold, config.blacklist_threshold)
            .map_err(|category| FilterError::UnknownCategory {
                id: id.to_string(),
                category,
            })?;
        out.urban_probability = Some(decision.urban_probability);
        if let Some(reason) = decision.reject {
            return reject(out, reason);
        }
    }
    if config.enable_face {
        let boxes = ev.face_boxes.get(id, Stage::Face)?;
        let ratio = face_ratio(boxes, record.width, record.height);
        out.face_ratio = Some(ratio);
        if ratio > config.face_threshold {
            return reject(out, RejectionReason::FaceArea);
        }
    }
    out.kept = true;
    Ok(out)
}

/// Per-reason tallies for a cascade run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Records that entered the cascade: kept + rejected + queued.
    pub total: usize,
    pub kept: usize,
    pub rejected: BTreeMap<RejectionReason, usize>,
    pub date_unknown: usize,
    /// Records routed to the needs-evidence queue, by missing stage.
    pub needs_evidence: BTreeMap<Stage, usize>,
    pub decode_errors: usize,
}

impl FilterReport {
    pub fn observe(&mut self, outcome: &FilterOutcome) {
        self.total += 1;
        if outcome.kept {
            self.kept += 1;
        }
        if let Some(r) = outcome.reason {
            *self.rejected.entry(r).or_default() += 1;
        }
        if outcome.date_unknown {
            self.date_unknown += 1;
        }
    }

    pub fn observe_error(&mut self, err: &FilterError) {
        match err {
            FilterError::MissingEvidence { stage, .. } => {
                *self.needs_evidence.entry(*stage).or_default() += 1
            }
            FilterError::Decode { .. } => self.decode_errors += 1,
            _ => return,
        }
        self.total += 1;
    }

    pub fn queued(&self) -> usize {
        self.needs_evidence.values().sum::<usize>() + self.decode_errors
    }

    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    pub fn merge(mut self, other: FilterReport) -> FilterReport {
        self.total += other.total;
        self.kept += other.kept;
        for (k, v) in other.rejected {
            *self.rejected.entry(k).or_default() += v;
        }
        self.date_unknown += other.date_unknown;
        for (k, v) in other.needs_evidence {
            *self.needs_evidence.entry(k).or_default() += v;
        }
        self.decode_errors += other.decode_errors;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

pub fn cascade_report(outcomes: &[FilterOutcome]) -> FilterReport {
    let mut report = FilterReport::default();
    for o in outcomes {
        report.observe(o);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Source;

    fn taxonomy() -> SceneTaxonomy {
        let text = "0\tairfield\turban\n1\tstreet\turban\n2\tforest\tnatural\n3\tkitchen\tindoor\n4\tbeach\tnatural\n5\tplaza\turban\n";
        SceneTaxonomy::load(text.as_bytes()).unwrap().with_default_blacklist()
    }

    fn sp(category: u32, prob: f64) -> ScenePrediction {
        ScenePrediction { category, prob }
    }

    fn record() -> ImageRecord {
        let mut r = ImageRecord::new("r1", Source::Flickr, 0.0, 0.0, 1000, 1000, "p");
        r.captured_at = NaiveDate::from_ymd_opt(2015, 6, 1);
        r
    }

    fn evidence(top5: Vec<ScenePrediction>, boxes: Vec<FaceBox>, grey: bool) -> FilterEvidence {
        FilterEvidence {
            scene_top5: Slot::Present(top5),
            face_boxes: Slot::Present(boxes),
            is_grey: Slot::Present(grey),
        }
    }

    #[test]
    fn urban_score_sums_urban_only() {
        let t = taxonomy();
        assert_eq!(urban_score(&[sp(2, 0.7), sp(4, 0.2)], &t), Ok(0.0));
        let s = urban_score(&[sp(1, 0.4), sp(2, 0.3), sp(5, 0.2)], &t).unwrap();
        assert!((s - 0.6).abs() < 1e-12);
        assert_eq!(urban_score(&[sp(99, 0.4)], &t), Err(99));
    }

    #[test]
    fn urban_threshold_is_strict() {
        let t = taxonomy();
        let d = scene_filter(&[sp(1, 0.5), sp(2, 0.5)], &t, 0.5, 0.5).unwrap();
        assert_eq!(d.reject, Some(RejectionReason::NonUrban));
        let d = scene_filter(&[sp(1, 0.51), sp(2, 0.49)], &t, 0.5, 0.5).unwrap();
        assert_eq!(d.reject, None);
    }

    #[test]
    fn blacklisted_top1_rejected() {
        let t = taxonomy();
        assert!(t.is_blacklisted(0));
        let d = scene_filter(&[sp(0, 0.9), sp(1, 0.05)], &t, 0.5, 0.5).unwrap();
        assert_eq!(d.reject, Some(RejectionReason::BlacklistedScene));
        // Low-confidence blacklisted top-1 is tolerated.
        let d = scene_filter(&[sp(0, 0.45), sp(1, 0.40)], &t, 0.5, 0.5).unwrap();
        assert_eq!(d.reject, None);
    }

    #[test]
    fn blacklist_file_resolves_names_and_ids() {
        let mut t = taxonomy();
        t.load_blacklist("airfield\n5\n".as_bytes()).unwrap();
        assert_eq!(t.blacklist().iter().copied().collect::<Vec<_>>(), [0, 5]);
        assert!(t.load_blacklist("stadium/mars\n".as_bytes()).is_err());
    }

    #[test]
    fn grey_decisions() {
        let p = GreyParams::default();
        assert!(grey_filter(&PixelSample::SingleChannel, &p));
        assert!(!grey_filter(&PixelSample::Rgb(vec![[255, 0, 0]; 1000]), &p));
        let mut px = vec![[100, 104, 96]; 1000];
        assert!(grey_filter(&PixelSample::Rgb(px.clone()), &p));
        // 0.6% coloured pixels tips it over.
        for p in px.iter_mut().take(6) {
            *p = [200, 20, 20];
        }
        assert!(!grey_filter(&PixelSample::Rgb(px), &p));
    }

    #[test]
    fn sampler_hits_minimum() {
        let img = DynamicImage::new_rgb8(640, 480);
        match sample_pixels(&img, 1000) {
            PixelSample::Rgb(px) => assert!(px.len() >= 1000),
            other => panic!("{other:?}"),
        }
        let thin = DynamicImage::new_rgb8(2000, 3);
        match sample_pixels(&thin, 1000) {
            PixelSample::Rgb(px) => assert!(px.len() >= 1000),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            sample_pixels(&DynamicImage::new_luma8(10, 10), 1000),
            PixelSample::SingleChannel
        );
    }

    #[test]
    fn date_boundary() {
        let mut r = record();
        r.captured_at = NaiveDate::from_ymd_opt(2011, 12, 31);
        assert_eq!(date_filter(&r, 2012), DateDecision::Reject);
        r.captured_at = NaiveDate::from_ymd_opt(2012, 1, 1);
        assert_eq!(date_filter(&r, 2012), DateDecision::Keep);
        r.captured_at = None;
        assert_eq!(date_filter(&r, 2012), DateDecision::KeepUnknown);
    }

    #[test]
    fn face_ratio_cases() {
        assert_eq!(face_ratio(&[], 1000, 1000), 0.0);
        let r = face_ratio(&[FaceBox::new(0.0, 0.0, 400.0, 300.0)], 1000, 1000);
        assert!((r - 0.12).abs() < 1e-12);
        let b = FaceBox::new(10.0, 10.0, 100.0, 100.0);
        assert!((face_ratio(&[b, b], 1000, 1000) - 0.01).abs() < 1e-12);
        // Clamped to the image.
        let r = face_ratio(&[FaceBox::new(-50.0, -50.0, 5000.0, 5000.0)], 100, 100);
        assert_eq!(r, 1.0);
        // L-shaped union.
        let r = face_ratio(
            &[FaceBox::new(0.0, 0.0, 10.0, 10.0), FaceBox::new(5.0, 5.0, 10.0, 10.0)],
            100,
            100,
        );
        assert!((r - 175.0 / 10000.0).abs() < 1e-12);
    }

    #[test]
    fn cascade_first_failure_wins() {
        let t = taxonomy();
        let cfg = FilterConfig::default();
        let mut r = record();
        r.captured_at = NaiveDate::from_ymd_opt(2005, 1, 1);
        let ev = evidence(vec![sp(1, 0.9)], vec![FaceBox::new(0.0, 0.0, 900.0, 900.0)], false);
        let out = run_cascade(&r, Some(&ev), &t, &cfg).unwrap();
        assert!(!out.kept);
        assert_eq!(out.reason, Some(RejectionReason::Date));
    }

    #[test]
    fn cascade_keeps_passing_record() {
        let t = taxonomy();
        let ev = evidence(vec![sp(1, 0.9), sp(2, 0.1)], vec![], false);
        let out = run_cascade(&record(), Some(&ev), &t, &FilterConfig::default()).unwrap();
        assert!(out.kept);
        assert_eq!(out.reason, None);
        assert_eq!(out.face_ratio, Some(0.0));
    }

    #[test]
    fn missing_scene_evidence_is_an_error() {
        let t = taxonomy();
        let ev = FilterEvidence {
            is_grey: Slot::Present(false),
            ..Default::default()
        };
        let err = run_cascade(&record(), Some(&ev), &t, &FilterConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            FilterError::MissingEvidence {
                stage: Stage::Scene,
                ..
            }
        ));
    }

    #[test]
    fn grey_falls_back_to_record_flag() {
        let t = taxonomy();
        let mut r = record();
        r.is_color = Some(false);
        let ev = FilterEvidence {
            scene_top5: Slot::Present(vec![sp(1, 0.9)]),
            face_boxes: Slot::Present(vec![]),
            is_grey: Slot::Missing,
        };
        let out = run_cascade(&r, Some(&ev), &t, &FilterConfig::default()).unwrap();
        assert_eq!(out.reason, Some(RejectionReason::Grey));
    }

    #[test]
    fn report_reconciles() {
        let mut outcomes = Vec::new();
        let mk = |i: usize, reason: Option<RejectionReason>| FilterOutcome {
            id: format!("{i}"),
            kept: reason.is_none(),
            reason,
            urban_probability: None,
            face_ratio: None,
            date_unknown: false,
        };
        for i in 0..3 {
            outcomes.push(mk(i, Some(RejectionReason::Date)));
        }
        for i in 3..5 {
            outcomes.push(mk(i, Some(RejectionReason::FaceArea)));
        }
        for i in 5..10 {
            outcomes.push(mk(i, None));
        }
        let rep = cascade_report(&outcomes);
        assert_eq!(rep.total, 10);
        assert_eq!(rep.kept, 5);
        assert_eq!(rep.rejected[&RejectionReason::Date], 3);
        assert_eq!(rep.rejected[&RejectionReason::FaceArea], 2);
        assert_eq!(rep.kept + rep.rejected_total(), rep.total);
        assert_eq!(rep.to_json(), cascade_report(&outcomes).to_json());

        let all_kept = cascade_report(&outcomes[5..]);
        assert_eq!(all_kept.rejected_total(), 0);
    }

    #[test]
    fn evidence_schema_checks() {
        let mut store = EvidenceStore::new();
        let ok = r#"{"id":"a","top5":[[1,0.6],[2,0.3]]}
{"id":"b","error":"truncated jpeg"}"#;
        assert_eq!(store.load_scene(ok.as_bytes(), "scene.jsonl").unwrap(), 2);
        assert!(matches!(store.get("b").unwrap().scene_top5, Slot::DecodeError(_)));

        let unsorted = r#"{"id":"a","top5":[[1,0.2],[2,0.3]]}"#;
        assert!(EvidenceStore::new().load_scene(unsorted.as_bytes(), "s").is_err());
        let six = r#"{"id":"a","top5":[[1,0.2],[2,0.1],[3,0.1],[4,0.1],[5,0.1],[6,0.1]]}"#;
        assert!(EvidenceStore::new().load_scene(six.as_bytes(), "s").is_err());
        let dup = "{\"id\":\"a\",\"is_grey\":true}\n{\"id\":\"a\",\"is_grey\":false}";
        assert!(EvidenceStore::new().load_grey(dup.as_bytes(), "g").is_err());
        let faces = r#"{"id":"a","boxes":[[1,2,3,4]]}"#;
        let mut s = EvidenceStore::new();
        s.load_faces(faces.as_bytes(), "f").unwrap();
        assert_eq!(
            s.get("a").unwrap().face_boxes,
            Slot::Present(vec![FaceBox::new(1.0, 2.0, 3.0, 4.0)])
        );
    }
}
