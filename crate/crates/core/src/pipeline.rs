//! Batch entry points, one per pipeline command.
//!
//! Each stage reads its inputs, writes new files under the work directory and
//! returns a summary. Outputs are sorted before writing so they do not depend
//! on the worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{ConfigError, GroupingMode, PipelineConfig, WeightsFrom};
use crate::dataset_ops::{class_counts, class_weights, split_dataset, DatasetError, WeightTable};
use crate::eval::{
    coords_to_class, eval_report, read_gps_predictions, strategy_rankings, write_crop_plans, EvalError,
    EvalReport, Method, NamedSet, PredictionFile,
};
use crate::filters::{run_cascade, EvidenceStore, FilterError, FilterOutcome, FilterReport, SceneTaxonomy};
use crate::geo::{Assignment, CountryPolygonSet, GeoError};
use crate::grouping::{
    compute_grouping_seeded, load_country_stats, load_grouping, ClassGrouping, CountryStat, GroupingError,
    GroupingSeeds,
};
use crate::manifest::{validate_manifest, ImageRecord, Manifest, ManifestError, ManifestStats, RejectionReason, Split, Status};
use crate::normalize::{normalize_batch, NormalizeError, RESAMPLE_KERNEL};
use crate::querygen::{generate_keyword_queries, load_city_table, load_keywords, write_city_boxes, QueryCounts, QueryError};

pub const QUERIES: &str = "queries.txt";
pub const CITY_BOXES: &str = "city_boxes.jsonl";
pub const ASSIGNED: &str = "assigned.jsonl";
pub const FILTERED: &str = "filtered.jsonl";
pub const FILTER_OUTCOMES: &str = "filter_outcomes.jsonl";
pub const FILTER_REPORT: &str = "filter_report.json";
pub const NEEDS_EVIDENCE: &str = "needs_evidence.jsonl";
pub const DECODE_ERRORS: &str = "decode_errors.jsonl";
pub const NORMALIZED: &str = "normalized.jsonl";
pub const NORMALIZE_FAILURES: &str = "normalize_failures.jsonl";
pub const GROUPED: &str = "grouped.jsonl";
pub const GROUPING: &str = "grouping.txt";
pub const SPLIT: &str = "split.jsonl";
pub const WEIGHTS: &str = "weights.txt";
pub const CROP_PLANS: &str = "crop_plans.jsonl";
pub const EVAL_JSON: &str = "eval_report.json";
pub const EVAL_TABLE: &str = "eval_report.txt";
pub const DATASET_REPORT: &str = "dataset_report.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Data(String),
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn with_input<T, E: std::fmt::Display>(path: &Path, r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| PipelineError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let mut w = create(path)?;
    m.write_to(&mut w).map_err(io_err(path))
}

fn write_records_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| io_err(path)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Input and output locations for one stage; `None` picks the default file
/// in the work directory.
#[derive(Clone, Debug, Default)]
pub struct StageIo {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl StageIo {
    fn input(&self, cfg: &PipelineConfig, default: &str) -> PathBuf {
        self.input.clone().unwrap_or_else(|| cfg.work_dir().join(default))
    }

    fn output(&self, cfg: &PipelineConfig, default: &str) -> PathBuf {
        self.output.clone().unwrap_or_else(|| cfg.work_dir().join(default))
    }
}

fn require<'a>(field: &'static str, p: &'a Option<PathBuf>) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| {
        PipelineError::Config(ConfigError::Invalid {
            field: field.into(),
            message: "not set".into(),
        })
    })
}

fn load_boundaries(cfg: &PipelineConfig) -> Result<CountryPolygonSet> {
    let path = require("paths.boundaries", &cfg.paths.boundaries)?;
    Ok(CountryPolygonSet::load_boundaries(path)?)
}

fn load_taxonomy(cfg: &PipelineConfig) -> Result<SceneTaxonomy> {
    let path = require("paths.taxonomy", &cfg.paths.taxonomy)?;
    let mut t = with_input(path, SceneTaxonomy::load(open(path)?))?;
    match &cfg.paths.blacklist {
        Some(bl) => with_input(bl, t.load_blacklist(open(bl)?))?,
        None => t = t.with_default_blacklist(),
    }
    Ok(t)
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(Manifest::read_path(path)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct QuerySummary {
    pub cities: usize,
    pub keywords: usize,
    pub counts: QueryCounts,
    pub boxes: usize,
}

/// Writes keyword queries and per-city bounding boxes. With `count_only`
/// nothing is written; the deduplicated count is only computed with `dedup`.
pub fn gen_queries(cfg: &PipelineConfig, out_dir: Option<&Path>, dedup: bool, count_only: bool) -> Result<QuerySummary> {
    let cpath = require("paths.city_table", &cfg.paths.city_table)?;
    let kpath = require("paths.keywords", &cfg.paths.keywords)?;
    let cities = with_input(cpath, load_city_table(open(cpath)?, cfg.thresholds.min_population))?;
    let keywords = with_input(kpath, load_keywords(open(kpath)?))?;
    let queries = generate_keyword_queries(&cities, &keywords)?;
    if count_only {
        return Ok(QuerySummary {
            cities: cities.len(),
            keywords: keywords.len(),
            counts: if dedup {
                queries.counts()
            } else {
                QueryCounts {
                    raw: queries.raw_count(),
                    deduplicated: 0,
                }
            },
            boxes: 0,
        });
    }
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.work_dir());
    let qpath = dir.join(QUERIES);
    let counts = queries.write_to(create(&qpath)?, dedup).map_err(io_err(&qpath))?;
    let bpath = dir.join(CITY_BOXES);
    let boxes = write_city_boxes(&cities, cfg.thresholds.half_width_km, create(&bpath)?).map_err(io_err(&bpath))?;
    Ok(QuerySummary {
        cities: cities.len(),
        keywords: keywords.len(),
        counts,
        boxes,
    })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AssignSummary {
    pub total: usize,
    pub inside: usize,
    pub nearby: usize,
    pub unassigned: usize,
    pub skipped: usize,
}

/// Sets `country_code` on every non-rejected record; records with no country
/// are rejected as `unassignable_gps`.
pub fn assign_country(cfg: &PipelineConfig, io: &StageIo) -> Result<AssignSummary> {
    let input = match &io.input {
        Some(p) => p.clone(),
        None => require("paths.manifest", &cfg.paths.manifest)?.to_path_buf(),
    };
    let mut manifest = read_manifest(&input)?;
    let set = load_boundaries(cfg)?;
    let fallback = cfg.thresholds.fallback_km;
    let results: Vec<Option<Assignment>> = manifest
        .records
        .par_iter()
        .map(|r| (r.status != Status::Rejected).then(|| set.locate(r.lat, r.lon, fallback)))
        .collect();
    let mut s = AssignSummary {
        total: manifest.records.len(),
        ..Default::default()
    };
    for (r, a) in manifest.records.iter_mut().zip(results) {
        match a {
            None => s.skipped += 1,
            Some(Assignment::Inside(c)) => {
                s.inside += 1;
                r.country_code = Some(c);
            }
            Some(Assignment::Nearby { code, .. }) => {
                s.nearby += 1;
                r.country_code = Some(code);
            }
            Some(Assignment::Unassigned) => {
                s.unassigned += 1;
                r.country_code = None;
                r.class_id = None;
                r.reject(RejectionReason::UnassignableGps);
            }
        }
    }
    manifest.header.insert("stage".into(), "assign-country".into());
    manifest.header.insert("fallback_km".into(), fallback.to_string());
    write_manifest(&io.output(cfg, ASSIGNED), &manifest)?;
    Ok(s)
}

/// Runs the filter cascade. Records lacking evidence for an enabled stage go
/// to the needs-evidence queue; scorer decode failures to the decode-error
/// queue. Neither appears in the output manifest.
pub fn filter(cfg: &PipelineConfig, io: &StageIo) -> Result<FilterReport> {
    let input = io.input(cfg, ASSIGNED);
    let mut manifest = read_manifest(&input)?;
    let taxonomy = load_taxonomy(cfg)?;
    let mut store = EvidenceStore::new();
    if let Some(p) = &cfg.paths.scene_evidence {
        store.load_scene(open(p)?, &p.display().to_string())?;
    }
    if let Some(p) = &cfg.paths.face_evidence {
        store.load_faces(open(p)?, &p.display().to_string())?;
    }
    if let Some(p) = &cfg.paths.grey_evidence {
        store.load_grey(open(p)?, &p.display().to_string())?;
    }
    let fcfg = cfg.filter_config();
    let results: Vec<Option<std::result::Result<FilterOutcome, FilterError>>> = manifest
        .records
        .par_iter()
        .map(|r| (r.status != Status::Rejected).then(|| run_cascade(r, store.get(&r.id), &taxonomy, &fcfg)))
        .collect();

    let mut report = FilterReport::default();
    let mut kept_records = Vec::new();
    let mut queued = Vec::new();
    let mut decode = Vec::new();
    let mut outcomes = Vec::new();
    for (mut r, res) in manifest.records.drain(..).zip(results) {
        match res {
            None => kept_records.push(r),
            Some(Ok(o)) => {
                report.observe(&o);
                if o.date_unknown {
                    r.extra.insert("date_unknown".into(), Value::Bool(true));
                }
                match o.reason {
                    Some(reason) => r.reject(reason),
                    None => r.status = Status::Kept,
                }
                outcomes.push(o);
                kept_records.push(r);
            }
            Some(Err(e)) => {
                report.observe_error(&e);
                match &e {
                    FilterError::MissingEvidence { stage, .. } => {
                        r.extra.insert("queue_stage".into(), Value::String(stage.to_string()));
                        queued.push(r);
                    }
                    FilterError::Decode { stage, .. } => {
                        r.extra.insert("queue_stage".into(), Value::String(stage.to_string()));
                        decode.push(r);
                    }
                    _ => return Err(e.into()),
                }
            }
        }
    }
    manifest.records = kept_records;
    manifest.header.insert("stage".into(), "filter".into());
    let out = io.output(cfg, FILTERED);
    write_manifest(&out, &manifest)?;
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    write_records_jsonl(&dir.join(FILTER_OUTCOMES), &outcomes)?;
    let mut q = Manifest::new(queued);
    q.header.insert("queue".into(), "needs-evidence".into());
    write_manifest(&dir.join(NEEDS_EVIDENCE), &q)?;
    let mut d = Manifest::new(decode);
    d.header.insert("queue".into(), "decode-errors".into());
    write_manifest(&dir.join(DECODE_ERRORS), &d)?;
    write_text(&dir.join(FILTER_REPORT), &(report.to_json() + "\n"))?;
    Ok(report)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NormalizeSummary {
    pub processed: usize,
    pub resized: usize,
    pub grey: usize,
    pub failures: usize,
}

/// Re-encodes every non-rejected record's image. Failed images are left out
/// of the output manifest and listed in the failures file.
pub fn normalize(cfg: &PipelineConfig, io: &StageIo) -> Result<NormalizeSummary> {
    let input = io.input(cfg, FILTERED);
    let mut manifest = read_manifest(&input)?;
    let src = require("paths.images", &cfg.paths.images)?;
    let dst = require("paths.normalized", &cfg.paths.normalized)?;
    let before: BTreeMap<String, (u32, u32)> =
        manifest.records.iter().map(|r| (r.id.clone(), (r.width, r.height))).collect();
    let batch = normalize_batch(&manifest.records, src, dst, cfg.thresholds.resize_limit, &cfg.grey_params())?;
    let mut s = NormalizeSummary {
        failures: batch.failures.len(),
        ..Default::default()
    };
    for r in batch.records.iter().filter(|r| r.status != Status::Rejected) {
        s.processed += 1;
        if r.is_color == Some(false) {
            s.grey += 1;
        }
        if before.get(&r.id).is_some_and(|&d| d.0.min(d.1) > cfg.thresholds.resize_limit) {
            s.resized += 1;
        }
    }
    manifest.records = batch.records;
    manifest.header.insert("stage".into(), "normalize".into());
    manifest.header.insert("resample".into(), RESAMPLE_KERNEL.into());
    manifest.header.insert("jpeg_quality".into(), crate::normalize::JPEG_QUALITY.to_string());
    manifest.header.insert("resize_limit".into(), cfg.thresholds.resize_limit.to_string());
    let out = io.output(cfg, NORMALIZED);
    write_manifest(&out, &manifest)?;
    let mut failures = batch.failures;
    failures.sort();
    let rows: Vec<Value> = failures
        .iter()
        .map(|(id, m)| serde_json::json!({"id": id, "error": m}))
        .collect();
    write_records_jsonl(&out.with_file_name(NORMALIZE_FAILURES), &rows)?;
    Ok(s)
}

/// The grouping used by later stages: the work-directory copy written by
/// `group` if present, else `paths.grouping`.
pub fn current_grouping(cfg: &PipelineConfig) -> Result<ClassGrouping> {
    let local = cfg.work_dir().join(GROUPING);
    let path = if local.exists() {
        local
    } else {
        require("paths.grouping", &cfg.paths.grouping)?.to_path_buf()
    };
    Ok(load_grouping(open(&path)?, None)?)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GroupSummary {
    pub k: usize,
    pub countries: usize,
    pub labelled: usize,
    pub undersized: Vec<u32>,
}

/// Builds or loads the class grouping, writes it to the work directory and
/// sets `class_id` on every kept record.
pub fn group(cfg: &PipelineConfig, io: &StageIo, seeds: &GroupingSeeds) -> Result<GroupSummary> {
    let input = io.input(cfg, NORMALIZED);
    let mut manifest = read_manifest(&input)?;
    let boundaries = match &cfg.paths.boundaries {
        Some(_) => Some(load_boundaries(cfg)?),
        None => None,
    };
    let expected: Option<Vec<_>> = boundaries.as_ref().map(|b| b.codes().collect());
    let mut undersized = Vec::new();
    let grouping = match cfg.grouping.mode {
        GroupingMode::File => {
            let p = require("paths.grouping", &cfg.paths.grouping)?;
            load_grouping(open(p)?, expected.as_deref())?
        }
        GroupingMode::Compute => {
            let stats = match (&cfg.paths.country_stats, &boundaries) {
                (Some(p), _) => with_input(p, load_country_stats(open(p)?))?,
                (None, Some(b)) => {
                    let mut counts: BTreeMap<_, u64> = b.codes().map(|c| (c, 0)).collect();
                    for r in manifest.records.iter().filter(|r| r.status == Status::Kept) {
                        if let Some(c) = r.country_code {
                            *counts.entry(c).or_default() += 1;
                        }
                    }
                    counts
                        .into_iter()
                        .filter_map(|(code, count)| {
                            b.get(code).map(|c| CountryStat {
                                code,
                                count,
                                centroid: c.centroid,
                            })
                        })
                        .collect()
                }
                (None, None) => {
                    return Err(ConfigError::Invalid {
                        field: "paths.country_stats".into(),
                        message: "computing a grouping needs country_stats or boundaries".into(),
                    }
                    .into())
                }
            };
            let run = compute_grouping_seeded(&stats, cfg.grouping.k, cfg.grouping.min_images, seeds)?;
            undersized = run.undersized;
            run.grouping
        }
    };
    let mut labelled = 0;
    for r in manifest.records.iter_mut().filter(|r| r.status == Status::Kept) {
        let code = r
            .country_code
            .ok_or_else(|| PipelineError::Data(format!("record {} is kept but has no country", r.id)))?;
        r.class_id = Some(crate::grouping::map_country_to_class(code, &grouping)?);
        labelled += 1;
    }
    let out = io.output(cfg, GROUPED);
    let gpath = out.with_file_name(GROUPING);
    let mut w = create(&gpath)?;
    grouping.write_to(&mut w, &[]).map_err(io_err(&gpath))?;
    w.flush().map_err(io_err(&gpath))?;
    manifest.header.insert("stage".into(), "group".into());
    manifest.header.insert("classes".into(), grouping.k().to_string());
    write_manifest(&out, &manifest)?;
    Ok(GroupSummary {
        k: grouping.k(),
        countries: grouping.countries().count(),
        labelled,
        undersized,
    })
}

/// Assigns train/val/test per country to every kept record.
pub fn split(cfg: &PipelineConfig, io: &StageIo) -> Result<BTreeMap<Split, usize>> {
    let input = io.input(cfg, GROUPED);
    let mut manifest = read_manifest(&input)?;
    let sc = cfg.split_config();
    let kept: Vec<ImageRecord> = manifest.records.iter().filter(|r| r.status == Status::Kept).cloned().collect();
    let labelled = split_dataset(&kept, &sc)?;
    let by_id: BTreeMap<&str, Split> = labelled.iter().filter_map(|r| Some((r.id.as_str(), r.split?))).collect();
    let mut counts = BTreeMap::new();
    for r in manifest.records.iter_mut() {
        r.split = by_id.get(r.id.as_str()).copied();
        if let Some(s) = r.split {
            *counts.entry(s).or_insert(0) += 1;
        }
    }
    manifest.header.insert("stage".into(), "split".into());
    manifest.header.insert("split_ratios".into(), cfg.split.ratios.clone());
    manifest.header.insert("split_seed".into(), sc.seed.to_string());
    manifest.header.insert("split_rounding".into(), "ceil".into());
    write_manifest(&io.output(cfg, SPLIT), &manifest)?;
    Ok(counts)
}

fn manifest_classes(m: &Manifest, cfg: &PipelineConfig) -> Result<usize> {
    match m.header.get("classes") {
        Some(k) => k
            .parse()
            .map_err(|_| PipelineError::Data(format!("bad `classes` header `{k}`"))),
        None => Ok(current_grouping(cfg)?.k()),
    }
}

/// Writes the class weight table from kept-record class counts.
pub fn weights(cfg: &PipelineConfig, io: &StageIo) -> Result<WeightTable> {
    let input = io.input(cfg, SPLIT);
    let manifest = read_manifest(&input)?;
    let k = manifest_classes(&manifest, cfg)?;
    let kept: Vec<ImageRecord> = manifest.records.into_iter().filter(|r| r.status == Status::Kept).collect();
    let split = match cfg.split.weights_from {
        WeightsFrom::Train => Some(Split::Train),
        WeightsFrom::All => None,
    };
    let mut table = class_weights(&class_counts(&kept, k, split))?;
    if cfg.split.rescale_weights {
        table = table.rescaled_to_mean_one();
    }
    let out = io.output(cfg, WEIGHTS);
    let counted = format!(
        "counts_from={}",
        match cfg.split.weights_from {
            WeightsFrom::Train => "train",
            WeightsFrom::All => "all",
        }
    );
    let mut w = create(&out)?;
    table.write_to(&mut w, &[&counted, "split_rounding=ceil"]).map_err(io_err(&out))?;
    w.flush().map_err(io_err(&out))?;
    Ok(table)
}

/// Writes crop plans for kept records, optionally limited to one split.
pub fn crop_plans(cfg: &PipelineConfig, io: &StageIo, only: Option<Split>) -> Result<usize> {
    let input = io.input(cfg, SPLIT);
    let manifest = read_manifest(&input)?;
    let mut rows: Vec<(&str, u32, u32)> = manifest
        .records
        .iter()
        .filter(|r| r.status == Status::Kept && (only.is_none() || r.split == only))
        .map(|r| (r.id.as_str(), r.width, r.height))
        .collect();
    rows.sort();
    let out = io.output(cfg, CROP_PLANS);
    let mut w = create(&out)?;
    let n = write_crop_plans(rows, &mut w).map_err(io_err(&out))?;
    w.flush().map_err(io_err(&out))?;
    Ok(n)
}

/// Scores the prediction file under each configured strategy (plus the
/// coordinate baseline when GPS predictions are configured) and writes the
/// JSON report and the text table.
pub fn eval(cfg: &PipelineConfig, io: &StageIo) -> Result<EvalReport> {
    let ppath = require("paths.predictions", &cfg.paths.predictions)?;
    let file = with_input(ppath, PredictionFile::read_from(open(ppath)?))?;
    let grouping = current_grouping(cfg)?;
    let n = file.header.n_classes;
    if n != grouping.k() {
        return Err(PipelineError::Input {
            path: ppath.to_path_buf(),
            message: format!("predictions have {n} classes but the grouping has {}", grouping.k()),
        });
    }
    let available = file.available_strategies();
    let mut methods = Vec::new();
    for s in cfg.strategies() {
        if available.contains(&s) {
            methods.push(Method {
                name: s.as_str().to_string(),
                predictions: strategy_rankings(&file, s)?,
            });
        }
    }
    if let Some(gp) = &cfg.paths.gps_predictions {
        let gps = with_input(gp, read_gps_predictions(open(gp)?))?;
        let boundaries = load_boundaries(cfg)?;
        let out = coords_to_class(&gps, &boundaries, &grouping, cfg.thresholds.fallback_km);
        methods.push(Method {
            name: "gps-baseline".into(),
            predictions: out.ranked,
        });
    }
    if methods.is_empty() {
        return Err(PipelineError::Data("no configured strategy is supported by the prediction file".into()));
    }

    let mut sets = vec![NamedSet::all()];
    let manifest_path = io.input(cfg, SPLIT);
    if cfg.eval.sets_by_split && manifest_path.exists() {
        let m = read_manifest(&manifest_path)?;
        let mut by_split: BTreeMap<Split, BTreeSet<String>> = BTreeMap::new();
        for r in &m.records {
            if let Some(s) = r.split {
                by_split.entry(s).or_default().insert(r.id.clone());
            }
        }
        for (s, ids) in by_split {
            let name = serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            sets.push(NamedSet { name, ids: Some(ids) });
        }
    }
    let report = eval_report(&methods, &sets, n);
    let out = io.output(cfg, EVAL_JSON);
    write_text(&out, &(report.to_json() + "\n"))?;
    write_text(&out.with_file_name(EVAL_TABLE), &report.to_table())?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct DatasetReport {
    pub manifest: String,
    pub records: ManifestStats,
    pub kept: ManifestStats,
    pub status: BTreeMap<String, usize>,
    pub rejected: BTreeMap<RejectionReason, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<Value>,
}

/// Dataset statistics for a manifest, plus the filter report and the eval
/// table re-rendered from `eval_report.json` when those exist.
pub fn report(cfg: &PipelineConfig, io: &StageIo) -> Result<DatasetReport> {
    let input = io.input(cfg, SPLIT);
    let m = read_manifest(&input)?;
    let records = validate_manifest(&m.records)?;
    let kept_records: Vec<ImageRecord> = m.records.iter().filter(|r| r.status == Status::Kept).cloned().collect();
    let kept = validate_manifest(&kept_records)?;
    let mut status = BTreeMap::new();
    let mut rejected = BTreeMap::new();
    for r in &m.records {
        let s = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        *status.entry(s).or_insert(0) += 1;
        if let Some(reason) = r.rejection_reason {
            *rejected.entry(reason).or_insert(0) += 1;
        }
    }
    let dir = cfg.work_dir();
    let filter_path = dir.join(FILTER_REPORT);
    let filter = if filter_path.exists() {
        let text = fs::read_to_string(&filter_path).map_err(io_err(&filter_path))?;
        Some(with_input(&filter_path, serde_json::from_str(&text))?)
    } else {
        None
    };
    let rep = DatasetReport {
        manifest: input.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        records,
        kept,
        status,
        rejected,
        filter,
    };
    let out = io.output(cfg, DATASET_REPORT);
    let text = serde_json::to_string_pretty(&rep).expect("report serialization is infallible");
    write_text(&out, &(text + "\n"))?;
    let eval_path = dir.join(EVAL_JSON);
    if eval_path.exists() {
        let text = fs::read_to_string(&eval_path).map_err(io_err(&eval_path))?;
        let ev: EvalReport = with_input(&eval_path, serde_json::from_str(&text))?;
        write_text(&dir.join(EVAL_TABLE), &ev.to_table())?;
    }
    Ok(rep)
}

/// Parses every input the config names and reports what was found.
pub fn validate(cfg: &PipelineConfig) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let p = &cfg.paths;
    if let Some(path) = &p.city_table {
        let cities = with_input(path, load_city_table(open(path)?, cfg.thresholds.min_population))?;
        out.push(("city_table".into(), format!("{} cities", cities.len())));
    }
    if let Some(path) = &p.keywords {
        let k = with_input(path, load_keywords(open(path)?))?;
        out.push(("keywords".into(), format!("{} keywords", k.len())));
    }
    let boundaries = match &p.boundaries {
        Some(_) => {
            let b = load_boundaries(cfg)?;
            out.push(("boundaries".into(), format!("{} countries", b.countries().len())));
            Some(b)
        }
        None => None,
    };
    if p.taxonomy.is_some() {
        let t = load_taxonomy(cfg)?;
        out.push((
            "taxonomy".into(),
            format!("{} categories, {} blacklisted", t.len(), t.blacklist().len()),
        ));
    }
    let mut k = None;
    if let Some(path) = &p.grouping {
        let expected: Option<Vec<_>> = boundaries.as_ref().map(|b| b.codes().collect());
        let g = load_grouping(open(path)?, expected.as_deref())?;
        out.push(("grouping".into(), format!("{} classes over {} countries", g.k(), g.countries().count())));
        k = Some(g.k());
    }
    if let Some(path) = &p.country_stats {
        let s = with_input(path, load_country_stats(open(path)?))?;
        out.push(("country_stats".into(), format!("{} countries", s.len())));
    }
    if let Some(path) = &p.manifest {
        let m = read_manifest(path)?;
        let stats = validate_manifest(&m.records)?;
        out.push(("manifest".into(), format!("{} records", stats.total)));
    }
    let mut store = EvidenceStore::new();
    if let Some(path) = &p.scene_evidence {
        let n = store.load_scene(open(path)?, &path.display().to_string())?;
        out.push(("scene_evidence".into(), format!("{n} rows")));
    }
    if let Some(path) = &p.face_evidence {
        let n = store.load_faces(open(path)?, &path.display().to_string())?;
        out.push(("face_evidence".into(), format!("{n} rows")));
    }
    if let Some(path) = &p.grey_evidence {
        let n = store.load_grey(open(path)?, &path.display().to_string())?;
        out.push(("grey_evidence".into(), format!("{n} rows")));
    }
    if let Some(path) = &p.predictions {
        let f = with_input(path, PredictionFile::read_from(open(path)?))?;
        if let Some(k) = k.filter(|&k| k != f.header.n_classes) {
            return Err(PipelineError::Input {
                path: path.clone(),
                message: format!("predictions have {} classes but the grouping has {k}", f.header.n_classes),
            });
        }
        out.push(("predictions".into(), format!("{} records", f.records.len())));
    }
    if let Some(path) = &p.gps_predictions {
        let g = with_input(path, read_gps_predictions(open(path)?))?;
        out.push(("gps_predictions".into(), format!("{} records", g.len())));
    }
    Ok(out)
}

/// Runs every stage from query generation to the dataset report.
pub fn run_all(cfg: &PipelineConfig, seeds: &GroupingSeeds) -> Result<()> {
    let io = StageIo::default();
    if cfg.paths.city_table.is_some() && cfg.paths.keywords.is_some() {
        gen_queries(cfg, None, false, false)?;
    }
    assign_country(cfg, &io)?;
    filter(cfg, &io)?;
    normalize(cfg, &io)?;
    group(cfg, &io, seeds)?;
    split(cfg, &io)?;
    weights(cfg, &io)?;
    crop_plans(cfg, &io, None)?;
    if cfg.paths.predictions.is_some() {
        eval(cfg, &io)?;
    }
    report(cfg, &io)?;
    Ok(())
}
