//! Small deterministic toy world for examples and tests.
//!
//! Eight countries with hand-drawn boundaries exercise the awkward geometry
//! cases: an enclave (VA inside IT), a shared border on a parallel (EG/SD), a
//! concave outline (US), and a shape crossing the antimeridian (FJ). Records,
//! evidence files, predictions and images are generated from a seed so that
//! every run produces byte-identical inputs.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use image::{GrayImage, ImageFormat, Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::eval::{GpsPrediction, Layout, PredictionFile, PredictionHeader, PredictionRecord};
use crate::geo::{Assignment, CountryPolygonSet, LatLon, RawCountry};
use crate::grouping::ClassGrouping;
use crate::manifest::{record_id, ClassId, CountryCode, ImageRecord, Manifest, Source};

pub const TOY_CODES: [&str; 8] = ["AE", "EG", "FJ", "FR", "IT", "SD", "US", "VA"];

fn cc(s: &str) -> CountryCode {
    CountryCode::new(s).expect("static code")
}

fn ring(points: &[(f64, f64)]) -> Vec<LatLon> {
    let mut r: Vec<LatLon> = points.iter().map(|&(lat, lon)| LatLon::new(lat, lon)).collect();
    r.push(r[0]);
    r
}

fn rect(lat0: f64, lat1: f64, lon0: f64, lon1: f64) -> Vec<LatLon> {
    ring(&[(lat0, lon0), (lat0, lon1), (lat1, lon1), (lat1, lon0)])
}

/// Raw toy boundaries: `(code, polygons of rings)`, outer ring first.
pub fn toy_world() -> Vec<RawCountry> {
    vec![
        (cc("AE"), vec![vec![rect(22.5, 26.0, 51.0, 56.0)]]),
        (cc("EG"), vec![vec![rect(22.0, 31.0, 25.0, 35.0)]]),
        (
            cc("FJ"),
            vec![vec![ring(&[(-19.0, 177.0), (-16.0, 177.0), (-16.0, -178.0), (-19.0, -178.0)])]],
        ),
        (cc("FR"), vec![vec![rect(43.0, 50.0, -2.0, 7.0)]]),
        (
            cc("IT"),
            vec![vec![rect(40.0, 46.0, 8.0, 16.0), rect(41.8, 42.0, 12.3, 12.5)]],
        ),
        (cc("SD"), vec![vec![rect(10.0, 22.0, 22.0, 38.0)]]),
        (
            cc("US"),
            vec![vec![ring(&[
                (30.0, -120.0),
                (48.0, -120.0),
                (48.0, -100.0),
                (38.0, -100.0),
                (38.0, -80.0),
                (30.0, -80.0),
            ])]],
        ),
        (cc("VA"), vec![vec![rect(41.8, 42.0, 12.3, 12.5)]]),
    ]
}

pub fn toy_boundaries() -> CountryPolygonSet {
    CountryPolygonSet::from_countries(toy_world()).expect("toy boundaries are valid")
}

/// The toy boundaries as a GeoJSON FeatureCollection with `[lon, lat]` rings.
pub fn toy_boundaries_geojson() -> String {
    let features: Vec<_> = toy_world()
        .into_iter()
        .map(|(code, polys)| {
            let coords: Vec<Vec<Vec<[f64; 2]>>> = polys
                .iter()
                .map(|rings| rings.iter().map(|r| r.iter().map(|p| [p.lon, p.lat]).collect()).collect())
                .collect();
            json!({
                "type": "Feature",
                "properties": {"iso_a2": code.as_str()},
                "geometry": {"type": "MultiPolygon", "coordinates": coords},
            })
        })
        .collect();
    let doc = json!({"type": "FeatureCollection", "features": features});
    serde_json::to_string_pretty(&doc).expect("json") + "\n"
}

/// Seven classes: the enclave joins its host, every other country stands alone.
pub fn toy_grouping() -> ClassGrouping {
    let mut groups: Vec<Vec<CountryCode>> = TOY_CODES
        .iter()
        .filter(|c| !matches!(**c, "IT" | "VA"))
        .map(|c| vec![cc(c)])
        .collect();
    groups.push(vec![cc("IT"), cc("VA")]);
    ClassGrouping::from_groups(groups).expect("toy grouping is valid")
}

pub fn toy_grouping_text() -> String {
    let mut out = Vec::new();
    toy_grouping()
        .write_to(&mut out, &["toy world: IT and VA share a class"])
        .expect("in-memory write");
    String::from_utf8(out).expect("utf-8")
}

const INDOOR: [&str; 6] = ["kitchen", "bedroom", "office", "library/indoor", "museum/indoor", "airplane_cabin"];
const NATURAL: [&str; 8] = ["forest", "beach", "mountain", "ocean", "sky", "desert", "lake", "field"];
const URBAN: [&str; 16] = [
    "street",
    "plaza",
    "downtown",
    "alley",
    "church/outdoor",
    "market/outdoor",
    "bridge",
    "tower",
    "skyscraper",
    "parking_lot",
    "residential_neighborhood",
    "airfield",
    "runway",
    "harbor",
    "boat_deck",
    "stadium/soccer",
];
const BLACKLIST: [&str; 8] = [
    "airfield",
    "runway",
    "airplane_cabin",
    "harbor",
    "boat_deck",
    "stadium/soccer",
    "ocean",
    "sky",
];

/// `(id, name, kind)` in id order.
fn toy_categories() -> Vec<(u32, &'static str, &'static str)> {
    let mut out = Vec::new();
    for (names, kind) in [(&INDOOR[..], "indoor"), (&NATURAL[..], "natural"), (&URBAN[..], "urban")] {
        for n in names {
            out.push((out.len() as u32, *n, kind));
        }
    }
    out
}

pub fn toy_taxonomy_tsv() -> String {
    let mut s = String::from("# id\tname\tkind\n");
    for (id, name, kind) in toy_categories() {
        let _ = writeln!(s, "{id}\t{name}\t{kind}");
    }
    s
}

pub fn toy_blacklist() -> String {
    let mut s = String::from("# categories never kept\n");
    for n in BLACKLIST {
        let _ = writeln!(s, "{n}");
    }
    s
}

/// 50 city rows, 12 of them below a population of 1000. Two countries share a
/// city name so deduplication has something to collapse.
pub fn toy_cities_tsv() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c17e);
    let world = toy_boundaries();
    let mut s = String::from("# name\tcountry\tlat\tlon\tpopulation\n");
    for i in 0..50usize {
        let code = cc(TOY_CODES[i % TOY_CODES.len()]);
        let p = sample_inside(&world, code, &mut rng);
        let population: u64 = if i % 4 == 1 && i < 48 {
            rng.random_range(50..1000)
        } else {
            rng.random_range(1000..2_000_000)
        };
        let name = match i {
            3 | 11 => "Springfield".to_string(),
            _ => format!("Toyville {i:02}"),
        };
        let _ = writeln!(s, "{name}\t{code}\t{:.4}\t{:.4}\t{population}", p.lat, p.lon);
    }
    s
}

pub fn toy_keywords() -> String {
    "# one keyword per line\nstreet\nchurch\nmarket\nsquare\nbridge\nstation\n".to_string()
}

/// Uniform point inside `code`, by rejection from its bounding box.
fn sample_inside(world: &CountryPolygonSet, code: CountryCode, rng: &mut ChaCha8Rng) -> LatLon {
    let raw = toy_world();
    let outer = &raw.iter().find(|c| c.0 == code).expect("toy code").1[0][0];
    let lats = outer.iter().map(|p| p.lat);
    let (lat_min, lat_max) = (lats.clone().fold(f64::MAX, f64::min), lats.fold(f64::MIN, f64::max));
    let lons: Vec<f64> = outer.iter().map(|p| p.lon).collect();
    let span = lons.iter().cloned().fold(f64::MIN, f64::max) - lons.iter().cloned().fold(f64::MAX, f64::min);
    // Unwrap shapes that cross the antimeridian before taking the box.
    let lons: Vec<f64> = lons
        .into_iter()
        .map(|l| if span > 180.0 && l < 0.0 { l + 360.0 } else { l })
        .collect();
    let lon_min = lons.iter().cloned().fold(f64::MAX, f64::min);
    let lon_max = lons.iter().cloned().fold(f64::MIN, f64::max);
    loop {
        let lat = rng.random_range(lat_min..lat_max);
        let lon = rng.random_range(lon_min..lon_max);
        let lon = if lon >= 180.0 { lon - 360.0 } else { lon };
        let (lat, lon) = ((lat * 1e5).round() / 1e5, (lon * 1e5).round() / 1e5);
        if world.locate(lat, lon, 0.0) == Assignment::Inside(code) {
            return LatLon::new(lat, lon);
        }
    }
}

/// Designed outcome of the scene filter for one record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneCase {
    Urban,
    Natural,
    Indoor,
    /// Urban probability exactly 0.5: rejected.
    Boundary,
    /// Blacklisted top-1 at or above 0.5 with a passing urban score.
    Blacklisted,
    /// Blacklisted top-1 just below 0.5: kept.
    BlacklistedLow,
}

/// Ground truth for one synthetic record, used by tests as an oracle input.
#[derive(Clone, Debug)]
pub struct ToyTruth {
    pub id: String,
    /// Country the point was drawn in; `None` for ocean points.
    pub country: Option<CountryCode>,
    pub scene: SceneCase,
    pub grey: bool,
    /// Scene evidence row absent.
    pub missing_scene: bool,
    /// Face evidence row is a decode error.
    pub face_error: bool,
    pub png: bool,
}

/// Everything the pipeline consumes, generated from one seed.
#[derive(Clone, Debug)]
pub struct ToyDataset {
    pub manifest: Manifest,
    pub truth: Vec<ToyTruth>,
    pub scene_evidence: String,
    pub face_evidence: String,
    pub grey_evidence: String,
}

/// Scene top-5 in units of 1/64 so every sum is exact in binary.
fn scene_top5(case: SceneCase, rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let cats = toy_categories();
    let ids = |kind: &str, blacklisted: Option<bool>| -> Vec<u32> {
        cats.iter()
            .filter(|c| c.2 == kind && blacklisted.is_none_or(|b| BLACKLIST.contains(&c.1) == b))
            .map(|c| c.0)
            .collect()
    };
    let urban_ok = ids("urban", Some(false));
    let urban_bl = ids("urban", Some(true));
    let natural = ids("natural", None);
    let indoor = ids("indoor", None);
    let pick = |pool: &[u32], rng: &mut ChaCha8Rng, used: &[(u32, u32)]| -> u32 {
        let free: Vec<u32> = pool.iter().copied().filter(|c| used.iter().all(|u| u.0 != *c)).collect();
        *free.choose(rng).expect("pool larger than five")
    };
    let mut entries: Vec<(u32, u32)> = Vec::new();
    let (urban_units, other_pool): (Vec<(u32, bool)>, &[u32]) = match case {
        SceneCase::Urban => {
            let total = rng.random_range(36..=60);
            let a = rng.random_range(total / 2..=total - 4);
            (vec![(a, false), (total - a, false)], &natural)
        }
        SceneCase::Natural => {
            let total = rng.random_range(0..=28);
            (vec![(total, false)], &natural)
        }
        SceneCase::Indoor => (vec![], &indoor),
        SceneCase::Boundary => (vec![(20, false), (12, false)], &natural),
        SceneCase::Blacklisted => {
            let a = rng.random_range(32..=50);
            (vec![(a, true), (rng.random_range(2..=(60 - a).max(2)), false)], &natural)
        }
        SceneCase::BlacklistedLow => (vec![(rng.random_range(28..=31), true), (8, false)], &natural),
    };
    for (units, bl) in urban_units {
        if units == 0 {
            continue;
        }
        let c = pick(if bl { &urban_bl } else { &urban_ok }, rng, &entries);
        entries.push((c, units));
    }
    let used: u32 = entries.iter().map(|e| e.1).sum();
    let mut remaining = 64 - used;
    while entries.len() < 5 && remaining > 0 {
        let cap = entries.iter().map(|e| e.1).min().unwrap_or(64).min(remaining);
        // Fill with smaller entries so the designed top-1 stays on top.
        let cap = if entries.is_empty() { remaining.min(40) } else { cap.saturating_sub(1).max(1) };
        let u = rng.random_range(1..=cap);
        let c = pick(other_pool, rng, &entries);
        entries.push((c, u));
        remaining -= u;
    }
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    entries
}

fn face_boxes(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Vec<[f64; 4]> {
    let (wf, hf) = (w as f64, h as f64);
    let roll = rng.random_range(0..100);
    if roll < 65 {
        Vec::new()
    } else if roll < 88 {
        // A few small faces, well under the area limit.
        (0..rng.random_range(1..=3))
            .map(|_| {
                let s = (wf.min(hf) * rng.random_range(0.05..0.12)).round();
                let x = rng.random_range(0.0..wf - s).round();
                let y = rng.random_range(0.0..hf - s).round();
                [x, y, s, s]
            })
            .collect()
    } else {
        // Two overlapping large faces, one spilling past the right edge.
        let s = (wf.min(hf) * 0.45).round();
        vec![
            [(wf * 0.1).round(), (hf * 0.1).round(), s, s],
            [(wf * 0.1 + s * 0.5).round(), (hf * 0.1 + s * 0.25).round(), s, s],
            [(wf - s * 0.5).round(), 0.0, s, s],
        ]
    }
}

/// Generates `n` records with evidence. Roughly: 3% ocean points, 10% dated
/// before 2012, 10% undated, 5% grey, 2% without scene evidence, 1% with a
/// face decode error.
pub fn toy_dataset(n: usize, seed: u64) -> ToyDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = toy_boundaries();
    let mut records = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut scene = String::new();
    let mut face = String::new();
    let mut grey = String::new();
    let sources = [Source::Flickr, Source::Mapillary, Source::Unsplash];
    for i in 0..n {
        let source = sources[i % 3];
        let id = record_id(source, &format!("toy-{seed}-{i}"));
        let ocean = rng.random_range(0..100) < 3;
        let (point, country) = if ocean {
            let lat = (rng.random_range(-50.0..-40.0f64) * 1e5).round() / 1e5;
            let lon = (rng.random_range(-30.0..-20.0f64) * 1e5).round() / 1e5;
            (LatLon::new(lat, lon), None)
        } else {
            // VA is tiny; give it a fixed share so its class is populated.
            let code = if i % 40 == 7 {
                cc("VA")
            } else {
                cc(TOY_CODES[rng.random_range(0..TOY_CODES.len())])
            };
            (sample_inside(&world, code, &mut rng), Some(code))
        };
        let big = rng.random_range(0..100) < 12;
        let (w, h) = if big {
            (rng.random_range(700..=960), rng.random_range(660..=800))
        } else {
            (rng.random_range(160..=520), rng.random_range(120..=400))
        };
        let png = i % 9 == 4;
        let ext = if png { "png" } else { "jpg" };
        let mut rec = ImageRecord::new(id.clone(), source, point.lat, point.lon, w, h, format!("{id}.{ext}"));
        let d = rng.random_range(0..100);
        rec.captured_at = if d < 10 {
            None
        } else if d < 20 {
            NaiveDate::from_ymd_opt(rng.random_range(2004..2012), rng.random_range(1..=12), 15)
        } else {
            NaiveDate::from_ymd_opt(rng.random_range(2012..2020), rng.random_range(1..=12), 1)
        };
        let is_grey = rng.random_range(0..100) < 5;
        let case = match rng.random_range(0..100) {
            0..60 => SceneCase::Urban,
            60..78 => SceneCase::Natural,
            78..83 => SceneCase::Indoor,
            83..88 => SceneCase::Boundary,
            88..96 => SceneCase::Blacklisted,
            _ => SceneCase::BlacklistedLow,
        };
        let missing_scene = rng.random_range(0..100) < 2;
        let face_error = rng.random_range(0..100) < 1;
        if !missing_scene {
            let top5: Vec<(u32, f64)> = scene_top5(case, &mut rng)
                .into_iter()
                .map(|(c, u)| (c, u as f64 / 64.0))
                .collect();
            let _ = writeln!(scene, "{}", json!({"id": id, "top5": top5}));
        }
        if face_error {
            let _ = writeln!(face, "{}", json!({"id": id, "error": "truncated image data"}));
        } else {
            let _ = writeln!(face, "{}", json!({"id": id, "boxes": face_boxes(&mut rng, w, h)}));
        }
        let _ = writeln!(grey, "{}", json!({"id": id, "is_grey": is_grey}));
        truth.push(ToyTruth {
            id,
            country,
            scene: case,
            grey: is_grey,
            missing_scene,
            face_error,
            png,
        });
        records.push(rec);
    }
    let mut manifest = Manifest::new(records);
    manifest.header.insert("source".into(), "toy".into());
    manifest.header.insert("seed".into(), seed.to_string());
    ToyDataset {
        manifest,
        truth,
        scene_evidence: scene,
        face_evidence: face,
        grey_evidence: grey,
    }
}

/// Splits `1_000_000` micro-units over `n` classes with `mass` on `target`
/// and the rest spread randomly. Printed with six decimals the vector sums to
/// exactly one.
fn prob_vector(n: usize, target: usize, mass: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut units = vec![0u32; n];
    units[target] = mass;
    let mut rest = 1_000_000 - mass;
    let others: Vec<usize> = (0..n).filter(|&c| c != target).collect();
    for (j, &c) in others.iter().enumerate() {
        let u = if j + 1 == others.len() { rest } else { rng.random_range(0..=rest / 2) };
        units[c] = u;
        rest -= u;
    }
    units[target] += rest;
    units.into_iter().map(|u| u as f64 / 1e6).collect()
}

/// Five-crop plus whole-image predictions for every record with a country.
/// About two thirds of the crops favour the true class.
pub fn toy_predictions(dataset: &ToyDataset, grouping: &ClassGrouping, seed: u64) -> PredictionFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let n = grouping.k();
    let mut header = PredictionHeader::new(n, Layout::FiveCrop);
    header.score_kind = "probability".into();
    let mut records = Vec::new();
    for t in &dataset.truth {
        let Some(true_class) = t.country.and_then(|c| grouping.class_of(c)) else {
            continue;
        };
        let vec_for = |rng: &mut ChaCha8Rng| {
            let favoured = if rng.random_range(0..3) < 2 {
                true_class as usize
            } else {
                rng.random_range(0..n)
            };
            prob_vector(n, favoured, rng.random_range(300_000..900_000), rng)
        };
        let crops: Vec<Vec<f64>> = (0..5).map(|_| vec_for(&mut rng)).collect();
        let whole = vec_for(&mut rng);
        records.push(PredictionRecord {
            id: t.id.clone(),
            true_class,
            crops: Some(crops),
            whole: Some(whole),
        });
    }
    PredictionFile { header, records }
}

/// Three GPS hypotheses per record: usually a point in the true country,
/// sometimes a point in another country or the ocean.
pub fn toy_gps_predictions(dataset: &ToyDataset, grouping: &ClassGrouping, seed: u64) -> Vec<GpsPrediction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7f4a_7c15);
    let world = toy_boundaries();
    let mut out = Vec::new();
    for t in &dataset.truth {
        let Some(code) = t.country else { continue };
        let Some(true_class) = grouping.class_of(code) else { continue };
        let gps = (0..3)
            .map(|_| {
                let roll = rng.random_range(0..10);
                let p = if roll < 6 {
                    sample_inside(&world, code, &mut rng)
                } else if roll < 9 {
                    sample_inside(&world, cc(TOY_CODES[rng.random_range(0..TOY_CODES.len())]), &mut rng)
                } else {
                    LatLon::new(-45.0, -25.0)
                };
                [p.lat, p.lon]
            })
            .collect();
        out.push(GpsPrediction {
            id: t.id.clone(),
            true_class: true_class as ClassId,
            gps,
        });
    }
    out
}

/// Writes one source image per record into `dir`: a colour gradient with
/// noise, or a single-channel image for grey records.
pub fn write_toy_images(dataset: &ToyDataset, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    use rayon::prelude::*;
    dataset
        .manifest
        .records
        .par_iter()
        .zip(dataset.truth.par_iter())
        .try_for_each(|(r, t)| {
            let mut rng = ChaCha8Rng::seed_from_u64(u64::from_str_radix(&r.id[..16], 16).unwrap_or(0));
            let path = dir.join(&r.path_or_url);
            let (w, h) = (r.width, r.height);
            let tint: [u8; 3] = [rng.random(), rng.random(), rng.random()];
            let salt: u32 = rng.random();
            let io_err = |e: image::ImageError| io::Error::other(e.to_string());
            if t.grey {
                let img = GrayImage::from_fn(w, h, |x, y| {
                    image::Luma([((x * 255 / w + y * 64 / h) as u8).wrapping_add(tint[0] / 4)])
                });
                let fmt = if t.png { ImageFormat::Png } else { ImageFormat::Jpeg };
                img.save_with_format(&path, fmt).map_err(io_err)
            } else {
                let img = RgbImage::from_fn(w, h, |x, y| {
                    let n = (x.wrapping_mul(7919) ^ y.wrapping_mul(104_729) ^ salt) % 24;
                    let n = n as u8;
                    Rgb([
                        ((x * 200 / w) as u8).wrapping_add(tint[0] / 5).wrapping_add(n),
                        ((y * 200 / h) as u8).wrapping_add(tint[1] / 5),
                        tint[2] / 2 + n,
                    ])
                });
                let fmt = if t.png { ImageFormat::Png } else { ImageFormat::Jpeg };
                img.save_with_format(&path, fmt).map_err(io_err)
            }
        })
}

/// Paths of a generated fixture set.
#[derive(Clone, Debug)]
pub struct FixtureSet {
    pub dir: PathBuf,
    pub config: PathBuf,
}

fn write_text(path: &Path, text: &str) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()
}

/// The data files of a fixture set (no images), as `(file name, contents)`.
pub fn fixture_files(n: usize, seed: u64) -> Vec<(&'static str, String)> {
    let ds = toy_dataset(n, seed);
    let grouping = toy_grouping();
    let mut manifest = Vec::new();
    ds.manifest.write_to(&mut manifest).expect("in-memory write");
    let mut preds = Vec::new();
    toy_predictions(&ds, &grouping, seed)
        .write_to(&mut preds)
        .expect("in-memory write");
    let gps: String = toy_gps_predictions(&ds, &grouping, seed)
        .iter()
        .map(|p| serde_json::to_string(p).expect("json") + "\n")
        .collect();
    vec![
        ("boundaries.geojson", toy_boundaries_geojson()),
        ("taxonomy.tsv", toy_taxonomy_tsv()),
        ("blacklist.txt", toy_blacklist()),
        ("grouping.txt", toy_grouping_text()),
        ("cities.tsv", toy_cities_tsv()),
        ("keywords.txt", toy_keywords()),
        ("manifest.jsonl", String::from_utf8(manifest).expect("utf-8")),
        ("scene_evidence.jsonl", ds.scene_evidence),
        ("face_evidence.jsonl", ds.face_evidence),
        ("grey_evidence.jsonl", ds.grey_evidence),
        ("predictions.jsonl", String::from_utf8(preds).expect("utf-8")),
        ("gps_predictions.jsonl", gps),
    ]
}

/// Config text pointing at the files of [`fixture_files`]. With `images`
/// the config also names source, normalized and work directories.
pub fn fixture_config(images: bool) -> String {
    let mut s = String::from(
        "[paths]\n\
         city_table = \"cities.tsv\"\n\
         keywords = \"keywords.txt\"\n\
         boundaries = \"boundaries.geojson\"\n\
         taxonomy = \"taxonomy.tsv\"\n\
         blacklist = \"blacklist.txt\"\n\
         grouping = \"grouping.txt\"\n\
         manifest = \"manifest.jsonl\"\n\
         scene_evidence = \"scene_evidence.jsonl\"\n\
         face_evidence = \"face_evidence.jsonl\"\n\
         grey_evidence = \"grey_evidence.jsonl\"\n\
         predictions = \"predictions.jsonl\"\n\
         gps_predictions = \"gps_predictions.jsonl\"\n",
    );
    if images {
        s.push_str("images = \"images\"\nnormalized = \"normalized\"\nwork_dir = \"work\"\n");
    }
    s.push_str("\n[split]\nratios = \"0.96,0.02,0.02\"\nseed = 7\n\n[grouping]\nk = 7\n");
    s
}

/// Writes a complete fixture set with images into `dir`.
pub fn write_fixture_set(dir: &Path, n: usize, seed: u64) -> io::Result<FixtureSet> {
    fs::create_dir_all(dir)?;
    for (name, text) in fixture_files(n, seed) {
        write_text(&dir.join(name), &text)?;
    }
    write_toy_images(&toy_dataset(n, seed), &dir.join("images"))?;
    let config = dir.join("geocurate.toml");
    write_text(&config, &fixture_config(true))?;
    Ok(FixtureSet {
        dir: dir.to_path_buf(),
        config,
    })
}
