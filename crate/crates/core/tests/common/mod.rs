//! Independent oracles shared by the integration and acceptance tests. None of
//! these call into the library code they check.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Expected cascade result for one record: `Ok(None)` kept, `Ok(Some(reason))`
/// rejected, `Err(stage)` unresolved at that stage.
pub type Expected = Result<Option<&'static str>, &'static str>;

pub struct CascadeOracle {
    urban: BTreeSet<u64>,
    blacklisted: BTreeSet<u64>,
    scene: BTreeMap<String, Value>,
    faces: BTreeMap<String, Value>,
    grey: BTreeMap<String, Value>,
}

fn by_id(jsonl: &str) -> BTreeMap<String, Value> {
    jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_string(), v)
        })
        .collect()
}

impl CascadeOracle {
    pub fn new(taxonomy_tsv: &str, blacklist: &str, scene: &str, faces: &str, grey: &str) -> Self {
        let mut urban = BTreeSet::new();
        let mut names = BTreeMap::new();
        for line in taxonomy_tsv.lines().filter(|l| !l.starts_with('#')) {
            let cols: Vec<&str> = line.split('\t').collect();
            let id: u64 = cols[0].parse().unwrap();
            names.insert(cols[1].to_string(), id);
            if cols[2] == "urban" {
                urban.insert(id);
            }
        }
        let blacklisted = blacklist
            .lines()
            .filter(|l| !l.starts_with('#') && !l.is_empty())
            .filter_map(|n| names.get(n).copied())
            .collect();
        CascadeOracle {
            urban,
            blacklisted,
            scene: by_id(scene),
            faces: by_id(faces),
            grey: by_id(grey),
        }
    }

    /// Urban probability as a plain left-to-right sum over urban entries.
    pub fn urban_sum(&self, top5: &[Value]) -> f64 {
        let mut s = 0.0;
        for e in top5 {
            if self.urban.contains(&e[0].as_u64().unwrap()) {
                s += e[1].as_f64().unwrap();
            }
        }
        s
    }

    /// `record` is a manifest line as JSON.
    pub fn expect(&self, record: &Value) -> Expected {
        let id = record["id"].as_str().unwrap();
        if let Some(d) = record["captured_at"].as_str() {
            if d < "2012-01-01" {
                return Ok(Some("date"));
            }
        }
        let grey = match self.grey.get(id) {
            Some(v) if v.get("is_grey").is_some() => v["is_grey"].as_bool().unwrap(),
            Some(_) => return Err("grey"),
            None => match record.get("is_color").and_then(Value::as_bool) {
                Some(c) => !c,
                None => return Err("grey"),
            },
        };
        if grey {
            return Ok(Some("grey"));
        }
        let Some(top5) = self.scene.get(id).and_then(|v| v.get("top5")).and_then(Value::as_array) else {
            return Err("scene");
        };
        if self.urban_sum(top5) <= 0.5 {
            return Ok(Some("non_urban"));
        }
        if let Some(top) = top5.first() {
            if self.blacklisted.contains(&top[0].as_u64().unwrap()) && top[1].as_f64().unwrap() >= 0.5 {
                return Ok(Some("blacklisted_scene"));
            }
        }
        let Some(boxes) = self.faces.get(id).and_then(|v| v.get("boxes")).and_then(Value::as_array) else {
            return Err("face");
        };
        let w = record["width"].as_u64().unwrap() as u32;
        let h = record["height"].as_u64().unwrap() as u32;
        let rects: Vec<[f64; 4]> = boxes
            .iter()
            .map(|b| {
                let b = b.as_array().unwrap();
                [0, 1, 2, 3].map(|i| b[i].as_f64().unwrap())
            })
            .collect();
        if raster_union_ratio(&rects, w, h, 1) > 0.10 {
            return Ok(Some("face_area"));
        }
        Ok(None)
    }
}

/// Union area over image area by painting a grid of `1/res`-pixel cells and
/// counting cells whose centre lies inside some box. Exact when every box
/// coordinate is a multiple of `1/res`.
pub fn raster_union_ratio(boxes: &[[f64; 4]], width: u32, height: u32, res: u32) -> f64 {
    let (gw, gh) = ((width * res) as usize, (height * res) as usize);
    let mut grid = vec![false; gw * gh];
    let r = res as f64;
    for b in boxes {
        let x0 = (b[0] * r).max(0.0);
        let y0 = (b[1] * r).max(0.0);
        let x1 = ((b[0] + b[2]) * r).min(gw as f64);
        let y1 = ((b[1] + b[3]) * r).min(gh as f64);
        if x1 <= x0 || y1 <= y0 {
            continue;
        }
        for y in (y0.floor() as usize)..(y1.ceil() as usize).min(gh) {
            let cy = y as f64 + 0.5;
            if cy < y0 || cy > y1 {
                continue;
            }
            for x in (x0.floor() as usize)..(x1.ceil() as usize).min(gw) {
                let cx = x as f64 + 0.5;
                if cx >= x0 && cx <= x1 {
                    grid[y * gw + x] = true;
                }
            }
        }
    }
    grid.iter().filter(|c| **c).count() as f64 / (gw * gh) as f64
}

/// Rank of `class` by sorting indices on descending score, ties to the lower
/// index; 1-based.
pub fn sorted_rank(scores: &[f64], class: usize) -> usize {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.iter().position(|&i| i == class).unwrap() + 1
}

/// Column-wise mean of equal-length vectors.
pub fn mean_oracle(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len() as f64;
    (0..vectors[0].len())
        .map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n)
        .collect()
}

/// Mean over classes with at least one sample of correct / total.
pub fn balanced_oracle(pairs: &[(usize, usize)], n: usize) -> f64 {
    let mut hit = vec![0u64; n];
    let mut tot = vec![0u64; n];
    for &(truth, pred) in pairs {
        tot[truth] += 1;
        if truth == pred {
            hit[truth] += 1;
        }
    }
    let recalls: Vec<f64> = (0..n).filter(|&c| tot[c] > 0).map(|c| hit[c] as f64 / tot[c] as f64).collect();
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// `-w * ln(p)` summed term by term.
pub fn loss_oracle(terms: &[(f64, f64)]) -> f64 {
    terms.iter().map(|&(w, p)| -w * p.max(1e-12).ln()).sum()
}

/// Winding number of a closed `(lat, lon)` ring around a point, in (lon, lat) space.
pub fn winding(lat: f64, lon: f64, ring: &[(f64, f64)]) -> i32 {
    let mut wn = 0;
    for e in ring.windows(2) {
        let ((alat, alon), (blat, blon)) = (e[0], e[1]);
        let side = (blon - alon) * (lat - alat) - (lon - alon) * (blat - alat);
        if alat <= lat {
            if blat > lat && side > 0.0 {
                wn += 1;
            }
        } else if blat <= lat && side < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Inside when the winding numbers of all rings sum to non-zero. Holes must
/// run opposite to their outer ring.
pub fn inside_by_winding(lat: f64, lon: f64, rings: &[Vec<(f64, f64)>]) -> bool {
    rings.iter().map(|r| winding(lat, lon, r)).sum::<i32>() != 0
}

/// Random closed star-shaped ring, sometimes with a smaller reversed hole.
pub fn random_rings(rng: &mut ChaCha8Rng) -> Vec<Vec<(f64, f64)>> {
    let close = |mut r: Vec<(f64, f64)>| {
        r.push(r[0]);
        r
    };
    let (clat, clon) = (rng.random_range(-60.0..60.0), rng.random_range(-170.0..170.0));
    let n = rng.random_range(3..24);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let outer: Vec<(f64, f64)> = angles
        .iter()
        .map(|&t| {
            let r = rng.random_range(2.0..8.0);
            (clat + r * t.sin(), clon + r * t.cos())
        })
        .collect();
    let mut rings = vec![close(outer)];
    if rng.random_bool(0.4) {
        let hole: Vec<(f64, f64)> = (0..4)
            .map(|i| {
                let t = -(i as f64) * std::f64::consts::FRAC_PI_2;
                (clat + 0.8 * t.sin(), clon + 0.8 * t.cos())
            })
            .collect();
        rings.push(close(hole));
    }
    rings
}
