//! Per-country train/val/test splits, inverse-square-root class weights and
//! the weighted cross-entropy they feed.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{ClassId, CountryCode, ImageRecord, Split, Status};

/// Probability floor applied before taking the log.
pub const LOSS_EPSILON: f64 = 1e-12;
/// Tolerance on score vectors summing to one.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;
pub const WEIGHTS_HEADER: &str = "# class weights v1";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("bad split ratios `{0}`: {1}")]
    Ratios(String, String),
    #[error("record {0} has no country code")]
    MissingCountry(String),
    #[error("every class count is zero")]
    AllZero,
    #[error("class {0} has no weight")]
    UnknownClass(ClassId),
    #[error("invalid loss sample: {0}")]
    InvalidSample(String),
    #[error("weights line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Split proportions as exact integer parts of a common denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u64,
    pub val: u64,
    pub test: u64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 96,
            val: 2,
            test: 2,
        }
    }
}

fn parse_decimal(s: &str) -> Option<(u64, u32)> {
    let s = s.trim();
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 9 {
        return None;
    }
    let digits = format!("{int}{frac}");
    Some((digits.parse().ok()?, frac.len() as u32))
}

impl SplitRatios {
    /// Parses `train,val,test` decimals, e.g. `0.96,0.02,0.02`. The values
    /// must sum to exactly one.
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let bad = |m: &str| DatasetError::Ratios(text.to_string(), m.to_string());
        let parts: Vec<&str> = text.split(',').collect();
        if parts.len() != 3 {
            return Err(bad("expected three comma-separated values"));
        }
        let dec: Vec<(u64, u32)> = parts
            .iter()
            .map(|p| parse_decimal(p).ok_or_else(|| bad("not a non-negative decimal")))
            .collect::<Result<_, _>>()?;
        let places = dec.iter().map(|d| d.1).max().unwrap_or(0);
        let scaled: Vec<u64> = dec.iter().map(|&(v, p)| v * 10u64.pow(places - p)).collect();
        if scaled.iter().sum::<u64>() != 10u64.pow(places) {
            return Err(bad("ratios must sum to 1"));
        }
        Ok(SplitRatios {
            train: scaled[0],
            val: scaled[1],
            test: scaled[2],
        })
    }

    pub fn denominator(&self) -> u64 {
        self.train + self.val + self.test
    }

    pub fn as_f64(&self) -> (f64, f64, f64) {
        let d = self.denominator() as f64;
        (self.train as f64 / d, self.val as f64 / d, self.test as f64 / d)
    }
}

impl std::fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (a, b, c) = self.as_f64();
        write!(f, "{a},{b},{c}")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub ratios: SplitRatios,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Test and val take the ceiling of their share, test first, each capped so
/// the train remainder never goes negative.
pub fn split_counts(n: usize, ratios: &SplitRatios) -> SplitCounts {
    let d = ratios.denominator();
    let ceil = |part: u64| ((part * n as u64).div_ceil(d)) as usize;
    let test = ceil(ratios.test).min(n);
    let val = ceil(ratios.val).min(n - test);
    SplitCounts {
        train: n - test - val,
        val,
        test,
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Per-country shuffle seed.
pub fn country_seed(seed: u64, code: CountryCode) -> u64 {
    let b = code.as_str().as_bytes();
    splitmix64(seed ^ splitmix64(((b[0] as u64) << 8) | b[1] as u64))
}

/// Assigns ids of one country to splits: ids are sorted, shuffled with the
/// country seed, then the first `test` go to test and the next `val` to val.
pub fn split_country(ids: &mut Vec<&str>, code: CountryCode, config: &SplitConfig) -> Vec<Split> {
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(country_seed(config.seed, code));
    ids.shuffle(&mut rng);
    let c = split_counts(ids.len(), &config.ratios);
    (0..ids.len())
        .map(|i| {
            if i < c.test {
                Split::Test
            } else if i < c.test + c.val {
                Split::Val
            } else {
                Split::Train
            }
        })
        .collect()
}

/// Labels every non-rejected record with a split, per country. Rejected
/// records are returned unchanged. Output order matches input order.
pub fn split_dataset(records: &[ImageRecord], config: &SplitConfig) -> Result<Vec<ImageRecord>, DatasetError> {
    let mut by_country: BTreeMap<CountryCode, Vec<&str>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status != Status::Rejected) {
        let code = r.country_code.ok_or_else(|| DatasetError::MissingCountry(r.id.clone()))?;
        by_country.entry(code).or_default().push(&r.id);
    }
    let assigned: BTreeMap<&str, Split> = by_country
        .into_par_iter()
        .flat_map_iter(|(code, mut ids)| {
            let splits = split_country(&mut ids, code, config);
            ids.into_iter().zip(splits).collect::<Vec<_>>()
        })
        .collect();
    Ok(records
        .iter()
        .map(|r| {
            let mut out = r.clone();
            if let Some(&s) = assigned.get(r.id.as_str()) {
                out.split = Some(s);
            }
            out
        })
        .collect())
}

/// Image counts per class id over records with a class, optionally limited
/// to one split. The result has length `k`.
pub fn class_counts(records: &[ImageRecord], k: usize, split: Option<Split>) -> Vec<u64> {
    let mut counts = vec![0u64; k];
    for r in records.iter().filter(|r| r.status != Status::Rejected) {
        if split.is_some() && r.split != split {
            continue;
        }
        if let Some(c) = r.class_id.filter(|&c| (c as usize) < k) {
            counts[c as usize] += 1;
        }
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub class: ClassId,
    pub n: u64,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    /// Number of classes the counts covered, including excluded ones.
    pub n_classes: usize,
    pub entries: Vec<WeightEntry>,
    /// Classes with zero images; they get no weight.
    pub excluded: Vec<ClassId>,
    pub rescaled: bool,
}

/// `w_i = 1 / sqrt(n_i)` for every class with `n_i > 0`.
pub fn class_weights(counts: &[u64]) -> Result<WeightTable, DatasetError> {
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (i, &n) in counts.iter().enumerate() {
        if n == 0 {
            excluded.push(i as ClassId);
        } else {
            entries.push(WeightEntry {
                class: i as ClassId,
                n,
                w: 1.0 / (n as f64).sqrt(),
            });
        }
    }
    if entries.is_empty() {
        return Err(DatasetError::AllZero);
    }
    Ok(WeightTable {
        n_classes: counts.len(),
        entries,
        excluded,
        rescaled: false,
    })
}

impl WeightTable {
    pub fn weight(&self, class: ClassId) -> Option<f64> {
        self.entries
            .binary_search_by_key(&class, |e| e.class)
            .ok()
            .map(|i| self.entries[i].w)
    }

    /// Copy with weights scaled so their mean is one.
    pub fn rescaled_to_mean_one(&self) -> WeightTable {
        let mean = self.entries.iter().map(|e| e.w).sum::<f64>() / self.entries.len() as f64;
        WeightTable {
            entries: self
                .entries
                .iter()
                .map(|e| WeightEntry { w: e.w / mean, ..*e })
                .collect(),
            rescaled: true,
            ..self.clone()
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W, notes: &[&str]) -> io::Result<()> {
        writeln!(out, "{WEIGHTS_HEADER}")?;
        writeln!(out, "# n_classes={}", self.n_classes)?;
        writeln!(out, "# rescaled={}", self.rescaled)?;
        let ex: Vec<String> = self.excluded.iter().map(|c| c.to_string()).collect();
        writeln!(out, "# excluded={}", ex.join(","))?;
        for n in notes {
            writeln!(out, "# {n}")?;
        }
        writeln!(out, "# class_id n_i w_i")?;
        for e in &self.entries {
            writeln!(out, "{} {} {:e}", e.class, e.n, e.w)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<WeightTable, DatasetError> {
        let mut table = WeightTable {
            n_classes: 0,
            entries: Vec::new(),
            excluded: Vec::new(),
            rescaled: false,
        };
        let mut saw_n = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            let err = |message: String| DatasetError::Parse { line: i + 1, message };
            if let Some(meta) = t.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(v) = meta.strip_prefix("n_classes=") {
                    table.n_classes = v.parse().map_err(|_| err(format!("bad n_classes `{v}`")))?;
                    saw_n = true;
                } else if let Some(v) = meta.strip_prefix("rescaled=") {
                    table.rescaled = v == "true";
                } else if let Some(v) = meta.strip_prefix("excluded=") {
                    table.excluded = v
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| err(format!("bad class id `{s}`"))))
                        .collect::<Result<_, _>>()?;
                }
                continue;
            }
            if t.is_empty() {
                continue;
            }
            let cols: Vec<&str> = t.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(err(format!("expected `class_id n_i w_i`, got {} fields", cols.len())));
            }
            let class = cols[0].parse().map_err(|_| err(format!("bad class id `{}`", cols[0])))?;
            let n = cols[1].parse().map_err(|_| err(format!("bad count `{}`", cols[1])))?;
            let w: f64 = cols[2].parse().map_err(|_| err(format!("bad weight `{}`", cols[2])))?;
            if let Some(prev) = table.entries.last() {
                if prev.class >= class {
                    return Err(err("class ids must be strictly increasing".into()));
                }
            }
            table.entries.push(WeightEntry { class, n, w });
        }
        if !saw_n {
            table.n_classes = table.entries.last().map_or(0, |e| e.class as usize + 1);
        }
        Ok(table)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossSample {
    pub scores: Vec<f64>,
    pub target: ClassId,
}

impl LossSample {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if (self.target as usize) >= self.scores.len() {
            return Err(DatasetError::InvalidSample(format!(
                "target {} outside {} scores",
                self.target,
                self.scores.len()
            )));
        }
        if let Some(s) = self.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(DatasetError::InvalidSample(format!("score {s} outside [0, 1]")));
        }
        let sum: f64 = self.scores.iter().sum();
        if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
            return Err(DatasetError::InvalidSample(format!("scores sum to {sum}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Loss {
    pub value: f64,
    /// Number of terms whose probability was floored at [`LOSS_EPSILON`].
    pub clamped: usize,
}

/// `-w_c * ln(ȳ_c)` for the true class `c`.
pub fn weighted_ce(sample: &LossSample, weights: &WeightTable) -> Result<Loss, DatasetError> {
    sample.validate()?;
    let w = weights
        .weight(sample.target)
        .ok_or(DatasetError::UnknownClass(sample.target))?;
    let p = sample.scores[sample.target as usize];
    let clamped = p < LOSS_EPSILON;
    Ok(Loss {
        value: -w * p.max(LOSS_EPSILON).ln(),
        clamped: clamped as usize,
    })
}

/// Sum of per-sample losses.
pub fn weighted_ce_batch(samples: &[LossSample], weights: &WeightTable) -> Result<Loss, DatasetError> {
    let mut total = Loss {
        value: 0.0,
        clamped: 0,
    };
    for s in samples {
        let l = weighted_ce(s, weights)?;
        total.value += l.value;
        total.clamped += l.clamped;
    }
    Ok(total)
}
