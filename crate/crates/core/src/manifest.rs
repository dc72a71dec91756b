//! Canonical image record model and line-delimited manifest files.
//!
//! A manifest is UTF-8 text with one JSON object per line. Lines starting with
//! `#` are header lines of the form `# key=value` and are carried through
//! rewrites untouched. Unknown keys on a record are preserved. Final writes are
//! sorted by record id so diffs between runs are reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid field `{field}`: {message}")]
    Validation {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("duplicate record ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl ManifestError {
    fn at_line(self, line: usize) -> Self {
        match self {
            ManifestError::Parse { message, .. } => ManifestError::Parse { line, message },
            ManifestError::Validation { field, message, .. } => ManifestError::Validation {
                line,
                field,
                message,
            },
            other => other,
        }
    }
}

/// ISO 3166-1 alpha-2 country code, stored as two uppercase ASCII letters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn new(code: &str) -> Option<Self> {
        let bytes = code.as_bytes();
        if bytes.len() == 2 && bytes.iter().all(u8::is_ascii_alphabetic) {
            Some(CountryCode([
                bytes[0].to_ascii_uppercase(),
                bytes[1].to_ascii_uppercase(),
            ]))
        } else {
            None
        }
    }

    pub fn as_str(&self) -> &str {
        // Both bytes are ASCII letters by construction.
        std::str::from_utf8(&self.0).unwrap_or("??")
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CountryCode({})", self.as_str())
    }
}

impl FromStr for CountryCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CountryCode::new(s).ok_or_else(|| format!("`{s}` is not an ISO 3166-1 alpha-2 code"))
    }
}

impl Serialize for CountryCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Index of a country class in `[0, K)`.
pub type ClassId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Flickr,
    Mapillary,
    Unsplash,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Flickr => "flickr",
            Source::Mapillary => "mapillary",
            Source::Unsplash => "unsplash",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    #[default]
    Raw,
    Kept,
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    Date,
    Grey,
    NonUrban,
    BlacklistedScene,
    FaceArea,
    UnassignableGps,
}

impl RejectionReason {
    pub const ALL: [RejectionReason; 6] = [
        RejectionReason::Date,
        RejectionReason::Grey,
        RejectionReason::NonUrban,
        RejectionReason::BlacklistedScene,
        RejectionReason::FaceArea,
        RejectionReason::UnassignableGps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectionReason::Date => "date",
            RejectionReason::Grey => "grey",
            RejectionReason::NonUrban => "non_urban",
            RejectionReason::BlacklistedScene => "blacklisted_scene",
            RejectionReason::FaceArea => "face_area",
            RejectionReason::UnassignableGps => "unassignable_gps",
        }
    }
}

/// Stable record id: lowercase hex of the first 128 bits of SHA-256 over
/// `source \0 native_id`.
pub fn record_id(source: Source, native_id: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(source.as_str().as_bytes());
    hasher.update([0u8]);
    hasher.update(native_id.as_bytes());
    let digest = hasher.finalize();
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// One geo-tagged image and its pipeline state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub source: Source,
    pub lat: f64,
    pub lon: f64,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "de_capture_date"
    )]
    pub captured_at: Option<NaiveDate>,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_color: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country_code: Option<CountryCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<ClassId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default)]
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<RejectionReason>,
    pub path_or_url: String,
    /// Keys this version does not know about, kept verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Accepts `YYYY-MM-DD` or a provider timestamp and keeps only the date.
fn de_capture_date<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDate>, D::Error> {
    let raw: Option<String> = Option::deserialize(d)?;
    let Some(raw) = raw else { return Ok(None) };
    let head = raw.get(..10).unwrap_or(&raw);
    NaiveDate::parse_from_str(head, "%Y-%m-%d")
        .map(Some)
        .map_err(|e| serde::de::Error::custom(format!("captured_at `{raw}`: {e}")))
}

impl ImageRecord {
    /// A raw record with every optional field absent.
    pub fn new(
        id: impl Into<String>,
        source: Source,
        lat: f64,
        lon: f64,
        width: u32,
        height: u32,
        path_or_url: impl Into<String>,
    ) -> Self {
        ImageRecord {
            id: id.into(),
            source,
            lat,
            lon,
            captured_at: None,
            width,
            height,
            is_color: None,
            country_code: None,
            class_id: None,
            split: None,
            status: Status::Raw,
            rejection_reason: None,
            path_or_url: path_or_url.into(),
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let fail = |field, message: &str| {
            Err(ManifestError::Validation {
                line: 0,
                field,
                message: message.to_string(),
            })
        };
        if self.id.is_empty() {
            return fail("id", "id is empty");
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return fail("lat", "lat out of range");
        }
        if !(-180.0..180.0).contains(&self.lon) {
            return fail("lon", "lon out of range");
        }
        if self.width == 0 {
            return fail("width", "width must be at least 1");
        }
        if self.height == 0 {
            return fail("height", "height must be at least 1");
        }
        match (self.status, self.rejection_reason) {
            (Status::Rejected, None) => {
                return fail("rejection_reason", "rejected record has no rejection_reason")
            }
            (Status::Raw | Status::Kept, Some(_)) => {
                return fail("rejection_reason", "rejection_reason set on a non-rejected record")
            }
            _ => {}
        }
        if self.class_id.is_some() && self.country_code.is_none() {
            return fail("class_id", "class_id present without country_code");
        }
        Ok(())
    }

    pub fn reject(&mut self, reason: RejectionReason) {
        self.status = Status::Rejected;
        self.rejection_reason = Some(reason);
    }
}

/// Parses and validates one manifest line.
pub fn parse_record(line: &str) -> Result<ImageRecord, ManifestError> {
    let record: ImageRecord = serde_json::from_str(line).map_err(|e| ManifestError::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    record.validate()?;
    Ok(record)
}

/// Canonical single-line form: known fields in declaration order, absent
/// optionals omitted, unknown keys last in key order.
pub fn serialize_record(record: &ImageRecord) -> String {
    serde_json::to_string(record).expect("record serialization is infallible")
}

/// Header lines plus records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub header: BTreeMap<String, String>,
    pub records: Vec<ImageRecord>,
}

impl Manifest {
    pub fn new(records: Vec<ImageRecord>) -> Self {
        Manifest {
            header: BTreeMap::new(),
            records,
        }
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, ManifestError> {
        let mut manifest = Manifest::default();
        for item in ManifestLines::new(reader) {
            match item? {
                ManifestLine::Header(k, v) => {
                    manifest.header.insert(k, v);
                }
                ManifestLine::Record(r) => manifest.records.push(*r),
            }
        }
        Ok(manifest)
    }

    pub fn read_path(path: &Path) -> Result<Self, ManifestError> {
        let file = File::open(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(BufReader::new(file))
    }

    /// Writes header lines, then records sorted by id.
    pub fn write_to<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (k, v) in &self.header {
            writeln!(writer, "# {k}={v}")?;
        }
        let mut sorted: Vec<&ImageRecord> = self.records.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        for record in sorted {
            writeln!(writer, "{}", serialize_record(record))?;
        }
        writer.flush()
    }

    pub fn write_path(&self, path: &Path) -> Result<(), ManifestError> {
        let io_err = |source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_to(BufWriter::new(file)).map_err(io_err)
    }
}

pub enum ManifestLine {
    Header(String, String),
    Record(Box<ImageRecord>),
}

/// Streaming reader yielding header entries and validated records with
/// 1-based line numbers attached to errors.
pub struct ManifestLines<R> {
    lines: io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> ManifestLines<R> {
    pub fn new(reader: R) -> Self {
        ManifestLines {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for ManifestLines<R> {
    type Item = Result<ManifestLine, ManifestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(source) => {
                    return Some(Err(ManifestError::Io {
                        path: format!("<line {}>", self.line_no + 1),
                        source,
                    }))
                }
            };
            self.line_no += 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('#') {
                let header = header.trim();
                let (k, v) = header.split_once('=').unwrap_or((header, ""));
                return Some(Ok(ManifestLine::Header(
                    k.trim().to_string(),
                    v.trim().to_string(),
                )));
            }
            return Some(
                parse_record(trimmed)
                    .map(|r| ManifestLine::Record(Box::new(r)))
                    .map_err(|e| e.at_line(self.line_no)),
            );
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub total: usize,
    pub per_source: BTreeMap<Source, usize>,
    pub per_country: BTreeMap<CountryCode, usize>,
    pub per_class: BTreeMap<ClassId, usize>,
    pub per_split: BTreeMap<Split, usize>,
}

impl ManifestStats {
    pub fn observe(&mut self, record: &ImageRecord) {
        self.total += 1;
        *self.per_source.entry(record.source).or_default() += 1;
        if let Some(cc) = record.country_code {
            *self.per_country.entry(cc).or_default() += 1;
        }
        if let Some(class) = record.class_id {
            *self.per_class.entry(class).or_default() += 1;
        }
        if let Some(split) = record.split {
            *self.per_split.entry(split).or_default() += 1;
        }
    }

    /// Associative, commutative combination of two partial tallies.
    pub fn merge(mut self, other: ManifestStats) -> ManifestStats {
        fn add<K: Ord>(into: &mut BTreeMap<K, usize>, from: BTreeMap<K, usize>) {
            for (k, v) in from {
                *into.entry(k).or_default() += v;
            }
        }
        self.total += other.total;
        add(&mut self.per_source, other.per_source);
        add(&mut self.per_country, other.per_country);
        add(&mut self.per_class, other.per_class);
        add(&mut self.per_split, other.per_split);
        self
    }
}

/// Checks record invariants and id uniqueness, then tallies.
pub fn validate_manifest(records: &[ImageRecord]) -> Result<ManifestStats, ManifestError> {
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            dups.insert(r.id.clone());
        }
    }
    if !dups.is_empty() {
        return Err(ManifestError::DuplicateIds(dups.into_iter().collect()));
    }
    let mut stats = ManifestStats::default();
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| e.at_line(i + 1))?;
        stats.observe(r);
    }
    Ok(stats)
}
