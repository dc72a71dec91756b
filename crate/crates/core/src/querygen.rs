//! Crawl query generation: keyword × city text queries and per-city
//! geographic bounding boxes.
//!
//! City table layout (tab separated, `#` lines ignored):
//!
//! ```text
//! name <TAB> country_code <TAB> lat <TAB> lon <TAB> population
//! ```

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use serde::Serialize;

use crate::geo::GeoBBox;
use crate::manifest::CountryCode;

/// Mean earth radius in metres used for box half-widths.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Latitude clamp applied before dividing by `cos(lat)`.
pub const MAX_LAT_FOR_LON_SPAN: f64 = 85.0;

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("city table row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("keyword list is empty")]
    NoKeywords,
    #[error("city list is empty")]
    NoCities,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct City {
    pub name: String,
    pub country_code: CountryCode,
    pub lat: f64,
    pub lon: f64,
    pub population: u64,
}

/// Reads the city table, keeping rows with `population >= min_population`.
pub fn load_city_table<R: BufRead>(reader: R, min_population: u64) -> Result<Vec<City>, QueryError> {
    let mut cities = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let row = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| QueryError::Row { row, message };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(err(format!("expected 5 tab-separated columns, found {}", cols.len())));
        }
        let name = cols[0].trim();
        if name.is_empty() {
            return Err(err("empty city name".into()));
        }
        let country_code: CountryCode = cols[1].trim().parse().map_err(err)?;
        let lat: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad latitude `{}`", cols[2])))?;
        let lon: f64 = cols[3]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad longitude `{}`", cols[3])))?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(err(format!("coordinates ({lat}, {lon}) out of range")));
        }
        let population: u64 = cols[4]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad population `{}`", cols[4])))?;
        if population >= min_population {
            cities.push(City {
                name: name.to_string(),
                country_code,
                lat,
                lon: if lon == 180.0 { -180.0 } else { lon },
                population,
            });
        }
    }
    Ok(cities)
}

/// One keyword per line; blank lines and `#` comments skipped.
pub fn load_keywords<R: BufRead>(reader: R) -> Result<Vec<String>, QueryError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let kw = line.trim();
        if !kw.is_empty() && !kw.starts_with('#') {
            out.push(kw.to_string());
        }
    }
    Ok(out)
}

/// Raw size of the keyword × city cross product.
pub fn raw_query_count(cities: usize, keywords: usize) -> u64 {
    cities as u64 * keywords as u64
}

/// Lazily enumerated `"{city} {keyword}"` queries, city-major.
#[derive(Clone, Debug)]
pub struct KeywordQueries<'a> {
    cities: &'a [City],
    keywords: &'a [String],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct QueryCounts {
    pub raw: u64,
    pub deduplicated: u64,
}

pub fn generate_keyword_queries<'a>(
    cities: &'a [City],
    keywords: &'a [String],
) -> Result<KeywordQueries<'a>, QueryError> {
    if keywords.is_empty() {
        return Err(QueryError::NoKeywords);
    }
    if cities.is_empty() {
        return Err(QueryError::NoCities);
    }
    Ok(KeywordQueries { cities, keywords })
}

impl<'a> KeywordQueries<'a> {
    pub fn raw_count(&self) -> u64 {
        raw_query_count(self.cities.len(), self.keywords.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = String> + 'a {
        let keywords = self.keywords;
        self.cities
            .iter()
            .flat_map(move |c| keywords.iter().map(move |k| format!("{} {}", c.name, k)))
    }

    /// Exact-string deduplicated queries in first-occurrence order.
    pub fn deduplicated(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.iter().filter(|q| seen.insert(q.clone())).collect()
    }

    /// Streams queries to `out`, one per line, and returns both counts.
    pub fn write_to<W: Write>(&self, mut out: W, dedup: bool) -> io::Result<QueryCounts> {
        let mut seen = HashSet::new();
        let mut counts = QueryCounts::default();
        for q in self.iter() {
            counts.raw += 1;
            if seen.insert(q.clone()) {
                counts.deduplicated += 1;
                writeln!(out, "{q}")?;
            } else if !dedup {
                writeln!(out, "{q}")?;
            }
        }
        out.flush()?;
        Ok(counts)
    }

    pub fn counts(&self) -> QueryCounts {
        let mut seen = HashSet::new();
        let deduplicated = self.iter().filter(|q| seen.insert(q.clone())).count() as u64;
        QueryCounts {
            raw: self.raw_count(),
            deduplicated,
        }
    }
}

/// A query box, split in two when it crosses the antimeridian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoxCover {
    Single(GeoBBox),
    Split(GeoBBox, GeoBBox),
}

impl BoxCover {
    pub fn boxes(&self) -> Vec<GeoBBox> {
        match *self {
            BoxCover::Single(b) => vec![b],
            BoxCover::Split(a, b) => vec![a, b],
        }
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        self.boxes().iter().any(|b| b.contains(lat, lon))
    }

    pub fn area_deg2(&self) -> f64 {
        self.boxes().iter().map(GeoBBox::area_deg2).sum()
    }
}

/// Latitude half-span in degrees of a box with the given half-width.
pub fn lat_half_span_deg(half_width_km: f64) -> f64 {
    half_width_km * 1000.0 * 180.0 / (std::f64::consts::PI * EARTH_RADIUS_M)
}

/// Box extending `half_width_km` north/south/east/west of the point on a
/// spherical earth.
pub fn bbox_around(lat: f64, lon: f64, half_width_km: f64) -> BoxCover {
    let dlat = lat_half_span_deg(half_width_km);
    let lat_c = lat.clamp(-MAX_LAT_FOR_LON_SPAN, MAX_LAT_FOR_LON_SPAN);
    let dlon = dlat / lat_c.to_radians().cos();
    let lat_min = (lat - dlat).max(-90.0);
    let lat_max = (lat + dlat).min(90.0);
    let whole = |lon_min, lon_max| GeoBBox {
        lat_min,
        lat_max,
        lon_min,
        lon_max,
    };
    if dlon >= 180.0 {
        return BoxCover::Single(whole(-180.0, 180.0));
    }
    let (lo, hi) = (lon - dlon, lon + dlon);
    if lo < -180.0 {
        BoxCover::Split(whole(-180.0, hi), whole(lo + 360.0, 180.0))
    } else if hi > 180.0 {
        BoxCover::Split(whole(lo, 180.0), whole(-180.0, hi - 360.0))
    } else {
        BoxCover::Single(whole(lo, hi))
    }
}

#[derive(Debug, Serialize)]
struct BoxLine<'a> {
    city: usize,
    name: &'a str,
    country_code: CountryCode,
    #[serde(flatten)]
    bbox: GeoBBox,
}

/// Writes one JSON line per box: city index, name, country and bounds.
pub fn write_city_boxes<W: Write>(
    cities: &[City],
    half_width_km: f64,
    mut out: W,
) -> io::Result<usize> {
    let mut n = 0;
    for (i, c) in cities.iter().enumerate() {
        for bbox in bbox_around(c.lat, c.lon, half_width_km).boxes() {
            let line = BoxLine {
                city: i,
                name: &c.name,
                country_code: c.country_code,
                bbox,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
            n += 1;
        }
    }
    out.flush()?;
    Ok(n)
}
