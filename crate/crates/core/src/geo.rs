//! Reverse geocoding of coordinates to countries.
//!
//! Boundaries are read from a GeoJSON `FeatureCollection` whose features carry
//! a two-letter country code in `properties.code` (`iso_a2` / `ISO_A2` are
//! also accepted) and a `Polygon` or `MultiPolygon` geometry with `[lon, lat]`
//! positions. Containment is planar even-odd ray casting in lat/lon space with
//! boundary points counted as inside. Polygons crossing the ±180° meridian are
//! split into two pieces at load time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::manifest::CountryCode;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Endpoint distance (degrees) under which an unclosed ring is snapped shut.
pub const RING_CLOSE_TOLERANCE_DEG: f64 = 1e-9;

pub const DEFAULT_FALLBACK_KM: f64 = 25.0;

const ON_EDGE_EPS: f64 = 1e-12;
const GRID_CELL_DEG: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("feature {feature}: ring {ring} is not closed")]
    UnclosedRing { feature: String, ring: usize },
    #[error("feature {feature}: ring {ring} has fewer than 3 distinct vertices")]
    DegenerateRing { feature: String, ring: usize },
    #[error("duplicate country code {0}")]
    DuplicateCode(CountryCode),
    #[error("feature {feature}: {message}")]
    Feature { feature: String, message: String },
    #[error("boundary file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }
}

/// Great-circle distance in kilometres on a sphere of radius 6371 km.
pub fn haversine(p1: LatLon, p2: LatLon) -> f64 {
    let (phi1, phi2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (p2.lon - p1.lon).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeoBBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoBBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }

    /// Area in square degrees.
    pub fn area_deg2(&self) -> f64 {
        (self.lat_max - self.lat_min) * (self.lon_max - self.lon_min)
    }

    fn of_points<'a>(points: impl IntoIterator<Item = &'a LatLon>) -> GeoBBox {
        let mut b = GeoBBox {
            lat_min: f64::INFINITY,
            lat_max: f64::NEG_INFINITY,
            lon_min: f64::INFINITY,
            lon_max: f64::NEG_INFINITY,
        };
        for p in points {
            b.lat_min = b.lat_min.min(p.lat);
            b.lat_max = b.lat_max.max(p.lat);
            b.lon_min = b.lon_min.min(p.lon);
            b.lon_max = b.lon_max.max(p.lon);
        }
        b
    }
}

/// Closed rings: the first ring is the outer boundary, the rest are holes.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    rings: Vec<Vec<LatLon>>,
    bbox: GeoBBox,
}

impl Polygon {
    fn from_closed_rings(rings: Vec<Vec<LatLon>>) -> Self {
        let bbox = GeoBBox::of_points(rings.iter().flatten());
        Polygon { rings, bbox }
    }

    pub fn rings(&self) -> &[Vec<LatLon>] {
        &self.rings
    }

    pub fn bbox(&self) -> GeoBBox {
        self.bbox
    }
}

/// Even-odd containment with boundary points inside.
///
/// The crossing test uses a ray toward +lon along constant latitude and counts
/// an edge only when exactly one endpoint lies strictly above the point, so a
/// vertex on the ray is never counted twice.
pub fn point_in_polygon(lat: f64, lon: f64, polygon: &Polygon) -> bool {
    if !polygon.bbox.contains(lat, lon) {
        return false;
    }
    point_in_rings(lat, lon, &polygon.rings)
}

fn point_in_rings(lat: f64, lon: f64, rings: &[Vec<LatLon>]) -> bool {
    let mut inside = false;
    for ring in rings {
        for edge in ring.windows(2) {
            let (a, b) = (edge[0], edge[1]);
            if on_segment(lat, lon, a, b) {
                return true;
            }
            if (a.lat > lat) != (b.lat > lat) {
                let x = a.lon + (lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if lon < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn on_segment(lat: f64, lon: f64, a: LatLon, b: LatLon) -> bool {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let (px, py) = (lon - a.lon, lat - a.lat);
    let cross = dx * py - dy * px;
    let len = dx.hypot(dy);
    if cross.abs() > ON_EDGE_EPS * len.max(1.0) {
        return false;
    }
    let dot = px * dx + py * dy;
    dot >= -ON_EDGE_EPS && dot <= dx * dx + dy * dy + ON_EDGE_EPS
}

/// Signed shoelace area and centroid of a closed ring in (lon, lat) space.
fn ring_area_centroid(ring: &[LatLon]) -> (f64, f64, f64) {
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for e in ring.windows(2) {
        let (p, q) = (e[0], e[1]);
        let cross = p.lon * q.lat - q.lon * p.lat;
        a2 += cross;
        cx += (p.lon + q.lon) * cross;
        cy += (p.lat + q.lat) * cross;
    }
    if a2 == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (a2 / 2.0, cx / (3.0 * a2), cy / (3.0 * a2))
}

/// Absolute-area-weighted centroid of a set of polygons given as raw rings
/// (outer + holes). Returns `(area, lon, lat)`.
fn polygons_area_centroid<'a>(polys: impl IntoIterator<Item = &'a [Vec<LatLon>]>) -> (f64, f64, f64) {
    let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
    for rings in polys {
        for (i, ring) in rings.iter().enumerate() {
            let (a, cx, cy) = ring_area_centroid(ring);
            let w = if i == 0 { a.abs() } else { -a.abs() };
            area += w;
            mx += w * cx;
            my += w * cy;
        }
    }
    if area <= 0.0 {
        return (0.0, f64::NAN, f64::NAN);
    }
    (area, mx / area, my / area)
}

fn wrap_lon(lon: f64) -> f64 {
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Removes longitude jumps larger than 180° so the ring is continuous.
fn unwrap_ring(ring: &mut [LatLon]) {
    for i in 1..ring.len() {
        let prev = ring[i - 1].lon;
        let mut lon = ring[i].lon;
        while lon - prev > 180.0 {
            lon -= 360.0;
        }
        while lon - prev < -180.0 {
            lon += 360.0;
        }
        ring[i].lon = lon;
    }
}

fn shift_ring(ring: &mut [LatLon], dlon: f64) {
    for p in ring {
        p.lon += dlon;
    }
}

/// Sutherland–Hodgman clip of a closed ring against `lon <= x` (`keep_west`)
/// or `lon >= x`.
fn clip_ring(ring: &[LatLon], x: f64, keep_west: bool) -> Vec<LatLon> {
    let inside = |p: &LatLon| if keep_west { p.lon <= x } else { p.lon >= x };
    let mut out = Vec::with_capacity(ring.len() + 2);
    for e in ring.windows(2) {
        let (s, t) = (e[0], e[1]);
        let (si, ti) = (inside(&s), inside(&t));
        if si {
            out.push(s);
        }
        if si != ti {
            let f = (x - s.lon) / (t.lon - s.lon);
            out.push(LatLon::new(s.lat + f * (t.lat - s.lat), x));
        }
    }
    if let Some(&first) = out.first() {
        out.push(first);
    }
    out
}

fn ring_is_degenerate(ring: &[LatLon]) -> bool {
    ring.len() < 4 || ring_area_centroid(ring).0 == 0.0
}

/// Unwraps a raw polygon (closed rings, outer first) into a continuous
/// longitude range starting in `[-180, 180)` and splits it at the antimeridian
/// when needed. Returns one or two polygons.
pub fn normalize_polygon(mut rings: Vec<Vec<LatLon>>) -> Vec<Polygon> {
    let unwrapped = unwrap_polygon(&mut rings);
    if !unwrapped {
        return Vec::new();
    }
    let lon_max = rings[0].iter().map(|p| p.lon).fold(f64::NEG_INFINITY, f64::max);
    if lon_max <= 180.0 {
        return vec![Polygon::from_closed_rings(rings)];
    }
    let mut pieces = Vec::new();
    for keep_west in [true, false] {
        let mut clipped: Vec<Vec<LatLon>> = Vec::new();
        for (i, ring) in rings.iter().enumerate() {
            let mut c = clip_ring(ring, 180.0, keep_west);
            if ring_is_degenerate(&c) {
                if i == 0 {
                    break;
                }
                continue;
            }
            if !keep_west {
                shift_ring(&mut c, -360.0);
            }
            clipped.push(c);
        }
        if !clipped.is_empty() {
            pieces.push(Polygon::from_closed_rings(clipped));
        }
    }
    pieces
}

/// Makes rings continuous, aligns holes to the outer ring, and shifts the
/// polygon so its western edge lies in `[-180, 180)`.
fn unwrap_polygon(rings: &mut [Vec<LatLon>]) -> bool {
    if rings.is_empty() || rings[0].is_empty() {
        return false;
    }
    for ring in rings.iter_mut() {
        unwrap_ring(ring);
    }
    let outer_ref = rings[0][0].lon;
    for hole in rings.iter_mut().skip(1) {
        let d = ((outer_ref - hole[0].lon) / 360.0).round() * 360.0;
        shift_ring(hole, d);
    }
    let lon_min = rings[0].iter().map(|p| p.lon).fold(f64::INFINITY, f64::min);
    let d = wrap_lon(lon_min) - lon_min;
    if d != 0.0 {
        for ring in rings.iter_mut() {
            shift_ring(ring, d);
        }
    }
    true
}

#[derive(Clone, Debug)]
pub struct Country {
    pub code: CountryCode,
    pub polygons: Vec<Polygon>,
    pub centroid: LatLon,
}

/// Country boundaries with a coarse grid prefilter over polygon bounding boxes.
#[derive(Clone, Debug)]
pub struct CountryPolygonSet {
    countries: Vec<Country>,
    grid: Vec<Vec<(u32, u32)>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Assignment {
    Inside(CountryCode),
    Nearby { code: CountryCode, km: f64 },
    Unassigned,
}

impl Assignment {
    pub fn code(&self) -> Option<CountryCode> {
        match *self {
            Assignment::Inside(c) | Assignment::Nearby { code: c, .. } => Some(c),
            Assignment::Unassigned => None,
        }
    }
}

const GRID_COLS: usize = (360.0 / GRID_CELL_DEG) as usize;
const GRID_ROWS: usize = (180.0 / GRID_CELL_DEG) as usize;

fn grid_row(lat: f64) -> usize {
    (((lat + 90.0) / GRID_CELL_DEG).floor().max(0.0) as usize).min(GRID_ROWS - 1)
}

fn grid_col(lon: f64) -> usize {
    (((lon + 180.0) / GRID_CELL_DEG).floor().max(0.0) as usize).min(GRID_COLS - 1)
}

/// Raw country geometry: code plus polygons of closed rings (outer first).
pub type RawCountry = (CountryCode, Vec<Vec<Vec<LatLon>>>);

impl CountryPolygonSet {
    /// Builds a set from closed rings. Each polygon is unwrapped and split at
    /// the antimeridian; centroids are area-weighted over the unsplit shapes.
    pub fn from_countries(raw: Vec<RawCountry>) -> Result<Self, GeoError> {
        let mut by_code: BTreeMap<CountryCode, Vec<Vec<Vec<LatLon>>>> = BTreeMap::new();
        for (code, polys) in raw {
            if by_code.insert(code, polys).is_some() {
                return Err(GeoError::DuplicateCode(code));
            }
        }
        let mut countries = Vec::with_capacity(by_code.len());
        for (code, polys) in by_code {
            let mut unwrapped: Vec<Vec<Vec<LatLon>>> = Vec::new();
            for mut rings in polys {
                if !unwrap_polygon(&mut rings) {
                    continue;
                }
                // Keep all parts of one country on the same side of the seam.
                if let Some(first) = unwrapped.first() {
                    let (_, ref_lon, _) = polygons_area_centroid([first.as_slice()]);
                    let (_, lon, _) = polygons_area_centroid([rings.as_slice()]);
                    if ref_lon.is_finite() && lon.is_finite() {
                        let d = ((ref_lon - lon) / 360.0).round() * 360.0;
                        if d != 0.0 {
                            for ring in rings.iter_mut() {
                                shift_ring(ring, d);
                            }
                        }
                    }
                }
                unwrapped.push(rings);
            }
            let (_, clon, clat) = polygons_area_centroid(unwrapped.iter().map(Vec::as_slice));
            let centroid = if clon.is_finite() {
                LatLon::new(clat, wrap_lon(clon))
            } else {
                let b = GeoBBox::of_points(unwrapped.iter().flatten().flatten());
                LatLon::new((b.lat_min + b.lat_max) / 2.0, wrap_lon((b.lon_min + b.lon_max) / 2.0))
            };
            let polygons = unwrapped.into_iter().flat_map(normalize_polygon).collect();
            countries.push(Country {
                code,
                polygons,
                centroid,
            });
        }
        let mut grid = vec![Vec::new(); GRID_ROWS * GRID_COLS];
        for (ci, c) in countries.iter().enumerate() {
            for (pi, p) in c.polygons.iter().enumerate() {
                let b = p.bbox;
                for row in grid_row(b.lat_min)..=grid_row(b.lat_max) {
                    for col in grid_col(b.lon_min)..=grid_col(b.lon_max) {
                        grid[row * GRID_COLS + col].push((ci as u32, pi as u32));
                    }
                }
            }
        }
        Ok(CountryPolygonSet { countries, grid })
    }

    pub fn load_boundaries(path: &Path) -> Result<Self, GeoError> {
        let text = fs::read_to_string(path).map_err(|source| GeoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_geojson_str(&text)
    }

    pub fn from_geojson_str(text: &str) -> Result<Self, GeoError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| GeoError::Format(e.to_string()))?;
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| GeoError::Format("expected a FeatureCollection with `features`".into()))?;
        let mut raw = Vec::with_capacity(features.len());
        for (i, feature) in features.iter().enumerate() {
            raw.push(parse_feature(i, feature)?);
        }
        Self::from_countries(raw)
    }

    /// Sorted by code.
    pub fn countries(&self) -> &[Country] {
        &self.countries
    }

    pub fn codes(&self) -> impl Iterator<Item = CountryCode> + '_ {
        self.countries.iter().map(|c| c.code)
    }

    pub fn get(&self, code: CountryCode) -> Option<&Country> {
        self.countries
            .binary_search_by(|c| c.code.cmp(&code))
            .ok()
            .map(|i| &self.countries[i])
    }

    /// First containing country in code order, otherwise the nearest centroid
    /// within `fallback_km`.
    pub fn locate(&self, lat: f64, lon: f64, fallback_km: f64) -> Assignment {
        let lon = if lon >= 180.0 { wrap_lon(lon) } else { lon };
        let cell = &self.grid[grid_row(lat) * GRID_COLS + grid_col(lon)];
        for &(ci, pi) in cell {
            let country = &self.countries[ci as usize];
            if point_in_polygon(lat, lon, &country.polygons[pi as usize]) {
                return Assignment::Inside(country.code);
            }
        }
        // Points exactly on the seam may sit in the other column's cell.
        if lon == -180.0 {
            if let Some(code) = self.scan_all(lat, 180.0) {
                return Assignment::Inside(code);
            }
        }
        let here = LatLon::new(lat, lon);
        let mut best: Option<(f64, CountryCode)> = None;
        for c in &self.countries {
            let d = haversine(here, c.centroid);
            if d <= fallback_km && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c.code));
            }
        }
        match best {
            Some((km, code)) => Assignment::Nearby { code, km },
            None => Assignment::Unassigned,
        }
    }

    fn scan_all(&self, lat: f64, lon: f64) -> Option<CountryCode> {
        self.countries
            .iter()
            .find(|c| c.polygons.iter().any(|p| point_in_polygon(lat, lon, p)))
            .map(|c| c.code)
    }

    /// Writes the set back out as a GeoJSON FeatureCollection (split pieces
    /// are emitted as separate polygons).
    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .countries
            .iter()
            .map(|c| {
                let polys: Vec<Value> = c
                    .polygons
                    .iter()
                    .map(|p| {
                        Value::Array(
                            p.rings
                                .iter()
                                .map(|r| r.iter().map(|q| json!([q.lon, q.lat])).collect())
                                .collect(),
                        )
                    })
                    .collect();
                json!({
                    "type": "Feature",
                    "properties": {"code": c.code.as_str()},
                    "geometry": {"type": "MultiPolygon", "coordinates": polys},
                })
            })
            .collect();
        json!({"type": "FeatureCollection", "features": features})
    }
}

/// Country code of a coordinate, or `None` when unassignable.
pub fn assign_country(
    lat: f64,
    lon: f64,
    set: &CountryPolygonSet,
    fallback_km: f64,
) -> Option<CountryCode> {
    set.locate(lat, lon, fallback_km).code()
}

fn parse_feature(index: usize, feature: &Value) -> Result<RawCountry, GeoError> {
    let props = feature.get("properties");
    let code_str = ["code", "iso_a2", "ISO_A2"]
        .iter()
        .find_map(|k| props.and_then(|p| p.get(*k)).and_then(Value::as_str))
        .ok_or_else(|| GeoError::Feature {
            feature: format!("#{index}"),
            message: "missing country code property".into(),
        })?;
    let name = format!("{code_str} (#{index})");
    let ferr = |message: String| GeoError::Feature {
        feature: name.clone(),
        message,
    };
    let code: CountryCode = code_str.parse().map_err(ferr)?;
    let geometry = feature
        .get("geometry")
        .ok_or_else(|| ferr("missing geometry".into()))?;
    let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| ferr("missing coordinates".into()))?;
    let polygons: Vec<&Value> = match kind {
        "Polygon" => vec![coords],
        "MultiPolygon" => coords
            .as_array()
            .ok_or_else(|| ferr("coordinates must be an array".into()))?
            .iter()
            .collect(),
        other => return Err(ferr(format!("unsupported geometry type `{other}`"))),
    };
    let mut out = Vec::with_capacity(polygons.len());
    let mut ring_no = 0;
    for poly in polygons {
        let rings = poly
            .as_array()
            .ok_or_else(|| ferr("polygon must be an array of rings".into()))?;
        let mut parsed = Vec::with_capacity(rings.len());
        for ring in rings {
            parsed.push(parse_ring(ring, &name, ring_no)?);
            ring_no += 1;
        }
        if !parsed.is_empty() {
            out.push(parsed);
        }
    }
    Ok((code, out))
}

fn parse_ring(ring: &Value, feature: &str, ring_no: usize) -> Result<Vec<LatLon>, GeoError> {
    let ferr = |message: String| GeoError::Feature {
        feature: feature.to_string(),
        message,
    };
    let positions = ring
        .as_array()
        .ok_or_else(|| ferr("ring must be an array of positions".into()))?;
    let mut pts = Vec::with_capacity(positions.len());
    for pos in positions {
        let pair = pos.as_array().filter(|a| a.len() >= 2);
        let (lon, lat) = match pair.map(|a| (a[0].as_f64(), a[1].as_f64())) {
            Some((Some(lon), Some(lat))) => (lon, lat),
            _ => return Err(ferr(format!("bad position {pos}"))),
        };
        if !(-90.0..=90.0).contains(&lat) || !lon.is_finite() {
            return Err(ferr(format!("position {pos} out of range")));
        }
        pts.push(LatLon::new(lat, lon));
    }
    close_ring(&mut pts, feature, ring_no)?;
    Ok(pts)
}

/// Enforces `first == last`, snapping endpoints closer than the tolerance.
pub fn close_ring(pts: &mut [LatLon], feature: &str, ring: usize) -> Result<(), GeoError> {
    let (Some(&first), Some(last)) = (pts.first(), pts.last()) else {
        return Err(GeoError::DegenerateRing {
            feature: feature.to_string(),
            ring,
        });
    };
    let gap = (first.lat - last.lat).abs().max((first.lon - last.lon).abs());
    if gap > RING_CLOSE_TOLERANCE_DEG {
        return Err(GeoError::UnclosedRing {
            feature: feature.to_string(),
            ring,
        });
    }
    if let Some(last) = pts.last_mut() {
        *last = first;
    }
    if pts.len() < 4 {
        return Err(GeoError::DegenerateRing {
            feature: feature.to_string(),
            ring,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(lat0: f64, lon0: f64, lat1: f64, lon1: f64) -> Vec<LatLon> {
        vec![
            LatLon::new(lat0, lon0),
            LatLon::new(lat0, lon1),
            LatLon::new(lat1, lon1),
            LatLon::new(lat1, lon0),
            LatLon::new(lat0, lon0),
        ]
    }

    fn cc(s: &str) -> CountryCode {
        s.parse().unwrap()
    }

    #[test]
    fn unit_square_country() {
        let text = r#"{"type":"FeatureCollection","features":[{"type":"Feature",
            "properties":{"code":"AA"},
            "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}]}"#;
        let set = CountryPolygonSet::from_geojson_str(text).unwrap();
        assert_eq!(set.countries().len(), 1);
        let b = set.countries()[0].polygons[0].bbox();
        assert_eq!((b.lat_min, b.lat_max, b.lon_min, b.lon_max), (0.0, 1.0, 0.0, 1.0));
        let c = set.countries()[0].centroid;
        assert!((c.lat - 0.5).abs() < 1e-12 && (c.lon - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ring_closing_tolerance() {
        let mut nearly = square(0.0, 0.0, 1.0, 1.0);
        nearly.last_mut().unwrap().lon += 5e-10;
        assert!(close_ring(&mut nearly, "AA", 0).is_ok());
        assert_eq!(nearly.first(), nearly.last());

        let mut open = square(0.0, 0.0, 1.0, 1.0);
        open.pop();
        match close_ring(&mut open, "AA", 0) {
            Err(GeoError::UnclosedRing { feature, .. }) => assert_eq!(feature, "AA"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_codes_rejected() {
        let sq = vec![square(0.0, 0.0, 1.0, 1.0)];
        let err = CountryPolygonSet::from_countries(vec![(cc("AA"), vec![sq.clone()]), (cc("AA"), vec![sq])])
            .unwrap_err();
        assert!(matches!(err, GeoError::DuplicateCode(_)));
    }

    #[test]
    fn containment_basics() {
        let poly = &normalize_polygon(vec![square(0.0, 0.0, 1.0, 1.0)])[0];
        assert!(point_in_polygon(0.5, 0.5, poly));
        assert!(!point_in_polygon(2.0, 2.0, poly));
        // Boundary and vertices are inside.
        assert!(point_in_polygon(0.0, 0.5, poly));
        assert!(point_in_polygon(1.0, 1.0, poly));
        assert!(point_in_polygon(0.5, 1.0, poly));
    }

    #[test]
    fn holes_exclude() {
        let poly = &normalize_polygon(vec![square(0.0, 0.0, 10.0, 10.0), square(4.0, 4.0, 6.0, 6.0)])[0];
        assert!(point_in_polygon(1.0, 1.0, poly));
        assert!(!point_in_polygon(5.0, 5.0, poly));
        assert!(point_in_polygon(4.0, 5.0, poly));
    }

    #[test]
    fn vertex_on_ray_not_double_counted() {
        // Diamond: the ray from (0, -5) passes exactly through vertex (0, 5).
        let ring = vec![
            LatLon::new(0.0, -2.0),
            LatLon::new(2.0, 0.0),
            LatLon::new(0.0, 2.0),
            LatLon::new(-2.0, 0.0),
            LatLon::new(0.0, -2.0),
        ];
        let poly = &normalize_polygon(vec![ring])[0];
        assert!(point_in_polygon(0.0, 0.0, poly));
        assert!(!point_in_rings(0.0, -5.0, poly.rings()));
        assert!(!point_in_rings(2.0, -5.0, poly.rings()));
    }

    #[test]
    fn antimeridian_polygon_is_split() {
        // 178°E .. 178°W written with a raw jump.
        let ring = vec![
            LatLon::new(-18.0, 178.0),
            LatLon::new(-18.0, -178.0),
            LatLon::new(-16.0, -178.0),
            LatLon::new(-16.0, 178.0),
            LatLon::new(-18.0, 178.0),
        ];
        let pieces = normalize_polygon(vec![ring]);
        assert_eq!(pieces.len(), 2);
        let inside = |lat, lon| pieces.iter().any(|p| point_in_polygon(lat, lon, p));
        assert!(inside(-17.0, 179.5));
        assert!(inside(-17.0, -179.5));
        assert!(!inside(-17.0, 0.0));
        assert!(!inside(-17.0, 177.0));
        for p in &pieces {
            let b = p.bbox();
            assert!(b.lon_min >= -180.0 && b.lon_max <= 180.0);
        }
    }

    #[test]
    fn shared_border_goes_to_lower_code() {
        let set = CountryPolygonSet::from_countries(vec![
            (cc("ZB"), vec![vec![square(0.0, 1.0, 1.0, 2.0)]]),
            (cc("AB"), vec![vec![square(0.0, 0.0, 1.0, 1.0)]]),
        ])
        .unwrap();
        assert_eq!(assign_country(0.5, 1.0, &set, 0.0), Some(cc("AB")));
        assert_eq!(assign_country(0.5, 1.5, &set, 0.0), Some(cc("ZB")));
    }

    #[test]
    fn fallback_by_centroid_distance() {
        // ~11 km half-width island at the origin.
        let set =
            CountryPolygonSet::from_countries(vec![(cc("IS"), vec![vec![square(-0.1, -0.1, 0.1, 0.1)]])])
                .unwrap();
        let dlat_per_km = 180.0 / (std::f64::consts::PI * EARTH_RADIUS_KM);
        // Point 16 km north of the centroid: ~5 km beyond the shore.
        let lat = 16.0 * dlat_per_km;
        assert!((haversine(LatLon::new(lat, 0.0), LatLon::new(0.0, 0.0)) - 16.0).abs() < 1e-9);
        match set.locate(lat, 0.0, 25.0) {
            Assignment::Nearby { code, km } => {
                assert_eq!(code, cc("IS"));
                assert!((km - 16.0).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(assign_country(lat, 0.0, &set, 10.0), None);
        assert_eq!(assign_country(-40.0, -30.0, &set, 25.0), None);
    }

    #[test]
    fn haversine_closed_forms() {
        let p = LatLon::new(12.0, 34.0);
        assert_eq!(haversine(p, p), 0.0);
        let half = haversine(LatLon::new(0.0, 0.0), LatLon::new(0.0, 180.0));
        assert!((half - std::f64::consts::PI * 6371.0).abs() < 1e-9);
        assert!((half - 20015.09).abs() < 0.01);
    }

    #[test]
    fn geojson_round_trip_keeps_answers() {
        let set = CountryPolygonSet::from_countries(vec![
            (cc("AA"), vec![vec![square(0.0, 0.0, 2.0, 2.0), square(0.5, 0.5, 1.0, 1.0)]]),
            (cc("FJ"), vec![vec![square(-18.0, 178.0, -16.0, 182.0)]]),
        ])
        .unwrap();
        let text = set.to_geojson().to_string();
        let back = CountryPolygonSet::from_geojson_str(&text).unwrap();
        for (lat, lon) in [(0.2, 0.2), (0.7, 0.7), (-17.0, 179.0), (-17.0, -179.0), (5.0, 5.0)] {
            assert_eq!(
                assign_country(lat, lon, &set, 0.0),
                assign_country(lat, lon, &back, 0.0)
            );
        }
        assert_eq!(assign_country(-17.0, -179.0, &set, 0.0), Some(cc("FJ")));
        let fj = set.get(cc("FJ")).unwrap();
        assert!((fj.centroid.lon.abs() - 180.0).abs() < 1e-9, "{:?}", fj.centroid);
    }
}
