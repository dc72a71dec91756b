//! Maps coordinates to country codes against polygon boundaries.
//!
//! Uses the toy world: VA is an enclave inside IT, EG and SD share the 22nd
//! parallel, and FJ straddles the antimeridian.
//!
//! `cargo run --example reverse_geocode`

use geocurate::geo::{Assignment, CountryPolygonSet};
use geocurate::synthetic::toy_boundaries_geojson;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = CountryPolygonSet::from_geojson_str(&toy_boundaries_geojson())?;
    for c in world.countries() {
        println!("{} centroid ({:.3}, {:.3})", c.code, c.centroid.lat, c.centroid.lon);
    }
    let probes = [
        ("Rome", 41.5, 12.5),
        ("inside the enclave", 41.9, 12.4),
        ("on the EG/SD border", 22.0, 30.0),
        ("east of the seam", -17.5, 179.9),
        ("west of the seam", -17.5, -179.5),
        ("US notch (outside)", 43.0, -90.0),
        ("open ocean", -45.0, -25.0),
    ];
    for (label, lat, lon) in probes {
        let answer = match world.locate(lat, lon, 25.0) {
            Assignment::Inside(c) => format!("{c}"),
            Assignment::Nearby { code, km } => format!("{code} (nearest centroid, {km:.1} km)"),
            Assignment::Unassigned => "unassigned".to_string(),
        };
        println!("{label:22} ({lat:7.3}, {lon:8.3}) -> {answer}");
    }
    Ok(())
}
