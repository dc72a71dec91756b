//! Builds keyword × city search queries and per-city search boxes.
//!
//! `cargo run --example query_generation`

use std::io::{self, Cursor};

use geocurate::querygen::{
    bbox_around, generate_keyword_queries, lat_half_span_deg, load_city_table, load_keywords, raw_query_count,
};
use geocurate::synthetic::{toy_cities_tsv, toy_keywords};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Full-scale counts need no data, only sizes.
    println!("183 keywords x 144563 cities = {} queries", raw_query_count(144_563, 183));

    let cities = load_city_table(Cursor::new(toy_cities_tsv()), 1000)?;
    let keywords = load_keywords(Cursor::new(toy_keywords()))?;
    let queries = generate_keyword_queries(&cities, &keywords)?;
    println!(
        "{} cities with population >= 1000, {} keywords: {} raw queries, {} after dedup",
        cities.len(),
        keywords.len(),
        queries.raw_count(),
        queries.deduplicated().len()
    );
    for q in queries.iter().take(4) {
        println!("  {q}");
    }

    println!("10 km half-width spans {:.6} degrees of latitude", lat_half_span_deg(10.0));
    for (name, lat, lon) in [("equator", 0.0, 30.0), ("oslo", 59.91, 10.75), ("suva", -18.14, 179.95)] {
        let cover = bbox_around(lat, lon, 10.0);
        for b in cover.boxes() {
            println!(
                "  {name:8} lat [{:.4}, {:.4}] lon [{:.4}, {:.4}]",
                b.lat_min, b.lat_max, b.lon_min, b.lon_max
            );
        }
    }

    let counts = queries.write_to(io::sink(), true)?;
    println!("written: {counts:?}");
    Ok(())
}
