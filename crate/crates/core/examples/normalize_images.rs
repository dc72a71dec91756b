//! Downscales images so the shorter side is at most 640 and re-encodes JPEG.
//!
//! `cargo run --example normalize_images`

use std::io::Cursor;

use geocurate::filters::GreyParams;
use geocurate::normalize::{normalize_image, target_dimensions, DEFAULT_LIMIT};
use image::{DynamicImage, ImageFormat, RgbImage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (w, h) in [(3000, 2000), (2000, 3000), (641, 641), (640, 4000), (1001, 999)] {
        let p = target_dimensions(w, h, DEFAULT_LIMIT);
        println!("{w}x{h} -> {}x{} (resized: {})", p.target.0, p.target.1, p.resized);
    }

    let img = RgbImage::from_fn(1200, 900, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 90]));
    let mut png = Vec::new();
    DynamicImage::ImageRgb8(img).write_to(&mut Cursor::new(&mut png), ImageFormat::Png)?;
    let out = normalize_image(&png, DEFAULT_LIMIT, &GreyParams::default())?;
    println!(
        "png {} bytes -> jpeg {} bytes at {}x{}, colour: {}",
        png.len(),
        out.jpeg.len(),
        out.plan.target.0,
        out.plan.target.1,
        out.is_color
    );
    Ok(())
}
