//! Storage normalization: shrink so the smaller side is at most 640 pixels and
//! re-encode everything as baseline JPEG at quality 75 with 4:2:0 chroma.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, ImageDecoder, ImageReader};
use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filters::{grey_filter, sample_pixels, GreyParams};
use crate::manifest::{ImageRecord, Status};

pub const DEFAULT_LIMIT: u32 = 640;
pub const JPEG_QUALITY: u8 = 75;
/// Written to the manifest header under `resample`.
pub const RESAMPLE_KERNEL: &str = "catmull-rom";

#[derive(Debug, thiserror::Error)]
pub enum NormalizeError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("resize plan has zero area")]
    ZeroArea,
    #[error("{0}x{1} exceeds the JPEG dimension limit")]
    TooLarge(u32, u32),
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResizePlan {
    pub source: (u32, u32),
    pub target: (u32, u32),
    pub resized: bool,
}

/// Scales `(width, height)` so the smaller side becomes `min_side`, rounding
/// the other side half-up. Used for both downscaling and upscaling.
pub fn scale_to_min_side(width: u32, height: u32, min_side: u32) -> (u32, u32) {
    let scale = |other: u32, short: u32| -> u32 {
        let (o, s, m) = (other as u64, short as u64, min_side as u64);
        ((2 * o * m + s) / (2 * s)) as u32
    };
    if width <= height {
        (min_side, scale(height, width))
    } else {
        (scale(width, height), min_side)
    }
}

pub fn target_dimensions(width: u32, height: u32, limit: u32) -> ResizePlan {
    let source = (width, height);
    if width.min(height) > limit {
        ResizePlan {
            source,
            target: scale_to_min_side(width, height, limit),
            resized: true,
        }
    } else {
        ResizePlan {
            source,
            target: source,
            resized: false,
        }
    }
}

/// Decodes JPEG or PNG bytes and applies any EXIF orientation.
pub fn decode_oriented(bytes: &[u8]) -> Result<DynamicImage, NormalizeError> {
    let dec_err = |e: image::ImageError| NormalizeError::Decode(e.to_string());
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| NormalizeError::Decode(e.to_string()))?;
    let mut decoder = reader.into_decoder().map_err(dec_err)?;
    let orientation = decoder.orientation().map_err(dec_err)?;
    let mut img = DynamicImage::from_decoder(decoder).map_err(dec_err)?;
    img.apply_orientation(orientation);
    Ok(img)
}

/// Resizes to `target` and encodes as baseline JPEG, quality 75, 4:2:0.
/// Single-channel inputs stay single-channel. No metadata is written.
pub fn encode_jpeg(img: &DynamicImage, target: (u32, u32)) -> Result<Vec<u8>, NormalizeError> {
    let (w, h) = target;
    if w == 0 || h == 0 {
        return Err(NormalizeError::ZeroArea);
    }
    if w > u16::MAX as u32 || h > u16::MAX as u32 {
        return Err(NormalizeError::TooLarge(w, h));
    }
    let resized;
    let img = if (img.width(), img.height()) == target {
        img
    } else {
        resized = img.resize_exact(w, h, FilterType::CatmullRom);
        &resized
    };
    let (data, color) = if img.color().channel_count() <= 2 {
        (img.to_luma8().into_raw(), ColorType::Luma)
    } else {
        (img.to_rgb8().into_raw(), ColorType::Rgb)
    };
    let mut out = Vec::new();
    let mut enc = Encoder::new(&mut out, JPEG_QUALITY);
    enc.set_sampling_factor(SamplingFactor::F_2_2);
    enc.set_progressive(false);
    enc.encode(&data, w as u16, h as u16, color)
        .map_err(|e| NormalizeError::Encode(e.to_string()))?;
    Ok(out)
}

/// Decodes, orients, resizes to `plan.target` and re-encodes.
pub fn transcode(bytes: &[u8], plan: &ResizePlan) -> Result<Vec<u8>, NormalizeError> {
    let img = decode_oriented(bytes)?;
    encode_jpeg(&img, plan.target)
}

#[derive(Clone, Debug)]
pub struct NormalizedImage {
    pub jpeg: Vec<u8>,
    pub plan: ResizePlan,
    pub is_color: bool,
}

/// Plans from the oriented dimensions, transcodes, and probes colour on the
/// decoded source.
pub fn normalize_image(
    bytes: &[u8],
    limit: u32,
    grey: &GreyParams,
) -> Result<NormalizedImage, NormalizeError> {
    let img = decode_oriented(bytes)?;
    let plan = target_dimensions(img.width(), img.height(), limit);
    let is_color = !grey_filter(&sample_pixels(&img, grey.min_samples), grey);
    let jpeg = encode_jpeg(&img, plan.target)?;
    Ok(NormalizedImage { jpeg, plan, is_color })
}

#[derive(Clone, Debug, Default)]
pub struct NormalizeBatch {
    /// Updated copies of the input records, in input order.
    pub records: Vec<ImageRecord>,
    /// `(id, message)` for records whose image could not be processed.
    pub failures: Vec<(String, String)>,
}

/// Normalizes every kept or raw record's image from `src_dir` into
/// `dst_dir/<id>.jpg`, updating dimensions, colour flag and path. Rejected
/// records pass through untouched. Runs on the current rayon pool.
pub fn normalize_batch(
    records: &[ImageRecord],
    src_dir: &Path,
    dst_dir: &Path,
    limit: u32,
    grey: &GreyParams,
) -> Result<NormalizeBatch, NormalizeError> {
    fs::create_dir_all(dst_dir).map_err(|source| NormalizeError::Io {
        path: dst_dir.to_path_buf(),
        source,
    })?;
    let results: Vec<Result<ImageRecord, (String, String)>> = records
        .par_iter()
        .map(|r| {
            if r.status == Status::Rejected {
                return Ok(r.clone());
            }
            let src = src_dir.join(&r.path_or_url);
            let fail = |m: String| (r.id.clone(), m);
            let bytes = fs::read(&src).map_err(|e| fail(format!("{}: {e}", src.display())))?;
            let norm = normalize_image(&bytes, limit, grey).map_err(|e| fail(e.to_string()))?;
            let name = format!("{}.jpg", r.id);
            let dst = dst_dir.join(&name);
            fs::write(&dst, &norm.jpeg).map_err(|e| fail(format!("{}: {e}", dst.display())))?;
            let mut out = r.clone();
            (out.width, out.height) = norm.plan.target;
            out.is_color = Some(norm.is_color);
            out.path_or_url = name;
            Ok(out)
        })
        .collect();
    let mut batch = NormalizeBatch::default();
    for r in results {
        match r {
            Ok(rec) => batch.records.push(rec),
            Err(f) => batch.failures.push(f),
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, RgbImage};

    fn png(img: &DynamicImage) -> Vec<u8> {
        let mut buf = Vec::new();
        img.write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Png).unwrap();
        buf
    }

    #[test]
    fn plans() {
        assert_eq!(target_dimensions(3000, 2000, 640).target, (960, 640));
        let p = target_dimensions(500, 400, 640);
        assert_eq!((p.target, p.resized), ((500, 400), false));
        assert!(!target_dimensions(640, 640, 640).resized);
        assert_eq!(target_dimensions(641, 5000, 640).target, (640, 4992));
        // 1000 * 640 / 999 = 640.64 rounds to 641
        assert_eq!(target_dimensions(1000, 999, 640).target, (641, 640));
    }

    #[test]
    fn half_up_rounding() {
        // 1024 * 256 / 768 = 341.33
        assert_eq!(scale_to_min_side(1024, 768, 256), (341, 256));
        // 3 * 1 / 2 = 1.5 rounds up
        assert_eq!(scale_to_min_side(3, 2, 1), (2, 1));
    }

    #[test]
    fn transcode_hits_target() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_fn(1300, 700, |x, y| {
            image::Rgb([(x % 256) as u8, (y % 256) as u8, 90])
        }));
        let plan = target_dimensions(1300, 700, 640);
        let out = transcode(&png(&img), &plan).unwrap();
        let back = image::load_from_memory(&out).unwrap();
        assert_eq!((back.width(), back.height()), plan.target);
        assert!(!target_dimensions(back.width(), back.height(), 640).resized);
    }

    #[test]
    fn grey_stays_single_channel() {
        let img = DynamicImage::ImageLuma8(GrayImage::from_fn(50, 40, |x, _| image::Luma([x as u8 * 4])));
        let n = normalize_image(&png(&img), 640, &GreyParams::default()).unwrap();
        assert!(!n.is_color);
        let back = image::load_from_memory(&n.jpeg).unwrap();
        assert_eq!(back.color().channel_count(), 1);
    }

    #[test]
    fn garbage_is_decode_error() {
        let plan = target_dimensions(10, 10, 640);
        assert!(matches!(transcode(b"not an image", &plan), Err(NormalizeError::Decode(_))));
    }

    #[test]
    fn zero_area_rejected() {
        let img = DynamicImage::new_rgb8(4, 4);
        assert!(matches!(encode_jpeg(&img, (0, 4)), Err(NormalizeError::ZeroArea)));
    }
}
