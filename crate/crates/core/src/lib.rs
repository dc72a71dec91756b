//! Tools for building, curating and evaluating country-recognition image
//! datasets from geotagged photos.
//!
//! The stages, in pipeline order:
//!
//! - [`querygen`]: keyword × city crawl queries and per-city bounding boxes.
//! - [`geo`]: point-in-polygon country lookup with a nearest-country fallback.
//! - [`filters`]: date, greyscale, scene and face-area filters driven by
//!   externally produced evidence files.
//! - [`normalize`]: resize and re-encode images for storage.
//! - [`grouping`]: country → class mapping, loaded or computed greedily.
//! - [`dataset_ops`]: per-country splits, class weights, weighted loss.
//! - [`eval`]: five-crop geometry, score fusion, top-k and balanced accuracy.
//!
//! [`manifest`] holds the record model shared by every stage, [`pipeline`]
//! runs stages over files named in a [`config`], and [`synthetic`] builds
//! the toy world used by the examples and tests.
//!
//! Runnable examples live in `examples/`:
//!
//! | example | shows |
//! |---|---|
//! | `query_generation` | query counts, dedup and antimeridian boxes |
//! | `reverse_geocode` | country lookup on toy boundaries |
//! | `filter_cascade` | the cascade over fixture evidence |
//! | `normalize_images` | resizing and JPEG re-encoding |
//! | `country_grouping` | greedy grouping into 61 classes |
//! | `split_and_weights` | splits, class weights and loss |
//! | `five_crop_fusion` | crop plans and fusion strategies |
//! | `eval_report` | accuracy table from a prediction file |
//! | `full_pipeline` | every stage end to end |

pub mod config;
pub mod dataset_ops;
pub mod eval;
pub mod filters;
pub mod geo;
pub mod grouping;
pub mod manifest;
pub mod normalize;
pub mod pipeline;
pub mod querygen;
pub mod synthetic;
