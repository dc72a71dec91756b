//! Five-crop test-time augmentation: crop geometry and score fusion.
//!
//! `cargo run --example five_crop_fusion`

use geocurate::eval::{crop_plan, fuse_scores, FusionStrategy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (w, h) in [(256, 256), (640, 480), (300, 1200)] {
        let plan = crop_plan(w, h);
        let crops: Vec<String> = plan
            .crops
            .iter()
            .map(|c| format!("{}@({},{})", c.label.as_str(), c.x, c.y))
            .collect();
        println!("{w}x{h} -> {}x{}: {}", plan.resized.0, plan.resized.1, crops.join(" "));
    }

    // Three classes; crops disagree, the average settles it.
    let crops = vec![
        vec![0.5, 0.3, 0.2],
        vec![0.1, 0.8, 0.1],
        vec![0.45, 0.35, 0.2],
        vec![0.4, 0.4, 0.2],
        vec![0.5, 0.25, 0.25],
    ];
    for s in FusionStrategy::ALL.into_iter().filter(|s| !s.uses_whole_image()) {
        let fused = fuse_scores(&crops, s)?;
        println!("{:10} -> class {} {:?}", s.as_str(), fused.class, fused.scores);
    }
    Ok(())
}
