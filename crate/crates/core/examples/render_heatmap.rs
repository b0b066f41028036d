//! Renders a synthetic attribution map in both colormaps, as PPM and PNG.
//!
//!     cargo run --example render_heatmap -- /tmp/heat

use std::path::PathBuf;

use localattr::{render, Colormap};

fn main() -> localattr::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&out).map_err(|e| localattr::Error::Format(e.to_string()))?;
    let (h, w) = (32, 48);
    // a signed blob pair: positive on the left, negative on the right
    let values: Vec<f64> = (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            let blob = |cr: f64, cc: f64| (-((r - cr).powi(2) + (c - cc).powi(2)) / 40.0).exp();
            blob(16.0, 14.0) - 0.6 * blob(16.0, 34.0)
        })
        .collect();
    for colormap in [Colormap::Gray, Colormap::Diverging] {
        let hm = render(&values, &[h, w], colormap)?;
        let stem = format!("{colormap:?}").to_lowercase();
        hm.write_ppm(&out.join(format!("{stem}.ppm")))?;
        hm.write_png(&out.join(format!("{stem}.png")))?;
        println!("{stem}: {}x{}, centre-left pixel {:?}", hm.width, hm.height, hm.pixel(16, 14));
    }
    println!("wrote heatmaps to {}", out.display());
    Ok(())
}
