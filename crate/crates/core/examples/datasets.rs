//! Loads the bundled IDX digits and a small class-per-folder image directory
//! written on the fly.
//!
//!     cargo run --example datasets

use std::path::Path;

use localattr::{load_dataset, DatasetSource};

fn main() -> localattr::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/digits");
    let digits = load_dataset(&DatasetSource::Idx {
        images: dir.join("test-images.idx3-ubyte"),
        labels: dir.join("test-labels.idx1-ubyte"),
    })?;
    let mut counts = vec![0; digits.classes()];
    for s in digits.samples() {
        counts[s.label] += 1;
    }
    println!("idx: {} samples, shape {:?}, per-class counts {counts:?}", digits.len(), digits.input_shape());

    let root = std::env::temp_dir().join(format!("localattr-imagedir-{}", std::process::id()));
    for (class, shade) in [("dark", 40u8), ("light", 210u8)] {
        let class_dir = root.join(class);
        std::fs::create_dir_all(&class_dir).map_err(|e| localattr::Error::Format(e.to_string()))?;
        for i in 0..3u8 {
            let img = image::RgbImage::from_fn(4, 4, |x, y| image::Rgb([shade, shade.wrapping_add(i), (x + y) as u8]));
            img.save(class_dir.join(format!("{i}.png"))).map_err(|e| localattr::Error::Format(e.to_string()))?;
        }
    }
    for grayscale in [false, true] {
        let ds = load_dataset(&DatasetSource::ImageDir { root: root.clone(), grayscale })?;
        println!("image-dir (grayscale={grayscale}): {} samples, shape {:?}, {} classes", ds.len(), ds.input_shape(), ds.classes());
    }
    std::fs::remove_dir_all(&root).ok();
    Ok(())
}
