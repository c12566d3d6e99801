//! Labelled images in a text format, and direct encoding over time.
//!
//! File layout: a header line `# images channels=C height=H width=W
//! classes=N`, then one image per line as `label,p_1,...,p_k` with
//! k = C·H·W pixel values in [0, 255] listed channel-major, row-major.
//! Pixels are scaled by 1/255 on load.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{header_fields, read_text, Dataset};

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet<S> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// One `[C, H, W]` tensor per image, values in [0, 1].
    pub images: Vec<Tensor<S>>,
    pub labels: Vec<usize>,
}

impl<S: Scalar> ImageSet<S> {
    /// Direct-encodes every image over `time_steps` steps.
    pub fn to_dataset(&self, time_steps: usize) -> Result<Dataset<S>> {
        let samples = self
            .images
            .iter()
            .map(|im| direct_encode(im, time_steps))
            .collect::<Result<Vec<_>>>()?;
        Dataset::from_samples(&samples, self.labels.clone(), self.classes)
    }
}

pub fn load_csv_images<S: Scalar>(path: &Path) -> Result<ImageSet<S>> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty image file"))?;
    let dims = header_fields(path, header, "images", &["channels", "height", "width", "classes"])?;
    let (channels, height, width, classes) = (dims[0], dims[1], dims[2], dims[3]);
    let k = channels * height * width;
    if k == 0 || classes == 0 {
        return Err(Error::parse(path, 1, "image extents and class count must be positive"));
    }
    let scale = S::one() / S::of(255.0);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != k + 1 {
            return Err(Error::parse(
                path,
                n,
                format!("expected label and {k} pixels, got {} fields", cells.len()),
            ));
        }
        let label: usize = cells[0]
            .parse()
            .map_err(|_| Error::parse(path, n, format!("label is not a class index: '{}'", cells[0])))?;
        if label >= classes {
            return Err(Error::parse(
                path,
                n,
                format!("label {label} out of range for {classes} classes"),
            ));
        }
        let mut px = Vec::with_capacity(k);
        for c in &cells[1..] {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::parse(path, n, format!("pixel is not numeric: '{c}'")))?;
            if !(0.0..=255.0).contains(&v) {
                return Err(Error::parse(path, n, format!("pixel {v} outside [0, 255]")));
            }
            px.push(S::of(v) * scale);
        }
        images.push(Tensor::new(vec![channels, height, width], px)?);
        labels.push(label);
    }
    if images.is_empty() {
        return Err(Error::parse(path, 1, "file holds no images"));
    }
    Ok(ImageSet {
        channels,
        height,
        width,
        classes,
        images,
        labels,
    })
}

/// Inverse of [`load_csv_images`]. Values that are whole multiples of 1/255
/// are written as integers so a reload is bit-exact.
pub fn write_csv_images<S: Scalar>(path: &Path, set: &ImageSet<S>) -> Result<()> {
    let mut out = format!(
        "# images channels={} height={} width={} classes={}\n",
        set.channels, set.height, set.width, set.classes
    );
    let scale = S::one() / S::of(255.0);
    for (im, &y) in set.images.iter().zip(&set.labels) {
        let _ = write!(out, "{y}");
        for &v in im.data() {
            let raw = (v.to_f64_lossy() * 255.0).round();
            if S::of(raw) * scale == v {
                let _ = write!(out, ",{raw}");
            } else {
                let _ = write!(out, ",{}", v / scale);
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// The image repeated at every one of `time_steps` steps: `[T, ...]`.
pub fn direct_encode<S: Scalar>(image: &Tensor<S>, time_steps: usize) -> Result<Tensor<S>> {
    if time_steps == 0 {
        return Err(Error::Invalid("direct encoding needs T >= 1".into()));
    }
    Tensor::stack(&vec![image.clone(); time_steps])
}
