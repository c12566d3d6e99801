//! Event-camera streams in a text format and their binning into frames.
//!
//! File layout: a header line `# events width=W height=H`, then one event per
//! line as `t,x,y,p` with t in microseconds, 0 ≤ x < W, 0 ≤ y < H and
//! polarity p ∈ {0, 1}. Blank lines are ignored.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{header_fields, read_text};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Event {
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub p: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    /// Sorted by timestamp (stable for ties).
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u32, height: u32, mut events: Vec<Event>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid("sensor extents must be positive".into()));
        }
        if let Some(e) = events.iter().find(|e| e.x >= width || e.y >= height || e.p > 1) {
            return Err(Error::Invalid(format!(
                "event {e:?} outside a {width}x{height} sensor or with bad polarity"
            )));
        }
        events.sort_by_key(|e| e.t);
        Ok(Self { width, height, events })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = format!("# events width={} height={}\n", self.width, self.height);
        for e in &self.events {
            let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn load_events(path: &Path) -> Result<EventStream> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty event file"))?;
    let dims = header_fields(path, header, "events", &["width", "height"])?;
    let (width, height) = (dims[0] as u32, dims[1] as u32);
    if width == 0 || height == 0 {
        return Err(Error::parse(path, 1, "sensor extents must be positive"));
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 4 {
            return Err(Error::parse(
                path,
                n,
                format!("expected 4 fields t,x,y,p, got {}", cells.len()),
            ));
        }
        let num = |k: usize, name: &str| -> Result<u64> {
            cells[k]
                .parse::<u64>()
                .map_err(|_| Error::parse(path, n, format!("{name} is not a non-negative integer: '{}'", cells[k])))
        };
        let (t, x, y, p) = (num(0, "t")?, num(1, "x")?, num(2, "y")?, num(3, "p")?);
        if x >= width as u64 || y >= height as u64 {
            return Err(Error::parse(
                path,
                n,
                format!("coordinate ({x}, {y}) outside {width}x{height}"),
            ));
        }
        if p > 1 {
            return Err(Error::parse(path, n, format!("polarity must be 0 or 1, got {p}")));
        }
        events.push(Event {
            t,
            x: x as u32,
            y: y as u32,
            p: p as u8,
        });
    }
    EventStream::new(width, height, events)
}

/// Counts events into `[T, 2, out_h, out_w]` frames.
///
/// The span [t_min, t_max] is cut into T blocks of equal duration Δ; block k
/// covers [t_min + kΔ, t_min + (k+1)Δ) and the last block is closed on the
/// right. Pixel (x, y) maps to (⌊x·out_w/W⌋, ⌊y·out_h/H⌋), a block-sum
/// pooling that keeps every count.
pub fn bin_events<S: Scalar>(ev: &EventStream, t_blocks: usize, out_h: usize, out_w: usize) -> Result<Tensor<S>> {
    if t_blocks == 0 {
        return Err(Error::Invalid("need at least one time block".into()));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::Invalid("output extents must be positive".into()));
    }
    if out_h > ev.height as usize || out_w > ev.width as usize {
        return Err(Error::Invalid(format!(
            "cannot pool a {}x{} sensor up to {out_w}x{out_h}",
            ev.width, ev.height
        )));
    }
    let (first, last) = match (ev.events.first(), ev.events.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::Invalid("empty event stream".into())),
    };
    let span = (last - first) as u128;
    let blocks = t_blocks as u128;
    let mut counts = vec![0u64; t_blocks * 2 * out_h * out_w];
    for e in &ev.events {
        // A zero-length recording puts everything in the first block.
        let k = ((e.t - first) as u128 * blocks)
            .checked_div(span)
            .map_or(0, |k| k.min(blocks - 1) as usize);
        let oy = e.y as usize * out_h / ev.height as usize;
        let ox = e.x as usize * out_w / ev.width as usize;
        counts[((k * 2 + e.p as usize) * out_h + oy) * out_w + ox] += 1;
    }
    Tensor::new(
        vec![t_blocks, 2, out_h, out_w],
        counts.into_iter().map(|c| S::of(c as f64)).collect(),
    )
}

/// Divides a sample by its largest entry so values fall in [0, 1]. An
/// all-zero sample is returned unchanged.
pub fn normalize_by_max<S: Scalar>(frames: &Tensor<S>) -> Result<Tensor<S>> {
    let m = frames.max_abs();
    if m > S::zero() {
        frames.map(|v| v / m)
    } else {
        Ok(frames.clone())
    }
}
