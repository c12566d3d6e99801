//! Spike-train datasets in a text format.
//!
//! File layout: a header line `# spikes steps=T neurons=N classes=C`, then
//! one sample per line as `label,v_1,...,v_k` with k = T·N values listed
//! time-major (all neurons of step 1, then step 2, ...).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{header_fields, read_text, Dataset};

pub fn write_spike_csv<S: Scalar>(path: &Path, data: &Dataset<S>) -> Result<()> {
    let mut out = format!(
        "# spikes steps={} neurons={} classes={}\n",
        data.time_steps,
        data.features(),
        data.classes
    );
    for i in 0..data.len() {
        let _ = write!(out, "{}", data.labels()[i]);
        for v in data.sample(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_spike_csv<S: Scalar>(path: &Path) -> Result<Dataset<S>> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty spike file"))?;
    let dims = header_fields(path, header, "spikes", &["steps", "neurons", "classes"])?;
    let (steps, neurons, classes) = (dims[0], dims[1], dims[2]);
    let k = steps * neurons;
    if k == 0 || classes == 0 {
        return Err(Error::parse(path, 1, "steps, neurons and classes must be positive"));
    }
    let mut inputs = Vec::new();
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
                format!("expected label and {k} values, got {} fields", cells.len()),
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
        for c in &cells[1..] {
            let v = S::parse_exact(c)
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, n, format!("value is not a finite number: '{c}'")))?;
            inputs.push(v);
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::parse(path, 1, "file holds no samples"));
    }
    Dataset::new(steps, vec![neurons], classes, inputs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let d = Dataset::<f64>::new(2, vec![2], 3, vec![0.0, 1.0, 1.0, 0.0, 0.25, 0.0, 1.0, 1.0], vec![2, 0]).unwrap();
        write_spike_csv(&p, &d).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# spikes steps=2 neurons=2 classes=3\n2,0,1,1,0\n"));
        assert_eq!(load_spike_csv::<f64>(&p).unwrap(), d);
    }

    #[test]
    fn rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let h = "# spikes steps=1 neurons=2 classes=2\n";
        for (body, line) in [
            (format!("{h}0,1\n"), 2),
            (format!("{h}0,1,0\n2,0,0\n"), 3),
            (format!("{h}0,1,nan\n"), 2),
            (h.to_string(), 1),
        ] {
            std::fs::write(&p, &body).unwrap();
            match load_spike_csv::<f64>(&p) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{body:?}"),
                other => panic!("{body:?}: {other:?}"),
            }
        }
    }
}
