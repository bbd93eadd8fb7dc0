//! Field files: a JSON header plus a sibling little-endian `.bin` payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Chart, Field};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim_d: usize,
    pub codim_k: usize,
    pub extent: Vec<[f64; 2]>,
    pub resolution: Vec<usize>,
    pub tensor_shape: Vec<usize>,
    pub dtype: String,
    pub order: String,
    /// Role of the field ("metric", "second_form", ...), informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Payload file name, relative to the header.
    pub payload: String,
}

impl FieldHeader {
    pub fn chart(&self) -> Result<Chart> {
        if self.extent.len() != self.dim_d {
            return Err(Error::InvalidChart(format!(
                "header dim_d = {} but {} extents",
                self.dim_d,
                self.extent.len()
            )));
        }
        Chart::new(
            self.extent.iter().map(|e| (e[0], e[1])).collect(),
            self.resolution.clone(),
            self.codim_k,
        )
    }
}

/// Payload path paired with a header path (`x.json` → `x.bin`).
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

/// Writes `field` as `<path>` (header) and `<path>.bin` (payload).
pub fn write_field(path: &Path, field: &Field, kind: Option<&str>) -> Result<()> {
    let chart = field.chart();
    let bin = payload_path(path);
    let header = FieldHeader {
        dim_d: chart.dim(),
        codim_k: chart.codim(),
        extent: chart.extent().iter().map(|&(a, b)| [a, b]).collect(),
        resolution: chart.resolution().to_vec(),
        tensor_shape: field.shape().to_vec(),
        dtype: "f64".into(),
        order: "row-major".into(),
        kind: kind.map(str::to_owned),
        payload: bin
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut bytes = Vec::with_capacity(field.data().len() * 8);
    for v in field.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes)?;
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, &header)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Reads a field and its optional `kind` tag.
pub fn read_field(path: &Path) -> Result<(Field, Option<String>)> {
    let header: FieldHeader = serde_json::from_slice(&fs::read(path)?)?;
    if header.dtype != "f64" || header.order != "row-major" {
        return Err(Error::InvalidArgument(format!(
            "unsupported payload {}/{}",
            header.dtype, header.order
        )));
    }
    let chart = header.chart()?;
    let bin = path.parent().unwrap_or(Path::new(".")).join(&header.payload);
    let bytes = fs::read(&bin)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidArgument(format!("{} is not a whole number of f64", bin.display())));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let field = Field::from_data(&chart, &header.tensor_shape, data)?;
    Ok((field, header.kind))
}

/// CSV dump of a field over a 2-D chart: `x,y,c0,c1,...`.
pub fn write_csv(path: &Path, field: &Field) -> Result<()> {
    let chart = field.chart();
    if chart.dim() != 2 {
        return Err(Error::InvalidArgument("CSV export needs a 2-D chart".into()));
    }
    let mut out = String::from("x,y");
    for c in 0..field.components() {
        out.push_str(&format!(",c{c}"));
    }
    out.push('\n');
    for p in 0..chart.n_points() {
        let x = chart.coords(p);
        out.push_str(&format!("{},{}", x[0], x[1]));
        for v in field.at(p) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let chart = Chart::new(vec![(0.0, 1.0), (-0.5, 0.25)], vec![5, 7], 2).unwrap();
        let f = Field::from_fn(&chart, &[2, 3], |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (x[0] * 1.3 + x[1] * i as f64).sin() / 3.0;
            }
        });
        let path = dir.path().join("f.json");
        write_field(&path, &f, Some("test")).unwrap();
        let (g, kind) = read_field(&path).unwrap();
        assert_eq!(kind.as_deref(), Some("test"));
        assert_eq!(f, g);
        assert!(payload_path(&path).exists());
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let chart = Chart::cube(2, 0.0, 1.0, 3, 1).unwrap();
        let path = dir.path().join("f.json");
        write_field(&path, &Field::zeros(&chart, &[3]), None).unwrap();
        fs::write(payload_path(&path), [0u8; 16]).unwrap();
        assert!(read_field(&path).is_err());
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let chart = Chart::cube(2, 0.0, 1.0, 3, 1).unwrap();
        let path = dir.path().join("f.csv");
        write_csv(&path, &Field::zeros(&chart, &[2])).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("x,y,c0,c1"));
    }
}
