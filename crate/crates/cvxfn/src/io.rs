//! File helpers shared by the CLI and the persistence layers: atomic
//! writes and CSV sample parsing.

use std::io::Write;
use std::path::Path;

use crate::error::{CvxError, Result};
use crate::geometry::{SampleSet, Vector};

/// Write `contents` to `path` atomically: a temp file in the same
/// directory is persisted over the target by rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).map_err(|e| CvxError::Io(e.error))?;
    Ok(())
}

/// Parse a sample CSV (`x1,...,xd,y` header, one row per sample) together
/// with the Lipschitz constant into a validated [`SampleSet`].
pub fn read_samples_csv(path: &Path, lipschitz: f64) -> Result<SampleSet> {
    let (points, values) = read_points_csv(path, true)?;
    let values = values.ok_or_else(|| {
        CvxError::Parse(format!("{}: expected a trailing y column", path.display()))
    })?;
    SampleSet::new(points, values, lipschitz)
}

/// Parse a points CSV. With `require_values`, the last column must be `y`;
/// otherwise a trailing `y` column is accepted and returned when present.
pub fn read_points_csv(
    path: &Path,
    require_values: bool,
) -> Result<(Vec<Vector>, Option<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(CvxError::Parse(format!("{}: empty header", path.display())));
    }
    let has_y = headers.iter().last() == Some("y");
    if require_values && !has_y {
        return Err(CvxError::Parse(format!(
            "{}: header must end with a y column, got {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let dim = if has_y { headers.len() - 1 } else { headers.len() };
    if dim == 0 {
        return Err(CvxError::Parse(format!("{}: no coordinate columns", path.display())));
    }

    let mut points = Vec::new();
    let mut values = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(CvxError::Parse(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                row_idx + 1,
                record.len(),
                headers.len()
            )));
        }
        let mut fields = Vec::with_capacity(record.len());
        for raw in record.iter() {
            let value: f64 = raw.trim().parse().map_err(|_| {
                CvxError::Parse(format!(
                    "{}: row {}: '{raw}' is not a number",
                    path.display(),
                    row_idx + 1
                ))
            })?;
            fields.push(value);
        }
        if has_y {
            values.push(fields.pop().expect("row checked non-empty"));
        }
        points.push(Vector::new(fields)?);
    }
    if points.is_empty() {
        return Err(CvxError::Parse(format!("{}: no data rows", path.display())));
    }
    Ok((points, if has_y { Some(values) } else { None }))
}

/// Render points (and optional per-point values) as a sample CSV.
pub fn points_to_csv(points: &[Vector], values: Option<&[f64]>) -> String {
    render_csv(points, values, "y")
}

/// As [`points_to_csv`] with a custom name for the value column.
pub fn points_to_csv_with_column(points: &[Vector], values: &[f64], column: &str) -> String {
    render_csv(points, Some(values), column)
}

fn render_csv(points: &[Vector], values: Option<&[f64]>, column: &str) -> String {
    let dim = points.first().map_or(0, Vector::dim);
    let mut out = String::new();
    for i in 1..=dim {
        if i > 1 {
            out.push(',');
        }
        out.push_str(&format!("x{i}"));
    }
    match values {
        Some(_) => out.push_str(&format!(",{column}\n")),
        None => out.push('\n'),
    }
    for (i, p) in points.iter().enumerate() {
        let row: Vec<String> = p.coords().iter().map(|c| format!("{c}")).collect();
        out.push_str(&row.join(","));
        if let Some(vs) = values {
            out.push_str(&format!(",{}", vs[i]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let pts =
            vec![Vector::new(vec![0.0, 1.0]).unwrap(), Vector::new(vec![0.5, -1.0]).unwrap()];
        let ys = vec![1.0, 0.25];
        write_atomic(&path, &points_to_csv(&pts, Some(&ys))).unwrap();
        let samples = read_samples_csv(&path, 2.0).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples.points()[1], pts[1]);
        assert_eq!(samples.values(), &[1.0, 0.25]);
    }

    #[test]
    fn csv_errors_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        write_atomic(&path, "x1,y\n1.0,abc\n").unwrap();
        assert!(read_samples_csv(&path, 1.0).is_err());
        write_atomic(&path, "x1,y\n").unwrap();
        assert!(read_samples_csv(&path, 1.0).is_err());
        write_atomic(&path, "x1,x2\n0.0,1.0\n").unwrap();
        assert!(read_samples_csv(&path, 1.0).is_err());
        // points without y are fine when values are not required
        let (pts, vals) = read_points_csv(&path, false).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(vals.is_none());
    }
}
