//! Point cloud file formats: an ASCII PCD subset and plain CSV.
//!
//! Rows with non-finite coordinates are dropped here, at ingestion, so every
//! downstream index is dense. Binary PCD payloads are rejected outright
//! rather than misread.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use groundseg::cloud::{Label, LabeledCloud, Point3, PointCloud};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot access {path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: PCD header is missing field '{field}'")]
    MissingField { path: String, field: &'static str },
    #[error("{path}: only `DATA ascii` payloads are supported")]
    BinaryUnsupported { path: String },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// A loaded cloud plus how many rows were dropped for non-finite coordinates.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub cloud: PointCloud,
    pub dropped_non_finite: usize,
}

/// Read an ASCII PCD file. Honors the FIELDS, POINTS, and DATA headers;
/// other headers are ignored. FIELDS must include x, y, z (any order, extra
/// channels are skipped).
pub fn load_pcd(path: &Path) -> Result<LoadReport, IoError> {
    let file = File::open(path).map_err(|e| file_err(path, e))?;
    let reader = BufReader::new(file);

    let mut xyz: Option<[usize; 3]> = None;
    let mut declared_points: Option<usize> = None;
    let mut in_data = false;
    let mut points = Vec::new();
    let mut dropped = 0usize;
    let mut data_rows = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| file_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !in_data {
            let mut tokens = trimmed.split_whitespace();
            let key = tokens.next().unwrap_or("");
            match key.to_ascii_uppercase().as_str() {
                "FIELDS" => {
                    let names: Vec<&str> = tokens.collect();
                    let find = |want: &'static str| -> Result<usize, IoError> {
                        names
                            .iter()
                            .position(|n| n.eq_ignore_ascii_case(want))
                            .ok_or(IoError::MissingField {
                                path: path.display().to_string(),
                                field: want,
                            })
                    };
                    xyz = Some([find("x")?, find("y")?, find("z")?]);
                }
                "POINTS" => {
                    let n = tokens
                        .next()
                        .and_then(|t| t.parse::<usize>().ok())
                        .ok_or_else(|| parse_err(path, line_no, "bad POINTS count"))?;
                    declared_points = Some(n);
                }
                "DATA" => {
                    let kind = tokens.next().unwrap_or("");
                    if !kind.eq_ignore_ascii_case("ascii") {
                        return Err(IoError::BinaryUnsupported {
                            path: path.display().to_string(),
                        });
                    }
                    if xyz.is_none() {
                        return Err(IoError::MissingField {
                            path: path.display().to_string(),
                            field: "x",
                        });
                    }
                    in_data = true;
                    if let Some(n) = declared_points {
                        points.reserve(n);
                    }
                }
                _ => {}
            }
            continue;
        }
        let [ix, iy, iz] = xyz.expect("set before DATA");
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        let need = ix.max(iy).max(iz) + 1;
        if cols.len() < need {
            return Err(parse_err(
                path,
                line_no,
                format!("expected at least {need} columns, found {}", cols.len()),
            ));
        }
        let get = |i: usize| -> Result<f64, IoError> {
            cols[i]
                .parse::<f64>()
                .map_err(|_| parse_err(path, line_no, format!("bad number '{}'", cols[i])))
        };
        data_rows += 1;
        let p = Point3::new(get(ix)?, get(iy)?, get(iz)?);
        if p.is_finite() {
            points.push(p);
        } else {
            dropped += 1;
        }
    }

    if !in_data {
        return Err(IoError::BinaryUnsupported {
            path: path.display().to_string(),
        });
    }
    if let Some(n) = declared_points {
        if n != data_rows {
            return Err(parse_err(
                path,
                0,
                format!("POINTS declares {n} rows but the file has {data_rows}"),
            ));
        }
    }
    Ok(LoadReport {
        cloud: PointCloud::new(points),
        dropped_non_finite: dropped,
    })
}

/// Read a comma-separated cloud; each data row's first three numeric columns
/// are x, y, z.
pub fn load_csv(path: &Path, has_header: bool) -> Result<LoadReport, IoError> {
    let file = File::open(path).map_err(|e| file_err(path, e))?;
    let reader = BufReader::new(file);
    let mut points = Vec::new();
    let mut dropped = 0usize;
    let mut skipped_header = !has_header;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| file_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !skipped_header {
            skipped_header = true;
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if cols.len() < 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected at least 3 columns, found {}", cols.len()),
            ));
        }
        let get = |i: usize| -> Result<f64, IoError> {
            cols[i]
                .parse::<f64>()
                .map_err(|_| parse_err(path, line_no, format!("bad number '{}'", cols[i])))
        };
        let p = Point3::new(get(0)?, get(1)?, get(2)?);
        if p.is_finite() {
            points.push(p);
        } else {
            dropped += 1;
        }
    }
    Ok(LoadReport {
        cloud: PointCloud::new(points),
        dropped_non_finite: dropped,
    })
}

/// Does the first non-empty line fail to parse as numbers? Used when the
/// caller did not say whether a CSV has a header.
pub fn csv_has_header(path: &Path) -> Result<bool, IoError> {
    let file = File::open(path).map_err(|e| file_err(path, e))?;
    let reader = BufReader::new(file);
    for line in reader.lines() {
        let line = line.map_err(|e| file_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let numeric = trimmed
            .split(',')
            .take(3)
            .all(|c| c.trim().parse::<f64>().is_ok());
        return Ok(!numeric);
    }
    Ok(false)
}

/// Nine significant digits; round-trips through `f64` parsing within 1e-7
/// relative.
fn fmt_f64(v: f64) -> String {
    format!("{v:.8e}")
}

/// Write the labeled cloud as CSV with columns
/// `x,y,z,label,z_bar,variance,d_stat`; label codes are ground=1,
/// obstacle=0, unassigned=-1.
pub fn write_labeled(
    path: &Path,
    labeled: &LabeledCloud,
    original: &PointCloud,
) -> Result<(), IoError> {
    if labeled.len() != original.len() {
        return Err(IoError::LengthMismatch {
            left: labeled.len(),
            right: original.len(),
        });
    }
    let file = File::create(path).map_err(|e| file_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |s: String| w.write_all(s.as_bytes()).map_err(|e| file_err(path, e));
    emit("x,y,z,label,z_bar,variance,d_stat\n".to_string())?;
    for (i, p) in original.points.iter().enumerate() {
        emit(format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.z),
            labeled.labels[i].to_code(),
            fmt_f64(labeled.z_bar[i]),
            fmt_f64(labeled.variance[i]),
            fmt_f64(labeled.d_stat[i]),
        ))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Write a cloud as ASCII PCD.
pub fn write_pcd(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| file_err(path, e))?;
    let mut w = BufWriter::new(file);
    let n = cloud.len();
    let header = format!(
        "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z\nSIZE 8 8 8\nTYPE F F F\nCOUNT 1 1 1\nWIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n"
    );
    w.write_all(header.as_bytes()).map_err(|e| file_err(path, e))?;
    for p in &cloud.points {
        let row = format!("{} {} {}\n", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z));
        w.write_all(row.as_bytes()).map_err(|e| file_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Write ground truth as CSV `x,y,z,label`.
pub fn write_truth(path: &Path, cloud: &PointCloud, labels: &[Label]) -> Result<(), IoError> {
    if cloud.len() != labels.len() {
        return Err(IoError::LengthMismatch {
            left: cloud.len(),
            right: labels.len(),
        });
    }
    let file = File::create(path).map_err(|e| file_err(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(b"x,y,z,label\n").map_err(|e| file_err(path, e))?;
    for (p, l) in cloud.points.iter().zip(labels) {
        let row = format!(
            "{},{},{},{}\n",
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.z),
            l.to_code()
        );
        w.write_all(row.as_bytes()).map_err(|e| file_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Read the label column (4th) of a labeled or truth CSV. A header line is
/// detected and skipped.
pub fn load_labels(path: &Path) -> Result<Vec<Label>, IoError> {
    let file = File::open(path).map_err(|e| file_err(path, e))?;
    let reader = BufReader::new(file);
    let mut labels = Vec::new();
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| file_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if first {
            first = false;
            if cols.first().is_some_and(|c| c.parse::<f64>().is_err()) {
                continue;
            }
        }
        if cols.len() < 4 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected at least 4 columns, found {}", cols.len()),
            ));
        }
        let code = cols[3]
            .parse::<i8>()
            .map_err(|_| parse_err(path, line_no, format!("bad label code '{}'", cols[3])))?;
        let label = Label::from_code(code)
            .ok_or_else(|| parse_err(path, line_no, format!("label code {code} is not 1, 0, or -1")))?;
        labels.push(label);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn pcd_single_row() {
        let f = write_temp(
            "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA ascii\n1.0 2.0 0.5\n",
            ".pcd",
        );
        let r = load_pcd(f.path()).unwrap();
        assert_eq!(r.cloud.len(), 1);
        assert_eq!(r.cloud.points[0], Point3::new(1.0, 2.0, 0.5));
        assert_eq!(r.dropped_non_finite, 0);
    }

    #[test]
    fn pcd_extra_channels_and_field_order() {
        let f = write_temp(
            "FIELDS intensity z y x\nPOINTS 1\nDATA ascii\n9.0 0.5 2.0 1.0\n",
            ".pcd",
        );
        let r = load_pcd(f.path()).unwrap();
        assert_eq!(r.cloud.points[0], Point3::new(1.0, 2.0, 0.5));
    }

    #[test]
    fn pcd_binary_is_rejected() {
        let f = write_temp("FIELDS x y z\nPOINTS 0\nDATA binary\n", ".pcd");
        assert!(matches!(
            load_pcd(f.path()),
            Err(IoError::BinaryUnsupported { .. })
        ));
    }

    #[test]
    fn pcd_missing_z_is_rejected() {
        let f = write_temp("FIELDS x y\nPOINTS 0\nDATA ascii\n", ".pcd");
        assert!(matches!(
            load_pcd(f.path()),
            Err(IoError::MissingField { field: "z", .. })
        ));
    }

    #[test]
    fn pcd_nan_rows_dropped_and_counted() {
        let mut body = String::from("FIELDS x y z\nPOINTS 11\nDATA ascii\n");
        for k in 0..10 {
            body.push_str(&format!("{k}.0 0.0 0.0\n"));
        }
        body.push_str("nan nan nan\n");
        let f = write_temp(&body, ".pcd");
        let r = load_pcd(f.path()).unwrap();
        assert_eq!(r.cloud.len(), 10);
        assert_eq!(r.dropped_non_finite, 1);
    }

    #[test]
    fn pcd_points_row_count_mismatch() {
        let f = write_temp("FIELDS x y z\nPOINTS 3\nDATA ascii\n1 2 3\n", ".pcd");
        assert!(matches!(load_pcd(f.path()), Err(IoError::Parse { .. })));
    }

    #[test]
    fn csv_two_points() {
        let f = write_temp("0,0,0\n3,4,1\n", ".csv");
        let r = load_csv(f.path(), false).unwrap();
        assert_eq!(r.cloud.len(), 2);
        assert_eq!(r.cloud.points[1], Point3::new(3.0, 4.0, 1.0));
    }

    #[test]
    fn csv_header_skipped_when_flagged() {
        let f = write_temp("x,y,z\n1,2,3\n", ".csv");
        let r = load_csv(f.path(), true).unwrap();
        assert_eq!(r.cloud.len(), 1);
        assert!(csv_has_header(f.path()).unwrap());
        let g = write_temp("1,2,3\n", ".csv");
        assert!(!csv_has_header(g.path()).unwrap());
    }

    #[test]
    fn csv_short_row_names_its_line() {
        let f = write_temp("0,0,0\n1,2\n", ".csv");
        match load_csv(f.path(), false) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn labeled_round_trip_preserves_coordinates() {
        let cloud = PointCloud::new(vec![
            Point3::new(1.2345678901, -7.654321, 0.001234),
            Point3::new(-12345.678, 0.5, 3.0e-7),
        ]);
        let mut labeled = LabeledCloud::unassigned(2);
        labeled.labels = vec![Label::Ground, Label::Obstacle];
        labeled.z_bar = vec![0.0012, 2.9e-7];
        labeled.variance = vec![0.01, 0.02];
        labeled.d_stat = vec![0.1, 5.0];
        let f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        write_labeled(f.path(), &labeled, &cloud).unwrap();
        let r = load_csv(f.path(), true).unwrap();
        assert_eq!(r.cloud.len(), 2);
        for (a, b) in cloud.points.iter().zip(&r.cloud.points) {
            for (u, v) in [(a.x, b.x), (a.y, b.y), (a.z, b.z)] {
                let rel = (u - v).abs() / u.abs().max(1e-30);
                assert!(rel < 1e-7, "{u} vs {v}");
            }
        }
        let labels = load_labels(f.path()).unwrap();
        assert_eq!(labels, vec![Label::Ground, Label::Obstacle]);
    }

    #[test]
    fn labeled_empty_cloud_writes_header_only() {
        let f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        write_labeled(
            f.path(),
            &LabeledCloud::unassigned(0),
            &PointCloud::new(Vec::new()),
        )
        .unwrap();
        let content = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(content, "x,y,z,label,z_bar,variance,d_stat\n");
    }

    #[test]
    fn labeled_length_mismatch_is_an_error() {
        let f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        let out = write_labeled(
            f.path(),
            &LabeledCloud::unassigned(1),
            &PointCloud::new(Vec::new()),
        );
        assert!(matches!(out, Err(IoError::LengthMismatch { .. })));
    }

    #[test]
    fn pcd_round_trip() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-4.0, 5.5, 0.25)]);
        let f = tempfile::Builder::new().suffix(".pcd").tempfile().unwrap();
        write_pcd(f.path(), &cloud).unwrap();
        let r = load_pcd(f.path()).unwrap();
        assert_eq!(r.cloud.len(), 2);
        for (a, b) in cloud.points.iter().zip(&r.cloud.points) {
            assert!((a.x - b.x).abs() < 1e-7 * a.x.abs().max(1.0));
            assert!((a.z - b.z).abs() < 1e-7 * a.z.abs().max(1.0));
        }
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let err = load_pcd(Path::new("/nonexistent/cloud.pcd")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cloud.pcd"));
    }
}
