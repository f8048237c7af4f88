use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, NaiveDateTime, TimeDelta, Timelike};

use crate::data::transform::FittedTransform;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::persist::{self, Metadata};

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// `N` series by `T` regularly spaced timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    /// N×T, one row per series.
    pub values: Matrix,
    pub series_names: Vec<String>,
    pub start_time: NaiveDateTime,
    pub step: TimeDelta,
    /// Applied transforms in order, with fitted statistics.
    pub transform_log: Vec<FittedTransform>,
}

/// How to read an input CSV.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Zero-based index of an ISO-8601 timestamp column, if present.
    pub timestamp_column: Option<usize>,
}

impl SeriesFrame {
    pub fn new(values: Matrix, series_names: Vec<String>) -> Result<Self> {
        Self::with_time(values, series_names, default_start(), TimeDelta::days(1))
    }

    pub fn with_time(
        values: Matrix,
        series_names: Vec<String>,
        start_time: NaiveDateTime,
        step: TimeDelta,
    ) -> Result<Self> {
        if values.rows() < 2 || values.cols() < 2 {
            return Err(Error::InsufficientData(format!(
                "a frame needs at least 2 series and 2 timesteps, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if series_names.len() != values.rows() {
            return Err(Error::Dimension(format!(
                "{} names for {} series",
                series_names.len(),
                values.rows()
            )));
        }
        if !values.is_finite() {
            return Err(Error::Numeric("frame contains non-finite values".into()));
        }
        Ok(Self {
            values,
            series_names,
            start_time,
            step,
            transform_log: Vec::new(),
        })
    }

    pub fn n_series(&self) -> usize {
        self.values.rows()
    }

    pub fn n_steps(&self) -> usize {
        self.values.cols()
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start_time + self.step * t as i32
    }

    /// `(day-in-week / 7, hour-in-day / 24)` for timestep `t`; Monday is day 0.
    pub fn temporal_features(&self, t: usize) -> [f64; 2] {
        let ts = self.timestamp(t);
        [
            ts.weekday().num_days_from_monday() as f64 / 7.0,
            ts.hour() as f64 / 24.0,
        ]
    }

    /// Columns `range` as a new N×len matrix.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Matrix {
        self.values.col_slice(range.start, range.end)
    }

    /// Writes `path` (CSV with timestamp column and header) plus the sidecar
    /// `path.meta`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::from("timestamp");
        for name in &self.series_names {
            text.push(',');
            text.push_str(name);
        }
        text.push('\n');
        for t in 0..self.n_steps() {
            text.push_str(&self.timestamp(t).format(TIME_FORMAT).to_string());
            for i in 0..self.n_series() {
                text.push(',');
                text.push_str(&persist::format_f64(self.values[(i, t)]));
            }
            text.push('\n');
        }
        persist::write_text(path, &text)?;
        self.metadata().write(&sidecar_path(path))
    }

    fn metadata(&self) -> Metadata {
        let mut meta = Metadata::new();
        meta.set("names", self.series_names.join(","))
            .set("start_time", self.start_time.format(TIME_FORMAT))
            .set("step_seconds", self.step.num_seconds())
            .set("transforms", self.transform_log.len());
        for (k, tr) in self.transform_log.iter().enumerate() {
            tr.write_metadata(&mut meta, &format!("transform.{k}"));
        }
        meta
    }

    /// Reads a frame written by [`SeriesFrame::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let meta = Metadata::read(&sidecar_path(path))?;
        let mut frame = load_csv(
            path,
            &CsvOptions {
                has_header: true,
                timestamp_column: Some(0),
            },
        )?;
        let names: Vec<String> = meta
            .require("names")?
            .split(',')
            .map(String::from)
            .collect();
        if names.len() != frame.n_series() {
            return Err(Error::format(
                path,
                "sidecar names do not match column count",
            ));
        }
        frame.series_names = names;
        frame.start_time = NaiveDateTime::parse_from_str(meta.require("start_time")?, TIME_FORMAT)
            .map_err(|e| Error::format(path, format!("bad start_time: {e}")))?;
        frame.step = TimeDelta::seconds(meta.parse("step_seconds")?);
        let count: usize = meta.parse("transforms")?;
        for k in 0..count {
            frame.transform_log.push(FittedTransform::read_metadata(
                &meta,
                &format!("transform.{k}"),
            )?);
        }
        Ok(frame)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2020, 1, 6)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid literal date")
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Reads a comma-delimited file with one row per timestep.
///
/// Every non-timestamp cell must parse as a finite number; missing values
/// are rejected rather than imputed. Rows and columns in errors are
/// 1-based positions in the file.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<SeriesFrame> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;

    let header: Option<Vec<String>> = if opts.has_header {
        let h = reader
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Some(h.iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };

    let mut width: Option<usize> = header.as_ref().map(|h| h.len());
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut stamps: Vec<NaiveDateTime> = Vec::new();
    let row_offset = if opts.has_header { 2 } else { 1 };

    for (r, record) in reader.records().enumerate() {
        let row = r + row_offset;
        let record = record.map_err(|e| Error::Ingestion {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Ingestion {
                row,
                column: record.len().min(w) + 1,
                message: format!("row has {} cells, expected {w}", record.len()),
            });
        }
        if columns.is_empty() {
            let n = w - usize::from(opts.timestamp_column.is_some());
            columns = vec![Vec::new(); n];
        }
        let mut c = 0;
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == opts.timestamp_column {
                let ts = parse_timestamp(cell).ok_or_else(|| Error::Ingestion {
                    row,
                    column: j + 1,
                    message: format!("cannot parse timestamp {cell:?}"),
                })?;
                stamps.push(ts);
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Ingestion {
                row,
                column: j + 1,
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row,
                    column: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            columns[c].push(v);
            c += 1;
        }
    }

    let n = columns.len();
    let t = columns.first().map_or(0, Vec::len);
    if n < 2 || t < 2 {
        return Err(Error::Ingestion {
            row: t,
            column: n,
            message: format!("need at least 2 series and 2 rows, found {n} series x {t} rows"),
        });
    }

    let names = match header {
        Some(h) => h
            .into_iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != opts.timestamp_column)
            .map(|(_, s)| s)
            .collect(),
        None => (0..n).map(|i| format!("s{i}")).collect(),
    };

    let (start, step) = if stamps.is_empty() {
        (default_start(), TimeDelta::days(1))
    } else {
        let step = stamps[1] - stamps[0];
        if step <= TimeDelta::zero() {
            return Err(Error::Ingestion {
                row: row_offset + 1,
                column: opts.timestamp_column.unwrap_or(0) + 1,
                message: "timestamps must be strictly increasing".into(),
            });
        }
        for k in 2..stamps.len() {
            if stamps[k] - stamps[k - 1] != step {
                return Err(Error::Ingestion {
                    row: row_offset + k,
                    column: opts.timestamp_column.unwrap_or(0) + 1,
                    message: "irregular timestamp spacing".into(),
                });
            }
        }
        (stamps[0], step)
    };

    let data: Vec<f64> = columns.into_iter().flatten().collect();
    let values = Matrix::new(n, t, data)?;
    SeriesFrame::with_time(values, names, start, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_by_five() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.csv",
            "a,b,c\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n",
        );
        let f = load_csv(
            &p,
            &CsvOptions {
                has_header: true,
                timestamp_column: None,
            },
        )
        .unwrap();
        assert_eq!((f.n_series(), f.n_steps()), (3, 5));
        assert_eq!(f.series_names, ["a", "b", "c"]);
        assert_eq!(f.values.row(1), &[2.0, 5.0, 8.0, 11.0, 14.0]);
    }

    #[test]
    fn timestamps_set_start_and_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.csv",
            "2021-03-01T00:00:00,1,2\n2021-03-01T01:00:00,3,4\n2021-03-01T02:00:00,5,6\n",
        );
        let f = load_csv(
            &p,
            &CsvOptions {
                has_header: false,
                timestamp_column: Some(0),
            },
        )
        .unwrap();
        assert_eq!(f.step, TimeDelta::hours(1));
        assert_eq!(f.n_series(), 2);
        // 2021-03-01 was a Monday.
        assert_eq!(f.temporal_features(2), [0.0, 2.0 / 24.0]);
    }

    #[test]
    fn ragged_row_names_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.csv", "1,2,3\n4,5\n");
        let err = load_csv(&p, &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Ingestion { row: 2, .. }), "{err}");
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "b.csv", "x,y\n1,2\n3,oops\n");
        let err = load_csv(
            &p,
            &CsvOptions {
                has_header: true,
                timestamp_column: None,
            },
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::Ingestion {
                    row: 3,
                    column: 2,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn missing_value_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "1,2\n,4\n5,6\n");
        let err = load_csv(&p, &CsvOptions::default()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Ingestion {
                    row: 2,
                    column: 1,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn too_small_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "1\n2\n3\n");
        assert!(matches!(
            load_csv(&p, &CsvOptions::default()),
            Err(Error::Ingestion { .. })
        ));
        let p = write(dir.path(), "s2.csv", "1,2,3\n");
        assert!(matches!(
            load_csv(&p, &CsvOptions::default()),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let values = Matrix::from_rows(&[[1.5, 2.0, -3.25], [0.1, 0.2, 0.3]]);
        let f = SeriesFrame::new(values, vec!["a".into(), "b".into()]).unwrap();
        let f = crate::data::apply_transform(&f, crate::data::TransformKind::ZScore, 0..3).unwrap();
        let p = dir.path().join("f.csv");
        f.save(&p).unwrap();
        let back = SeriesFrame::load(&p).unwrap();
        assert_eq!(back, f);
    }
}
