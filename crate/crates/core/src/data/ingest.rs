//! CSV ingestion driven by a small JSON manifest.
//!
//! Two layouts are supported. `wide` holds one series per column, with
//! external-signal columns matched by a per-channel suffix on the series
//! name. `long` holds one observation per row under named id/time/value
//! columns, with signal channels as further named columns. Both layouts
//! index observations by position, so irregular or duplicated timestamps
//! are rejected rather than resampled.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::SeriesRecord;

/// Column layout of a dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum CsvSchema {
    /// One series per column; header names the series.
    Wide {
        /// Optional index column to skip (timestamps or row labels).
        #[serde(default)]
        time_column: Option<String>,
        /// A column named `<series><suffix>` is signal channel for `<series>`;
        /// one suffix per channel, in channel order.
        #[serde(default)]
        signal_suffixes: Vec<String>,
    },
    /// One observation per row.
    Long {
        id_column: String,
        time_column: String,
        value_column: String,
        /// One named column per signal channel, in channel order.
        #[serde(default)]
        signal_columns: Vec<String>,
    },
}

/// Dataset description: where the CSV lives and how to read it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// CSV path, absolute or relative to the manifest file.
    pub csv: String,
    #[serde(flatten)]
    pub schema: CsvSchema,
    /// Seasonal period shared by every series in the file.
    pub m: usize,
    pub frequency: String,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read manifest `{}`: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("manifest `{}`: {e}", path.display())))
    }

    /// The CSV path, resolved against the manifest's own directory.
    pub fn csv_path(&self, manifest_path: &Path) -> PathBuf {
        let csv = Path::new(&self.csv);
        if csv.is_absolute() {
            csv.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new(".")).join(csv)
        }
    }

    /// Loads the manifest at `path` and the records it points to.
    pub fn load_dataset(path: &Path) -> Result<(Self, Vec<SeriesRecord>)> {
        let manifest = Self::load(path)?;
        let records = load_csv(
            &manifest.csv_path(path),
            &manifest.schema,
            manifest.m,
            &manifest.frequency,
        )?;
        Ok((manifest, records))
    }
}

/// Reads every series from a CSV, returned sorted by id.
pub fn load_csv(
    path: &Path,
    schema: &CsvSchema,
    m: usize,
    frequency: &str,
) -> Result<Vec<SeriesRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut records = match schema {
        CsvSchema::Wide { time_column, signal_suffixes } => {
            read_wide(&mut reader, time_column.as_deref(), signal_suffixes, m, frequency)
        }
        CsvSchema::Long { id_column, time_column, value_column, signal_columns } => read_long(
            &mut reader,
            id_column,
            time_column,
            value_column,
            signal_columns,
            m,
            frequency,
        ),
    }?;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}

fn parse_cell(raw: &str, row: u64, column: &str) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::Data(format!(
            "missing value at row {row}, column `{column}`"
        )));
    }
    raw.parse::<f64>().map_err(|_| {
        Error::Data(format!(
            "unparseable numeric `{raw}` at row {row}, column `{column}`"
        ))
    })
}

fn row_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn read_wide(
    reader: &mut csv::Reader<fs::File>,
    time_column: Option<&str>,
    signal_suffixes: &[String],
    m: usize,
    frequency: &str,
) -> Result<Vec<SeriesRecord>> {
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    // A column is a signal channel when stripping some suffix leaves the
    // name of another column; everything else (minus the time column) is a
    // series in its own right.
    let mut roles: Vec<Option<(usize, usize)>> = vec![None; headers.len()]; // (series col, channel)
    let mut series_cols: Vec<usize> = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        if time_column == Some(name.as_str()) {
            continue;
        }
        let channel = signal_suffixes.iter().position(|suffix| {
            name.strip_suffix(suffix.as_str())
                .is_some_and(|base| headers.iter().any(|h| h == base))
        });
        if let Some(c) = channel {
            let base = name.strip_suffix(signal_suffixes[c].as_str()).unwrap();
            let series = headers.iter().position(|h| h == base).unwrap();
            roles[i] = Some((series, c));
        } else {
            series_cols.push(i);
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record?;
        let row = row_line(&record);
        for (i, raw) in record.iter().enumerate() {
            if time_column == Some(headers[i].as_str()) {
                continue;
            }
            columns[i].push(parse_cell(raw, row, &headers[i])?);
        }
    }

    let mut out = Vec::with_capacity(series_cols.len());
    for &i in &series_cols {
        let mut channels: Vec<(usize, Vec<f64>)> = Vec::new();
        for (j, role) in roles.iter().enumerate() {
            if let Some((series, c)) = role {
                if *series == i {
                    channels.push((*c, columns[j].clone()));
                }
            }
        }
        channels.sort_by_key(|(c, _)| *c);
        let w = if channels.is_empty() {
            None
        } else {
            Some(channels.into_iter().map(|(_, v)| v).collect())
        };
        out.push(SeriesRecord::new(
            headers[i].clone(),
            columns[i].clone(),
            w,
            m,
            frequency.to_string(),
        )?);
    }
    Ok(out)
}

fn read_long(
    reader: &mut csv::Reader<fs::File>,
    id_column: &str,
    time_column: &str,
    value_column: &str,
    signal_columns: &[String],
    m: usize,
    frequency: &str,
) -> Result<Vec<SeriesRecord>> {
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found in CSV header")))
    };
    let id_idx = col(id_column)?;
    let time_idx = col(time_column)?;
    let value_idx = col(value_column)?;
    let signal_idx: Vec<usize> = signal_columns
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;

    struct Rows {
        times: Vec<String>,
        values: Vec<f64>,
        signals: Vec<Vec<f64>>,
    }
    // BTreeMap keeps ids sorted, matching the deterministic output order.
    let mut groups: BTreeMap<String, Rows> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let row = row_line(&record);
        let id = record.get(id_idx).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Data(format!(
                "missing value at row {row}, column `{id_column}`"
            )));
        }
        let entry = groups.entry(id).or_insert_with(|| Rows {
            times: Vec::new(),
            values: Vec::new(),
            signals: vec![Vec::new(); signal_idx.len()],
        });
        entry.times.push(record.get(time_idx).unwrap_or("").to_string());
        entry
            .values
            .push(parse_cell(record.get(value_idx).unwrap_or(""), row, value_column)?);
        for (c, &idx) in signal_idx.iter().enumerate() {
            entry.signals[c].push(parse_cell(
                record.get(idx).unwrap_or(""),
                row,
                &signal_columns[c],
            )?);
        }
    }

    // Numeric timestamps are sorted and checked for a uniform step; opaque
    // ones must appear in the same order for every series so that positional
    // indexing lines up across the dataset.
    let mut reference_times: Option<Vec<String>> = None;
    let mut out = Vec::with_capacity(groups.len());
    for (id, mut rows) in groups {
        let numeric: Option<Vec<f64>> = rows
            .times
            .iter()
            .map(|t| t.parse::<f64>().ok())
            .collect();
        if let Some(times) = numeric {
            let mut order: Vec<usize> = (0..times.len()).collect();
            order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
            let times: Vec<f64> = order.iter().map(|&i| times[i]).collect();
            rows.values = order.iter().map(|&i| rows.values[i]).collect();
            for ch in rows.signals.iter_mut() {
                *ch = order.iter().map(|&i| ch[i]).collect();
            }
            if times.len() > 1 {
                let step = times[1] - times[0];
                if step <= 0.0 {
                    return Err(Error::Data(format!(
                        "series `{id}`: duplicate timestamp {}",
                        times[0]
                    )));
                }
                for pair in times.windows(2) {
                    let d = pair[1] - pair[0];
                    if (d - step).abs() > 1e-9 * step.abs().max(1.0) {
                        return Err(Error::Data(format!(
                            "series `{id}`: irregular time step between {} and {} (expected step {step})",
                            pair[0], pair[1]
                        )));
                    }
                }
            }
        } else {
            match &reference_times {
                None => reference_times = Some(rows.times.clone()),
                Some(reference) => {
                    if *reference != rows.times {
                        return Err(Error::Data(format!(
                            "series `{id}`: timestamps do not match the other series (gap or reordering)"
                        )));
                    }
                }
            }
        }
        let w = if rows.signals.is_empty() {
            None
        } else {
            Some(rows.signals)
        };
        out.push(SeriesRecord::new(id, rows.values, w, m, frequency.to_string())?);
    }

    if let Some(first) = out.first() {
        for r in &out {
            if r.len() != first.len() {
                return Err(Error::Data(format!(
                    "ragged lengths: series `{}` has {} rows but series `{}` has {}",
                    r.id,
                    r.len(),
                    first.id,
                    first.len()
                )));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &tempfile::TempDir, name: &str, content: &str) -> PathBuf {
        let path = dir.path().join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn wide_schema() -> CsvSchema {
        CsvSchema::Wide {
            time_column: None,
            signal_suffixes: vec![],
        }
    }

    #[test]
    fn wide_csv_yields_one_series_per_column() {
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::from("a,b,c\n");
        for t in 0..10 {
            content.push_str(&format!("{t},{},{}\n", t * 2, t * 3));
        }
        let path = write_csv(&dir, "wide.csv", &content);
        let records = load_csv(&path, &wide_schema(), 4, "weekly").unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.len() == 10));
        assert_eq!(records[0].id, "a");
        assert_eq!(records[2].y[1], 3.0);
    }

    #[test]
    fn long_csv_groups_rows_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::from("id,t,v\n");
        for t in 0..5 {
            content.push_str(&format!("a,{t},{}\n", t as f64 + 0.5));
            content.push_str(&format!("b,{t},{}\n", t * 10));
        }
        let path = write_csv(&dir, "long.csv", &content);
        let schema = CsvSchema::Long {
            id_column: "id".into(),
            time_column: "t".into(),
            value_column: "v".into(),
            signal_columns: vec![],
        };
        let records = load_csv(&path, &schema, 2, "daily").unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].id, "a");
        assert_eq!(records[0].y.len(), 5);
        assert_eq!(records[1].y, vec![0.0, 10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn long_rows_are_reordered_by_numeric_time() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "long.csv", "id,t,v\na,3,30\na,1,10\na,2,20\n");
        let schema = CsvSchema::Long {
            id_column: "id".into(),
            time_column: "t".into(),
            value_column: "v".into(),
            signal_columns: vec![],
        };
        let records = load_csv(&path, &schema, 1, "daily").unwrap();
        assert_eq!(records[0].y, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn time_gap_is_an_ingestion_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "gap.csv", "id,t,v\na,1,10\na,2,20\na,4,40\n");
        let schema = CsvSchema::Long {
            id_column: "id".into(),
            time_column: "t".into(),
            value_column: "v".into(),
            signal_columns: vec![],
        };
        let err = load_csv(&path, &schema, 1, "daily").unwrap_err();
        assert!(err.to_string().contains("irregular time step"));
    }

    #[test]
    fn missing_value_error_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "miss.csv", "a,b\n1,2\n,4\n5,6\n7,8\n");
        let err = load_csv(&path, &wide_schema(), 1, "w").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing value"), "{msg}");
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("column `a`"), "{msg}");
    }

    #[test]
    fn unparseable_numeric_error_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "bad.csv", "a,b\n1,2\n3,oops\n");
        let err = load_csv(&path, &wide_schema(), 1, "w").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unparseable numeric `oops`"), "{msg}");
        assert!(msg.contains("column `b`"), "{msg}");
    }

    #[test]
    fn wide_signal_suffix_attaches_channels() {
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::from("a,a_sig,b\n");
        for t in 0..6 {
            content.push_str(&format!("{t},{},{}\n", t * 10, t * 100));
        }
        let path = write_csv(&dir, "sig.csv", &content);
        let schema = CsvSchema::Wide {
            time_column: None,
            signal_suffixes: vec!["_sig".into()],
        };
        let records = load_csv(&path, &schema, 2, "w").unwrap();
        assert_eq!(records.len(), 2);
        let a = records.iter().find(|r| r.id == "a").unwrap();
        assert_eq!(a.signal_channels(), 1);
        assert_eq!(a.w.as_ref().unwrap()[0][2], 20.0);
        assert_eq!(records.iter().find(|r| r.id == "b").unwrap().signal_channels(), 0);
    }

    #[test]
    fn long_ragged_series_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "ragged.csv", "id,t,v\na,1,1\na,2,2\na,3,3\nb,1,1\nb,2,2\n");
        let schema = CsvSchema::Long {
            id_column: "id".into(),
            time_column: "t".into(),
            value_column: "v".into(),
            signal_columns: vec![],
        };
        let err = load_csv(&path, &schema, 1, "w").unwrap_err();
        assert!(err.to_string().contains("ragged lengths"));
    }

    #[test]
    fn manifest_round_trips_and_resolves_relative_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = write_csv(&dir, "series.csv", "a,b\n1,2\n3,4\n5,6\n");
        let manifest_path = dir.path().join("data.json");
        fs::write(
            &manifest_path,
            r#"{"csv": "series.csv", "format": "wide", "m": 2, "frequency": "weekly"}"#,
        )
        .unwrap();
        let (manifest, records) = DatasetManifest::load_dataset(&manifest_path).unwrap();
        assert_eq!(manifest.m, 2);
        assert_eq!(manifest.csv_path(&manifest_path), csv_path);
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].y, vec![2.0, 4.0, 6.0]);
    }
}
