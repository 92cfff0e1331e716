use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ResultRecord;
use crate::error::Result;

/// Columns of records.csv, in order.
pub const RECORD_COLUMNS: [&str; 10] =
    ["experiment", "params", "criterion", "target", "estimate", "stderr", "n", "tolerance", "pass", "wall_time_s"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Both,
}

fn criterion_name(r: &ResultRecord) -> &'static str {
    match r.criterion {
        super::Criterion::AtLeast(_) => "at_least",
        super::Criterion::AtMost(_) => "at_most",
        super::Criterion::Near(_) => "near",
        super::Criterion::Report => "report",
    }
}

fn opt(v: Option<impl ToString>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_records_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.experiment.clone(),
            r.params_string(),
            criterion_name(r).to_string(),
            opt(r.criterion.target()),
            r.estimate.to_string(),
            r.stderr.to_string(),
            r.n.to_string(),
            r.tolerance.to_string(),
            opt(r.pass),
            r.wall_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One long-format table per experiment: its parameter keys as columns,
/// then estimate, stderr, n, pass.
fn write_experiment_tables(records: &[ResultRecord], dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut groups: BTreeMap<&str, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.experiment).or_default().push(r);
    }
    for (name, rows) in groups {
        let keys: BTreeSet<&str> = rows.iter().flat_map(|r| r.params.keys().map(String::as_str)).collect();
        let file: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
        let path = dir.join(format!("{file}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header: Vec<&str> = keys.iter().copied().collect();
        header.extend(["estimate", "stderr", "n", "pass"]);
        w.write_record(&header)?;
        for r in rows {
            let mut row: Vec<String> = keys.iter().map(|k| opt(r.params.get(*k))).collect();
            row.extend([r.estimate.to_string(), r.stderr.to_string(), r.n.to_string(), opt(r.pass)]);
            w.write_record(&row)?;
        }
        w.flush()?;
        out.push(path);
    }
    Ok(())
}

/// Writes records.csv and/or records.json into `dir` (created if needed),
/// plus one plot-ready table per experiment with CSV output. Returns the
/// paths written.
pub fn emit_report(records: &[ResultRecord], dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = vec![];
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        let p = dir.join("records.csv");
        write_records_csv(records, &p)?;
        out.push(p);
        write_experiment_tables(records, dir, &mut out)?;
    }
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let p = dir.join("records.json");
        fs::write(&p, serde_json::to_string_pretty(records)?)?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Criterion;

    #[test]
    fn empty_sweep_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&[], dir.path(), ReportFormat::Both).unwrap();
        let csv = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(csv.trim_end(), RECORD_COLUMNS.join(","));
        assert_eq!(fs::read_to_string(dir.path().join("records.json")).unwrap().trim(), "[]");
    }

    #[test]
    fn one_row_per_record() {
        let recs: Vec<ResultRecord> = [0.25, 0.5]
            .iter()
            .flat_map(|&t| {
                [4.0, 6.0].map(|n| ResultRecord::exact("lower_bound", &[("t", t), ("N", n)], Criterion::AtLeast(0.0), t, 0.0))
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&recs, dir.path(), ReportFormat::Both).unwrap();
        let mut r = csv::Reader::from_path(dir.path().join("lower_bound.csv")).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), vec!["N", "t", "estimate", "stderr", "n", "pass"]);
        assert_eq!(r.records().count(), 4);
        let back: Vec<ResultRecord> =
            serde_json::from_str(&fs::read_to_string(dir.path().join("records.json")).unwrap()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let r = emit_report(&[], &file.join("sub"), ReportFormat::Csv);
        assert!(matches!(r, Err(crate::Error::Io(_))));
    }
}
