//! Per-round metrics records and their CSV form.
//!
//! Column order is fixed:
//! `run_id,round,virtual_time_s,comm_parameters,comm_bits,metric,test_metric,vulnerability,wall_clock_s`.
//! `metric` names the test metric (`mae` or `accuracy`); `vulnerability`
//! is empty for rounds without an attack measurement. `wall_clock_s` is the
//! only column that varies between identical runs.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::privacy::csv_err;

pub const METRICS_COLUMNS: [&str; 9] = [
    "run_id",
    "round",
    "virtual_time_s",
    "comm_parameters",
    "comm_bits",
    "metric",
    "test_metric",
    "vulnerability",
    "wall_clock_s",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub round: usize,
    pub virtual_time_s: f64,
    pub comm_parameters: u64,
    pub comm_bits: u64,
    pub metric: String,
    pub test_metric: f64,
    pub vulnerability: Option<f64>,
    pub wall_clock_s: f64,
}

pub fn write_metrics<W: Write>(records: &[MetricsRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r).map_err(csv_err)?;
    }
    if records.is_empty() {
        out.write_record(METRICS_COLUMNS).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricsRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}

/// The CSV with the wall-clock column removed, for determinism checks.
pub fn strip_wall_clock(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|line| match line.rfind(',') {
            Some(i) => &line[..i],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_and_header() {
        let recs = vec![
            MetricsRecord {
                run_id: "r".into(),
                round: 0,
                virtual_time_s: 0.0,
                comm_parameters: 0,
                comm_bits: 0,
                metric: "mae".into(),
                test_metric: 12.5,
                vulnerability: None,
                wall_clock_s: 0.01,
            },
            MetricsRecord {
                run_id: "r".into(),
                round: 1,
                virtual_time_s: 524.0,
                comm_parameters: 66,
                comm_bits: 2112,
                metric: "mae".into(),
                test_metric: 3.25,
                vulnerability: Some(0.5),
                wall_clock_s: 0.02,
            },
        ];
        let mut buf = Vec::new();
        write_metrics(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_COLUMNS.join(","));
        assert_eq!(read_metrics(buf.as_slice()).unwrap(), recs);
        assert!(strip_wall_clock(&text).lines().all(|l| !l.ends_with("0.02")));
    }
}
