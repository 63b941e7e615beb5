//! Per-epoch training metrics and their CSV form.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One CSV row per epoch; field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub env_steps: usize,
    pub mean_return: f64,
    pub mean_episodic_cost: f64,
    pub discounted_jc: f64,
    pub cost_limit: f64,
    pub mu: f64,
    pub alpha: f64,
    pub mean_kl: f64,
    pub loss_pi: f64,
    pub loss_vr: f64,
    pub loss_vn: f64,
    pub loss_vf: f64,
    /// Epochs so far whose constraint estimate exceeded the limit.
    pub cumulative_violations: usize,
}

pub const CSV_HEADER: [&str; 14] = [
    "epoch",
    "env_steps",
    "mean_return",
    "mean_episodic_cost",
    "discounted_jc",
    "cost_limit",
    "mu",
    "alpha",
    "mean_kl",
    "loss_pi",
    "loss_vr",
    "loss_vn",
    "loss_vf",
    "cumulative_violations",
];

/// Header is written even when `rows` is empty.
pub fn write_csv_to<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_csv_to(File::create(path)?, rows)
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(crate::Error::Config(format!("unexpected metrics header {header:?}")));
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    read_csv_from(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(epoch: usize, x: f64) -> MetricsRow {
        MetricsRow {
            epoch,
            env_steps: 4000 * (epoch + 1),
            mean_return: x,
            mean_episodic_cost: -x / 3.0,
            discounted_jc: 1e-300,
            cost_limit: 25.0,
            mu: 0.999f64.powi(epoch as i32),
            alpha: 0.5,
            mean_kl: 0.0123,
            loss_pi: -x * 7.1,
            loss_vr: 1e12,
            loss_vn: 0.1 + 0.2,
            loss_vf: 3.0,
            cumulative_violations: epoch,
        }
    }

    #[test]
    fn empty_run_writes_header_only() {
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_HEADER.join(","));
    }

    #[test]
    fn serde_field_order_matches_header() {
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &[row(0, 1.0)]).unwrap();
        let parsed = read_csv_from(buf.as_slice()).unwrap();
        assert_eq!(parsed, vec![row(0, 1.0)]);
        assert!(read_csv_from("a,b\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(xs in prop::collection::vec(-1e9f64..1e9, 0..20)) {
            let rows: Vec<MetricsRow> = xs.iter().enumerate().map(|(i, &x)| row(i, x)).collect();
            let mut buf = Vec::new();
            write_csv_to(&mut buf, &rows).unwrap();
            prop_assert_eq!(read_csv_from(buf.as_slice()).unwrap(), rows);
        }
    }
}
