//! Byte-stable text output: CSV rows, float formatting and hashing.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TRACE_HEADER: &str =
    "replica,event_index,time,cluster,old_band,new_band,aggregate_interference,active_count";

/// Code version embedded in every summary.
pub const CODE_VERSION: &str = concat!("freqalloc ", env!("CARGO_PKG_VERSION"));

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// In-memory CSV document with a fixed header.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Csv {
            text: format!("{header}\n"),
            columns: header.split(',').count(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// One trace row; `None` fields stay empty.
#[allow(clippy::too_many_arguments)]
pub fn trace_row(
    csv: &mut Csv,
    replica: usize,
    event_index: u64,
    time: f64,
    cluster: Option<usize>,
    old_band: Option<usize>,
    new_band: Option<usize>,
    aggregate: f64,
    active_count: usize,
) {
    csv.row(&[
        replica.to_string(),
        event_index.to_string(),
        fmt_f64(time),
        fmt_opt(cluster),
        fmt_opt(old_band),
        fmt_opt(new_band),
        fmt_f64(aggregate),
        active_count.to_string(),
    ]);
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output documents serialize");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(-2.5e-300), "-2.5000000000000000e-300");
        for x in [std::f64::consts::PI, 1.0 / 3.0, 6.02e23, 5e-324] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn trace_rows_leave_missing_fields_empty() {
        let mut csv = Csv::new(TRACE_HEADER);
        trace_row(&mut csv, 0, 0, 0.0, None, None, None, 2.5, 3);
        trace_row(&mut csv, 0, 1, 0.25, Some(2), Some(1), Some(2), 0.5, 3);
        let text = csv.into_string();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines[1], "0,0,0.0000000000000000e0,,,,2.5000000000000000e0,3");
        assert_eq!(lines[2], "0,1,2.5000000000000000e-1,2,1,2,5.0000000000000000e-1,3");
        assert_eq!(lines[3], "");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
