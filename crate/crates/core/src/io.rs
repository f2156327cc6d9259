//! Plain-text data exchange: `time,y` series and float formatting.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Shortest form that round-trips: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// A sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub time: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// Reads a headed two-column CSV (`time,y`).
pub fn read_time_series<R: Read>(reader: R) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(&e, 1))?.clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "y" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `time,y`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut ts = TimeSeries {
        time: Vec::new(),
        values: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(&e, 0))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {what} `{s}`"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    line,
                    message: format!("non-finite {what}"),
                })
            }
        };
        let t = parse(&rec[0], "time")?;
        if let Some(&last) = ts.time.last() {
            if t <= last {
                return Err(Error::Parse {
                    line,
                    message: format!("time {t} does not increase"),
                });
            }
        }
        ts.time.push(t);
        ts.values.push(parse(&rec[1], "value")?);
    }
    Ok(ts)
}

fn csv_error(e: &csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn read_time_series_file(path: &Path) -> Result<TimeSeries> {
    read_time_series(std::fs::File::open(path)?)
}

pub fn write_time_series<W: Write>(mut out: W, ts: &TimeSeries) -> Result<()> {
    writeln!(out, "time,y")?;
    for (t, y) in ts.time.iter().zip(&ts.values) {
        writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*y))?;
    }
    Ok(())
}
