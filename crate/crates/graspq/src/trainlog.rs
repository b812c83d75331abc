//! Training log CSV: `episode,return,steps,success,epsilon,loss`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use graspq_core::servo::EpisodeLog;

use crate::error::{io_err, HarnessError, Result};

pub const HEADER: [&str; 6] = ["episode", "return", "steps", "success", "epsilon", "loss"];

fn record(row: &EpisodeLog) -> [String; 6] {
    [
        row.episode.to_string(),
        format!("{:.6}", row.total_return),
        row.steps.to_string(),
        u8::from(row.success).to_string(),
        format!("{:.6}", row.epsilon),
        format!("{:.8}", row.loss),
    ]
}

pub fn write_log(path: &Path, rows: &[EpisodeLog]) -> Result<()> {
    let csv_err = |e: csv::Error| HarnessError::Csv {
        path: path.to_path_buf(),
        row: 0,
        message: e.to_string(),
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(record(row)).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| io_err(path)(e.into_error()))?
        .flush()
        .map_err(io_err(path))
}

/// Reads a log written by [`write_log`]. Row numbers in errors count the
/// header as row 1.
pub fn read_log(path: &Path) -> Result<Vec<EpisodeLog>> {
    let fail = |row: usize, message: String| HarnessError::Csv {
        path: path.to_path_buf(),
        row,
        message,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(|e| fail(1, e.to_string()))?;
    if header.iter().ne(HEADER) {
        return Err(fail(1, format!("expected header `{}`", HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| fail(row, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        macro_rules! parse {
            ($k:expr) => {
                field($k)
                    .parse()
                    .map_err(|e| fail(row, format!("column `{}`: {e}", HEADER[$k])))?
            };
        }
        let success = match field(3) {
            "0" => false,
            "1" => true,
            other => return Err(fail(row, format!("column `success`: `{other}` is not 0 or 1"))),
        };
        rows.push(EpisodeLog {
            episode: parse!(0),
            total_return: parse!(1),
            steps: parse!(2),
            success,
            epsilon: parse!(4),
            loss: parse!(5),
        });
    }
    Ok(rows)
}

/// Success rate over the last tenth of the episodes (at least one).
pub fn final_success(rows: &[EpisodeLog]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let k = (rows.len() / 10).max(1);
    rows[rows.len() - k..].iter().filter(|r| r.success).count() as f64 / k as f64
}

/// Success rate over the first tenth of the episodes (at least one).
pub fn initial_success(rows: &[EpisodeLog]) -> f64 {
    let k = (rows.len() / 10).max(1).min(rows.len());
    if k == 0 {
        return 0.0;
    }
    rows[..k].iter().filter(|r| r.success).count() as f64 / k as f64
}
