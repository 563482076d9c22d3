//! CSV/JSON writing. Numbers use the shortest round-trip form so that runs
//! with identical inputs produce identical bytes.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use crate::{io_err, CliResult};

pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Writes `header` and `rows` as CSV to `path`, or to standard output.
pub fn write_csv<I, R>(path: Option<&Path>, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let sink: Box<dyn Write> = match path {
        Some(p) => {
            ensure_parent(p)?;
            Box::new(io::BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?))
        }
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    };
    let name = path.map_or_else(|| Path::new("<stdout>").to_path_buf(), |p| p.to_path_buf());
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header).map_err(|e| io_err(&name, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(&name, e))?;
    }
    w.flush().map_err(|e| io_err(&name, e))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    ensure_parent(path)?;
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| io_err(path, e))
}

fn ensure_parent(p: &Path) -> CliResult<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => fs::create_dir_all(d).map_err(|e| io_err(d, e)),
        _ => Ok(()),
    }
}
