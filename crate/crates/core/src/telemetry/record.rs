use std::io::{Read, Write};
use std::path::Path;

use crate::amp::PrecisionMode;
use crate::error::{Error, Result};

pub const RUN_RECORD_HEADER: [&str; 8] = [
    "model", "precision", "batch", "mean_epoch_s", "energy_j", "avg_sm", "max_mem_util", "avg_mem",
];

/// One training run. Unmeasured quantities are `None` and serialize as
/// empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub model: String,
    pub precision: PrecisionMode,
    pub batch: u64,
    pub mean_epoch_s: Option<f64>,
    pub energy_j: Option<f64>,
    pub avg_sm: Option<f64>,
    pub max_mem_util: Option<f64>,
    pub avg_mem: Option<f64>,
}

impl RunRecord {
    pub fn new(model: impl Into<String>, precision: PrecisionMode, batch: u64) -> Self {
        RunRecord {
            model: model.into(),
            precision,
            batch,
            mean_epoch_s: None,
            energy_j: None,
            avg_sm: None,
            max_mem_util: None,
            avg_mem: None,
        }
    }

    pub fn key(&self) -> (&str, PrecisionMode, u64) {
        (&self.model, self.precision, self.batch)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(RUN_RECORD_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.model.clone(),
            r.precision.label().to_string(),
            r.batch.to_string(),
            opt(r.mean_epoch_s),
            opt(r.energy_j),
            opt(r.avg_sm),
            opt(r.max_mem_util),
            opt(r.avg_mem),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_file(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    write_records(std::fs::File::create(path)?, records)
}

pub fn read_records<R: Read>(input: R, origin: &Path) -> Result<Vec<RunRecord>> {
    let err = |line: u64, msg: String| Error::Csv {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| err(1, e.to_string()))?,
        None => return Err(err(1, "empty run-record file".into())),
    };
    if header.iter().map(str::trim).ne(RUN_RECORD_HEADER) {
        return Err(err(1, format!("header must be `{}`", RUN_RECORD_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != RUN_RECORD_HEADER.len() {
            return Err(err(line, format!("expected 8 fields, found {}", row.len())));
        }
        let num = |i: usize| -> Result<Option<f64>> {
            let raw = row[i].trim();
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| err(line, format!("{}: not a number: {raw:?}", RUN_RECORD_HEADER[i])))
        };
        let precision = row[1]
            .trim()
            .parse::<PrecisionMode>()
            .map_err(|e| err(line, e.to_string()))?;
        let batch = row[2]
            .trim()
            .parse::<u64>()
            .map_err(|_| err(line, format!("batch: not an integer: {:?}", &row[2])))?;
        out.push(RunRecord {
            model: row[0].trim().to_string(),
            precision,
            batch,
            mean_epoch_s: num(3)?,
            energy_j: num(4)?,
            avg_sm: num(5)?,
            max_mem_util: num(6)?,
            avg_mem: num(7)?,
        });
    }
    Ok(out)
}

pub fn read_records_file(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    read_records(std::fs::File::open(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_missing_cells() {
        let mut a = RunRecord::new("U2-8", PrecisionMode::Amp, 8);
        a.mean_epoch_s = Some(1.25);
        a.energy_j = Some(0.1 + 0.2);
        let b = RunRecord::new("U3-32", PrecisionMode::Fp32, 4);
        let mut buf = Vec::new();
        write_records(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("model,precision,batch,mean_epoch_s,energy_j,avg_sm,max_mem_util,avg_mem\n"));
        assert!(text.contains("U3-32,FP32,4,,,,,\n"));
        let back = read_records(&buf[..], Path::new("r.csv")).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn errors_carry_line() {
        let text = "model,precision,batch,mean_epoch_s,energy_j,avg_sm,max_mem_util,avg_mem\nU2-8,AMP,x,,,,,\n";
        let e = read_records(text.as_bytes(), Path::new("r.csv")).unwrap_err().to_string();
        assert!(e.starts_with("r.csv:2:"), "{e}");
        assert!(read_records("a,b\n".as_bytes(), Path::new("r.csv")).is_err());
    }
}
